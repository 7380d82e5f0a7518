"""Circle dynamics z -> z^N and trigonometric-polynomial calculus.

Trig polynomials are the exact function class for circle computations here:
products are coefficient convolutions, the preimage average over N-th roots
is a coefficient decimation, and the Haar integral is the 0th coefficient.
No sampling grid enters until a result is evaluated.
"""

from __future__ import annotations

import cmath

import numpy as np

TWO_PI = 2.0 * np.pi


class TrigPoly:
    """Finite Laurent polynomial sum_k c_k z^k restricted to |z| = 1."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs, tol=0.0):
        self.coeffs = {int(k): complex(v) for k, v in dict(coeffs).items()
                       if abs(v) > tol}

    @classmethod
    def constant(cls, value):
        return cls({0: value})

    @classmethod
    def monomial(cls, k, coeff=1.0):
        return cls({k: coeff})

    @property
    def degree(self):
        return max((abs(k) for k in self.coeffs), default=0)

    def __add__(self, other):
        other = _as_trig(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return TrigPoly(out)

    def __sub__(self, other):
        other = _as_trig(other)
        return self + other.scale(-1.0)

    def __mul__(self, other):
        other = _as_trig(other)
        out = {}
        for k1, v1 in self.coeffs.items():
            for k2, v2 in other.coeffs.items():
                k = k1 + k2
                out[k] = out.get(k, 0.0) + v1 * v2
        return TrigPoly(out)

    __rmul__ = __mul__
    __radd__ = __add__

    def scale(self, s):
        return TrigPoly({k: s * v for k, v in self.coeffs.items()})

    def conjugate(self):
        # conj(sum c_k z^k) = sum conj(c_k) z^{-k} on |z| = 1
        return TrigPoly({-k: v.conjugate() for k, v in self.coeffs.items()})

    def abs2(self):
        return self.conjugate() * self

    def compose_power(self, n):
        """self(z^n): exponent dilation."""
        return TrigPoly({k * n: v for k, v in self.coeffs.items()})

    def decimate(self, n):
        """(1/n) sum over n-th roots w of z of self(w): keeps multiples of n."""
        return TrigPoly({k // n: v for k, v in self.coeffs.items() if k % n == 0})

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for k, v in self.coeffs.items():
            out = out + v * z ** k
        return out if out.ndim else complex(out)

    def mean(self):
        """Haar integral over the circle."""
        return self.coeffs.get(0, 0j)

    def antiderivative_angle(self, theta0, theta1):
        """Integral of self(e^{i theta}) d theta over [theta0, theta1]."""
        total = self.coeffs.get(0, 0j) * (theta1 - theta0)
        for k, v in self.coeffs.items():
            if k != 0:
                total += v * (cmath.exp(1j * k * theta1) - cmath.exp(1j * k * theta0)) / (1j * k)
        return total

    def is_real(self, tol=1e-12):
        return all(abs(self.coeffs.get(-k, 0) - v.conjugate()) <= tol
                   for k, v in self.coeffs.items())

    def real_part(self):
        return (self + self.conjugate()).scale(0.5)

    def max_abs(self, samples=1024):
        return float(np.max(np.abs(self(unit_grid(samples)))))

    def chop(self, tol=1e-15):
        scale = max((abs(v) for v in self.coeffs.values()), default=1.0)
        return TrigPoly(self.coeffs, tol=tol * max(scale, 1.0))

    def __repr__(self):
        terms = ", ".join(f"{k}: {v:.6g}" for k, v in sorted(self.coeffs.items()))
        return f"TrigPoly({{{terms}}})"


def _as_trig(x):
    if isinstance(x, TrigPoly):
        return x
    if isinstance(x, (int, float, complex)):
        return TrigPoly.constant(x)
    raise TypeError(f"cannot coerce {type(x)!r} to TrigPoly")


def unit_grid(m, offset=0.0):
    """m equispaced points on the circle, optionally rotated off the roots of unity."""
    theta = TWO_PI * (np.arange(m) + offset) / m
    return np.exp(1j * theta)


class CirclePower:
    """The winding map z -> z^N on the unit circle."""

    def __init__(self, n):
        if n < 2:
            raise ValueError("winding degree must be at least 2")
        self.n = n

    def forward(self, z):
        return z ** self.n

    def preimages(self, z):
        """The N distinct roots, ordered by (real, imaginary) part."""
        base = complex(z) ** (1.0 / self.n)
        roots = [base * cmath.exp(2j * cmath.pi * k / self.n) for k in range(self.n)]
        return sorted(roots, key=lambda w: (w.real, w.imag))

    def preimages_array(self, z):
        """(N, len(z)) array of roots for a 1-D array of points."""
        z = np.asarray(z, dtype=complex)
        angles = np.angle(z)
        return np.stack([
            np.exp(1j * (angles + TWO_PI * k) / self.n) for k in range(self.n)
        ])

    def branch_count(self, z):
        return self.n

    def branch_count_at_image(self, y):
        return self.n

    def transfer_trig(self, weight: TrigPoly, f: TrigPoly) -> TrigPoly:
        """Averaged preimage sum (1/N) sum_{w^N=z} weight(w) f(w), exactly."""
        return (weight * f).decimate(self.n)

    def __repr__(self):
        return f"CirclePower({self.n})"


def haar_sample(rng, count):
    """Uniform points on the circle."""
    return np.exp(1j * TWO_PI * rng.random(count))


def haar_sample_stratified(rng, count):
    """One uniform point per equal arc; kills the O(1/sqrt(n)) binning noise."""
    u = (np.arange(count) + rng.random(count)) / count
    return np.exp(1j * TWO_PI * u)


def density_sample(rng, count, density: TrigPoly, bound=None):
    """Rejection sampling from density(theta)/(2 pi) d theta, density a real trig poly."""
    if bound is None:
        bound = density.max_abs(4096) * 1.0001
    out = np.empty(count, dtype=complex)
    filled = 0
    while filled < count:
        m = max(2 * (count - filled), 64)
        z = haar_sample(rng, m)
        accept = rng.random(m) * bound <= density(z).real
        take = z[accept][: count - filled]
        out[filled: filled + len(take)] = take
        filled += len(take)
    return out
