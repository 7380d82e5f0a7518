"""Rational maps, inverse branches and backward-orbit equilibrium sampling.

Points live on the Riemann sphere; the point at infinity is the sentinel
``INFINITY`` so that poles never raise. Preimage enumeration is closed-form
through degree two and simultaneous (Aberth-style) iteration above that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class RootFindingError(RuntimeError):
    """Simultaneous iteration failed to converge; carries partial roots."""

    def __init__(self, message, partial_roots=()):
        super().__init__(message)
        self.partial_roots = list(partial_roots)


class _Infinity:
    __slots__ = ()

    def __repr__(self):
        return "INFINITY"


INFINITY = _Infinity()


def _trim(coeffs):
    c = list(coeffs)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return c


def _polyval(coeffs, z):
    out = 0j
    for c in reversed(coeffs):
        out = out * z + c
    return out


def _sylvester_resultant(p, q):
    """Resultant magnitude of two polynomials with unit-scaled coefficients."""
    dp, dq = len(p) - 1, len(q) - 1
    if dp == 0 or dq == 0:
        return 1.0
    n = dp + dq
    s = np.zeros((n, n), dtype=complex)
    for i in range(dq):
        s[i, i:i + dp + 1] = p[::-1]
    for i in range(dp):
        s[dq + i, i:i + dq + 1] = q[::-1]
    return abs(np.linalg.det(s))


class RationalMap:
    """r(z) = p(z)/q(z) of degree at least two.

    Coefficients are given lowest order first. The numerator and denominator
    must not share a root; this is screened with a resultant threshold on the
    sup-normalized coefficients.
    """

    def __init__(self, numer, denom=(1,)):
        self.p = [complex(c) for c in _trim(numer)]
        self.q = [complex(c) for c in _trim(denom)]
        self.degree = max(len(self.p), len(self.q)) - 1
        if self.degree < 2:
            raise ValueError(f"map degree {self.degree} < 2")
        scale_p = max(abs(c) for c in self.p)
        scale_q = max(abs(c) for c in self.q)
        res = _sylvester_resultant([c / scale_p for c in self.p],
                                   [c / scale_q for c in self.q])
        if res <= 1e-10:
            raise ValueError("numerator and denominator share a root (resultant ~ 0)")

    def __call__(self, z):
        return map_eval(self, z)

    def is_monomial(self):
        return (len(self.q) == 1 and
                all(c == 0 for c in self.p[:-1]) and self.p[-1] != 0)

    def is_polynomial(self):
        return len(self.q) == 1

    def __repr__(self):
        return f"RationalMap({self.p}, {self.q})"


def preset_map(name) -> RationalMap:
    """Named study maps: 'z2', 'z3', 'z2-3' (z^2 - 3) and '2z-1/z'."""
    table = {
        "z2": RationalMap([0, 0, 1]),
        "z3": RationalMap([0, 0, 0, 1]),
        "z2-3": RationalMap([-3, 0, 1]),
        "2z-1/z": RationalMap([-1, 0, 2], [0, 1]),
    }
    if name not in table:
        raise ValueError(f"unknown map preset {name!r}; options: {sorted(table)}")
    return table[name]


def map_eval(r: RationalMap, z):
    """Evaluate projectively; poles return INFINITY instead of raising."""
    if z is INFINITY:
        dp, dq = len(r.p) - 1, len(r.q) - 1
        if dp > dq:
            return INFINITY
        if dp < dq:
            return 0j
        return r.p[-1] / r.q[-1]
    z = complex(z)
    pz = _polyval(r.p, z)
    qz = _polyval(r.q, z)
    if qz == 0:
        return INFINITY if pz != 0 else INFINITY  # common roots are excluded at init
    return pz / qz


def branch_sort(roots):
    """The measurable branch labeling: lexicographic by (real, imaginary) part."""
    return sorted(roots, key=lambda w: (w.real, w.imag))


def _quadratic_roots(a, b, c):
    # numerically stable two-root formula
    disc = np.sqrt(b * b - 4.0 * a * c + 0j)
    if (np.conj(b) * disc).real > 0:
        disc = -disc
    z1 = (-b + disc) / (2.0 * a)
    z2 = c / (a * z1) if z1 != 0 else -b / a - z1
    return [z1, z2]


def _aberth_roots(coeffs, tol=1e-13, max_sweeps=200):
    """All roots of a monic-normalized polynomial by simultaneous iteration."""
    c = np.array(coeffs, dtype=complex)
    c = c / c[-1]
    d = len(c) - 1
    deriv = c[1:] * np.arange(1, d + 1)
    radius = 1.0 + max(abs(c[k]) ** (1.0 / (d - k)) for k in range(d))
    angles = 2.0 * np.pi * (np.arange(d) + 0.376) / d
    z = radius * np.exp(1j * angles) * (1.0 + 1e-3 * np.cos(7 * angles))
    for _ in range(max_sweeps):
        pz = np.polyval(c[::-1], z)
        dz = np.polyval(deriv[::-1], z)
        newton = np.where(dz != 0, pz / np.where(dz == 0, 1, dz), 0.0)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        sums = (1.0 / diff).sum(axis=1) - 1.0  # remove the diagonal 1/1 term
        w = newton / (1.0 - newton * sums)
        z = z - w
        if np.all(np.abs(w) <= tol * (1.0 + np.abs(z))):
            return list(z)
    raise RootFindingError(
        f"no convergence after {max_sweeps} sweeps", partial_roots=z
    )


@dataclass
class PreimageSet:
    """Roots of r(z) = w with the branch labeling applied."""

    roots: list
    has_multiplicity: bool
    at_infinity: int = 0


def map_preimages(r: RationalMap, w, full=False):
    """All degree-many solutions of r(z) = w, in branch order.

    Returns the list of roots; pass ``full=True`` for a PreimageSet carrying
    the multiplicity flag (critical values) and any roots at infinity.
    Each finite root is validated to |r(root) - w| <= 1e-10 (1 + |w|).
    """
    if w is INFINITY:
        coeffs = list(r.q)
    else:
        w = complex(w)
        n = max(len(r.p), len(r.q))
        coeffs = [(r.p[k] if k < len(r.p) else 0) - w * (r.q[k] if k < len(r.q) else 0)
                  for k in range(n)]
    scale = max(abs(c) for c in coeffs)
    if scale == 0:
        raise ValueError("degenerate preimage equation")
    coeffs = [c / scale for c in coeffs]
    at_infinity = 0
    while len(coeffs) > 1 and abs(coeffs[-1]) <= 1e-14:
        coeffs.pop()
        at_infinity += 1
    d = len(coeffs) - 1
    if d == 0:
        roots = []
    elif d == 1:
        roots = [-coeffs[0] / coeffs[1]]
    elif d == 2:
        roots = _quadratic_roots(coeffs[2], coeffs[1], coeffs[0])
    else:
        roots = _aberth_roots(coeffs)
        # one Newton polish pass tightens the residual after Aberth
        deriv = [coeffs[k] * k for k in range(1, d + 1)]
        roots = [z - _polyval(coeffs, z) / _polyval(deriv, z)
                 if _polyval(deriv, z) != 0 else z for z in roots]
    roots = branch_sort(roots)
    if w is not INFINITY:
        for z in roots:
            img = map_eval(r, z)
            if img is INFINITY or abs(img - w) > 1e-10 * (1.0 + abs(w)):
                raise RootFindingError(
                    f"root {z} fails residual check against w={w}", partial_roots=roots
                )
    sep = 1e-7 * (1.0 + max((abs(z) for z in roots), default=0.0))
    multiplicity = any(
        abs(a - b) < sep for i, a in enumerate(roots) for b in roots[i + 1:]
    )
    if full:
        return PreimageSet(roots, multiplicity, at_infinity)
    if at_infinity:
        raise RootFindingError(
            f"{at_infinity} preimages at infinity for w={w}", partial_roots=roots
        )
    return roots


class JuliaBackward:
    """Backward dynamics of a rational map, for transfer-operator work.

    ``preimages`` enumerates inverse branches in the deterministic labeling
    order; branch counts equal the degree away from critical values.
    """

    def __init__(self, r: RationalMap):
        self.map = r
        self.n = r.degree

    def forward(self, z):
        return map_eval(self.map, z)

    def preimages(self, z):
        return map_preimages(self.map, z)

    def branch_count(self, z):
        return self.n

    def branch_count_at_image(self, y):
        return self.n


def backward_orbit_sample(r: RationalMap, z0, depth, rng):
    """Endpoint of one random backward orbit with uniformly chosen branches."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    z = complex(z0)
    for _ in range(depth):
        roots = map_preimages(r, z)
        z = roots[rng.integers(len(roots))]
    return z


def _backward_step_batch(r: RationalMap, z, rng):
    """One uniform backward step for an array of points, where closed forms exist."""
    m = len(z)
    if r.is_monomial():
        d = r.degree
        lead = r.p[-1]
        # solve lead * y^d = z
        target = z / lead
        angles = (np.angle(target) + 2.0 * np.pi * rng.integers(0, d, size=m)) / d
        return np.abs(target) ** (1.0 / d) * np.exp(1j * angles)
    if r.degree == 2:
        p = np.array([r.p[k] if k < len(r.p) else 0 for k in range(3)])
        q = np.array([r.q[k] if k < len(r.q) else 0 for k in range(3)])
        a = p[2] - z * q[2]
        b = p[1] - z * q[1]
        c = p[0] - z * q[0]
        if np.any(np.abs(a) < 1e-13 * (np.abs(b) + np.abs(c))):
            return None  # a preimage escaped to infinity; fall back to the slow path
        disc = np.sqrt(b * b - 4.0 * a * c + 0j)
        flip = (np.conj(b) * disc).real > 0
        disc = np.where(flip, -disc, disc)
        z1 = (-b + disc) / (2.0 * a)
        with np.errstate(divide="ignore", invalid="ignore"):
            z2 = np.where(z1 != 0, c / (a * z1), -b / a - z1)
        pick = rng.integers(0, 2, size=m).astype(bool)
        return np.where(pick, z1, z2)
    return None


@dataclass
class PointCloudMeasure:
    """Weighted complex samples approximating a measure on the plane.

    ``weights=None`` means the uniform weight 1/len(points), so the total
    mass is exactly the declared one by construction.
    """

    points: np.ndarray
    weights: np.ndarray | None = None
    total_mass: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        if len(self.points) == 0:
            raise ValueError("point cloud must be non-empty")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if (self.weights < 0).any():
                raise ValueError("weights must be non-negative")
            gap = abs(self.weights.sum() - self.total_mass)
            if gap > 1e-12 * max(1.0, self.total_mass):
                raise ValueError(f"weights sum off declared mass by {gap:.3e}")

    def effective_weights(self):
        if self.weights is None:
            return np.full(len(self.points), self.total_mass / len(self.points))
        return self.weights

    @classmethod
    def merge(cls, clouds):
        """Mass-weighted concatenation; order-independent up to permutation."""
        points = np.concatenate([c.points for c in clouds])
        weights = np.concatenate([c.effective_weights() for c in clouds])
        total = sum(c.total_mass for c in clouds)
        weights = weights * (total / weights.sum())
        return cls(points, weights, total_mass=total)


def moment(mu: PointCloudMeasure, k) -> complex:
    """Weighted average of z^k over the cloud (k = 0 gives exactly 1)."""
    if k < 0:
        raise ValueError("moment order must be non-negative")
    if k == 0:
        return 1.0 + 0j
    w = mu.effective_weights()
    return complex(np.sum(w * mu.points ** k) / mu.total_mass)


def brolin_measure(r: RationalMap, z0, depth, n_samples, burn_in=20, rng=None) -> PointCloudMeasure:
    """Equidistributed backward-orbit endpoints: the maximal-entropy cloud.

    Each of the ``n_samples`` walks runs ``depth`` uniform backward steps from
    z0 and contributes its endpoint with weight 1/n_samples. ``burn_in`` is
    the number of initial levels treated as transient and must stay below
    ``depth`` so the cloud has forgotten the seed point.
    """
    if not 0 <= burn_in < depth:
        raise ValueError("need depth > burn_in >= 0")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    z = np.full(n_samples, complex(z0))
    fast = _backward_step_batch(r, z[:1], np.random.default_rng(0)) is not None
    if fast:
        for _ in range(depth):
            step = _backward_step_batch(r, z, rng)
            if step is None:
                fast = False
                break
            z = step
    if not fast:
        z = np.array([
            backward_orbit_sample(r, z0, depth, rng) for _ in range(n_samples)
        ])
    meta = {"seed": seed, "depth": depth, "burn_in": burn_in}
    return PointCloudMeasure(z, None, total_mass=1.0, metadata=meta)
