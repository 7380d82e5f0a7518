"""Projective-limit paths: backward random walks, lifted measures and the
quasi-invariance derivative check.

A point of the projective limit is kept as a finite prefix (x_0, ..., x_n)
with r(x_{k+1}) = x_k plus the sampler that extends it on demand; nothing
infinite is ever materialized. Two weighting modes coexist: transition
mode, where one normalized function drives a backward Markov walk of total
mass one, and weighted mode, where the path mass is the accumulated weight
product times the eigenfunction at the endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .circle import CirclePower, TrigPoly, haar_sample, haar_sample_stratified, density_sample
from .subshift import (
    CylinderFunction,
    CylinderMeasure,
    Subshift,
    SubshiftError,
    admissible_words,
)
from .transfer import WeightFunction, apply_ruelle


class PathSpaceError(RuntimeError):
    pass


class SingularFilterError(ValueError):
    """Raised when an operation requires a non-singular low pass."""


@dataclass(frozen=True)
class SolenoidPath:
    """A finite prefix of a projective-limit point, oldest coordinate first."""

    points: tuple
    weight: object = 1

    @property
    def depth(self):
        return len(self.points) - 1

    def coordinate(self, n):
        return self.points[n]

    def __len__(self):
        return len(self.points)


def path_compatibility_gap(sys, path: SolenoidPath):
    """Max |r(x_{k+1}) - x_k| along the prefix (0 exactly on subshifts)."""
    gaps = []
    for a, b in zip(path.points, path.points[1:]):
        img = sys.forward(b)
        if isinstance(a, tuple):
            gaps.append(0 if img == a[: len(img)] or a == img[: len(a)] else 1)
        else:
            gaps.append(abs(img - a))
    return max(gaps, default=0)


def rhat(sys, path: SolenoidPath, inverse=False) -> SolenoidPath:
    """The shift automorphism on prefixes: prepend r(x_0), or drop x_0."""
    if inverse:
        if path.depth < 1:
            raise PathSpaceError("cannot invert the shift on a depth-0 prefix")
        return SolenoidPath(path.points[1:], path.weight)
    return SolenoidPath((sys.forward(path.points[0]),) + path.points, path.weight)


@dataclass
class ModularFunction:
    """Normalized backward-transition weights: branch sums are one.

    ``provenance`` records the (V, h) pair the function was derived from so
    reports can name their inputs.
    """

    fn: object
    provenance: dict = field(default_factory=dict)

    def __call__(self, y):
        return self.fn(y)

    def branch_sum_gap(self, sys, points):
        """Worst |sum of transition masses over a fiber - 1|."""
        worst = 0
        for x in points:
            total = sum(self.fn(y) for y in sys.preimages(x))
            worst = max(worst, abs(total - 1))
        return worst


def delta_from_weight(sys, V: WeightFunction, h, check_points=(), tol=1e-8) -> ModularFunction:
    """Transition weights Delta(y) = V(y) h(y) / (c(r(y)) h(r(y))).

    Requires the eigen identity R_V h = h (confirmed on ``check_points``)
    and h bounded away from zero at every point the construction touches.
    The branch sums are verified to be one at the check points.
    """
    Va = V.averaged_on(sys)
    h_eval = h if callable(h) else (lambda _: h)

    for x in check_points:
        hx = h_eval(x)
        if abs(hx) < 1e-14:
            raise ZeroDivisionError(f"eigenfunction vanishes at {x!r}")
        gap = abs(apply_ruelle(sys, Va, h_eval, x) - hx)
        if gap > tol * max(1.0, abs(hx)):
            raise PathSpaceError(
                f"h is not an eigenfunction of the weight at {x!r}: gap {gap}"
            )

    def delta(y):
        img = sys.forward(y)
        h_img = h_eval(img)
        if isinstance(h_img, float) and abs(h_img) < 1e-14:
            raise ZeroDivisionError(f"eigenfunction vanishes at {img!r}")
        c = sys.branch_count(img)
        num = Va(y) * h_eval(y)
        if isinstance(num, Fraction) and isinstance(h_img, Fraction):
            return num / (c * h_img)
        return num / (c * h_img)

    mod = ModularFunction(delta, provenance={"weight": V, "eigenfunction": h})
    for x in check_points:
        total = sum(delta(y) for y in sys.preimages(x))
        if abs(total - 1) > 1e-12:
            raise PathSpaceError(
                f"branch transition masses sum to {total} != 1 at {x!r}"
            )
    return mod


def delta_table(sys: Subshift, V_table: CylinderFunction, h_table: CylinderFunction) -> CylinderFunction:
    """Exact transition table on a subshift, one rank above its inputs."""
    level = max(V_table.level, h_table.level + 1, 2)

    def value(y):
        img = y[1:]
        h_img = h_table(img)
        if h_img == 0:
            raise ZeroDivisionError(f"eigenfunction vanishes on cylinder {img}")
        c = sys.branch_count(img)
        return Fraction(V_table(y) * h_table(y), c * h_img) \
            if not isinstance(V_table(y), float) else V_table(y) * h_table(y) / (c * h_img)

    return CylinderFunction(sys.A, level, value)


class HaarBase:
    """The uniform base measure on the circle."""

    def __init__(self, stratified=False):
        self.stratified = stratified

    def draw(self, rng, count):
        if self.stratified:
            return haar_sample_stratified(rng, count)
        return haar_sample(rng, count)

    def bin_masses(self, edges):
        widths = np.diff(edges)
        return widths / (2 * np.pi)


class TrigDensityBase:
    """Base measure density(theta)/(2 pi) d theta for a real trig polynomial."""

    def __init__(self, density: TrigPoly):
        if abs(density.mean().real - 1.0) > 1e-9:
            raise ValueError("density must integrate to one against Haar")
        self.density = density
        self._bound = density.max_abs(4096) * 1.0001

    def draw(self, rng, count):
        return density_sample(rng, count, self.density, self._bound)

    def bin_masses(self, edges):
        return np.array([
            self.density.antiderivative_angle(a, b).real / (2 * np.pi)
            for a, b in zip(edges, edges[1:])
        ])


class CylinderBase:
    """Base measure given by a cylinder-mass table on a subshift."""

    def __init__(self, measure: CylinderMeasure):
        self.measure = measure

    def draw(self, rng, count):
        return self.measure.sample_word(rng, count)

    def mass(self, word):
        return self.measure.mass(word)


@dataclass
class PathMeasureSampler:
    """Backward path sampler on the projective limit.

    mode 'transition': steps weighted by a normalized transition function,
    path mass is the realized probability. mode 'weighted': uniform branch
    choice with the telescoping mass W^(n) h tracked as an importance weight
    (each step multiplies by branch_count * W, so the estimator is unbiased
    for the weighted path sum).
    """

    sys: object
    mode: str
    transition: object = None
    weight_pair: tuple = None
    base: object = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("transition", "weighted"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "transition" and self.transition is None:
            raise ValueError("transition mode needs a transition function")
        if self.mode == "weighted" and self.weight_pair is None:
            raise ValueError("weighted mode needs the (W, h) pair")

    def rng(self, stream=0):
        return np.random.default_rng(np.random.SeedSequence((self.seed, stream)))

    def sample_path(self, depth, x0=None, stream=0) -> SolenoidPath:
        rng = self.rng(stream)
        if x0 is None:
            x0 = self.base.draw(rng, 1)[0]
        points = [x0]
        weight = 1.0
        for _ in range(depth):
            x = points[-1]
            ys = self.sys.preimages(x)
            if self.mode == "transition":
                probs = np.array([max(float(np.real(self.transition(y))), 0.0) for y in ys])
                total = probs.sum()
                if total < 1e-12:
                    raise PathSpaceError(
                        f"all transition masses vanish at {x!r}: mass dead end"
                    )
                if abs(total - 1.0) > 1e-9:
                    raise PathSpaceError(
                        f"transition masses sum to {total} != 1 at {x!r}"
                    )
                idx = int(rng.choice(len(ys), p=probs / total))
                weight *= probs[idx]
            else:
                W, _ = self.weight_pair
                idx = int(rng.integers(len(ys)))
                weight *= len(ys) * float(np.real(W(ys[idx])))
            points.append(ys[idx])
        if self.mode == "weighted":
            _, h = self.weight_pair
            weight *= float(np.real(h(points[-1])))
        return SolenoidPath(tuple(points), weight)

    # vectorized circle walks ------------------------------------------------

    def _circle_step(self, z, rng):
        sysN = self.sys
        roots = sysN.preimages_array(z)              # (N, m)
        if self.mode == "transition":
            p = np.maximum(np.real(np.stack([self.transition(row) for row in roots])), 0.0)
            total = p.sum(axis=0)
            dead = total < 1e-12
            if dead.any():
                raise PathSpaceError(
                    f"mass dead end at z = {z[np.argmax(dead)]:.6f}"
                )
            if np.max(np.abs(total - 1.0)) > 1e-9:
                raise PathSpaceError("transition masses do not sum to one")
            cum = np.cumsum(p / total, axis=0)
            u = rng.random(len(z))
            idx = (u[None, :] > cum).sum(axis=0)
            return roots[idx, np.arange(len(z))], p[idx, np.arange(len(z))]
        W, _ = self.weight_pair
        idx = rng.integers(sysN.n, size=len(z))
        picked = roots[idx, np.arange(len(z))]
        return picked, sysN.n * np.real(W(picked))

    def sample_endpoints(self, depth, count, stream=0, keep_first_step=False):
        """Vectorized ensemble of circle walks; returns (x0, x1, xn, weights)."""
        if not isinstance(self.sys, CirclePower):
            raise TypeError("vectorized sampling is circle-only; use sample_path")
        if keep_first_step and depth < 1:
            raise ValueError("keep_first_step needs depth >= 1")
        rng = self.rng(stream)
        x0 = self.base.draw(rng, count)
        z = x0
        weights = np.ones(count)
        x1 = None
        for k in range(depth):
            z, factor = self._circle_step(z, rng)
            weights = weights * factor
            if k == 0:
                x1 = z.copy()
        if self.mode == "weighted":
            _, h = self.weight_pair
            weights = weights * np.real(h(z))
        if keep_first_step:
            return x0, x1, z, weights
        return x0, z, weights


def enumerate_paths(sys: Subshift, x0, depth, transition=None, weight_pair=None):
    """All backward paths of the given depth from a subshift word, with masses.

    Exactly one of ``transition`` / ``weight_pair`` selects the weighting.
    Masses stay Fractions whenever the inputs are. Returns a list of
    (SolenoidPath, mass); the path weight field carries the same mass.
    """
    if (transition is None) == (weight_pair is None):
        raise ValueError("pass exactly one of transition or weight_pair")
    step_fn = transition if transition is not None else weight_pair[0]
    probe = step_fn(sys.preimages(x0)[0])
    unit = 1.0 if isinstance(probe, (float, complex)) else Fraction(1)
    results = []

    def recurse(points, mass):
        if len(points) == depth + 1:
            if weight_pair is not None:
                mass = mass * weight_pair[1](points[-1])
            results.append((SolenoidPath(tuple(points), mass), mass))
            return
        for y in sys.preimages(points[-1]):
            recurse(points + [y], mass * step_fn(y))

    recurse([x0], unit)
    return results


def enumerated_level_marginal(sys: Subshift, mu0: CylinderMeasure, transition,
                              depth, target_level) -> CylinderMeasure:
    """Distribution of the depth-n coordinate, marginalized to one rank.

    Exhaustive and exact: sums mu0(cylinder) * prod(transition) over every
    backward path, then projects the endpoint onto its leading cylinder.
    """
    acc = {w: Fraction(0) for w in admissible_words(sys.A, target_level)}
    for w, m0 in zip(mu0.words, mu0.masses):
        for path, mass in enumerate_paths(sys, w, depth, transition=transition):
            end = path.points[-1]
            acc[end[:target_level]] += m0 * mass
    return CylinderMeasure(sys.A, target_level, acc)


def omega_level_measure(sys, f, n, W: WeightFunction, h, mu, tol=1e-8):
    """The level-n measure applied to f: integral of R_W^n(f h) against mu.

    Subshift inputs run through exact cylinder tables; circle inputs through
    trig coefficients with mu = Haar. The eigen identity R_W h = h is
    verified first, because the construction telescopes through it.
    """
    from .transfer import ruelle_iterate

    if isinstance(sys, Subshift):
        if not isinstance(f, CylinderFunction) or not isinstance(h, CylinderFunction):
            raise SubshiftError("subshift level measures need cylinder tables")
        level = max(f.level, h.level, W.table.level if W.table else 1)
        eig_gap = max(
            abs(apply_ruelle(sys, W.averaged_on(sys), h, w) - h(w))
            for w in admissible_words(sys.A, level + 1)
        )
        if eig_gap > tol:
            raise PathSpaceError(f"R_W h = h fails by {eig_gap}")
        fh = CylinderFunction(sys.A, level, lambda w: f(w) * h(w))
        table = ruelle_iterate(sys, W, fh, n)
        target = mu if mu.level >= table.level else None
        if target is None:
            raise SubshiftError("base measure rank too coarse for this depth")
        return mu.integrate(table)
    if isinstance(sys, CirclePower):
        Wa = W.averaged_on(sys)
        h_trig = h if isinstance(h, TrigPoly) else TrigPoly.constant(h)
        f_trig = f if isinstance(f, TrigPoly) else TrigPoly.constant(f)
        eig_gap = ((Wa.trig * h_trig).decimate(sys.n) - h_trig).max_abs(256)
        if eig_gap > tol:
            raise PathSpaceError(f"R_W h = h fails by {eig_gap}")
        g = f_trig * h_trig
        for _ in range(n):
            g = (Wa.trig * g).decimate(sys.n)
        return g.mean()
    raise TypeError(f"unsupported system {type(sys).__name__}")


def fixed_point_gap(sys, mu0, V: WeightFunction, test_level=2, max_freq=16):
    """Defect of the lift precondition: int V (f o r) dmu0 - int f dmu0.

    The test family is cylinder indicators on subshifts and monomials up to
    ``max_freq`` on the circle (where mu0 is a trig density against Haar).
    """
    Va = V.averaged_on(sys)
    if isinstance(sys, Subshift):
        if mu0.level < test_level + 1:
            raise SubshiftError("base measure rank too coarse for the test family")
        worst = 0
        for c in admissible_words(sys.A, test_level):
            direct = mu0.mass(c)
            lifted = sum(m * Va(w) for w, m in zip(mu0.words, mu0.masses)
                         if m != 0 and w[1: test_level + 1] == c)
            worst = max(worst, abs(direct - lifted))
        return worst
    if isinstance(sys, CirclePower):
        density = mu0.density if isinstance(mu0, TrigDensityBase) else TrigPoly.constant(1.0)
        v_rho = Va.trig * density
        worst = 0.0
        for k in range(-max_freq, max_freq + 1):
            lhs = v_rho.coeffs.get(-sys.n * k, 0.0)
            rhs = density.coeffs.get(-k, 0.0)
            worst = max(worst, abs(lhs - rhs))
        return worst
    raise TypeError(f"unsupported system {type(sys).__name__}")


def lift_measure(sys, base, V: WeightFunction, h, seed=0, check_points=(),
                 tol=1e-8) -> PathMeasureSampler:
    """Sampler for the lifted path-space measure over a fixed-point base.

    Draws the starting coordinate from ``base`` and extends backward with
    the normalized transition derived from (V, h). The base must satisfy
    the fixed-point identity for V (checked via fixed_point_gap by callers
    that hold exact tables; here the transition construction re-validates
    the eigen identity at ``check_points``).
    """
    delta = delta_from_weight(sys, V, h, check_points=check_points, tol=tol)
    return PathMeasureSampler(sys, "transition", transition=delta, base=base, seed=seed)


@dataclass
class RadonNikodymReport:
    bin_edges: np.ndarray
    ratios: np.ndarray
    oracle: np.ndarray
    abs_error: np.ndarray
    base_masses: np.ndarray
    samples: int

    def max_relative_error(self, floor=0.05):
        """Worst |ratio - oracle| / max(oracle, floor); the floor keeps
        near-zero bins from blowing up the relative scale."""
        return float(np.max(self.abs_error / np.maximum(self.oracle, floor)))


def radon_nikodym_estimate(sampler: PathMeasureSampler, m0, bins, n_samples,
                           stream=7) -> RadonNikodymReport:
    """Binned estimate of the shift derivative of the lifted measure.

    Compares the first-step bin masses of the path ensemble with the bin
    masses of the base coordinate; their ratio estimates the derivative,
    whose closed form is |m0|^2 at the base coordinate. The transition
    masses into each bin are accumulated exactly per sample (no branch
    sampling noise enters the numerator).

    Refuses filters that vanish on a positive-measure set: the derivative
    identity needs a non-singular low pass.
    """
    sysN = sampler.sys
    if not isinstance(sysN, CirclePower):
        raise TypeError("binned derivative estimation is circle-only")
    if isinstance(m0, TrigPoly):
        if not m0.coeffs:
            raise SingularFilterError("low pass vanishes identically")
        m0_fn = m0
    else:
        if getattr(m0, "singular_lowpass", False):
            raise SingularFilterError("low pass vanishes on a set of positive measure")
        m0_fn = m0.lowpass if hasattr(m0, "lowpass") else m0

    edges = np.linspace(0.0, 2 * np.pi, bins + 1)
    rng = sampler.rng(stream)
    x0 = sampler.base.draw(rng, n_samples)
    roots = sysN.preimages_array(x0)                    # (N, m)
    p = np.maximum(np.real(np.stack([sampler.transition(row) for row in roots])), 0.0)
    theta = np.mod(np.angle(roots), 2 * np.pi)
    numerator = np.zeros(bins)
    for b in range(bins):
        mask = (theta >= edges[b]) & (theta < edges[b + 1])
        numerator[b] = (p * mask).sum() / n_samples
    base_masses = sampler.base.bin_masses(edges)
    ratios = numerator / base_masses

    # bin-averaged closed form of the derivative against the base measure
    w = m0_fn.abs2() if isinstance(m0_fn, TrigPoly) else None
    oracle = np.empty(bins)
    density = sampler.base.density if isinstance(sampler.base, TrigDensityBase) \
        else TrigPoly.constant(1.0)
    for b in range(bins):
        a, c = edges[b], edges[b + 1]
        if w is not None:
            num = (w * density).antiderivative_angle(a, c).real
            den = density.antiderivative_angle(a, c).real
            oracle[b] = num / den
        else:
            mid = np.exp(1j * (a + c) / 2)
            oracle[b] = abs(m0_fn(mid)) ** 2
    return RadonNikodymReport(edges, ratios, oracle, np.abs(ratios - oracle),
                              base_masses, n_samples)
