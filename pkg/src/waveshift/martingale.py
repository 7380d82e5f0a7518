"""Martingale model of the dilation Hilbert space.

Vectors are finite sequences of level functions (xi_0, ..., xi_M) tied
together by the compression identity R_W(xi_{n+1} h) = xi_n h; beyond the
top level the sequence continues canonically by composition with the
dynamics. All operators act on these truncations, and every construction
re-checks the compression identity, so algebra bugs surface as consistency
errors rather than silently wrong inner products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .circle import CirclePower, TrigPoly, unit_grid
from .subshift import (
    CylinderFunction,
    CylinderMeasure,
    Subshift,
    SubshiftError,
    admissible_words,
    matrix_as_array,
    ruelle_matrix,
)
from .transfer import WeightFunction


class ConsistencyError(RuntimeError):
    """A level sequence failed the compression identity."""


class LevelBudgetError(RuntimeError):
    """An operator composition demanded more levels than the truncation has."""


class SubshiftMartingaleContext:
    """Finite-rank martingale calculus over a subshift.

    ``m0`` is the filter whose squared modulus drives the transfer operator,
    ``h`` its strictly positive eigenfunction and ``mu`` the strongly
    invariant base measure, tabulated at a rank high enough to integrate
    every materialized level (base rank + headroom).
    """

    def __init__(self, sys: Subshift, m0: CylinderFunction, h: CylinderFunction,
                 mu: CylinderMeasure, rank_budget=8):
        self.sys = sys
        self.m0 = m0
        self.h = h
        self.weight = WeightFunction.from_cylinder(
            CylinderFunction(sys.A, m0.level, lambda w: abs(m0(w)) ** 2
                             if isinstance(m0(w), (float, complex))
                             else m0(w) * m0(w))
        )
        self.mu = mu
        self.rank_budget = rank_budget
        if mu.level > rank_budget:
            raise SubshiftError("measure rank exceeds the budget")

    def check_rank(self, rank):
        if rank > self.rank_budget:
            raise LevelBudgetError(
                f"rank {rank} exceeds the truncation budget {self.rank_budget}"
            )
        if rank > self.mu.level:
            raise LevelBudgetError(
                f"rank {rank} cannot be integrated against a rank-{self.mu.level} measure"
            )

    def const(self, value, rank=None):
        return CylinderFunction.constant(self.sys.A, rank or self.h.level, value)

    def mul(self, f, g):
        rank = max(f.level, g.level)
        self.check_rank(rank)
        return CylinderFunction(self.sys.A, rank, lambda w: f(w) * g(w))

    def conj(self, f):
        return f.map(lambda v: v.conjugate() if isinstance(v, complex) else v)

    def sub(self, f, g):
        rank = max(f.level, g.level)
        return CylinderFunction(self.sys.A, rank, lambda w: f(w) - g(w))

    def scale(self, f, s):
        return f.map(lambda v: s * v)

    def compose_r(self, f):
        self.check_rank(f.level + 1)
        return f.compose_shift()

    def compose_r_power(self, f, n):
        out = f
        for _ in range(n):
            out = self.compose_r(out)
        return out

    def transfer(self, f):
        """R_W f at the rank of f (output is one rank coarser by nature)."""
        A = self.sys.A
        rank = max(f.level, self.weight.table.level)
        self.check_rank(rank)
        words = admissible_words(A, rank)
        W = self.weight.table
        values = []
        for w in words:
            total = 0
            for y in self.sys.preimages(w):
                total = total + W(y) * f(y[:rank])
            c = self.sys.branch_count(w)
            values.append(Fraction(total, c) if isinstance(total, (int, Fraction))
                          else total / c)
        return CylinderFunction(A, rank, values)

    def compress(self, f):
        """One step down: R_W(f h) / h."""
        fh = self.mul(f, self.h.at_level(f.level) if f.level > self.h.level else self.h)
        rfh = self.transfer(fh)
        return CylinderFunction(self.sys.A, rfh.level,
                                lambda w: rfh(w) / self.h(w))

    def integrate(self, f):
        if f.level > self.mu.level:
            raise LevelBudgetError("measure rank too coarse; raise the headroom")
        return self.mu.integrate(f)

    def sup_gap(self, f, g):
        rank = max(f.level, g.level)
        return max(abs(complex(f(w)) - complex(g(w)))
                   for w in admissible_words(self.sys.A, rank))

    def lowpass_floor(self, rank):
        return min(abs(complex(self.m0(w))) for w in admissible_words(self.sys.A, rank))


class CircleMartingaleContext:
    """Martingale calculus in trig-polynomial coordinates on the circle."""

    def __init__(self, n, m0: TrigPoly, h: TrigPoly, degree_budget=4096):
        self.sys = CirclePower(n)
        self.m0 = m0
        self.h = h
        self.w_trig = m0.abs2()
        self.degree_budget = degree_budget

    def check_rank(self, degree):
        if degree > self.degree_budget:
            raise LevelBudgetError(f"degree {degree} exceeds budget {self.degree_budget}")

    def const(self, value, rank=None):
        return TrigPoly.constant(value)

    def mul(self, f, g):
        out = f * g
        self.check_rank(out.degree)
        return out

    def conj(self, f):
        return f.conjugate()

    def sub(self, f, g):
        return f - g

    def scale(self, f, s):
        return f.scale(s)

    def compose_r(self, f):
        out = f.compose_power(self.sys.n)
        self.check_rank(out.degree)
        return out

    def compose_r_power(self, f, n):
        out = f.compose_power(self.sys.n ** n)
        self.check_rank(out.degree)
        return out

    def transfer(self, f):
        return (self.w_trig * f).decimate(self.sys.n)

    def compress(self, f):
        rfh = self.transfer(self.mul(f, self.h))
        if self.h.degree == 0:
            return rfh.scale(1.0 / self.h.mean().real)
        raise NotImplementedError("compression against a non-constant h needs tables")

    def integrate(self, f):
        return f.mean()

    def sup_gap(self, f, g):
        return (f - g).max_abs(512)

    def lowpass_floor(self, rank=None):
        return float(np.min(np.abs(self.m0(unit_grid(512, offset=0.13)))))


class MartingaleVector:
    """A consistent finite level sequence; the tail continues by composition."""

    def __init__(self, ctx, levels, check=True, tol=1e-10):
        if not levels:
            raise ValueError("a vector needs at least one level")
        self.ctx = ctx
        self.levels = list(levels)
        if check:
            gap = self.consistency_gap()
            if gap > tol:
                raise ConsistencyError(f"compression identity fails by {gap:.3e}")

    @property
    def top(self):
        return len(self.levels) - 1

    def level(self, n):
        """Materialize level n, extending canonically past the top."""
        if n <= self.top:
            return self.levels[n]
        out = self.levels[self.top]
        for _ in range(n - self.top):
            out = self.ctx.compose_r(out)
        return out

    def consistency_gap(self):
        worst = 0
        for n in range(self.top):
            lhs = self.ctx.transfer(self.ctx.mul(self.levels[n + 1], self.ctx.h))
            rhs = self.ctx.mul(self.levels[n], self.ctx.h)
            worst = max(worst, self.ctx.sup_gap(lhs, rhs))
        return worst

    def __sub__(self, other):
        top = max(self.top, other.top)
        return MartingaleVector(
            self.ctx,
            [self.ctx.sub(self.level(n), other.level(n)) for n in range(top + 1)],
            check=False,
        )


def embed(ctx, f, n) -> MartingaleVector:
    """The vector whose level-n coordinate is f, compressed downward.

    Lower levels are the canonical compressions R_W(. h)/h; the invariant
    holds by construction, so the consistency check is a self-test.
    """
    levels = [None] * (n + 1)
    levels[n] = f
    for k in range(n - 1, -1, -1):
        levels[k] = ctx.compress(levels[k + 1])
    return MartingaleVector(ctx, levels)


def vacuum(ctx, top=1) -> MartingaleVector:
    """The cyclic vector: every level is the constant one."""
    return MartingaleVector(ctx, [ctx.const(1) for _ in range(top + 1)])


def inner_product(v: MartingaleVector, w: MartingaleVector, tol=1e-10):
    """<v, w> = int R^n(conj(v_n) w_n h) dmu at n = max top, verified stationary.

    The value is recomputed one level deeper; a mismatch means a corrupted
    level sequence and raises rather than returning either number.
    """
    ctx = v.ctx
    n = max(v.top, w.top)

    def value_at(m):
        g = ctx.mul(ctx.mul(ctx.conj(v.level(m)), w.level(m)), ctx.h)
        for _ in range(m):
            g = ctx.transfer(g)
        return ctx.integrate(g)

    val = value_at(n)
    deeper = value_at(n + 1)
    drift = abs(complex(deeper) - complex(val))
    scale = max(1.0, abs(complex(val)))
    if drift > tol * scale:
        raise ConsistencyError(
            f"inner product not stationary across levels: {val} vs {deeper}"
        )
    return val


def norm(v: MartingaleVector):
    return float(np.sqrt(max(complex(inner_product(v, v)).real, 0.0)))


def dilate(v: MartingaleVector) -> MartingaleVector:
    """U in level coordinates: (Uv)_n = (m0 o r^n) * v_{n+1}."""
    ctx = v.ctx
    levels = [ctx.mul(ctx.compose_r_power(ctx.m0, n), v.level(n + 1))
              for n in range(v.top + 1)]
    return MartingaleVector(ctx, levels)


def dilate_inverse(v: MartingaleVector) -> MartingaleVector:
    """U^{-1}: divide by the filter one level back; needs m0 bounded away from 0.

    The output truncation is one level taller than the input: level k of the
    result is built from level k-1 of the input, so dropping the top level
    would silently replace real data with the canonical tail.
    """
    ctx = v.ctx
    floor = ctx.lowpass_floor(getattr(ctx.m0, "level", None) or 1)
    if floor < 1e-12:
        raise ZeroDivisionError(
            "filter vanishes on the truncation; the dilation is not invertible"
        )
    levels = [None] * (v.top + 2)
    for k in range(1, v.top + 2):
        mk = ctx.compose_r_power(ctx.m0, k - 1)
        prev = v.level(k - 1)
        if isinstance(prev, TrigPoly):
            if ctx.m0.degree == 0:
                levels[k] = prev.scale(1.0 / ctx.m0.mean())
            else:
                raise NotImplementedError("trig division needs a constant filter")
        else:
            rank = max(prev.level, mk.level)
            levels[k] = CylinderFunction(ctx.sys.A, rank,
                                         lambda w, p=prev, m=mk: p(w) / m(w))
    levels[0] = ctx.compress(levels[1])
    return MartingaleVector(ctx, levels)


def multiply(g, v: MartingaleVector) -> MartingaleVector:
    """pi(g) in level coordinates: (pi(g) v)_n = (g o r^n) * v_n."""
    ctx = v.ctx
    levels = [ctx.mul(ctx.compose_r_power(g, n), v.level(n))
              for n in range(v.top + 1)]
    return MartingaleVector(ctx, levels)


def covariance_residual(ctx, g, v: MartingaleVector):
    """|| (U pi(g) U^{-1} - pi(g o r)) v ||."""
    lhs = dilate(multiply(g, dilate_inverse(v)))
    rhs = multiply(ctx.compose_r(g), v)
    return norm(lhs - rhs)


# multiplicity arithmetic ----------------------------------------------------


@dataclass
class MultiplicityCheck:
    m_v1: CylinderFunction
    m_w0: CylinderFunction
    exact: bool
    negative_witnesses: list = field(default_factory=list)


def multiplicity_sum_check(m_v0: CylinderFunction, A) -> MultiplicityCheck:
    """Preimage sums of an integer multiplicity table.

    m_v1(x) = sum over r(y) = x of m_v0(y), exact in integers; the detail
    multiplicity m_w0 = m_v1 - m_v0 may go negative, which is reported as a
    witness list rather than an error.
    """
    sys = Subshift(A)
    level = m_v0.level
    if any(int(v) != v or v < 0 for v in m_v0.values):
        raise ValueError("multiplicity tables must hold non-negative integers")

    def preimage_sum(w):
        return sum(int(m_v0(y)) for y in sys.preimages(w))

    m_v1 = CylinderFunction(A, level, preimage_sum)
    m_w0 = CylinderFunction(A, level, lambda w: m_v1(w) - int(m_v0(w)))
    witnesses = [w for w, v in zip(m_w0.words, m_w0.values) if v < 0]
    return MultiplicityCheck(m_v1, m_w0, not witnesses, witnesses)


# harmonic functions and cocycle diagnostics ---------------------------------


@dataclass
class CocycleDiagnostics:
    depths: list
    ratios: np.ndarray           # (n_paths, len(depths))
    median_steps: list           # median |ratio_{d+1} - ratio_d| per recorded gap
    invariance_gap: float        # median |f - f o rhat| proxy at the deepest level
    bound_constant: float        # sup |h0|^2 / h^2 seen along the paths


def harmonic_to_cocycle(sys, W: WeightFunction, h0, h, sampler, depths,
                        n_paths=2000, stream=11, eigen_tol=1e-6):
    """Per-path limits of h0/h along backward walks: the cocycle estimates.

    h0 must be harmonic for the sampler's weight (checked on the sampled
    points); h strictly positive there. The returned diagnostics report the
    per-depth ratio table, how fast successive-depth steps shrink, and the
    shift-invariance defect measured between the two deepest recorded
    levels. No certified limit is claimed.
    """
    from .transfer import apply_ruelle

    depths = sorted(depths)
    deepest = depths[-1]
    if isinstance(sys, CirclePower):
        x0, _, _, _ = sampler.sample_endpoints(1, 8, stream=stream, keep_first_step=True)
        check = x0
    else:
        check = [sampler.sample_path(1, stream=stream + k).points[0] for k in range(8)]
    Wa = W.averaged_on(sys)
    for x in check:
        ref = h0(x)
        gap = abs(complex(apply_ruelle(sys, Wa, h0, x)) - complex(ref))
        if gap > eigen_tol * max(1.0, abs(complex(ref))):
            raise ValueError(f"h0 is not harmonic at {x!r}: residual {gap:.3e}")

    ratios = np.empty((n_paths, len(depths)), dtype=float)
    prev_level = np.empty(n_paths, dtype=float)
    bound = 0.0
    if isinstance(sys, CirclePower):
        rng = sampler.rng(stream)
        z = sampler.base.draw(rng, n_paths)
        col = 0
        if depths[0] == 0:
            ratios[:, 0] = np.real(h0(z)) / np.real(h(z))
            col = 1
        for d in range(1, deepest + 1):
            z, _ = sampler._circle_step(z, rng)
            if d == deepest - 1:
                prev_level = np.real(h0(z)) / np.real(h(z))
            if col < len(depths) and d == depths[col]:
                hz = np.real(h(z))
                if np.min(np.abs(hz)) < 1e-14:
                    raise ZeroDivisionError("h vanishes along a sampled path")
                ratios[:, col] = np.real(h0(z)) / hz
                bound = max(bound, float(np.max(ratios[:, col] ** 2)))
                col += 1
    else:
        for p in range(n_paths):
            path = sampler.sample_path(deepest, stream=stream * 1000 + p)
            col = 0
            for d, x in enumerate(path.points):
                if d == deepest - 1:
                    prev_level[p] = float(np.real(h0(x))) / float(np.real(h(x)))
                if col < len(depths) and d == depths[col]:
                    hx = float(np.real(h(x)))
                    if abs(hx) < 1e-14:
                        raise ZeroDivisionError("h vanishes along a sampled path")
                    ratios[p, col] = float(np.real(h0(x))) / hx
                    bound = max(bound, ratios[p, col] ** 2)
                    col += 1
    median_steps = [float(np.median(np.abs(ratios[:, i + 1] - ratios[:, i])))
                    for i in range(len(depths) - 1)]
    invariance = float(np.median(np.abs(ratios[:, -1] - prev_level)))
    return CocycleDiagnostics(depths, ratios, median_steps, invariance, bound)


# frame / Parseval machinery --------------------------------------------------


def parseval_defect(ctx: CircleMartingaleContext, test_vector: MartingaleVector,
                    levels, band):
    """How far the dilated detail family is from a Parseval frame on a vector.

    Family members are U^{-k} pi(z^j) psi for the canonical detail generator
    psi = embed(z, 1) plus the level-0 monomials; returns
    | ||v||^2 - sum of |<member, v>|^2 |.
    """
    if ctx.m0.degree != 0:
        raise NotImplementedError("frame scan implemented for constant low pass")
    psi = embed(ctx, TrigPoly.monomial(1), 1)
    total = 0.0
    for j in range(-band, band + 1):
        member = embed(ctx, TrigPoly.monomial(j), 0)
        total += abs(complex(inner_product(member, test_vector))) ** 2
    for k in range(levels):
        base = multiply_power_family(ctx, psi, k, band)
        for member in base:
            total += abs(complex(inner_product(member, test_vector))) ** 2
    return abs(norm(test_vector) ** 2 - total)


def multiply_power_family(ctx, psi, k, band):
    """[U^{-k} pi(z^j) psi for |j| <= band]."""
    out = []
    for j in range(-band, band + 1):
        member = multiply(TrigPoly.monomial(j), psi)
        for _ in range(k):
            member = dilate_inverse(member)
        out.append(member)
    return out
