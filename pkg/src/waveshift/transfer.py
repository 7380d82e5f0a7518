"""Weighted transfer operators: pointwise action, finite-rank solves and
the monotone harmonic limit.

Two preimage-sum conventions coexist in the literature this package serves:
the averaged form (1/c(x)) sum_{r(y)=x} W(y) f(y) and the bare summed form.
WeightFunction carries its convention explicitly and every operation
normalizes internally, which keeps factor-of-N bugs out of the identities.
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


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PreconditionError(ValueError):
    pass


class BudgetExceededError(RuntimeError):
    pass


class WeightFunction:
    """A non-negative weight plus the convention its preimage sums use.

    ``fn`` evaluates the weight at a point of the state space; ``table`` and
    ``trig`` are optional exact representations (subshift cylinder table,
    circle trig polynomial) that the finite-rank machinery prefers when
    present.
    """

    def __init__(self, fn=None, convention="averaged", table=None, trig=None, bound=None):
        if convention not in ("averaged", "summed"):
            raise ValueError(f"unknown convention {convention!r}")
        if fn is None:
            if table is not None:
                fn = table
            elif trig is not None:
                fn = lambda y: trig(y).real
            else:
                raise ValueError("need an evaluator, a table or a trig polynomial")
        self.fn = fn
        self.convention = convention
        self.table = table
        self.trig = trig
        self.bound = bound

    def __call__(self, y):
        return self.fn(y)

    @classmethod
    def one(cls, convention="averaged"):
        return cls(lambda y: 1, convention, trig=TrigPoly.constant(1.0))

    @classmethod
    def from_cylinder(cls, table: CylinderFunction, convention="averaged"):
        return cls(table, convention, table=table)

    @classmethod
    def from_trig(cls, trig: TrigPoly, convention="averaged"):
        if not trig.is_real(1e-9):
            raise ValueError("weights must be real-valued")
        return cls(None, convention, trig=trig)

    def averaged_on(self, sys):
        """The same weight re-expressed in the averaged convention."""
        if self.convention == "averaged":
            return self
        # summed(y) = averaged(y) / c(r(y)), so averaged(y) = summed(y) * c(r(y))
        fn = self.fn
        table = None
        trig = None
        if isinstance(sys, CirclePower):
            if self.trig is not None:
                trig = self.trig.scale(sys.n)
            new_fn = lambda y: fn(y) * sys.n
        else:
            new_fn = lambda y: fn(y) * sys.branch_count_at_image(y)
            if self.table is not None:
                src = self.table
                lvl = max(src.level, 2)
                table = CylinderFunction(
                    src.A, lvl, lambda w: src(w) * sys.branch_count_at_image(w)
                )
        return WeightFunction(new_fn, "averaged", table=table, trig=trig, bound=self.bound)

    def summed_on(self, sys):
        if self.convention == "summed":
            return self
        fn = self.fn
        if isinstance(sys, CirclePower):
            trig = self.trig.scale(1.0 / sys.n) if self.trig is not None else None
            return WeightFunction(lambda y: fn(y) / sys.n, "summed", trig=trig)
        table = None
        if self.table is not None:
            src = self.table
            lvl = max(src.level, 2)
            table = CylinderFunction(
                src.A, lvl,
                lambda w: Fraction(src(w), sys.branch_count_at_image(w))
                if isinstance(src(w), (int, Fraction)) else src(w) / sys.branch_count_at_image(w),
            )
        return WeightFunction(
            lambda y: fn(y) / sys.branch_count_at_image(y), "summed", table=table
        )


def apply_ruelle(sys, W: WeightFunction, f, x):
    """One preimage sum at a single point: the transfer operator applied to f."""
    ys = sys.preimages(x)
    total = 0
    for y in ys:
        total = total + W(y) * f(y)
    if W.convention == "averaged":
        c = sys.branch_count(x)
        if isinstance(total, Fraction):
            return total / c
        return total / c
    return total


class RuellePower:
    """Lazy n-fold transfer operator for pointwise evaluation.

    Evaluation at one point enumerates the depth-n preimage tree, so the
    construction refuses budgets that an exact evaluation would exceed.
    """

    def __init__(self, sys, W: WeightFunction, f, n, budget=1 << 22):
        count = getattr(sys, "n", None) or 2
        if count ** n > budget:
            raise BudgetExceededError(
                f"{count}^{n} preimage evaluations exceed the budget {budget}"
            )
        self.sys = sys
        self.W = W
        self.f = f
        self.n = n

    def __call__(self, x):
        return self._eval(x, self.n)

    def _eval(self, x, n):
        if n == 0:
            return self.f(x)
        return apply_ruelle(self.sys, self.W, lambda y: self._eval(y, n - 1), x)


def ruelle_iterate(sys, W: WeightFunction, f, n, budget=1 << 22):
    """R^n f in the representation best suited to the system.

    Subshift cylinder tables go through exact matrix powers; circle trig
    polynomials through coefficient decimation; anything else returns a
    lazily evaluated preimage tree, guarded by ``budget``.
    """
    if n < 0:
        raise ValueError("iteration count must be non-negative")
    if n == 0:
        return f
    if isinstance(sys, Subshift) and isinstance(f, CylinderFunction):
        Wa = W.averaged_on(sys)
        if Wa.table is None:
            raise SubshiftError("subshift iteration needs a cylinder weight table")
        level = max(f.level, Wa.table.level)
        words, M = ruelle_matrix(sys.A, Wa.table, level)
        values = [f(w) for w in words]
        for _ in range(n):
            values = [sum(m * v for m, v in zip(row, values) if m) for row in M]
        return CylinderFunction(sys.A, level, values)
    if isinstance(sys, CirclePower) and isinstance(f, TrigPoly):
        Wa = W.averaged_on(sys)
        if Wa.trig is None:
            raise ValueError("circle iteration needs a trig-polynomial weight")
        g = f
        for _ in range(n):
            g = sys.transfer_trig(Wa.trig, g)
        return g
    return RuellePower(sys, W, f, n, budget)


@dataclass
class PFData:
    """Dominant transfer-operator data: eigenvalue, eigenfunction, eigenmeasure."""

    lambda0: float
    h: object
    nu: object
    eigen_residual: float
    adjoint_residual: float
    normalization_gap: float
    iterations: int

    def check(self, tol):
        return (self.eigen_residual <= tol and self.adjoint_residual <= tol
                and self.normalization_gap <= 1e-10)


@dataclass
class SubshiftOperator:
    """Finite-rank transfer operator on level-L cylinder tables."""

    A: object
    level: int
    W: CylinderFunction
    convention: str = "averaged"

    def __post_init__(self):
        table = self.W if isinstance(self.W, CylinderFunction) else None
        if table is None:
            raise SubshiftError("SubshiftOperator needs a CylinderFunction weight")
        self.words, M = ruelle_matrix(self.A, table, self.level, self.convention)
        self.matrix = matrix_as_array(M)

    def apply(self, v):
        return self.matrix @ v

    def apply_adjoint(self, u):
        return self.matrix.T @ u

    def pair(self, masses, values):
        return complex(np.dot(masses, values))

    def size(self):
        return len(self.words)

    def start_vector(self):
        return np.ones(self.size())

    def wrap_function(self, v):
        return CylinderFunction(self.A, self.level, list(v))

    def wrap_measure(self, u):
        u = np.where(np.abs(u) < 1e-15, 0.0, u)
        return CylinderMeasure(self.A, self.level, list(u))


@dataclass
class CircleOperator:
    """Transfer operator on trig polynomials of bounded degree.

    The matrix acts on monomial coefficients; the weight must be a real
    trig polynomial so the action is exact up to rounding.
    """

    n: int
    W: TrigPoly
    degree: int
    convention: str = "averaged"

    def __post_init__(self):
        w = self.W if self.convention == "averaged" else self.W.scale(self.n)
        d = self.degree
        ks = range(-d, d + 1)
        self.exponents = list(ks)
        m = np.zeros((2 * d + 1, 2 * d + 1), dtype=complex)
        for cj, j in enumerate(self.exponents):
            for ci, i in enumerate(self.exponents):
                m[ci, cj] = w.coeffs.get(self.n * i - j, 0.0)
        self.matrix = m
        if w.degree + d > self.n * d:
            raise ValueError(
                f"degree cutoff {d} too small for weight degree {w.degree}; "
                "transfer output would be truncated"
            )

    def apply(self, v):
        return self.matrix @ v

    def apply_adjoint(self, u):
        return self.matrix.T @ u

    def pair(self, moments, coeffs):
        return complex(np.dot(moments, coeffs))

    def size(self):
        return 2 * self.degree + 1

    def start_vector(self):
        # the constant function, nudged so no invariant coefficient subspace is missed
        v = np.full(self.size(), 1e-6, dtype=complex)
        v[self.degree] = 1.0
        return v

    def wrap_function(self, v):
        return TrigPoly(dict(zip(self.exponents, v))).chop()

    def wrap_measure(self, u):
        return CircleMomentMeasure(dict(zip(self.exponents, u)))


class CircleMomentMeasure:
    """A measure on the circle represented by its monomial moments."""

    def __init__(self, moments):
        self.moments = {int(k): complex(v) for k, v in moments.items()}

    def integrate(self, f: TrigPoly):
        return sum(v * self.moments.get(k, 0.0) for k, v in f.coeffs.items())

    def total(self):
        return self.moments.get(0, 0.0)


def _power_iteration(apply_fn, v0, tol, max_iter, what):
    v = np.asarray(v0, dtype=complex)
    v = v / np.max(np.abs(v))
    history = []
    for it in range(1, max_iter + 1):
        w = apply_fn(v)
        lam = float(np.max(np.abs(w)))
        if lam == 0.0:
            return np.zeros_like(v), 0.0, it
        w = w / lam
        step = float(np.max(np.abs(w - v)))
        history.append(lam)
        if step <= tol and len(history) >= 2 and abs(history[-1] - history[-2]) <= tol * max(1.0, lam):
            return w, lam, it
        if len(history) >= 6:
            osc = abs(history[-1] - history[-3]) + abs(history[-2] - history[-4])
            swing = abs(history[-1] - history[-2])
            if osc <= tol * max(1.0, lam) and swing > 1e3 * tol * max(1.0, lam):
                raise NonConvergenceError(
                    f"{what}: period-2 oscillation in the eigenvalue estimates; "
                    "the dominant eigenvalue is not isolated (aperiodicity fails)",
                    residual=swing,
                )
        v = w
    raise NonConvergenceError(
        f"{what}: no convergence after {max_iter} sweeps (last step {step:.3e})",
        residual=step,
    )


def pf_solve(op, tol=1e-12, max_iter=2000) -> PFData:
    """Dominant eigendata of a finite-rank transfer operator.

    Power iteration on the operator gives h (sup-normalized internally) and
    on its adjoint gives the eigenmeasure, which is then scaled so that the
    pairing <nu, h> equals one. Residuals are reported in the sup norm.
    """
    size = op.size()
    v, lam, it1 = _power_iteration(op.apply, op.start_vector(), tol, max_iter, "eigenfunction")
    u, lam_adj, it2 = _power_iteration(op.apply_adjoint, np.ones(size), tol, max_iter, "eigenmeasure")
    if abs(lam - lam_adj) > 100 * tol * max(1.0, lam):
        raise NonConvergenceError(
            f"operator and adjoint disagree on the eigenvalue: {lam} vs {lam_adj}",
            residual=abs(lam - lam_adj),
        )
    # realize phases: dominant data of a positive operator can be chosen real
    for vec in (v, u):
        pivot = vec[np.argmax(np.abs(vec))]
        if pivot != 0:
            vec *= np.conj(pivot) / abs(pivot)
    if np.max(np.abs(v.imag)) <= 1e-9 * max(1.0, np.max(np.abs(v.real))):
        v = v.real + 0j
    if np.max(np.abs(u.imag)) <= 1e-9 * max(1.0, np.max(np.abs(u.real))):
        u = u.real + 0j
    pairing = op.pair(u, v)
    if abs(pairing) < 1e-14:
        raise NonConvergenceError("eigenmeasure pairs to zero with the eigenfunction")
    u = u / pairing
    eig_res = float(np.max(np.abs(op.apply(v) - lam * v)))
    adj_res = float(np.max(np.abs(op.apply_adjoint(u) - lam * u)))
    gap = abs(op.pair(u, v) - 1.0)
    if isinstance(op, SubshiftOperator):
        v = v.real
        u = u.real
    return PFData(
        lambda0=lam,
        h=op.wrap_function(v),
        nu=op.wrap_measure(u),
        eigen_residual=eig_res,
        adjoint_residual=adj_res,
        normalization_gap=float(gap),
        iterations=it1 + it2,
    )


@dataclass
class HarmonicLimit:
    """Result of iterating the transfer operator on the constant one."""

    h: object
    residual: float
    iterations: int
    sup_history: list = field(default_factory=list)
    grid_history: list = field(default_factory=list)
    grid: object = None


def harmonic_limit(sys, V: WeightFunction, tol=1e-9, max_iter=400, level=None,
                   grid_size=1024) -> HarmonicLimit:
    """Pointwise-monotone limit of R_V^n(1) for a subprobability weight.

    Requires (averaged) R_V(1) <= 1 everywhere on the discretization; the
    iteration then decreases pointwise and the first violation of either
    property raises. Stops when the sup-norm step drops below ``tol``.
    """
    Va = V.averaged_on(sys)
    if isinstance(sys, CirclePower):
        if Va.trig is None:
            raise ValueError("circle harmonic limit needs a trig-polynomial weight")
        grid = unit_grid(grid_size, offset=0.37)
        current = TrigPoly.constant(1.0)
        current_vals = np.ones(grid_size)
        first = sys.transfer_trig(Va.trig, current)
        first_vals = first(grid).real
        worst = int(np.argmax(first_vals))
        if first_vals[worst] > 1.0 + 1e-12:
            raise PreconditionError(
                f"averaged branch sum of V is {first_vals[worst]:.6f} > 1 at "
                f"z = {grid[worst]:.6f}; subprobability precondition fails"
            )
        history = [current_vals]
        sups = [1.0]
        for it in range(1, max_iter + 1):
            nxt = sys.transfer_trig(Va.trig, current).chop()
            nxt_vals = nxt(grid).real
            rise = float(np.max(nxt_vals - current_vals))
            if rise > 1e-12:
                raise NonConvergenceError(
                    f"iterate {it} increased by {rise:.3e} somewhere; "
                    "internal monotonicity violated", residual=rise,
                )
            step = float(np.max(np.abs(nxt_vals - current_vals)))
            history.append(nxt_vals)
            sups.append(float(np.max(nxt_vals)))
            current, current_vals = nxt, nxt_vals
            if step < tol:
                res_vals = sys.transfer_trig(Va.trig, current)(grid).real - current_vals
                return HarmonicLimit(current, float(np.max(np.abs(res_vals))), it,
                                     sups, history, grid)
        raise NonConvergenceError(f"no convergence in {max_iter} iterations",
                                  residual=step)
    if isinstance(sys, Subshift):
        table = Va.table
        if table is None:
            raise SubshiftError("subshift harmonic limit needs a cylinder weight table")
        lvl = level or table.level
        op = SubshiftOperator(sys.A, lvl, table.at_level(lvl))
        vals = np.ones(op.size())
        first = op.apply(vals)
        worst = int(np.argmax(first))
        if first[worst] > 1.0 + 1e-12:
            raise PreconditionError(
                f"averaged branch sum of V is {first[worst]:.8f} > 1 on "
                f"cylinder {op.words[worst]}"
            )
        history = [vals]
        sups = [1.0]
        for it in range(1, max_iter + 1):
            nxt = op.apply(vals)
            rise = float(np.max(nxt - vals))
            if rise > 1e-12:
                raise NonConvergenceError(
                    f"iterate {it} increased by {rise:.3e}", residual=rise)
            step = float(np.max(np.abs(nxt - vals)))
            history.append(nxt)
            sups.append(float(np.max(nxt)))
            vals = nxt
            if step < tol:
                res = float(np.max(np.abs(op.apply(vals) - vals)))
                return HarmonicLimit(op.wrap_function(vals), res, it, sups, history,
                                     op.words)
        raise NonConvergenceError(f"no convergence in {max_iter} iterations",
                                  residual=step)
    raise TypeError(f"unsupported system {type(sys).__name__}")
