"""Subshifts of finite type with exact rational transfer matrices.

Symbols are 1-based integers, words are tuples of symbols, and a 0-1
transition matrix decides which symbol pairs may occur consecutively.
Everything here that feeds an equality test runs in ``fractions.Fraction``
arithmetic so that invariance identities can be checked exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

Word = tuple


class SubshiftError(ValueError):
    """Malformed matrix, inadmissible word or unusable spectral structure."""


class TransitionMatrix:
    """0-1 matrix of admissible symbol transitions on {1, ..., N}.

    ``entries[i][j] == 1`` means symbol ``i+1`` may be followed by ``j+1``.
    Every column must contain a 1, otherwise the shift map is not onto and
    the whole preimage calculus breaks down.
    """

    def __init__(self, entries):
        a = np.asarray(entries, dtype=np.int64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise SubshiftError(f"transition matrix must be square, got shape {a.shape}")
        if a.shape[0] < 2:
            raise SubshiftError("alphabet size must be at least 2")
        if not np.isin(a, (0, 1)).all():
            raise SubshiftError("transition matrix entries must be exactly 0 or 1")
        dead = np.flatnonzero(a.sum(axis=0) == 0)
        if dead.size:
            raise SubshiftError(
                f"column {dead[0] + 1} has no incoming transition; shift map is not onto"
            )
        self.a = a
        self.n = a.shape[0]
        self._column_sums = a.sum(axis=0)

    def admits(self, first, second):
        return self.a[first - 1, second - 1] == 1

    def column_sum(self, symbol):
        return int(self._column_sums[symbol - 1])

    def __eq__(self, other):
        return isinstance(other, TransitionMatrix) and np.array_equal(self.a, other.a)

    def __hash__(self):
        return hash((self.n, self.a.tobytes()))

    def __repr__(self):
        return f"TransitionMatrix({self.a.tolist()})"


def golden_mean_matrix():
    """[[1,1],[1,0]]: symbol 2 may not repeat."""
    return TransitionMatrix([[1, 1], [1, 0]])


def full_shift_matrix(n):
    return TransitionMatrix(np.ones((n, n), dtype=int))


@dataclass(frozen=True)
class ShiftDiagnostics:
    onto: bool
    irreducible: bool
    aperiodic: bool
    period: int | None
    primitivity_exponent: int | None


def analyze_matrix(A: TransitionMatrix) -> ShiftDiagnostics:
    """Connectivity diagnostics: onto, irreducible (strongly connected) and
    aperiodic (some power strictly positive, exponent searched up to the
    Wielandt bound (N-1)^2 + 1)."""
    n = A.n
    onto = bool((A.a.sum(axis=0) > 0).all())

    reach = A.a.astype(bool)
    closure = reach.copy()
    for _ in range(n):
        closure = closure | (closure @ reach)
    irreducible = bool(closure.all())

    bound = (n - 1) ** 2 + 1
    power = A.a.copy()
    aperiodic = False
    exponent = None
    for p in range(1, bound + 1):
        if (power > 0).all():
            aperiodic = True
            exponent = p
            break
        power = np.minimum(power @ A.a, 1)

    period = None
    if irreducible:
        # gcd of return times through state 1 determines the period
        power = A.a.copy()
        g = 0
        for p in range(1, 2 * n + 1):
            if power[0, 0] > 0:
                g = p if g == 0 else int(np.gcd(g, p))
            power = np.minimum(power @ A.a, 1)
        period = g if g > 0 else None

    return ShiftDiagnostics(onto, irreducible, aperiodic, period, exponent)


def preimage_count(A: TransitionMatrix, x1) -> int:
    """Number of one-step backward extensions of any point starting with x1."""
    if not 1 <= x1 <= A.n:
        raise SubshiftError(f"symbol {x1} out of range 1..{A.n}")
    return A.column_sum(x1)


def is_admissible(A: TransitionMatrix, word) -> bool:
    if any(not 1 <= s <= A.n for s in word):
        return False
    return all(A.admits(a, b) for a, b in zip(word, word[1:]))


def check_admissible(A, word):
    if not is_admissible(A, word):
        raise SubshiftError(f"word {word} is not admissible")


def admissible_words(A: TransitionMatrix, length) -> list:
    """All admissible words of the given length, in lexicographic order."""
    if length == 0:
        return [()]
    words = [(s,) for s in range(1, A.n + 1)]
    for _ in range(length - 1):
        words = [w + (s,) for w in words for s in range(1, A.n + 1) if A.admits(w[-1], s)]
    return words


def preimages_word(A: TransitionMatrix, w) -> list:
    """All admissible one-symbol prepends of w, ordered by the new symbol."""
    check_admissible(A, w)
    if len(w) == 0:
        raise SubshiftError("cannot extend the empty word backwards")
    return [(s,) + tuple(w) for s in range(1, A.n + 1) if A.admits(s, w[0])]


class Subshift:
    """The shift dynamics on X(A), with points represented by finite words.

    A word of length m stands for the cylinder of all points with that
    prefix; ``forward`` drops the first symbol and ``preimages`` prepends
    one, so every operation is exact on cylinder-constant data.
    """

    def __init__(self, A: TransitionMatrix):
        self.A = A

    def forward(self, w):
        if len(w) < 2:
            raise SubshiftError("need at least two symbols to apply the shift")
        return tuple(w[1:])

    def preimages(self, w):
        return preimages_word(self.A, w)

    def branch_count(self, w):
        return preimage_count(self.A, w[0])

    def branch_count_at_image(self, y):
        # c(r(y)) without materializing r(y); needs len(y) >= 2
        return preimage_count(self.A, y[1])

    def __repr__(self):
        return f"Subshift({self.A!r})"


class CylinderFunction:
    """A function constant on rank-``level`` cylinders, stored as a value table.

    Values may be Fractions (exact mode) or floats/complex. Evaluation at a
    longer word truncates, so a rank-L table acts on any rank >= L.
    """

    def __init__(self, A, level, values):
        self.A = A
        self.level = level
        self.words = admissible_words(A, level)
        self.index = {w: i for i, w in enumerate(self.words)}
        if callable(values):
            self.values = [values(w) for w in self.words]
        elif isinstance(values, dict):
            missing = [w for w in self.words if w not in values]
            if missing:
                raise SubshiftError(f"no value for cylinder {missing[0]}")
            self.values = [values[w] for w in self.words]
        else:
            values = list(values)
            if len(values) != len(self.words):
                raise SubshiftError(
                    f"expected {len(self.words)} values at level {self.level}, got {len(values)}"
                )
            self.values = values

    @classmethod
    def constant(cls, A, level, value):
        return cls(A, level, dict.fromkeys(admissible_words(A, level), value))

    def __call__(self, w):
        if len(w) < self.level:
            raise SubshiftError(
                f"word {w} shorter than cylinder rank {self.level}"
            )
        return self.values[self.index[tuple(w[: self.level])]]

    def compose_shift(self):
        """The table of self(r(.)), one rank higher."""
        return CylinderFunction(self.A, self.level + 1, lambda w: self(w[1:]))

    def at_level(self, level):
        """Re-tabulate at a coarser-to-finer rank >= the current one."""
        if level < self.level:
            raise SubshiftError("cannot coarsen a cylinder table")
        if level == self.level:
            return self
        return CylinderFunction(self.A, level, lambda w: self(w))

    def as_float(self):
        return CylinderFunction(
            self.A, self.level, [complex(v) if isinstance(v, complex) else float(v) for v in self.values]
        )

    def map(self, fn):
        return CylinderFunction(self.A, self.level, [fn(v) for v in self.values])


class CylinderMeasure:
    """Masses assigned to the admissible cylinders of one rank."""

    def __init__(self, A, level, masses, total=None):
        self.A = A
        self.level = level
        self.words = admissible_words(A, level)
        if isinstance(masses, dict):
            self.masses = [masses[w] for w in self.words]
        else:
            self.masses = list(masses)
        if len(self.masses) != len(self.words):
            raise SubshiftError("one mass per admissible cylinder required")
        if any(m < 0 for m in self.masses):
            raise SubshiftError("cylinder masses must be non-negative")
        self.index = {w: i for i, w in enumerate(self.words)}
        self.total = sum(self.masses) if total is None else total

    def mass(self, w):
        w = tuple(w)
        if len(w) < self.level:
            # coarser cylinder: sum over admissible extensions
            return sum(m for word, m in zip(self.words, self.masses) if word[: len(w)] == w)
        return self.masses[self.index[w[: self.level]]]

    def integrate(self, f) -> object:
        """Integral of a cylinder function of rank <= level."""
        return sum(m * f(w) for w, m in zip(self.words, self.masses))

    def refine(self, level):
        """Extend to a finer rank using the strongly invariant extension.

        Only valid for the invariant measure itself; general measures do not
        determine their refinements.
        """
        raise NotImplementedError("refinement requires the defining fixed-point system")

    def marginal(self, level):
        if level > self.level:
            raise SubshiftError("marginal only goes to coarser ranks")
        acc = {}
        for w, m in zip(self.words, self.masses):
            acc[w[:level]] = acc.get(w[:level], 0) + m
        return CylinderMeasure(self.A, level, acc)

    def consistency_gap(self):
        """Max |mass(parent) - sum(child masses)| against the coarser rank."""
        if self.level == 1:
            return 0
        coarser = self.marginal(self.level - 1)
        return max(abs(coarser.mass(w) - sum(
            self.masses[i] for i, word in enumerate(self.words) if word[:-1] == w
        )) for w in coarser.words)

    def as_float(self):
        return CylinderMeasure(self.A, self.level, [float(m) for m in self.masses],
                               total=float(self.total))

    def sample_word(self, rng, count=1):
        p = np.array([float(m) for m in self.masses])
        p = p / p.sum()
        picks = rng.choice(len(self.words), size=count, p=p)
        return [self.words[i] for i in picks]


def ruelle_matrix(A: TransitionMatrix, W, level, convention="averaged"):
    """Finite-rank transfer matrix over admissible level-``level`` words.

    Row w collects the admissible prepends y = a.w of w; entry (w, u) weights
    the prepend whose leading cylinder is u by W(u), divided by the branch
    count of w when ``convention`` is averaged. Applying the matrix to a value
    table reproduces the pointwise preimage sum exactly.

    W must be a CylinderFunction of rank <= level with non-negative values.
    Returns (words, M) with M a nested list (Fractions preserved if given).
    """
    if convention not in ("averaged", "summed"):
        raise SubshiftError(f"unknown convention {convention!r}")
    if isinstance(W, CylinderFunction) and W.level > level:
        raise SubshiftError("weight table is finer than the requested rank")
    words = admissible_words(A, level)
    index = {w: i for i, w in enumerate(words)}
    zero = Fraction(0)
    M = [[zero] * len(words) for _ in words]
    for i, w in enumerate(words):
        c = preimage_count(A, w[0])
        for y in preimages_word(A, w):
            u = y[:level]
            wy = W(y)
            if isinstance(wy, complex):
                raise SubshiftError("transfer weights must be real and non-negative")
            if wy < 0:
                raise SubshiftError(f"negative weight {wy} on cylinder {u}")
            M[i][index[u]] += Fraction(wy) if not isinstance(wy, float) else wy
        if convention == "averaged":
            M[i] = [m / c if not isinstance(m, float) else m / c for m in M[i]]
    return words, M


def matrix_apply(M, values):
    return [sum(m * v for m, v in zip(row, values) if m) for row in M]


def matrix_apply_adjoint(M, masses):
    out = [0] * len(M)
    for i, row in enumerate(M):
        mi = masses[i]
        if mi:
            for j, m in enumerate(row):
                if m:
                    out[j] += mi * m
    return out


def matrix_as_array(M):
    return np.array([[float(m) for m in row] for row in M], dtype=float)


def _left_fixed_vector_exact(M):
    """Exact probability vector x with x^T M = x^T, by fraction elimination.

    Assumes the fixed space is one-dimensional (primitive matrix); raises
    otherwise.
    """
    n = len(M)
    # rows of (M^T - I), then solve the homogeneous system
    rows = [[Fraction(M[j][i]) - (1 if i == j else 0) for j in range(n)] for i in range(n)]
    pivots = []
    r = 0
    for col in range(n):
        pivot = next((k for k in range(r, n) if rows[k][col] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        pv = rows[r][col]
        rows[r] = [v / pv for v in rows[r]]
        for k in range(n):
            if k != r and rows[k][col] != 0:
                f = rows[k][col]
                rows[k] = [a - f * b for a, b in zip(rows[k], rows[r])]
        pivots.append(col)
        r += 1
        if r == n:
            break
    free = [c for c in range(n) if c not in pivots]
    if len(free) != 1:
        raise SubshiftError(
            f"fixed space has dimension {len(free)}; matrix is not primitive at this rank"
        )
    x = [Fraction(0)] * n
    x[free[0]] = Fraction(1)
    for row, col in zip(rows, pivots):
        x[col] = -row[free[0]]
    total = sum(x)
    if total == 0:
        raise SubshiftError("degenerate fixed vector")
    x = [v / total for v in x]
    if any(v < 0 for v in x):
        raise SubshiftError("fixed vector is not non-negative; matrix is not primitive")
    return x


def invariant_cylinder_measure(A: TransitionMatrix, level) -> CylinderMeasure:
    """The strongly invariant probability measure, restricted to one rank.

    Solved exactly as the left fixed vector of the unweighted averaged
    transfer matrix. Requires an irreducible and aperiodic matrix; anything
    else is rejected because the fixed vector need not be unique.
    """
    diag = analyze_matrix(A)
    if not (diag.irreducible and diag.aperiodic):
        raise SubshiftError(
            f"invariant measure needs an irreducible aperiodic matrix; got "
            f"irreducible={diag.irreducible}, aperiodic={diag.aperiodic}"
        )
    one = CylinderFunction.constant(A, 1, Fraction(1))
    words, M = ruelle_matrix(A, one, level)
    masses = _left_fixed_vector_exact(M)
    return CylinderMeasure(A, level, dict(zip(words, masses)), total=Fraction(1))


def strong_invariance_gap(A, mu: CylinderMeasure, f: CylinderFunction):
    """| int f dmu - int (1/c) sum_{r(y)=x} f(y) dmu(x) |, exact on Fractions.

    f may have rank up to mu.level + 1 is not allowed; the preimage sum of a
    rank-L function is rank-(L-1) constant so mu at rank f.level suffices.
    """
    if f.level > mu.level:
        raise SubshiftError("test function finer than the measure rank")
    direct = mu.integrate(f)
    shifted = mu.integrate(
        lambda w: Fraction(
            sum(f(y) for y in preimages_word(A, w)), preimage_count(A, w[0])
        )
        if not isinstance(f(w), float)
        else sum(f(y) for y in preimages_word(A, w)) / preimage_count(A, w[0])
    )
    return abs(direct - shifted)
