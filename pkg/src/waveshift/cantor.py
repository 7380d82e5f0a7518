"""Exact middle-third Cantor set calculus.

The level-n approximant of the set keeps the triadic intervals whose first
n digits avoid 1; the fractional-dimension measure of an admissible level-n
interval is exactly 2^-n. Everything runs in integer/Fraction arithmetic:
these quantities are finite sums of powers of 1/2 and there is no reason to
round anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .circle import CirclePower, unit_grid
from .filters import FilterSystem, preset_filters, qmf_residual


@dataclass(frozen=True)
class TriadicInterval:
    """[k/3^n, (k+1)/3^n), with 0 <= k < 3^n."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be non-negative")
        if not 0 <= self.index < 3 ** self.level:
            raise ValueError(
                f"index {self.index} out of range for level {self.level}"
            )

    def digits(self):
        """Base-3 digits of the left endpoint, most significant first."""
        out = []
        k = self.index
        for _ in range(self.level):
            out.append(k % 3)
            k //= 3
        return out[::-1]

    def children(self):
        return [TriadicInterval(self.level + 1, 3 * self.index + t) for t in range(3)]

    def left(self):
        return Fraction(self.index, 3 ** self.level)


def cantor_mass(interval: TriadicInterval) -> Fraction:
    """Fractional-dimension mass of the interval intersected with the set.

    2^-n when every digit avoids 1, zero otherwise; the full interval at
    level 0 carries mass 1.
    """
    if any(d == 1 for d in interval.digits()):
        return Fraction(0)
    return Fraction(1, 2 ** interval.level)


def approximant_indicator(n, x: Fraction) -> int:
    """Indicator of the level-n approximant at a rational point.

    1 when x lies in [0, 1) and the first n triadic digits of x avoid 1.
    """
    x = Fraction(x)
    if x < 0 or x >= 1:
        return 0
    for _ in range(n):
        x *= 3
        digit = int(x)  # floor for x >= 0
        if digit == 1:
            return 0
        x -= digit
    return 1


def scaling_identity_residual(n) -> int:
    """Exact defect of indicator_{n+1}(x/3) = indicator_n(x) + indicator_n(x-2).

    Scanned over every triadic rational k/3^n in [0, 3). The identity is the
    finite-level shadow of the set's self-similarity and must hold with
    residual exactly zero.
    """
    if n < 1:
        raise ValueError("level must be at least 1")
    worst = 0
    step = Fraction(1, 3 ** n)
    for k in range(3 * 3 ** n):
        x = k * step
        lhs = approximant_indicator(n + 1, x / 3)
        rhs = approximant_indicator(n, x) + approximant_indicator(n, x - 2)
        worst = max(worst, abs(lhs - rhs))
    return worst


def additivity_gap(level) -> Fraction:
    """Exact max |mass(I) - sum of child masses| over level-``level`` intervals."""
    worst = Fraction(0)
    for k in range(3 ** level):
        parent = TriadicInterval(level, k)
        gap = abs(cantor_mass(parent) - sum(cantor_mass(c) for c in parent.children()))
        worst = max(worst, gap)
    return worst


def cantor_filter_system() -> FilterSystem:
    """The scale-3 filter triple tied to the two-tap scaling identity.

    Validated against the cubing map on 1024 circle samples at construction;
    note the deliberate low-pass value sqrt(2) (two taps under scale 3), not
    sqrt(3).
    """
    system = preset_filters("cantor")
    res = qmf_residual(system, CirclePower(3), unit_grid(1024, offset=0.41))
    if res > 1e-12:
        raise AssertionError(f"cantor filter triple failed validation: {res:.3e}")
    system.residual = res
    return system


def detail_inner_products(level) -> dict:
    """Exact Gram entries of the filter-derived level functions.

    At resolution ``level`` each admissible parent interval spawns a father
    combination (low-pass taps), and two detail combinations (the remaining
    filters) over its three children; inner products are taken against the
    child masses. Cross terms must vanish exactly: the low-pass pair sees
    equal-mass children with equal signs against opposite ones, and the
    middle-child filter is supported on a mass-zero interval.
    """
    # taps kept at sqrt(2)-scale so the Gram entries stay rational; zeros are
    # unaffected and the diagonal just carries the factor 2
    taps = {
        "father": {0: 1, 2: 1},
        "detail_pm": {0: 1, 2: -1},
        "detail_gap": {1: 1},
    }
    out = {}
    names = list(taps)
    parents = [TriadicInterval(level, k) for k in range(3 ** level)
               if cantor_mass(TriadicInterval(level, k)) > 0]
    for i, a in enumerate(names):
        for b in names[i:]:
            worst_cross = Fraction(0)
            diag = None
            for parent in parents:
                children = parent.children()
                total = Fraction(0)
                for t, child in enumerate(children):
                    ca = taps[a].get(t, 0)
                    cb = taps[b].get(t, 0)
                    total += ca * cb * cantor_mass(child)
                if a == b:
                    diag = total if diag is None else diag
                    if total != diag:
                        raise AssertionError("diagonal Gram entries differ across parents")
                else:
                    worst_cross = max(worst_cross, abs(total))
            out[(a, b)] = diag if a == b else worst_cross
    return out


def subshift_alphabet_map():
    """Digit correspondence {0, 2} -> {1, 2} tying the set to the 2-full-shift.

    Admissible triadic intervals at level n are exactly the words of the
    full shift on two symbols, and the masses 2^-n agree with its strongly
    invariant cylinder measure.
    """
    return {0: 1, 2: 2}
