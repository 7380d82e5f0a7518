"""Martingale vectors, the covariant triple, multiplicity and cocycles."""

from fractions import Fraction

import numpy as np
import pytest

from waveshift import (
    CirclePower,
    CircleMartingaleContext,
    CylinderFunction,
    HaarBase,
    SubshiftMartingaleContext,
    Subshift,
    SubshiftOperator,
    TrigPoly,
    WeightFunction,
    admissible_words,
    covariance_residual,
    dilate,
    dilate_inverse,
    embed,
    full_shift_matrix,
    golden_mean_matrix,
    harmonic_to_cocycle,
    inner_product,
    invariant_cylinder_measure,
    lift_measure,
    multiplicity_sum_check,
    multiply,
    pf_solve,
    preset_filters,
    unit_grid,
    vacuum,
)
from waveshift.filters import halfline_harmonic
from waveshift.martingale import (
    ConsistencyError,
    LevelBudgetError,
    norm,
    parseval_defect,
)


def golden_context(level=3, seed=8, headroom=3):
    A = golden_mean_matrix()
    rng = np.random.default_rng(seed)
    words = admissible_words(A, level)
    w_vals = 0.5 + rng.random(len(words))
    op = SubshiftOperator(A, level, CylinderFunction(A, level, list(w_vals)))
    pf = pf_solve(op, tol=1e-13, max_iter=20000)
    m0 = CylinderFunction(A, level, [float(np.sqrt(v / pf.lambda0)) for v in w_vals])
    mu = invariant_cylinder_measure(A, level + headroom).as_float()
    ctx = SubshiftMartingaleContext(Subshift(A), m0, pf.h, mu,
                                    rank_budget=level + headroom)
    return ctx, rng


def test_embed_constant_is_vacuum():
    ctx, _ = golden_context()
    A = ctx.sys.A
    v = embed(ctx, CylinderFunction.constant(A, 1, 1.0), 2)
    phi = vacuum(ctx, top=2)
    for n in range(3):
        assert ctx.sup_gap(v.level(n), phi.level(n)) < 1e-10


def test_embed_consistency_exact_in_rational_mode():
    # uniform filter on the full shift keeps everything rational
    A = full_shift_matrix(2)
    m0 = CylinderFunction.constant(A, 1, Fraction(1))
    h = CylinderFunction.constant(A, 1, Fraction(1))
    mu = invariant_cylinder_measure(A, 5)
    ctx = SubshiftMartingaleContext(Subshift(A), m0, h, mu, rank_budget=5)
    indicator = CylinderFunction(
        A, 2, lambda w: Fraction(1) if w == (1, 2) else Fraction(0))
    v = embed(ctx, indicator, 2)
    assert v.consistency_gap() == 0


def test_embed_level_shift_identity():
    ctx, _ = golden_context()
    A = ctx.sys.A
    f = CylinderFunction(A, 2, lambda w: float(w[0] * 2 + w[1]))
    v0 = embed(ctx, f, 0)
    v1 = embed(ctx, f.compose_shift(), 1)
    for n in range(3):
        assert ctx.sup_gap(v0.level(n), v1.level(n)) < 1e-10


def test_vacuum_pairing_reproduces_weighted_integral():
    ctx, rng = golden_context()
    A = ctx.sys.A
    phi = vacuum(ctx, top=1)
    lhs = inner_product(phi, phi)
    rhs = ctx.integrate(ctx.h)
    assert abs(complex(lhs) - complex(rhs)) < 1e-10
    for _ in range(5):
        f = CylinderFunction(A, 2, list(rng.normal(size=len(admissible_words(A, 2)))))
        lhs = inner_product(phi, multiply(f, phi))
        rhs = ctx.integrate(ctx.mul(f, ctx.h))
        assert abs(complex(lhs) - complex(rhs)) < 1e-10


def test_inner_product_level_independent():
    ctx, rng = golden_context()
    A = ctx.sys.A
    f = CylinderFunction(A, 3, list(rng.normal(size=len(admissible_words(A, 3)))))
    g = CylinderFunction(A, 3, list(rng.normal(size=len(admissible_words(A, 3)))))
    v1, w1 = embed(ctx, f, 1), embed(ctx, g, 1)
    v2, w2 = embed(ctx, ctx.compose_r(f), 2), embed(ctx, ctx.compose_r(g), 2)
    assert abs(complex(inner_product(v1, w1)) - complex(inner_product(v2, w2))) < 1e-9


def test_inner_product_sesquilinear_and_conjugate_symmetric():
    ctx, rng = golden_context()
    A = ctx.sys.A
    words = admissible_words(A, 3)

    def rand_vec():
        vals = rng.normal(size=len(words)) + 1j * rng.normal(size=len(words))
        return embed(ctx, CylinderFunction(A, 3, list(vals)), 1)

    u, v, w = rand_vec(), rand_vec(), rand_vec()
    a = complex(rng.normal(), rng.normal())
    lhs = complex(inner_product(u, v)) + a * complex(inner_product(u, w))
    rhs = complex(inner_product(u, _combine(ctx, v, w, a)))
    assert abs(lhs - rhs) < 1e-12
    assert abs(complex(inner_product(u, v)) -
               complex(inner_product(v, u)).conjugate()) < 1e-12


def _combine(ctx, v, w, a):
    """v + a*w, levelwise."""
    from waveshift.martingale import MartingaleVector

    top = max(v.top, w.top)
    levels = []
    for n in range(top + 1):
        f, g = v.level(n), w.level(n)
        rank = max(f.level, g.level)
        levels.append(CylinderFunction(ctx.sys.A, rank,
                                       lambda word, f=f, g=g: f(word) + a * g(word)))
    return MartingaleVector(ctx, levels)


def test_dilation_of_vacuum_is_filter_multiplication():
    ctx, _ = golden_context()
    phi = vacuum(ctx, top=2)
    lhs = dilate(phi)
    rhs = multiply(ctx.m0, phi)
    for n in range(2):
        assert ctx.sup_gap(lhs.level(n), rhs.level(n)) < 1e-12


def test_covariance_and_isometry_random_vectors():
    ctx, rng = golden_context(level=4)
    A = ctx.sys.A
    words = admissible_words(A, 4)
    for _ in range(20):
        f = CylinderFunction(A, 4, list(rng.normal(size=len(words))
                                        + 1j * rng.normal(size=len(words))))
        g = CylinderFunction(A, 1, list(rng.normal(size=A.n)))
        v = embed(ctx, f, 1)
        assert covariance_residual(ctx, g, v) <= 1e-10
        w = embed(ctx, CylinderFunction(A, 4, list(rng.normal(size=len(words)))), 1)
        gap = abs(complex(inner_product(dilate(v), dilate(w)))
                  - complex(inner_product(v, w)))
        assert gap <= 1e-10


def test_dilate_round_trip():
    ctx, rng = golden_context()
    A = ctx.sys.A
    f = CylinderFunction(A, 3, list(rng.normal(size=len(admissible_words(A, 3)))))
    v = embed(ctx, f, 1)
    back = dilate(dilate_inverse(v))
    assert norm(back - v) < 1e-10


def test_operators_preserve_consistency():
    ctx, rng = golden_context()
    A = ctx.sys.A
    f = CylinderFunction(A, 3, list(rng.normal(size=len(admissible_words(A, 3)))))
    v = embed(ctx, f, 1)
    g = CylinderFunction(A, 1, [2.0, -1.0])
    for out in (dilate(v), dilate_inverse(v), multiply(g, v)):
        assert out.consistency_gap() <= 1e-10


def test_level_budget_enforced():
    ctx, rng = golden_context(level=3, headroom=2)
    A = ctx.sys.A
    f = CylinderFunction(A, 3, list(rng.normal(size=len(admissible_words(A, 3)))))
    v = embed(ctx, f, 1)
    with pytest.raises(LevelBudgetError):
        dilate(dilate(dilate(dilate(v))))


def test_norm_matches_level_measure():
    # the embedding is isometric: ||embed(f, n)||^2 = int R^n(|f|^2 h) dmu
    from waveshift import omega_level_measure

    ctx, rng = golden_context()
    A = ctx.sys.A
    words = admissible_words(A, 3)
    f = CylinderFunction(A, 3, list(rng.normal(size=len(words))))
    v = embed(ctx, f, 2)
    f2 = CylinderFunction(A, 3, lambda w: f(w) ** 2)
    expected = omega_level_measure(
        ctx.sys, f2, 2, ctx.weight, ctx.h,
        invariant_cylinder_measure(A, ctx.mu.level).as_float(), tol=1e-6)
    assert abs(norm(v) ** 2 - float(expected)) < 1e-9


def test_multiplicity_constant_tables():
    A2 = full_shift_matrix(2)
    ones = CylinderFunction.constant(A2, 2, 1)
    check = multiplicity_sum_check(ones, A2)
    assert all(v == 2 for v in check.m_v1.values)
    assert all(v == 1 for v in check.m_w0.values)
    assert check.exact

    A = golden_mean_matrix()
    ones = CylinderFunction.constant(A, 2, 1)
    check = multiplicity_sum_check(ones, A)
    for w in check.m_v1.words:
        assert check.m_v1(w) == (2 if w[0] == 1 else 1)
        assert check.m_w0(w) == (1 if w[0] == 1 else 0)
    assert check.exact


def test_multiplicity_against_brute_force():
    rng = np.random.default_rng(10)
    for A in (golden_mean_matrix(), full_shift_matrix(3)):
        words = admissible_words(A, 3)
        for _ in range(25):
            table = CylinderFunction(A, 3, [int(v) for v in rng.integers(0, 4, len(words))])
            check = multiplicity_sum_check(table, A)
            # oracle: enumerate rank-4 words and group by their shifted suffix
            acc = {w: 0 for w in words}
            for z in admissible_words(A, 4):
                acc[z[1:]] += int(table(z))
            for w in words:
                assert check.m_v1(w) == acc[w]
                assert check.m_w0(w) == acc[w] - int(table(w))


def test_multiplicity_rejects_non_integer():
    A = golden_mean_matrix()
    bad = CylinderFunction.constant(A, 2, 0.5)
    with pytest.raises(ValueError):
        multiplicity_sum_check(bad, A)


def test_cocycle_trivial_ratios():
    sys2 = CirclePower(2)
    filt = preset_filters("haar")
    W = filt.squared_lowpass()
    sampler = lift_measure(sys2, HaarBase(), W, filt.h, seed=3,
                           check_points=unit_grid(8))
    diag = harmonic_to_cocycle(sys2, W, lambda z: np.ones(np.shape(z)),
                               filt.h, sampler, [1, 3, 5], n_paths=200)
    assert np.max(np.abs(diag.ratios - 1.0)) < 1e-12
    diag = harmonic_to_cocycle(sys2, W, lambda z: np.zeros(np.shape(z)),
                               filt.h, sampler, [1, 3, 5], n_paths=200)
    assert np.max(np.abs(diag.ratios)) == 0.0


def test_cocycle_halfline_harmonic_converges():
    sys2 = CirclePower(2)
    filt = preset_filters("haar")
    W = filt.squared_lowpass()
    sampler = lift_measure(sys2, HaarBase(), W, filt.h, seed=14,
                           check_points=unit_grid(8, offset=0.2))
    h0 = halfline_harmonic("haar")
    diag = harmonic_to_cocycle(sys2, W, h0, filt.h, sampler,
                               [4, 8, 16, 24], n_paths=4000)
    assert all(a >= b for a, b in zip(diag.median_steps, diag.median_steps[1:]))
    assert diag.invariance_gap <= 0.02
    assert diag.bound_constant <= 1.0 + 1e-9


def test_cocycle_rejects_non_harmonic():
    sys2 = CirclePower(2)
    filt = preset_filters("haar")
    W = filt.squared_lowpass()
    sampler = lift_measure(sys2, HaarBase(), W, filt.h, seed=3,
                           check_points=unit_grid(8))
    bogus = lambda z: np.real(np.asarray(z)) + 2.0
    with pytest.raises(ValueError, match="harmonic"):
        harmonic_to_cocycle(sys2, W, bogus, filt.h, sampler, [2, 4], n_paths=50)


def test_parseval_frame_smoke_classical2():
    ctx = CircleMartingaleContext(2, TrigPoly.constant(1.0), TrigPoly.constant(1.0))
    rng = np.random.default_rng(19)
    for _ in range(3):
        f = TrigPoly({k: complex(*rng.normal(size=2)) for k in range(-4, 5)})
        v = embed(ctx, f, 3)
        assert parseval_defect(ctx, v, levels=3, band=6) < 1e-8
