"""Filter systems, the loop-group action and cascade refinement."""

import math

import numpy as np
import pytest

from waveshift import (
    CirclePower,
    FilterSystem,
    LoopGroupElement,
    ScalingCoefficients,
    TrigPoly,
    cascade_approx,
    coefficient_preset,
    filter_from_coeffs,
    loop_group_apply,
    preset_filters,
    qmf_residual,
    unit_grid,
)
from waveshift.filters import FilterValidationError, halfline_harmonic

SQRT2 = math.sqrt(2.0)


def test_filter_from_coeffs_haar():
    a, n = coefficient_preset("haar")
    low = filter_from_coeffs(a, n)
    assert abs(low.lowpass_value - SQRT2) < 1e-15
    assert not low.trivial and not low.singular


def test_filter_from_coeffs_cantor_lowpass_value():
    a, n = coefficient_preset("cantor")
    low = filter_from_coeffs(a, n)
    assert n == 3
    # two taps under scale 3: the low-pass value is sqrt(2), not sqrt(3)
    assert abs(low.lowpass_value - SQRT2) < 1e-15
    assert abs(low.lowpass_value - math.sqrt(3)) > 0.3


def test_filter_from_coeffs_trivial_flag_and_empty_error():
    low = filter_from_coeffs(ScalingCoefficients({0: 1.0}), 2)
    assert low.trivial
    with pytest.raises(FilterValidationError, match="empty"):
        ScalingCoefficients({0: 0.0})


def test_presets_validate():
    for name, n in (("classical", 2), ("classical", 3), ("classical", 4)):
        system = preset_filters(name, n)
        assert system.validated and system.residual <= 1e-12
        assert [f.coeffs for f in system.filters] == [{k: 1.0} for k in range(n)]
    for name in ("haar", "cantor"):
        system = preset_filters(name)
        assert system.validated and system.residual <= 1e-12
    with pytest.raises(FilterValidationError):
        preset_filters("nonsense")


def test_stretched_haar_preset_carries_its_eigenfunction():
    system = preset_filters("stretched_haar")
    assert not system.validated
    # h = 1 + Re z satisfies the squared-low-pass eigen identity
    sys2 = CirclePower(2)
    W = system.squared_lowpass()
    grid = unit_grid(256, offset=0.7)
    roots = sys2.preimages_array(grid)
    lhs = np.mean(W.trig(roots).real * system.h(roots).real, axis=0)
    assert np.max(np.abs(lhs - system.h(grid).real)) < 1e-12
    # but the full orthogonality system genuinely fails
    assert qmf_residual(system, sys2, grid) > 0.5


def test_qmf_residual_flat_pair_is_one():
    bad = FilterSystem(2, (TrigPoly.constant(1.0), TrigPoly.constant(1.0)),
                       TrigPoly.constant(1.0))
    res = qmf_residual(bad, CirclePower(2), unit_grid(64))
    assert abs(res - 1.0) < 1e-12


def test_squared_lowpass_averages_to_one_for_presets():
    grid = unit_grid(1024, offset=0.11)
    for name, n in (("classical", 2), ("classical", 4), ("haar", None), ("cantor", None)):
        system = preset_filters(name, n)
        sysN = CirclePower(system.n)
        roots = sysN.preimages_array(grid)
        w = system.squared_lowpass()
        vals = np.mean(w.trig(roots).real, axis=0)
        assert np.max(np.abs(vals - 1.0)) <= 1e-12


def test_loop_group_identity_and_swap():
    cl2 = preset_filters("classical", 2)
    sys2 = CirclePower(2)
    grid = unit_grid(128)
    same = loop_group_apply(LoopGroupElement.identity(2), cl2, sys2)
    for f_new, f_old in zip(same.filters, cl2.filters):
        assert np.max(np.abs(f_new(grid) - f_old(grid))) < 1e-14
    swap = loop_group_apply(
        LoopGroupElement.constant(np.array([[0, 1], [1, 0]])), cl2, sys2)
    assert np.max(np.abs(swap.filters[0](grid) - grid)) < 1e-14       # z
    assert np.max(np.abs(swap.filters[1](grid) - 1.0)) < 1e-14        # 1


def test_loop_group_preserves_residual():
    sys2 = CirclePower(2)
    haar = preset_filters("haar")
    grid = unit_grid(256, offset=0.05)
    base = qmf_residual(haar, sys2, grid)
    rng = np.random.default_rng(21)
    for _ in range(10):
        el = LoopGroupElement.random(2, 3, rng)
        assert el.unitarity_defect() <= 1e-12
        moved = loop_group_apply(el, haar, sys2)
        assert qmf_residual(moved, sys2, grid) <= base + 1e-10


def test_loop_group_rejects_non_unitary():
    bad = LoopGroupElement([0.0], [np.array([[1.0, 0.0], [0.0, 2.0]])])
    with pytest.raises(FilterValidationError, match="unitary"):
        loop_group_apply(bad, preset_filters("classical", 2), CirclePower(2))


def test_loop_group_action_composes_via_pointwise_product():
    sys2 = CirclePower(2)
    haar = preset_filters("haar")
    rng = np.random.default_rng(33)
    a = LoopGroupElement.random(2, 2, rng)
    b = LoopGroupElement.random(2, 4, rng)
    grid = unit_grid(200, offset=0.41)
    two_steps = loop_group_apply(b, loop_group_apply(a, haar, sys2), sys2)
    combined = loop_group_apply(b.pointwise_product(a), haar, sys2)
    for f1, f2 in zip(two_steps.filters, combined.filters):
        assert np.max(np.abs(f1(grid) - f2(grid))) < 1e-10


def test_cascade_haar_exact_fixed_point():
    a, n = coefficient_preset("haar")
    result = cascade_approx(a, n, iterations=8, grid_per_unit=64)
    assert result.residual == 0.0
    assert all(r == 0.0 for r in result.residual_history)
    assert np.array_equal(result.phi, (result.xs < 1.0).astype(float))


def test_cascade_stretched_haar_support_indicator_is_fixed():
    a, n = coefficient_preset("stretched_haar")
    size = 2 * 64
    phi0 = np.ones(size)  # the indicator of [0, 2) on its own support grid
    result = cascade_approx(a, n, iterations=6, grid_per_unit=64, phi0=phi0)
    assert result.residual <= 1e-12
    assert all(r <= 1e-12 for r in result.residual_history)


def test_cascade_zero_iterations_returns_seed():
    a, n = coefficient_preset("haar")
    result = cascade_approx(a, n, iterations=0, grid_per_unit=32)
    assert np.array_equal(result.phi, (result.xs < 1.0).astype(float))
    assert result.residual_history == []


def test_cascade_residuals_non_increasing_for_presets():
    # meaningful only while the grid resolves the iterates: m <= log_N(grid)
    for name, iters in (("haar", 8), ("stretched_haar", 8), ("cantor", 5)):
        a, n = coefficient_preset(name)
        grid = n ** iters
        result = cascade_approx(a, n, iterations=iters, grid_per_unit=grid)
        hist = result.residual_history
        assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_cascade_rejects_incommensurate_grid():
    a, n = coefficient_preset("haar")
    with pytest.raises(ValueError, match="power of the scale"):
        cascade_approx(a, n, iterations=2, grid_per_unit=48)


def test_halfline_harmonic_is_harmonic_and_bounded():
    sys2 = CirclePower(2)
    for name in ("haar", "stretched_haar"):
        system = preset_filters(name)
        h0 = halfline_harmonic(name)
        w = system.squared_lowpass()
        grid = unit_grid(512, offset=0.37)
        roots = sys2.preimages_array(grid)
        lhs = np.mean(w.trig(roots).real * h0(roots), axis=0)
        assert np.max(np.abs(lhs - h0(grid))) < 1e-10
        h_vals = system.h(grid).real
        vals = h0(grid)
        assert np.all(vals >= -1e-12)
        assert np.all(vals <= h_vals + 1e-12)
    with pytest.raises(FilterValidationError):
        halfline_harmonic("cantor")
