"""Path-space machinery: prefixes, transitions, lifted measures, derivatives."""

from fractions import Fraction

import numpy as np
import pytest

from waveshift import (
    CirclePower,
    CylinderBase,
    CylinderFunction,
    CylinderMeasure,
    HaarBase,
    PathMeasureSampler,
    SolenoidPath,
    Subshift,
    TrigPoly,
    WeightFunction,
    admissible_words,
    delta_from_weight,
    delta_table,
    enumerate_paths,
    enumerated_level_marginal,
    fixed_point_gap,
    full_shift_matrix,
    golden_mean_matrix,
    invariant_cylinder_measure,
    lift_measure,
    omega_level_measure,
    preimage_count,
    preset_filters,
    radon_nikodym_estimate,
    rhat,
    unit_grid,
)
from waveshift.solenoid import PathSpaceError, SingularFilterError, path_compatibility_gap


def make_rational_pair(A, rng):
    """Random exact (transition, eigenfunction, weight) triple at rank <= 2.

    Builds positive rational transition masses normalized per fiber, a
    positive rational h, and the averaged weight V that reproduces them;
    by construction (1/c) sum V h over a fiber equals h exactly.
    """
    h = CylinderFunction(A, 1, [Fraction(int(rng.integers(1, 6)), int(rng.integers(1, 4)))
                                for _ in range(A.n)])
    delta_values = {}
    for s in range(1, A.n + 1):
        pre = [(a, s) for a in range(1, A.n + 1) if A.admits(a, s)]
        raw = [Fraction(int(rng.integers(1, 9)), 1) for _ in pre]
        total = sum(raw)
        for word, val in zip(pre, raw):
            delta_values[word] = val / total
    delta = CylinderFunction(A, 2, delta_values)
    shift = Subshift(A)
    V = CylinderFunction(
        A, 2,
        lambda y: delta(y) * shift.branch_count(y[1:]) * h(y[1:]) / h(y))
    return delta, h, V


def test_rhat_round_trip_and_fixed_point():
    sys2 = CirclePower(2)
    path = SolenoidPath((1.0 + 0j, 1.0 + 0j, 1.0 + 0j))
    fwd = rhat(sys2, path)
    assert fwd.points == (1.0 + 0j,) + path.points
    assert rhat(sys2, fwd, inverse=True).points == path.points
    with pytest.raises(PathSpaceError):
        rhat(sys2, SolenoidPath((1.0 + 0j,)), inverse=True)


def test_rhat_commutes_with_coordinates():
    sys2 = CirclePower(2)
    rng = np.random.default_rng(0)
    theta = np.exp(2j * np.pi * rng.random(4))
    points = [theta[0]]
    for t in theta[1:]:
        points.append(sys2.preimages(points[-1])[rng.integers(2)])
    p = SolenoidPath(tuple(points))
    assert path_compatibility_gap(sys2, p) < 1e-12
    assert rhat(sys2, p).coordinate(1) == p.coordinate(0)


def test_delta_uniform_branching():
    A = golden_mean_matrix()
    shift = Subshift(A)
    one = WeightFunction.from_cylinder(CylinderFunction.constant(A, 1, Fraction(1)))
    h = CylinderFunction.constant(A, 1, Fraction(1))
    delta = delta_from_weight(shift, one, h, check_points=admissible_words(A, 2))
    for w in admissible_words(A, 2):
        assert delta(w) == Fraction(1, preimage_count(A, w[1]))


def test_delta_haar_filter_branch_sums():
    sys2 = CirclePower(2)
    W = preset_filters("haar").squared_lowpass()
    h = TrigPoly.constant(1.0)
    delta = delta_from_weight(sys2, W, h, check_points=unit_grid(32, offset=0.2))
    worst = delta_from_weight(sys2, W, h).branch_sum_gap(sys2, unit_grid(64, offset=0.5))
    assert worst < 1e-12


def test_delta_zero_eigenfunction_guard():
    A = golden_mean_matrix()
    shift = Subshift(A)
    one = WeightFunction.from_cylinder(CylinderFunction.constant(A, 1, Fraction(1)))
    h = CylinderFunction(A, 1, [Fraction(1), Fraction(0)])
    with pytest.raises((ZeroDivisionError, PathSpaceError)):
        delta_from_weight(shift, one, h, check_points=admissible_words(A, 2))


def test_path_mass_telescoping_exact():
    A = golden_mean_matrix()
    shift = Subshift(A)
    rng = np.random.default_rng(7)
    delta, h, V = make_rational_pair(A, rng)
    for depth in (1, 3, 5, 8):
        for start in admissible_words(A, 2):
            paths = enumerate_paths(shift, start, depth, transition=delta)
            assert sum(m for _, m in paths) == 1
    # weighted mode: total mass telescopes to h at the start
    W_summed = CylinderFunction(
        A, 2, lambda y: delta(y) * h(y[1:]) / h(y))
    for start in admissible_words(A, 2):
        paths = enumerate_paths(shift, start, 6, weight_pair=(W_summed, h))
        assert sum(m for _, m in paths) == h(start)


def test_kolmogorov_consistency_exact():
    A = golden_mean_matrix()
    shift = Subshift(A)
    rng = np.random.default_rng(13)
    delta, _, _ = make_rational_pair(A, rng)
    start = (1, 2)
    deep = enumerate_paths(shift, start, 6, transition=delta)
    shallow = enumerate_paths(shift, start, 4, transition=delta)
    marginal = {}
    for p, m in deep:
        marginal[p.points[4]] = marginal.get(p.points[4], Fraction(0)) + m
    for p, m in shallow:
        assert marginal[p.points[4]] == sum(
            mm for q, mm in deep if q.points[4] == p.points[4])
        assert p.points[4] in marginal
    assert sum(marginal.values()) == 1


def test_sampler_determinism_and_dead_end():
    A = golden_mean_matrix()
    shift = Subshift(A)
    rng = np.random.default_rng(3)
    delta, h, V = make_rational_pair(A, rng)
    mu = invariant_cylinder_measure(A, 2)
    sampler = PathMeasureSampler(shift, "transition", transition=delta,
                                 base=CylinderBase(mu), seed=42)
    p1 = sampler.sample_path(6, stream=5)
    p2 = sampler.sample_path(6, stream=5)
    assert p1.points == p2.points and p1.weight == p2.weight

    dead = CylinderFunction.constant(A, 2, 0.0)
    bad = PathMeasureSampler(shift, "transition", transition=dead,
                             base=CylinderBase(mu), seed=1)
    with pytest.raises(PathSpaceError, match="dead end"):
        bad.sample_path(2, stream=0)


def test_omega_definition_and_constancy():
    A = golden_mean_matrix()
    shift = Subshift(A)
    rng = np.random.default_rng(23)
    delta, h, V = make_rational_pair(A, rng)
    W = WeightFunction.from_cylinder(V)
    mu = invariant_cylinder_measure(A, 4)
    f = CylinderFunction(A, 2, lambda w: Fraction(w[0] - w[1] + 2))
    # n = 0 is the plain integral of f h
    val0 = omega_level_measure(shift, f, 0, W, h, mu)
    assert val0 == mu.integrate(CylinderFunction(A, 2, lambda w: f(w) * h(w)))
    # f == 1: the value is constant in n (eigen telescoping), exactly
    one = CylinderFunction.constant(A, 1, Fraction(1))
    vals = [omega_level_measure(shift, one, n, W, h, mu) for n in range(4)]
    assert len(set(vals)) == 1


def test_omega_matrix_vs_nested_pointwise():
    from waveshift import apply_ruelle, ruelle_iterate

    A = golden_mean_matrix()
    shift = Subshift(A)
    rng = np.random.default_rng(29)
    delta, h, V = make_rational_pair(A, rng)
    W = WeightFunction.from_cylinder(V)
    f = CylinderFunction(A, 2, lambda w: Fraction(3 * w[0] + w[1], 2))
    fh = CylinderFunction(A, 2, lambda w: f(w) * h(w))
    iterated = ruelle_iterate(shift, W, fh, 3)
    for w in admissible_words(A, 2):
        nested = apply_ruelle(
            shift, W,
            lambda y1: apply_ruelle(
                shift, W, lambda y2: apply_ruelle(shift, W, fh, y2), y1), w)
        assert iterated(w) == nested


def test_fixed_point_gap_exact_cases():
    A = golden_mean_matrix()
    shift = Subshift(A)
    mu = invariant_cylinder_measure(A, 4)
    one = WeightFunction.from_cylinder(CylinderFunction.constant(A, 1, Fraction(1)))
    assert fixed_point_gap(shift, mu, one, test_level=2) == 0

    sys2 = CirclePower(2)
    W = preset_filters("haar").squared_lowpass()
    assert fixed_point_gap(sys2, HaarBase(), W) < 1e-15


def test_lift_pushforward_matches_invariant_measure_exactly():
    A = golden_mean_matrix()
    shift = Subshift(A)
    mu = invariant_cylinder_measure(A, 3)
    one = CylinderFunction.constant(A, 1, Fraction(1))
    delta = delta_table(shift, one, one)
    for depth in (1, 2, 4):
        marginal = enumerated_level_marginal(shift, mu, delta, depth, 3)
        assert marginal.masses == mu.masses


def test_lift_marginal_equals_level_measure_exactly():
    A = golden_mean_matrix()
    shift = Subshift(A)
    rng = np.random.default_rng(31)
    delta, h, V = make_rational_pair(A, rng)
    W = WeightFunction.from_cylinder(V)
    mu = invariant_cylinder_measure(A, 4)
    mu0 = CylinderMeasure(A, 4, [h(w) * m for w, m in zip(mu.words, mu.masses)])
    for depth in (1, 2, 3):
        marginal = enumerated_level_marginal(shift, mu0, delta, depth, 4)
        for c in admissible_words(A, 4):
            indicator = CylinderFunction(
                A, 4, lambda w, c=c: Fraction(1) if w == c else Fraction(0))
            assert marginal.mass(c) == omega_level_measure(
                shift, indicator, depth, W, h, mu)


def test_total_mass_preserved_exactly_on_subshift():
    A = golden_mean_matrix()
    shift = Subshift(A)
    rng = np.random.default_rng(37)
    delta, h, V = make_rational_pair(A, rng)
    mu = invariant_cylinder_measure(A, 2)
    mu0 = CylinderMeasure(A, 2, [h(w) * m for w, m in zip(mu.words, mu.masses)])
    total = Fraction(0)
    for w, m0 in zip(mu0.words, mu0.masses):
        total += m0 * sum(m for _, m in enumerate_paths(shift, w, 5, transition=delta))
    assert total == mu0.total


def test_rn_estimate_identity_weight():
    sys2 = CirclePower(2)
    one = WeightFunction.from_trig(TrigPoly.constant(1.0))
    h = TrigPoly.constant(1.0)
    sampler = lift_measure(sys2, HaarBase(stratified=True), one, h, seed=5,
                           check_points=unit_grid(8))
    rep = radon_nikodym_estimate(sampler, TrigPoly.constant(1.0), 16, 20000)
    assert np.max(rep.abs_error) <= 0.02


def test_rn_estimate_haar_filter():
    sys2 = CirclePower(2)
    filt = preset_filters("haar")
    sampler = lift_measure(sys2, HaarBase(stratified=True),
                           filt.squared_lowpass(), filt.h, seed=5,
                           check_points=unit_grid(8, offset=0.3))
    rep = radon_nikodym_estimate(sampler, filt.lowpass, 32, 50000)
    # the derivative is |1 + z|^2 / 2 in the base coordinate
    mids = np.exp(1j * (rep.bin_edges[:-1] + rep.bin_edges[1:]) / 2)
    closed_form = np.abs(1 + mids) ** 2 / 2
    assert np.max(np.abs(rep.oracle - closed_form)) < 0.02
    assert np.max(rep.abs_error) <= 0.02 * np.maximum(rep.oracle, 1).max()


def test_rn_estimate_refuses_singular_lowpass():
    sys2 = CirclePower(2)
    one = WeightFunction.from_trig(TrigPoly.constant(1.0))
    sampler = lift_measure(sys2, HaarBase(), one, TrigPoly.constant(1.0), seed=1,
                           check_points=unit_grid(4))
    with pytest.raises(SingularFilterError):
        radon_nikodym_estimate(sampler, TrigPoly({}), 8, 100)


def test_rn_estimate_stretched_haar_isolated_zeros_pass():
    sys2 = CirclePower(2)
    filt = preset_filters("stretched_haar")
    from waveshift import TrigDensityBase
    sampler = lift_measure(sys2, TrigDensityBase(filt.h),
                           filt.squared_lowpass(), filt.h, seed=11,
                           check_points=unit_grid(8, offset=0.05))
    rep = radon_nikodym_estimate(sampler, filt.lowpass, 16, 40000)
    # wider tolerance near the filter zeros, tight elsewhere
    assert rep.max_relative_error(floor=0.25) <= 0.05


def test_weighted_mode_total_mass_monte_carlo():
    sys2 = CirclePower(2)
    filt = preset_filters("stretched_haar")
    W_summed = WeightFunction.from_trig(
        filt.squared_lowpass().trig.scale(0.5), convention="summed")
    sampler = PathMeasureSampler(sys2, "weighted",
                                 weight_pair=(W_summed.trig, filt.h),
                                 base=HaarBase(), seed=2)
    _, _, weights = sampler.sample_endpoints(5, 40000, stream=3)
    est = float(np.mean(weights))
    se = float(np.std(weights) / np.sqrt(len(weights)))
    assert abs(est - 1.0) <= 3 * se
