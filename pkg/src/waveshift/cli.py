"""Batch command-line front end.

One run = one subcommand + one effective config (JSON file merged with a
few convenience flags) + one seed. Every run writes a JSON report whose
content is a pure function of (config, seed); timing goes to stdout only,
never into artifacts, so repeated runs are byte-identical.

Exit codes: 0 success, 2 config error, 3 numeric non-convergence (the
report is still written with the error embedded).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import __version__
from .cantor import (
    TriadicInterval,
    additivity_gap,
    cantor_filter_system,
    cantor_mass,
    detail_inner_products,
    scaling_identity_residual,
)
from .circle import CirclePower, TrigPoly, unit_grid
from .complexdyn import PointCloudMeasure, brolin_measure, moment, preset_map, RationalMap
from .emit import config_digest, ensure_dir, write_csv, write_density_svg, write_json
from .filters import (
    FilterValidationError,
    LoopGroupElement,
    ScalingCoefficients,
    cascade_approx,
    coefficient_preset,
    halfline_harmonic,
    loop_group_apply,
    preset_filters,
    qmf_residual,
)
from .martingale import (
    SubshiftMartingaleContext,
    covariance_residual,
    dilate,
    embed,
    harmonic_to_cocycle,
    inner_product,
    multiplicity_sum_check,
)
from .solenoid import (
    CylinderBase,
    HaarBase,
    PathSpaceError,
    TrigDensityBase,
    delta_table,
    enumerate_paths,
    enumerated_level_marginal,
    lift_measure,
    omega_level_measure,
    radon_nikodym_estimate,
)
from .subshift import (
    CylinderFunction,
    CylinderMeasure,
    Subshift,
    SubshiftError,
    TransitionMatrix,
    admissible_words,
    analyze_matrix,
    full_shift_matrix,
    golden_mean_matrix,
    invariant_cylinder_measure,
    preimage_count,
)
from .transfer import (
    NonConvergenceError,
    PreconditionError,
    SubshiftOperator,
    WeightFunction,
    harmonic_limit,
    pf_solve,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

FIXED_CHUNKS = 16  # the sampling split is fixed so --threads cannot change results


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- parsing --


def parse_matrix(spec) -> TransitionMatrix:
    if isinstance(spec, str):
        if spec == "golden-mean":
            return golden_mean_matrix()
        if spec.startswith("full-"):
            try:
                return full_shift_matrix(int(spec.split("-", 1)[1]))
            except (ValueError, SubshiftError) as err:
                raise ConfigError(f"system: bad full-shift spec {spec!r}: {err}")
        raise ConfigError(f"system: unknown preset {spec!r}")
    if isinstance(spec, dict):
        spec = spec.get("matrix", spec)
    if not isinstance(spec, list):
        raise ConfigError("system.matrix: expected a list of rows")
    for i, row in enumerate(spec):
        if not isinstance(row, list):
            raise ConfigError(f"system.matrix[{i}]: expected a list, got {type(row).__name__}")
        for j, v in enumerate(row):
            if v not in (0, 1):
                raise ConfigError(f"system.matrix[{i}][{j}]: entries must be 0 or 1, got {v!r}")
    try:
        return TransitionMatrix(spec)
    except SubshiftError as err:
        raise ConfigError(f"system.matrix: {err}")


def parse_filter(spec):
    if isinstance(spec, str):
        try:
            return preset_filters(spec)
        except FilterValidationError as err:
            raise ConfigError(f"filter: {err}")
    if isinstance(spec, dict):
        try:
            taps = {int(k): v for k, v in spec["coeffs"].items()} \
                if isinstance(spec["coeffs"], dict) else dict(enumerate(spec["coeffs"]))
            n = int(spec["n"])
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigError(f"filter: need coeffs and n ({err})")
        from .filters import FilterSystem, filter_from_coeffs
        low = filter_from_coeffs(ScalingCoefficients(taps), n)
        return FilterSystem(n, (low.trig,), TrigPoly.constant(1.0),
                            name="custom", validated=False,
                            singular_lowpass=low.singular)
    raise ConfigError(f"filter: cannot parse {spec!r}")


def parse_weight(spec, A, level) -> WeightFunction:
    if spec in (None, "one"):
        return WeightFunction.from_cylinder(CylinderFunction.constant(A, 1, Fraction(1)))
    if spec == "zero":
        return WeightFunction.from_cylinder(CylinderFunction.constant(A, 1, Fraction(0)))
    if isinstance(spec, dict) and spec.get("type") == "cylinder":
        try:
            values = {tuple(int(c) for c in k.split(".")): Fraction(str(v))
                      for k, v in spec["values"].items()}
        except (KeyError, ValueError) as err:
            raise ConfigError(f"weight.values: {err}")
        lvl = len(next(iter(values)))
        table = CylinderFunction(A, lvl, values)
        return WeightFunction.from_cylinder(table,
                                            convention=spec.get("convention", "averaged"))
    if isinstance(spec, dict) and spec.get("type") == "random-positive":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        lvl = int(spec.get("level", level))
        vals = 0.5 + rng.random(len(admissible_words(A, lvl)))
        return WeightFunction.from_cylinder(CylinderFunction(A, lvl, list(vals)))
    raise ConfigError(f"weight: cannot parse {spec!r}")


def _filter_base(filt):
    """Base measure h dHaar of a preset pair; stratified when h is constant."""
    h = filt.h
    if isinstance(h, TrigPoly) and h.degree == 0:
        return HaarBase(stratified=True)
    return TrigDensityBase(h)


def _chunk_sizes(total):
    base, extra = divmod(total, FIXED_CHUNKS)
    return [base + (1 if i < extra else 0) for i in range(FIXED_CHUNKS)]


def _run_chunks(fn, sizes, threads):
    indexed = list(enumerate(sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda pair: fn(*pair), indexed))
    return [fn(i, n) for i, n in indexed]


# --------------------------------------------------------------- handlers --


def cmd_analyze_shift(cfg, out, formats, threads):
    A = parse_matrix(cfg["system"])
    level = int(cfg.get("level", 2))
    diag = analyze_matrix(A)
    report = {
        "alphabet": A.n,
        "diagnostics": {
            "onto": diag.onto, "irreducible": diag.irreducible,
            "aperiodic": diag.aperiodic, "period": diag.period,
            "primitivity_exponent": diag.primitivity_exponent,
        },
        "preimage_counts": {str(s): preimage_count(A, s) for s in range(1, A.n + 1)},
    }
    artifacts = []
    if diag.irreducible and diag.aperiodic:
        mu = invariant_cylinder_measure(A, level)
        report["invariant_measure"] = {
            "level": level,
            "masses": {".".join(map(str, w)): str(m) for w, m in zip(mu.words, mu.masses)},
            "refinement_gap": str(mu.consistency_gap()),
        }
        if "csv" in formats:
            path = os.path.join(out, "invariant_measure.csv")
            write_csv(path, ["word", "mass_exact", "mass_float"],
                      [[".".join(map(str, w)), str(m), float(m)]
                       for w, m in zip(mu.words, mu.masses)])
            artifacts.append(path)
    else:
        report["invariant_measure"] = None
    return report, artifacts


def cmd_pf_solve(cfg, out, formats, threads):
    A = parse_matrix(cfg["system"])
    level = int(cfg.get("level", 3))
    W = parse_weight(cfg.get("weight", "one"), A, level)
    tol = float(cfg.get("tol", 1e-12))
    table = W.table.as_float()
    if table.level > level:
        raise ConfigError(
            f"weight table rank {table.level} is finer than the solve level {level}")
    op = SubshiftOperator(A, level, table, cfg.get("convention", "averaged"))
    pf = pf_solve(op, tol=tol, max_iter=int(cfg.get("max_iter", 5000)))
    report = {
        "lambda0": pf.lambda0,
        "eigen_residual": pf.eigen_residual,
        "adjoint_residual": pf.adjoint_residual,
        "normalization_gap": pf.normalization_gap,
        "iterations": pf.iterations,
        "level": level,
    }
    artifacts = []
    if "csv" in formats:
        path = os.path.join(out, "pf_data.csv")
        write_csv(path, ["word", "h", "nu"],
                  [[".".join(map(str, w)), float(hv), float(nv)] for w, hv, nv
                   in zip(pf.h.words, pf.h.values, pf.nu.masses)])
        artifacts.append(path)
    return report, artifacts


def cmd_brolin(cfg, out, formats, threads):
    name = cfg.get("map", "z2")
    r = preset_map(name) if isinstance(name, str) else RationalMap(name["numer"], name.get("denom", [1]))
    z0 = complex(*cfg.get("z0", [1.0, 0.0]))
    depth = int(cfg.get("depth", 30))
    samples = int(cfg.get("samples", 100000))
    burn_in = int(cfg.get("burn_in", 20))
    seed = int(cfg["seed"])
    sizes = _chunk_sizes(samples)

    def one_chunk(i, n):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        return brolin_measure(r, z0, depth, n, burn_in, rng)

    clouds = _run_chunks(one_chunk, sizes, threads)
    cloud = PointCloudMeasure(
        np.concatenate([c.points for c in clouds]), None, 1.0,
        metadata={"seed": seed, "depth": depth, "burn_in": burn_in},
    )
    moments = {str(k): abs(moment(cloud, k)) for k in range(1, 9)}
    report = {
        "map": name if isinstance(name, str) else "custom",
        "samples": samples, "depth": depth, "burn_in": burn_in,
        "abs_moments": moments,
        "max_radius": float(np.max(np.abs(cloud.points))),
    }
    artifacts = []
    if "csv" in formats:
        keep = min(int(cfg.get("csv_points", 2000)), samples)
        path = os.path.join(out, "cloud.csv")
        write_csv(path, ["re", "im", "weight"],
                  [[float(z.real), float(z.imag), 1.0 / samples]
                   for z in cloud.points[:keep]])
        artifacts.append(path)
    if "svg" in formats:
        path = os.path.join(out, "density.svg")
        write_density_svg(path, cloud, bins=int(cfg.get("bins", 64)))
        artifacts.append(path)
    return report, artifacts


def cmd_qmf_check(cfg, out, formats, threads):
    filt = parse_filter(cfg.get("filter", "haar"))
    samples = int(cfg.get("samples", 1024))
    sys_n = CirclePower(filt.n)
    res = qmf_residual(filt, sys_n, unit_grid(samples, offset=0.17))
    low = filt.lowpass
    report = {
        "filter": filt.name,
        "branch_count": filt.n,
        "samples": samples,
        "qmf_residual": res,
        "lowpass_value_at_one": abs(complex(low(1.0))) if callable(low) else None,
        "validated_preset": filt.validated,
    }
    return report, []


def cmd_loopgroup(cfg, out, formats, threads):
    filt = parse_filter(cfg.get("filter", "haar"))
    count = int(cfg.get("count", 5))
    cells = int(cfg.get("cells", 3))
    samples = int(cfg.get("samples", 512))
    seed = int(cfg["seed"])
    sys_n = CirclePower(filt.n)
    grid = unit_grid(samples, offset=0.23)
    before = qmf_residual(filt, sys_n, grid)
    rows = []
    worst = 0.0
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        el = LoopGroupElement.random(len(filt.filters), cells, rng)
        moved = loop_group_apply(el, filt, sys_n)
        after = qmf_residual(moved, sys_n, grid)
        delta = after - before
        worst = max(worst, abs(delta))
        rows.append([i, el.unitarity_defect(), after, delta])
    report = {
        "filter": filt.name, "elements": count, "cells": cells,
        "residual_before": before, "max_residual_change": worst,
    }
    artifacts = []
    if "csv" in formats:
        path = os.path.join(out, "loopgroup.csv")
        write_csv(path, ["element", "unitarity_defect", "residual_after", "change"], rows)
        artifacts.append(path)
    return report, artifacts


def cmd_cascade(cfg, out, formats, threads):
    spec = cfg.get("coeffs", "haar")
    if isinstance(spec, str):
        try:
            coeffs, n = coefficient_preset(spec)
        except FilterValidationError as err:
            raise ConfigError(f"cascade: {err}")
    else:
        coeffs = ScalingCoefficients({int(k): v for k, v in spec.items()}
                                     if isinstance(spec, dict) else dict(enumerate(spec)))
        if cfg.get("scale") is None:
            raise ConfigError("cascade: custom coeffs need an explicit scale")
        n = int(cfg["scale"])
    n = int(cfg.get("scale") or n)
    iterations = int(cfg.get("iterations", 10))
    grid = int(cfg.get("grid_per_unit", 81 if n == 3 else 64))
    phi0 = None
    if cfg.get("probe_support_indicator"):
        # seed with the indicator of the full support to probe it as a fixed point
        import math
        kmin, kmax = coeffs.support()
        support = max(1, math.ceil(kmax / (n - 1)))
        size = support * grid
        phi0 = (np.arange(size) / grid < support).astype(float)
    try:
        result = cascade_approx(coeffs, n, iterations, grid, phi0=phi0)
    except ValueError as err:
        raise ConfigError(f"cascade: {err}")
    report = {
        "scale": n, "iterations": iterations, "grid_per_unit": grid,
        "refinement_residual": result.residual,
        "residual_history": result.residual_history,
    }
    artifacts = []
    if "csv" in formats:
        path = os.path.join(out, "scaling_function.csv")
        write_csv(path, ["x", "phi"],
                  [[float(x), float(v)] for x, v in zip(result.xs, result.phi)])
        artifacts.append(path)
    return report, artifacts


def cmd_lift(cfg, out, formats, threads):
    filt = parse_filter(cfg.get("filter", "haar"))
    depth = int(cfg.get("depth", 4))
    samples = int(cfg.get("samples", 100000))
    max_k = int(cfg.get("moments", 4))
    seed = int(cfg["seed"])
    sys_n = CirclePower(filt.n)
    W = filt.squared_lowpass()
    h = filt.h
    base = _filter_base(filt)
    sampler = lift_measure(sys_n, base, W, h, seed=seed,
                           check_points=unit_grid(64, offset=0.31))
    sizes = _chunk_sizes(samples)

    def one_chunk(i, n):
        _, ends, _ = sampler.sample_endpoints(depth, n, stream=i)
        return ends

    ends = np.concatenate(_run_chunks(one_chunk, sizes, threads))
    rows = []
    worst_sigma = 0.0
    for k in range(0, max_k + 1):
        exact = omega_level_measure(sys_n, TrigPoly.monomial(k), depth, W, h,
                                    mu=None)
        est = np.mean(ends ** k)
        se = float(np.std(ends ** k) / np.sqrt(len(ends))) if k else 0.0
        gap = abs(est - exact)
        sigmas = gap / se if se else 0.0
        worst_sigma = max(worst_sigma, sigmas)
        rows.append([k, complex(exact).real, complex(exact).imag,
                     float(est.real), float(est.imag), se, sigmas])
    report = {
        "filter": filt.name, "depth": depth, "samples": samples,
        "worst_moment_sigmas": worst_sigma,
        "total_mass_exact": complex(omega_level_measure(
            sys_n, TrigPoly.constant(1.0), depth, W, h, mu=None)).real,
    }
    artifacts = []
    if "csv" in formats:
        path = os.path.join(out, "level_moments.csv")
        write_csv(path, ["k", "exact_re", "exact_im", "mc_re", "mc_im",
                         "std_error", "sigmas"], rows)
        artifacts.append(path)
    return report, artifacts


def cmd_pathspace(cfg, out, formats, threads):
    A = parse_matrix(cfg.get("system", "golden-mean"))
    shift = Subshift(A)
    level = int(cfg.get("level", 2))
    depth = int(cfg.get("depth", 6))
    start = tuple(cfg.get("start", admissible_words(A, level)[0]))
    one = CylinderFunction.constant(A, 1, Fraction(1))
    h_table = CylinderFunction.constant(A, 1, Fraction(1))
    V = parse_weight(cfg.get("weight", "one"), A, level)
    delta = delta_table(shift, V.table, h_table)
    paths = enumerate_paths(shift, start, depth, transition=delta)
    total_transition = sum(mass for _, mass in paths)
    w_summed = CylinderFunction(A, 2, lambda w: Fraction(1, preimage_count(A, w[1])))
    weighted = enumerate_paths(shift, start, depth,
                               weight_pair=(w_summed, h_table))
    total_weighted = sum(mass for _, mass in weighted)
    report = {
        "start": ".".join(map(str, start)), "depth": depth,
        "path_count": len(paths),
        "transition_mass_total": str(total_transition),
        "transition_mass_is_one": total_transition == 1,
        "weighted_mass_total": str(total_weighted),
        "weighted_mass_matches_h": total_weighted == h_table(start),
    }
    artifacts = []
    if "csv" in formats:
        path = os.path.join(out, "paths.csv")
        rows = [[".".join(map(str, p.points[-1])), str(mass), float(mass)]
                for p, mass in paths[: int(cfg.get("csv_paths", 512))]]
        write_csv(path, ["endpoint", "mass_exact", "mass_float"], rows)
        artifacts.append(path)
    return report, artifacts


def cmd_rn_check(cfg, out, formats, threads):
    filt = parse_filter(cfg.get("filter", "haar"))
    bins = int(cfg.get("bins", 32))
    samples = int(cfg.get("samples", 100000))
    seed = int(cfg["seed"])
    sys_n = CirclePower(filt.n)
    base = _filter_base(filt)
    sampler = lift_measure(sys_n, base, filt.squared_lowpass(), filt.h,
                           seed=seed, check_points=unit_grid(32, offset=0.11))
    rep = radon_nikodym_estimate(sampler, filt.lowpass, bins, samples)
    report = {
        "filter": filt.name, "bins": bins, "samples": samples,
        "max_abs_error": float(np.max(rep.abs_error)),
        "max_relative_error": rep.max_relative_error(),
    }
    artifacts = []
    if "csv" in formats:
        path = os.path.join(out, "derivative_bins.csv")
        write_csv(path, ["theta_lo", "theta_hi", "ratio", "oracle", "abs_error"],
                  [[float(rep.bin_edges[b]), float(rep.bin_edges[b + 1]),
                    float(rep.ratios[b]), float(rep.oracle[b]), float(rep.abs_error[b])]
                   for b in range(bins)])
        artifacts.append(path)
    return report, artifacts


def cmd_multiplicity(cfg, out, formats, threads):
    A = parse_matrix(cfg.get("system", "golden-mean"))
    level = int(cfg.get("level", 3))
    count = int(cfg.get("count", 10))
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    words = admissible_words(A, level)
    results = []
    for i in range(count):
        table = CylinderFunction(A, level, [int(v) for v in rng.integers(0, 4, len(words))])
        check = multiplicity_sum_check(table, A)
        results.append({
            "exact": check.exact,
            "negative_cylinders": [".".join(map(str, w)) for w in check.negative_witnesses],
        })
    report = {
        "level": level, "tables": count,
        "all_exact": all(r["exact"] for r in results),
        "results": results,
    }
    artifacts = []
    if "csv" in formats:
        table = CylinderFunction(A, level, [1] * len(words))
        check = multiplicity_sum_check(table, A)
        path = os.path.join(out, "multiplicity.csv")
        write_csv(path, ["word", "m_v0", "m_v1", "m_w0"],
                  [[".".join(map(str, w)), 1, int(check.m_v1(w)), int(check.m_w0(w))]
                   for w in words])
        artifacts.append(path)
    return report, artifacts


def cmd_martingale_check(cfg, out, formats, threads):
    A = parse_matrix(cfg.get("system", "golden-mean"))
    level = int(cfg.get("level", 4))
    vectors = int(cfg.get("vectors", 20))
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    words = admissible_words(A, level)
    w_vals = 0.5 + rng.random(len(words))
    op = SubshiftOperator(A, level, CylinderFunction(A, level, list(w_vals)))
    pf = pf_solve(op, tol=1e-13, max_iter=20000)
    m0 = CylinderFunction(A, level, [np.sqrt(w / pf.lambda0) for w in w_vals])
    mu = invariant_cylinder_measure(A, level + 3).as_float()
    ctx = SubshiftMartingaleContext(Subshift(A), m0, pf.h, mu, rank_budget=level + 3)
    worst_cov = 0.0
    worst_iso = 0.0
    for i in range(vectors):
        f = CylinderFunction(A, level, list(rng.normal(size=len(words))
                                            + 1j * rng.normal(size=len(words))))
        g = CylinderFunction(A, 1, list(rng.normal(size=A.n)))
        v = embed(ctx, f, 1)
        worst_cov = max(worst_cov, covariance_residual(ctx, g, v))
        w2 = embed(ctx, CylinderFunction(A, level, list(rng.normal(size=len(words)))), 1)
        lhs = inner_product(dilate(v), dilate(w2))
        rhs = inner_product(v, w2)
        worst_iso = max(worst_iso, abs(complex(lhs) - complex(rhs)))
    report = {
        "level": level, "vectors": vectors,
        "pf_lambda0": pf.lambda0,
        "max_covariance_residual": worst_cov,
        "max_isometry_defect": worst_iso,
    }
    return report, []


def cmd_cantor(cfg, out, formats, threads):
    levels = int(cfg.get("levels", 8))
    ortho_level = int(cfg.get("ortho_level", 6))
    scaling = {str(n): scaling_identity_residual(n) for n in range(1, levels + 1)}
    additivity = {str(n): str(additivity_gap(n)) for n in range(1, min(levels, 6) + 1)}
    system = cantor_filter_system()
    gram = detail_inner_products(ortho_level)
    report = {
        "scaling_identity_residuals": scaling,
        "additivity_gaps": additivity,
        "filter_residual": system.residual,
        "lowpass_value_at_one": abs(complex(system.lowpass(1.0))),
        "gram": {f"{a}|{b}": str(v) for (a, b), v in gram.items()},
        "mass_level0": str(cantor_mass(TriadicInterval(0, 0))),
    }
    return report, []


def cmd_cocycle(cfg, out, formats, threads):
    name = cfg.get("filter", "haar")
    filt = parse_filter(name)
    depths = [int(d) for d in cfg.get("depths", [4, 8, 16, 24])]
    paths = int(cfg.get("paths", 10000))
    seed = int(cfg["seed"])
    sys_n = CirclePower(filt.n)
    base = _filter_base(filt)
    W = filt.squared_lowpass()
    sampler = lift_measure(sys_n, base, W, filt.h, seed=seed,
                           check_points=unit_grid(16, offset=0.19))
    h0 = halfline_harmonic(filt.name)
    diag = harmonic_to_cocycle(sys_n, W, h0, filt.h, sampler, depths, n_paths=paths)
    report = {
        "filter": filt.name, "depths": depths, "paths": paths,
        "median_steps": diag.median_steps,
        "invariance_gap": diag.invariance_gap,
        "bound_constant": diag.bound_constant,
        "steps_shrink_monotonically": all(
            a >= b for a, b in zip(diag.median_steps, diag.median_steps[1:])),
    }
    artifacts = []
    if "csv" in formats:
        path = os.path.join(out, "cocycle_quantiles.csv")
        qs = [0.1, 0.25, 0.5, 0.75, 0.9]
        rows = []
        for i, d in enumerate(depths):
            quant = np.quantile(diag.ratios[:, i], qs)
            rows.append([d] + [float(q) for q in quant])
        write_csv(path, ["depth", "q10", "q25", "q50", "q75", "q90"], rows)
        artifacts.append(path)
    return report, artifacts


HANDLERS = {
    "analyze-shift": cmd_analyze_shift,
    "pf-solve": cmd_pf_solve,
    "brolin": cmd_brolin,
    "qmf-check": cmd_qmf_check,
    "loopgroup": cmd_loopgroup,
    "cascade": cmd_cascade,
    "lift": cmd_lift,
    "pathspace": cmd_pathspace,
    "rn-check": cmd_rn_check,
    "multiplicity": cmd_multiplicity,
    "martingale-check": cmd_martingale_check,
    "cantor": cmd_cantor,
    "cocycle": cmd_cocycle,
}

# convenience flags that override the config document
FLAG_KEYS = {
    "system": str, "filter": str, "map": str, "weight": str, "level": int,
    "depth": int, "samples": int, "burn_in": int, "bins": int, "tol": float,
    "iterations": int, "grid_per_unit": int, "scale": int, "count": int,
    "cells": int, "vectors": int, "levels": int, "paths": int, "moments": int,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="waveshift",
        description="Transfer-operator multiresolution toolkit: batch runs "
                    "with reproducible JSON/CSV/SVG artifacts.",
    )
    parser.add_argument("--version", action="version", version=f"waveshift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in sorted(HANDLERS):
        p = sub.add_parser(name, help=f"run the {name} computation")
        p.add_argument("--config", help="JSON config document for the run")
        p.add_argument("--seed", type=int, default=0, help="64-bit RNG seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sampling (never changes results)")
        p.add_argument("--format", default="json,csv,svg",
                       help="comma list of artifact kinds to emit")
        for key, typ in FLAG_KEYS.items():
            p.add_argument(f"--{key.replace('_', '-')}", type=typ, default=None,
                           help=argparse.SUPPRESS)
    return parser


def assemble_config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as err:
            raise ConfigError(f"config: cannot read {args.config!r}: {err}")
        except json.JSONDecodeError as err:
            raise ConfigError(
                f"config: invalid JSON at line {err.lineno} column {err.colno}: {err.msg}"
            )
        if not isinstance(cfg, dict):
            raise ConfigError("config: top level must be a JSON object")
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["seed"] = int(args.seed)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    formats = {f.strip() for f in args.format.split(",") if f.strip()}
    out = ensure_dir(args.out)
    try:
        cfg = assemble_config(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    started = time.perf_counter()
    code = EXIT_OK
    error = None
    report, artifacts = {}, []
    try:
        report, artifacts = HANDLERS[args.command](cfg, out, formats, args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, PreconditionError, PathSpaceError) as err:
        error = f"{type(err).__name__}: {err}"
        code = EXIT_NUMERIC
    elapsed = time.perf_counter() - started

    document = {
        "operation": args.command,
        "config": cfg,
        "config_digest": config_digest(cfg),
        "library_version": __version__,
        "results": report,
        "error": error,
        "artifacts": [os.path.basename(a) for a in artifacts],
    }
    report_path = os.path.join(out, "report.json")
    write_json(report_path, document)
    status = "ok" if code == EXIT_OK else "numeric-error"
    print(f"{args.command}: {status} in {elapsed:.3f}s -> {report_path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
