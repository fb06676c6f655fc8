import dataclasses

import numpy as np
import pytest

from multihom.coeff import CoefficientSpec, family
from multihom.config import RunConfig
from multihom.errors import PreconditionError, StructureError
from multihom.experiments import REGIMES, ExperimentConfig, run, scale_tuple, stability_resolution
from multihom.kinds import ExperimentKind, ThresholdSource
from multihom.quasicell import golden_spec, periodic_embedding


def flat() -> CoefficientSpec:
    return CoefficientSpec(dimension=2, num_scales=2, constant=1.0, variable_separated=True, name="flat")


def config(kind: ExperimentKind, spec: CoefficientSpec, **overrides) -> ExperimentConfig:
    small = {"k_grid": (4, 8), "cells": 64, "pairs": ((0.25, 0.25), (0.25, 0.125))}
    small.update(overrides)
    return ExperimentConfig(kind, spec, **small)


def test_unknown_regime():
    with pytest.raises(PreconditionError):
        ExperimentConfig(ExperimentKind.CONVERGENCE, flat(), regime="cubic")


def test_default_sweep_has_twelve_sorted_pairs():
    pairs = ExperimentConfig(ExperimentKind.LIPSCHITZ, flat()).sweep_pairs()
    assert len(pairs) == 12
    assert list(pairs) == sorted(pairs)
    assert all(e1 >= e2 for e1, e2 in pairs)


def test_scale_tuple_fills_and_truncates():
    spec = family("laminate2", 2)
    assert scale_tuple(spec, (0.5,)) == (0.5, 0.5)
    assert scale_tuple(spec, (0.5, 0.25, 0.1)) == (0.5, 0.25)


def test_convergence_rows_and_fit(laminate):
    result = run(config(ExperimentKind.CONVERGENCE, laminate))
    assert [row["k"] for row in result.rows] == [4.0, 8.0]
    assert [row["sum_eps"] for row in result.rows] == [0.25, 0.125]
    assert all(row["lambda_1"] == 1.0 for row in result.rows)
    assert "error vs sum eps" in result.fits
    (verdict,) = result.verdicts
    assert verdict.source is ThresholdSource.THEORY
    assert verdict.threshold == 0.9
    assert result.summary()["rows"] == 2


def test_convergence_of_identical_problems_is_exact():
    result = run(config(ExperimentKind.CONVERGENCE, flat()))
    assert all(row["error"] == 0.0 for row in result.rows)
    assert not result.fits
    assert result.passed
    assert any("no slope fitted" in note for note in result.notes)


def test_convergence_needs_separated_coefficient():
    with pytest.raises(StructureError):
        run(config(ExperimentKind.CONVERGENCE, family("checkerboard", 2)))


def test_golden_regime_sets_lambda(laminate):
    result = run(config(ExperimentKind.CONVERGENCE, laminate, k_grid=(4,), regime="golden", cells=128))
    (row,) = result.rows
    assert row["lambda_2"] == pytest.approx((1 + np.sqrt(5)) / 2)
    assert result.provenance["regime"] == "golden"


def test_lipschitz_sweep_verdicts():
    result = run(config(ExperimentKind.LIPSCHITZ, family("laminate2", 2)))
    assert [(r["eps_1"], r["eps_2"]) for r in result.rows] == [(0.25, 0.125), (0.25, 0.25)]
    assert [v.source for v in result.verdicts] == [ThresholdSource.PILOT] * 2
    assert all(v.passed is not None for v in result.verdicts)
    assert all(r["ratio"] > 0 for r in result.rows)


def test_lipschitz_sweep_reports_without_verdict_for_coupled_scales():
    result = run(config(ExperimentKind.LIPSCHITZ, family("checkerboard", 2)))
    assert all(v.passed is None for v in result.verdicts)
    assert result.passed
    assert any("not variable separated" in note for note in result.notes)


def test_holder_sweep_rows_sorted_by_alpha():
    result = run(config(ExperimentKind.HOLDER, family("laminate2", 2), alphas=(0.9, 0.5), radii=(0.25, 0.125)))
    assert [r["alpha"] for r in result.rows] == [0.5, 0.5, 0.9, 0.9]
    assert len(result.verdicts) == 4
    assert all(r["c_alpha"] > 0 for r in result.rows)


def test_holder_sweep_needs_two_dimensions():
    with pytest.raises(StructureError):
        run(config(ExperimentKind.HOLDER, family("laminate", 1)))


def test_holder_sweep_on_coupled_scales_includes_equal_pair():
    result = run(config(ExperimentKind.HOLDER, family("coupled", 2), alphas=(0.9,), radii=(0.25, 0.125)))
    assert [(r["eps_1"], r["eps_2"]) for r in result.rows] == [(0.25, 0.125), (0.25, 0.25)]
    assert all(np.isfinite(r["c_alpha"]) and r["c_alpha"] > 0 for r in result.rows)
    assert all(v.passed is not None for v in result.verdicts)


def test_stability_of_laminate_is_exact(laminate):
    cfg = config(ExperimentKind.STABILITY, laminate, lam=(1.0, 1.0), deltas=(0.2, 0.1),
                 scalings=(2.0,), resolution=128)
    result = run(cfg)
    assert [r["case"] for r in result.rows] == ["identity", "perturbation", "perturbation", "scaling"]
    assert result.rows[0]["tensor_distance"] == 0.0
    assert result.rows[1]["kappa_2"] == pytest.approx(1.2)
    assert np.isnan(result.rows[-1]["corrector_distance_sq"])
    assert len(result.notes) == 2
    assert result.verdicts[-1].measured <= 1e-8
    assert result.passed


def test_stability_lambda_must_match_dimension(laminate):
    with pytest.raises(PreconditionError):
        run(config(ExperimentKind.STABILITY, laminate, lam=(2.0, 2.0, 2.0)))


@pytest.mark.parametrize("base,kappas,expected", [
    (64, [np.array([2.0, 2.0]), 7.3 * np.array([2.0, 2.0])], 256),
    (128, [np.array([1.0, 1.2])], 128),
    (16, [np.array([3.5, 1.0])], 64),
])
def test_stability_resolution(base, kappas, expected):
    assert stability_resolution(base, kappas) == expected


def test_stability_rates_on_two_scale_laminate():
    cfg = config(ExperimentKind.STABILITY, family("laminate2", 2), deltas=(0.2, 0.1, 0.05),
                 scalings=(), resolution=128)
    result = run(cfg)
    assert result.provenance["resolution"] == 128
    assert all(r["tensor_distance"] > 0 for r in result.rows if r["case"] == "perturbation")
    assert result.fits["tensor distance vs delta"].slope >= 0.9
    assert result.fits["corrector distance^2 vs delta"].slope >= 1.8
    assert result.passed


@pytest.mark.parametrize("name", ["laminate2", "checkerboard"])
def test_tensor_is_invariant_under_scaling(name):
    cfg = config(ExperimentKind.STABILITY, family(name, 2), deltas=(), scalings=(0.5, 2.0, 7.3))
    result = run(cfg)
    assert result.provenance["resolution"] == 256
    scaled = [r for r in result.rows if r["case"] == "scaling"]
    assert [r["parameter"] for r in scaled] == [0.5, 2.0, 7.3]
    assert max(r["tensor_distance"] for r in scaled) <= 1e-8
    assert result.passed


def test_hconv_probe_has_both_sequences(laminate):
    result = run(config(ExperimentKind.HCONV, laminate))
    assert [(r["sequence"], r["k"]) for r in result.rows] == [
        ("periodic", 4.0), ("periodic", 8.0), ("perturbed", 4.0), ("perturbed", 8.0)]
    assert set(result.fits) == {"periodic l2 distance vs eps", "perturbed l2 distance vs eps"}
    assert all(r["l2_distance"] > 0 for r in result.rows)


def test_perturbed_sequence_reaches_the_periodic_limit(laminate):
    result = run(config(ExperimentKind.HCONV, laminate, perturbation_factor=10.0))
    verdict = result.verdicts[-1]
    assert verdict.name == "perturbed final l2 distance"
    assert verdict.source is ThresholdSource.PILOT
    periodic = [r for r in result.rows if r["sequence"] == "periodic"][-1]["l2_distance"]
    assert verdict.threshold == pytest.approx(10.0 * periodic)
    assert verdict.passed


def test_perturbing_an_exact_sequence_fails_the_factor_check():
    result = run(config(ExperimentKind.HCONV, flat()))
    verdict = result.verdicts[-1]
    assert verdict.threshold == 0.0
    assert verdict.measured > 0.0
    assert verdict.passed is False
    assert not result.passed


REDUCED = {
    ExperimentKind.CONVERGENCE: {"k_grid": (4, 8), "cells": 64},
    ExperimentKind.LIPSCHITZ: {"pairs": ((0.25, 0.25), (0.25, 0.125)), "cells": 64},
    ExperimentKind.HOLDER: {"pairs": ((0.25, 0.25), (0.25, 0.125)), "cells": 64},
    ExperimentKind.STABILITY: {},
    ExperimentKind.HCONV: {"k_grid": (4, 8), "cells": 64},
    ExperimentKind.QUASIBENCH: {"quasi_k": (3, 4)},
}


@pytest.mark.parametrize("kind", list(ExperimentKind))
def test_every_experiment_runs_from_defaults(kind):
    cfg = dataclasses.replace(RunConfig().experiment_config(kind), **REDUCED[kind])
    result = run(cfg)
    assert result.rows
    assert result.verdicts
    assert result.provenance["spec"] == cfg.spec.name


def test_default_grid_resolves_every_default_scale():
    defaults = RunConfig()
    h = 1.0 / defaults.experiment_config(ExperimentKind.CONVERGENCE).cells
    for regime in ("equal", "golden"):
        for k in defaults.get("experiment.k_grid"):
            assert h <= min(REGIMES[regime](k, 2)) / 8
    pairs = defaults.experiment_config(ExperimentKind.LIPSCHITZ).sweep_pairs()
    assert h <= min(e2 for _, e2 in pairs) / 8


def test_default_stability_run_has_room_for_every_scaling():
    cfg = RunConfig().experiment_config(ExperimentKind.STABILITY)
    kappas = [t * np.asarray(cfg.lam) for t in cfg.scalings]
    assert stability_resolution(cfg.resolution, kappas) == 256


def test_quasi_benchmark_agrees_with_harmonic_mean():
    qspec = golden_spec()
    result = run(config(ExperimentKind.QUASIBENCH, qspec.base, quasi=qspec, quasi_k=(3, 4)))
    assert [r["k"] for r in result.rows] == [3, 4]
    first = result.verdicts[0]
    assert first.name == "|B0 - harmonic mean|"
    assert first.passed
    assert result.provenance["B0"] == pytest.approx(result.provenance["oracle"], abs=1e-3)


def test_quasi_benchmark_needs_projection():
    with pytest.raises(PreconditionError):
        run(config(ExperimentKind.QUASIBENCH, family("golden_quasi", 1)))


def test_quasi_benchmark_is_one_dimensional():
    qspec = periodic_embedding(family("laminate", 2))
    with pytest.raises(StructureError):
        run(config(ExperimentKind.QUASIBENCH, qspec.base, quasi=qspec))


@pytest.mark.slow
@pytest.mark.parametrize("regime", ["equal", "golden"])
def test_convergence_rate_on_laminate(laminate, regime):
    result = run(ExperimentConfig(ExperimentKind.CONVERGENCE, laminate, regime=regime))
    assert result.provenance["regime"] == regime
    assert result.fits["error vs sum eps"].slope >= 0.9
    assert result.passed


@pytest.mark.slow
def test_lipschitz_constant_stays_bounded_across_ratios():
    result = run(ExperimentConfig(ExperimentKind.LIPSCHITZ, family("laminate2", 2), cells=512))
    assert len(result.rows) == 12
    assert result.verdicts[0].passed


@pytest.mark.slow
def test_hoelder_constant_stays_bounded_for_coupled_scales():
    result = run(ExperimentConfig(ExperimentKind.HOLDER, family("coupled", 2)))
    assert len(result.rows) == 24
    assert any(r["eps_1"] == r["eps_2"] for r in result.rows)
    bounded = [v for v in result.verdicts if v.name == "max/median C_0.9"]
    assert len(bounded) == 1
    assert bounded[0].passed


@pytest.mark.slow
def test_quasi_benchmark_full_grid():
    qspec = golden_spec()
    result = run(ExperimentConfig(ExperimentKind.QUASIBENCH, qspec.base, quasi=qspec))
    assert len(result.rows) == 5
    assert result.verdicts[0].passed
    assert result.rows[-1]["l2_distance"] < result.rows[0]["l2_distance"]
