import json

import numpy as np
import pytest

from multihom.cli import build_parser, dispatch, parse_overrides
from multihom.errors import ConfigError, NondegeneracyError


def run(tmp_path, *args):
    return dispatch([*args, "--output.root", str(tmp_path)])


def only_run_dir(tmp_path):
    (path,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    return path.resolve()


def summary_of(run_dir):
    return json.loads((run_dir / "summary.json").read_text())


def test_parse_overrides():
    assert parse_overrides(["--cell.resolution", "128", "--pde.tol=1e-8"]) == [
        ("cell.resolution", "128"), ("pde.tol", "1e-8")]
    assert parse_overrides([]) == []


@pytest.mark.parametrize("extra", [["--foo", "1"], ["cell.resolution", "128"], ["--cell.resolution"]])
def test_parse_overrides_rejects(extra):
    with pytest.raises(ConfigError):
        parse_overrides(extra)


def test_every_subcommand_is_registered():
    parser = build_parser()
    for name in ["cell", "effective", "solve", "scales", "reperiodize", "quasi", "validate",
                 "convergence", "lipschitz", "holder", "stability", "hconv", "quasibench"]:
        assert parser.parse_known_args([name])[0].command == name


def test_validate_writes_run_files(tmp_path, capsys):
    assert run(tmp_path, "validate") == 0
    run_dir = only_run_dir(tmp_path)
    assert run_dir.name.startswith("validate-")
    assert {"config.toml", "summary.json", "run.log"} <= {p.name for p in run_dir.iterdir()}
    summary = summary_of(run_dir)
    assert summary["command"] == "validate"
    assert summary["exit_code"] == 0
    assert summary["run_dir"] == str(run_dir)
    assert summary["smoothness"]["declared"] == 0.0
    out = capsys.readouterr().out
    assert 'family = "laminate"' in out
    assert f"Results in {run_dir}" in out


def test_effective_prints_tensor_and_bounds(tmp_path, capsys):
    assert run(tmp_path, "effective", "--resolution", "128") == 0
    summary = summary_of(only_run_dir(tmp_path))
    assert np.allclose(summary["effective"]["matrix"], np.diag([np.sqrt(3.0), 2.0]), atol=1e-6)
    assert np.allclose(summary["bounds"]["voigt"], 2.0 * np.eye(2))
    assert "harmonic bound" in capsys.readouterr().out


def test_effective_without_bounds_off_the_unit_lambda(tmp_path):
    assert run(tmp_path, "effective", "--lambda", "1,2.5") == 0
    assert "bounds" not in summary_of(only_run_dir(tmp_path))


def test_config_file_and_overrides(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[coefficient]\nfamily = "anisotropic"\n')
    out = tmp_path / "out"
    assert dispatch(["effective", "--config", str(config), "--output.root", str(out)]) == 0
    run_dir = only_run_dir(out)
    assert np.allclose(summary_of(run_dir)["effective"]["matrix"], np.diag([2.0, 3.0]), atol=1e-10)
    assert 'family = "anisotropic"' in (run_dir / "config.toml").read_text()


def test_unknown_key_exits_before_creating_a_run(tmp_path, capsys):
    assert run(tmp_path, "cell", "--cell.resoluton", "64") == 2
    assert "cell.resoluton" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_unrecognized_argument(tmp_path, capsys):
    assert run(tmp_path, "cell", "--fast") == 2
    assert "unrecognized argument" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run(tmp_path, "cell", "--config", str(tmp_path / "absent.toml")) == 2


def test_precondition_error_is_recorded(tmp_path, capsys):
    assert run(tmp_path, "cell", "--lambda", "0.5,1") == 2
    summary = summary_of(only_run_dir(tmp_path))
    assert summary["error_type"] == "PreconditionError"
    assert summary["exit_code"] == 2
    assert "error: " in capsys.readouterr().err


def test_numerical_failure_exits_with_three(tmp_path):
    assert run(tmp_path, "cell", "--coefficient.family", "laminate2", "--cell.maxiter", "1") == 3
    assert summary_of(only_run_dir(tmp_path))["error_type"] == "ConvergenceError"


def test_cell_reports_corrector(tmp_path, capsys):
    assert run(tmp_path, "cell", "--lambda", "1,2.5", "--output.dump_fields", "true") == 0
    run_dir = only_run_dir(tmp_path)
    summary = summary_of(run_dir)
    assert summary["corrector"]["lambda"] == [1.0, 2.5]
    assert summary["energy_norm"] > 0.0
    header = (run_dir / "corrector.csv").read_text().splitlines()[0]
    assert header == "x0,x1,chi0,chi1"
    assert "effective tensor" in capsys.readouterr().out


def test_scales_writes_plan(tmp_path):
    assert run(tmp_path, "scales") == 0
    run_dir = only_run_dir(tmp_path)
    assert (run_dir / "plan.json").is_file()
    summary = summary_of(run_dir)
    assert "rewriting_residual" in summary
    assert summary["classification"]["limits"] == ["vanishing", "vanishing"]


def test_scales_from_csv(tmp_path):
    csv = tmp_path / "scales.csv"
    csv.write_text("# eps_1\n0.5\n0.25\n0.125\n0.0625\n")
    out = tmp_path / "out"
    assert dispatch(["scales", "--scales.csv", str(csv), "--scales.tail_window", "3",
                     "--output.root", str(out)]) == 0
    run_dir = only_run_dir(out)
    assert not (run_dir / "plan.json").exists()


def test_reperiodize_writes_coefficient(tmp_path):
    assert run(tmp_path, "reperiodize", "--lambda", "1,2.5") == 0
    run_dir = only_run_dir(tmp_path)
    described = json.loads((run_dir / "reperiodized.json").read_text())
    assert described["name"] == "laminate#"
    summary = summary_of(run_dir)
    assert summary["maps"]["floor"] == [1, 2]
    assert summary["maps"]["phi"] == [1.0, 1.25]


def test_quasi_needs_projection(tmp_path, capsys):
    assert run(tmp_path, "quasi") == 2
    assert summary_of(only_run_dir(tmp_path))["error_type"] == "ConfigError"
    assert "quasi.projections" in capsys.readouterr().err


def test_quasi_tower_matches_harmonic_mean(tmp_path):
    assert run(tmp_path, "quasi", "--coefficient.family", "golden_quasi", "--coefficient.dimension", "1") == 0
    run_dir = only_run_dir(tmp_path)
    assert (run_dir / "tower.json").is_file()
    summary = summary_of(run_dir)
    assert summary["tower"]["B0"][0][0] == pytest.approx(summary["harmonic_mean"], abs=1e-3)


def test_validate_rejects_degenerate_projection(tmp_path):
    code = run(tmp_path, "validate", "--coefficient.family", "golden_quasi", "--coefficient.dimension", "1",
               "--quasi.projections", "[[[1.0], [2.0]]]")
    assert code == NondegeneracyError.exit_code
    assert summary_of(only_run_dir(tmp_path))["error_type"] == "NondegeneracyError"


def test_experiment_writes_result_and_report(tmp_path):
    code = run(tmp_path, "stability", "--coefficient.family", "laminate", "--experiment.lambda", "1,1",
               "--experiment.deltas", "0.2,0.1", "--experiment.scalings", "2", "--cell.resolution", "128")
    assert code == 0
    run_dir = only_run_dir(tmp_path)
    header = (run_dir / "result.csv").read_text().splitlines()[0]
    assert header.startswith("case,parameter,")
    assert (run_dir / "report.txt").read_text().endswith("result: PASS\n")
    summary = summary_of(run_dir)
    assert summary["kind"] == "stability"
    assert summary["passed"] is True


def test_failed_verdict_exits_with_one(tmp_path):
    code = run(tmp_path, "convergence", "--experiment.k_grid", "4,8", "--pde.cells", "64",
               "--experiment.slope_target", "10")
    assert code == 1
    assert (only_run_dir(tmp_path) / "report.txt").read_text().endswith("result: FAIL\n")


def test_rerun_writes_identical_result(tmp_path):
    args = ("convergence", "--experiment.k_grid", "4,8", "--pde.cells", "64")
    first, second = tmp_path / "first", tmp_path / "second"
    run(first, *args)
    run(second, *args)
    assert (only_run_dir(first) / "result.csv").read_bytes() == (only_run_dir(second) / "result.csv").read_bytes()


def test_quasibench_from_defaults_uses_golden_family(tmp_path):
    code = run(tmp_path, "quasibench", "--quasi.fine_k", "3,4")
    assert code in (0, 1)
    run_dir = only_run_dir(tmp_path)
    assert 'family = "golden_quasi"' in (run_dir / "config.toml").read_text()
    assert summary_of(run_dir)["kind"] == "quasibench"
