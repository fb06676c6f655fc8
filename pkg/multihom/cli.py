"""
Command-line front end.

    python -m multihom <subcommand> [--config run.toml] [-v] [--section.key value ...]

Every invocation creates one run directory under output.root and writes
config.toml, summary.json and run.log into it. Exit codes:
0 success, 1 failed verdict, 2 configuration or precondition error,
3 numerical failure.
"""

import argparse
import dataclasses
import logging
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import experiments
from .artifacts import LOG_FORMAT, RunDirectory, format_report
from .cell import corrector_and_tensor, effective_tensor, energy_norm, voigt_reuss_bounds
from .coeff import check_smoothness, estimate_ellipticity
from .config import RunConfig
from .errors import ConfigError, MultihomError, NondegeneracyError
from .kinds import EXPERIMENT_DESCRIPTIONS, ExperimentKind
from .pde import Domain, DirichletProblem, norms, solve
from .quasicell import reiterated_effective, torus_harmonic_mean, validate_nondegeneracy
from .reperiod import build_maps, reperiodize
from .scales import classify, rearrange, rewriting_residual

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1.0 / 16.0

Handler = Callable[[RunConfig, RunDirectory], Tuple[Dict[str, Any], int]]


def _matrix(m: np.ndarray) -> str:
    return np.array2string(np.asarray(m), precision=6, suppress_small=True)


def cmd_cell(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
    spec = config.coefficient()
    c = config.section("cell")
    corrector, tensor = corrector_and_tensor(spec, config.slow_point(), c["lambda"], c["resolution"],
                                             c["tol"], c["maxiter"])
    energy = energy_norm(corrector)
    print(f"Corrector of {spec.name} at lambda = {corrector.lam.tolist()}")
    print(f"  iterations: {list(corrector.iterations)}")
    print(f"  energy norm: {energy:.6g}")
    print(f"  effective tensor:\n{_matrix(tensor.matrix)}")
    if config.get("output.dump_fields"):
        run_dir.dump_corrector("corrector", corrector)
    return {"corrector": corrector.metadata(), "energy_norm": energy, "effective": tensor.as_dict()}, 0


def cmd_effective(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
    spec = config.coefficient()
    c = config.section("cell")
    x = config.slow_point()
    tensor = effective_tensor(spec, x, c["lambda"], c["resolution"], c["tol"], c["maxiter"])
    print(f"Effective tensor of {spec.name} at lambda = {list(c['lambda'])}:")
    print(_matrix(tensor.matrix))
    summary: Dict[str, Any] = {"effective": tensor.as_dict()}
    # bounds average the unreperiodized cell: valid at lambda = 1 only
    if spec.is_scalar and np.allclose(c["lambda"], 1.0):
        lower, upper = voigt_reuss_bounds(spec, x, c["resolution"])
        summary["bounds"] = {"reuss": lower, "voigt": upper}
        print(f"  harmonic bound: {np.diag(lower).tolist()}  arithmetic bound: {np.diag(upper).tolist()}")
    return summary, 0


def cmd_solve(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
    p = config.section("pde")
    eps = tuple(float(e) for e in p["eps"]) or (DEFAULT_EPS,)
    qspec = config.quasi_spec()
    if qspec is not None:
        sampler = qspec.sampler(experiments.scale_tuple(qspec.base, eps))
        problem = DirichletProblem(sampler, p["source"], 0.0, sampler.scales, name=f"fine {qspec.name}")
        spec = qspec.base
    else:
        spec = config.coefficient()
        problem = experiments.fine_problem(spec, eps, p["source"], name=f"fine {spec.name}")
    u = solve(problem, Domain.unit(spec.dimension, p["cells"]), p["tol"], p["allow_underresolved"])
    n = norms(u, p["margin"])
    print(f"Solved {problem.name} with eps = {list(problem.scales)} on {p['cells']} cells per axis")
    print(f"  iterations: {u.iterations}  residual: {u.residual:.3e}")
    print(f"  L2: {n.l2:.6g}  H1 seminorm: {n.h1_semi:.6g}  interior sup|grad u|: {n.grad_sup:.6g}")
    if config.get("output.dump_fields"):
        run_dir.dump_solution("solution", u)
    return {"solution": u.metadata(), "norms": n._asdict()}, 0


def cmd_scales(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
    s = config.section("scales")
    seq = config.scale_sequence()
    classification = classify(seq, s["tail_window"], s["tol"])
    print(f"Scale sequence {seq.label or '(rows)'}: {len(seq)} rows, {seq.num_scales} scales")
    print(f"  limits: {[c.name.lower() for c in classification.limits]}")
    print(f"  ratios: {[c.name.lower() for c in classification.ratio_classes]}")
    print(f"  separated: {classification.separated}  well separated: {classification.well_separated}")
    summary: Dict[str, Any] = {"classification": classification.as_dict()}
    if seq.num_scales > 1:
        plan = rearrange(seq, classification)
        residual = rewriting_residual(seq, plan)
        run_dir.write_json("plan.json", plan.as_dict())
        print(f"  rearrangement: {plan.rounds} rounds, fixed scales {list(plan.fixed_scales)}, "
              f"rewriting residual {residual:.3e}")
        summary.update(plan=plan.as_dict(), rewriting_residual=residual)
    return summary, 0


def cmd_reperiodize(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
    spec = config.coefficient()
    lam = config.get("cell.lambda")
    maps = build_maps(lam)
    sharp = reperiodize(spec, lam)
    print(f"Reperiodization of {spec.name} at lambda = {maps.lam.tolist()}")
    print(f"  floor(M): {maps.floor.tolist()}  Phi: {maps.phi.tolist()}")
    print(f"  lambda_decl: {sharp.lambda_decl}  weights: {list(sharp.weights)}")
    described = {
        "name": sharp.name, "weights": list(sharp.weights), "lambda_decl": sharp.lambda_decl,
        "lipschitz": sharp.lipschitz, "terms": [dataclasses.asdict(t) for t in sharp.terms],
    }
    run_dir.write_json("reperiodized.json", described)
    return {"maps": maps.as_dict(), "reperiodized": described}, 0


def cmd_quasi(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
    qspec = config.quasi_spec()
    if qspec is None:
        raise ConfigError("quasi.projections", "no cut-and-project coefficient configured")
    q = config.section("quasi")
    x = config.slow_point()
    tower = reiterated_effective(qspec, x, q["rho_schedule"], q["cutoff"], q["tol"], q["z_max"],
                                 config.get("cell.maxiter"), config.workers)
    run_dir.write_json("tower.json", tower.as_dict())
    print(f"Reiterated effective tensor of {qspec.name} (cutoff {q['cutoff']}):")
    print(_matrix(tower.B0))
    print(f"  extrapolation error: {tower.error:.3e}  coercive: {tower.coercive}")
    summary: Dict[str, Any] = {"tower": tower.as_dict()}
    if qspec.base.dimension == 1 and qspec.num_scales == 1 and qspec.base.is_scalar:
        oracle = torus_harmonic_mean(qspec, x)
        print(f"  torus harmonic mean: {oracle:.10g}  difference: {abs(tower.B0[0, 0] - oracle):.3e}")
        summary["harmonic_mean"] = oracle
    return summary, 0


def cmd_validate(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
    print(config.to_toml(), end="")
    summary: Dict[str, Any] = {"schema_version": config.get("schema_version")}
    qspec = config.quasi_spec()
    spec = qspec.base if qspec is not None else config.coefficient()
    seed = config.get("experiment.seed")
    estimate = estimate_ellipticity(spec, seed=seed)
    observed = check_smoothness(spec, seed=seed)
    print(f"# {spec.name}: sampled eigenvalues in [{estimate.lambda_min:.6g}, {estimate.lambda_max:.6g}]")
    if observed > spec.lipschitz * (1 + 1e-9):
        logger.warning("%s: observed Hoelder quotient %.6g exceeds declared %.6g",
                       spec.name, observed, spec.lipschitz)
    summary["ellipticity"] = estimate._asdict()
    summary["smoothness"] = {"observed": observed, "declared": spec.lipschitz}
    if qspec is not None:
        reports = [validate_nondegeneracy(M, config.get("quasi.z_max")) for M in qspec.projections]
        for report in reports:
            if not report:
                raise NondegeneracyError(report.witness, report.value)
        print(f"# projections nondegenerate up to |z| <= {config.get('quasi.z_max')}")
        summary["nondegeneracy"] = [r.as_dict() for r in reports]
    if config.get("scales.csv"):
        seq = config.scale_sequence()
        summary["scales"] = {"rows": len(seq), "num_scales": seq.num_scales}
    return summary, 0


def run_experiment(kind: ExperimentKind) -> Handler:
    def handler(config: RunConfig, run_dir: RunDirectory) -> Tuple[Dict[str, Any], int]:
        config = config.reference(kind)
        run_dir.write_config(config)
        result = experiments.run(config.experiment_config(kind))
        run_dir.write_rows(result.rows)
        report = format_report(result)
        run_dir.write_text("report.txt", report)
        print(report, end="")
        return result.summary(), 0 if result.passed else 1
    return handler


COMMANDS: Dict[str, Tuple[Handler, str]] = {
    "cell": (cmd_cell, "solve the lambda cell problem and print its corrector diagnostics"),
    "effective": (cmd_effective, "print the effective tensor A^lambda"),
    "solve": (cmd_solve, "solve the fine-scale Dirichlet problem"),
    "scales": (cmd_scales, "classify a scale sequence and build its rearrangement plan"),
    "reperiodize": (cmd_reperiodize, "print the reperiodization maps and A#"),
    "quasi": (cmd_quasi, "reiterated effective tensor of a cut-and-project coefficient"),
    "validate": (cmd_validate, "check the configuration, ellipticity and projections"),
}
COMMANDS.update({kind.value: (run_experiment(kind), EXPERIMENT_DESCRIPTIONS[kind]) for kind in ExperimentKind})


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    common.add_argument("--lambda", dest="lam", help="shorthand for --cell.lambda, e.g. 1,2.5")
    common.add_argument("--resolution", type=int, help="shorthand for --cell.resolution")

    parser = argparse.ArgumentParser(
        prog="multihom",
        description="Numerical homogenization with several non-separated scales",
        epilog="Any config key can be overridden with --section.key value.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def parse_overrides(extra: Sequence[str]) -> List[Tuple[str, str]]:
    """Turn ['--cell.resolution', '128', '--pde.tol=1e-8'] into (key, text) pairs."""
    pairs = []
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or "." not in token.split("=", 1)[0]:
            raise ConfigError(token, "unrecognized argument")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(key, "missing value")
            value = extra[i + 1]
            i += 2
        pairs.append((key, value))
    return pairs


def load_config(args: argparse.Namespace, extra: Sequence[str]) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = parse_overrides(extra)
    if args.lam is not None:
        overrides.append(("cell.lambda", args.lam))
    if args.resolution is not None:
        overrides.append(("cell.resolution", str(args.resolution)))
    if overrides:
        config = config.with_overrides(overrides)
    return config.resolved()


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    _configure_logging(args.verbose)

    try:
        config = load_config(args, extra)
        run_dir = RunDirectory.create(config.get("output.root"), args.command)
    except MultihomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

    handler = COMMANDS[args.command][0]
    with run_dir:
        run_dir.write_config(config)
        try:
            summary, code = handler(config, run_dir)
        except MultihomError as exc:
            logger.debug("%s failed", args.command, exc_info=True)
            print(f"error: {exc}", file=sys.stderr)
            summary, code = {"error": str(exc), "error_type": type(exc).__name__}, exc.exit_code
        run_dir.write_summary({"command": args.command, "exit_code": code, "run_dir": run_dir.path, **summary})
    print(f"Results in {run_dir.path}")
    return code


def main() -> None:
    """Entry point."""
    sys.exit(dispatch())
