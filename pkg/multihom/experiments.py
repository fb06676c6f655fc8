"""
Experiment harnesses.

Each harness sweeps a grid of parameters, records one row per parameter
point and turns the rows into verdicts:
- rates (fitted log-log slopes) are compared against targets implied by
  the estimates being checked (threshold source "theory")
- constants (ratios of measurements across a sweep) are compared against
  thresholds calibrated on pilot runs (threshold source "pilot")

Parameter points run on a bounded thread pool; rows are always collected
in sorted parameter order so that identical configurations give identical
tables.
"""

import logging
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import cell, pde
from .coeff import CoefficientSpec, estimate_ellipticity, multiscale_sampler
from .errors import NondegeneracyError, PreconditionError, StructureError
from .fitting import loglog_slope, spearman
from .kinds import EXPERIMENT_DESCRIPTIONS, ExperimentKind, SlopeFit, ThresholdSource, Verdict
from .quasicell import (
    DEFAULT_SCHEDULE, GOLDEN, CutProjectSpec, reiterated_effective, torus_harmonic_mean,
    validate_nondegeneracy,
)

logger = logging.getLogger(__name__)

# Errors at or below this count as "identical discrete problems"
EXACT_TOL = 1e-10

# Ratios eps_1/eps_2 of the regularity sweeps: integer, rational and irrational
SWEEP_RATIOS = (1.0, 1.5, GOLDEN, 2.0, math.e, math.pi)

# Grid points per reperiodized period of the stability solves
STABILITY_POINTS_PER_PERIOD = 16

# Coefficient each experiment runs on when the [coefficient] table is left at
# its defaults: (family, dimension)
REFERENCE_FAMILIES: Dict[ExperimentKind, Tuple[str, int]] = {
    ExperimentKind.CONVERGENCE: ("laminate", 2),
    ExperimentKind.LIPSCHITZ: ("laminate2", 2),
    ExperimentKind.HOLDER: ("laminate2", 2),
    ExperimentKind.STABILITY: ("laminate2", 2),
    ExperimentKind.HCONV: ("laminate", 2),
    ExperimentKind.QUASIBENCH: ("golden_quasi", 1),
}


@dataclass
class ExperimentConfig:
    """
    Everything a harness needs, resolved from the run configuration.

    Attributes:
        kind: which harness
        spec: coefficient under test
        k_grid: eps_1 = 1/k for the convergence and H-convergence sweeps
        regime: eps_2 law of the convergence sweep ("equal", "golden", "square")
        pairs: (eps_1, eps_2) pairs of the regularity sweeps
        cells: grid cells per axis of the Dirichlet solves
        tol: Dirichlet solver tolerance
        resolution: cell-problem grid points per axis
        cell_tol: cell solver tolerance
        source: constant right-hand side f
        margin: interior margin of the gradient bound
        alphas: Hoelder exponents of the Campanato sweep
        radii: Campanato radii
        lam: base lambda of the stability run
        deltas: perturbations lambda + delta e_d of the stability run
        scalings: factors t of the scaling rows kappa = t lambda
        slope_target: rate target for first-order fits
        ratio_threshold: pilot bound on max/median of a swept constant
        correlation_threshold: pilot bound on |Spearman| against the scale ratio
        perturbation_factor: pilot bound on the perturbed over the periodic final
            distance of the H-convergence probe
        agreement: tolerance of the quasi-periodic three-way comparison
        quasi: cut-and-project coefficient for the quasi benchmark
        rho_schedule: regularization schedule
        cutoff: Fourier cutoff of the quasi cell
        quasi_k: eps = 2^-k of the quasi fine solves
        slow_nodes: slow grid nodes per axis for x-dependent effective tensors
        seed: sampling seed of the coefficient validation
        workers: thread pool size
        allow_underresolved: solve even when h > eps_min/8
    """
    kind: ExperimentKind
    spec: CoefficientSpec
    k_grid: Tuple[float, ...] = (8, 16, 32, 64)
    regime: str = "equal"
    pairs: Tuple[Tuple[float, float], ...] = ()
    cells: int = 1024
    tol: float = 1e-10
    resolution: int = 64
    cell_tol: float = 1e-10
    source: float = 1.0
    margin: float = 0.25
    alphas: Tuple[float, ...] = (0.5, 0.9)
    radii: Tuple[float, ...] = (1 / 4, 1 / 8, 1 / 16, 1 / 32)
    lam: Tuple[float, ...] = (2.0, 2.0)
    deltas: Tuple[float, ...] = (0.2, 0.1, 0.05)
    scalings: Tuple[float, ...] = (0.5, 2.0, 7.3)
    slope_target: float = 0.9
    ratio_threshold: float = 2.0
    correlation_threshold: float = 0.5
    perturbation_factor: float = 2.0
    agreement: float = 1e-3
    quasi: Optional[CutProjectSpec] = None
    rho_schedule: Tuple[float, ...] = DEFAULT_SCHEDULE
    cutoff: int = 32
    quasi_k: Tuple[int, ...] = (3, 4, 5, 6, 7)
    slow_nodes: int = 5
    seed: int = 0
    workers: int = 1
    allow_underresolved: bool = False

    def __post_init__(self):
        if not self.k_grid:
            raise PreconditionError("experiment grid is empty")
        if self.regime not in REGIMES:
            raise PreconditionError(f"unknown regime {self.regime!r}, expected one of {sorted(REGIMES)}")

    def sweep_pairs(self) -> Tuple[Tuple[float, float], ...]:
        """Configured pairs, or the default 12 pairs over two eps_1 and six ratios."""
        if self.pairs:
            return tuple(sorted((float(a), float(b)) for a, b in self.pairs))
        return tuple(sorted((e1, e1 / r) for e1 in (1 / 8, 1 / 16) for r in SWEEP_RATIOS))


@dataclass
class ExperimentResult:
    """Rows, fits and verdicts of one experiment."""
    kind: ExperimentKind
    rows: List[Dict[str, Any]]
    fits: Dict[str, SlopeFit] = field(default_factory=dict)
    verdicts: List[Verdict] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """False when any evaluated verdict failed; report-only verdicts are ignored."""
        return all(v.passed is not False for v in self.verdicts)

    def failing(self) -> List[Verdict]:
        return [v for v in self.verdicts if v.passed is False]

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "description": EXPERIMENT_DESCRIPTIONS[self.kind],
            "passed": self.passed,
            "fits": {name: fit.as_dict() for name, fit in self.fits.items()},
            "verdicts": [v.as_dict() for v in self.verdicts],
            "provenance": self.provenance,
            "notes": self.notes,
            "rows": len(self.rows),
        }


def provenance(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {
        "spec": cfg.spec.name,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _map(workers: int, job: Callable, items: Iterable) -> List[Any]:
    """Run job over items on a bounded pool; results keep the item order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [job(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, items))


def _eps_equal(k: float, d: int) -> Tuple[float, ...]:
    return (1.0 / k,) * d


def _eps_golden(k: float, d: int) -> Tuple[float, ...]:
    return tuple(1.0 / k / GOLDEN ** i for i in range(d))


def _eps_square(k: float, d: int) -> Tuple[float, ...]:
    return tuple((1.0 / k) ** (i + 1) for i in range(d))


REGIMES: Dict[str, Callable[[float, int], Tuple[float, ...]]] = {
    "equal": _eps_equal,
    "golden": _eps_golden,
    "square": _eps_square,
}


def scale_tuple(spec: CoefficientSpec, eps: Sequence[float]) -> Tuple[float, ...]:
    """Fill a (possibly shorter) eps tuple up to one scale per fast variable."""
    eps = tuple(float(e) for e in eps)
    n = spec.num_scales
    if len(eps) >= n:
        return eps[:n]
    return eps + (eps[-1],) * (n - len(eps))


def fine_problem(spec: CoefficientSpec, eps: Sequence[float], source, boundary=0.0,
                  name: str = "fine") -> pde.DirichletProblem:
    """Dirichlet problem of A(x, x/eps); only oscillating scales enter the resolution rule."""
    eps = scale_tuple(spec, eps)
    sampler = multiscale_sampler(spec, eps)
    active = tuple(eps[i] for i in spec.active_scales())
    return pde.DirichletProblem(sampler, source, boundary, active, name=name)


def _effective_sampler(spec: CoefficientSpec, lam: Sequence[float], cfg: ExperimentConfig):
    """Constant A^lambda for x-independent specs, interpolated field otherwise."""
    d = spec.dimension
    if spec.is_slow_constant:
        matrix = cell.effective_tensor(spec, np.zeros(d), lam, cfg.resolution, cfg.cell_tol).matrix
        return pde.constant_sampler(matrix), matrix
    axes = [np.linspace(0.0, 1.0, cfg.slow_nodes) for _ in range(d)]
    field_ = cell.effective_tensor_field(spec, axes, lam, cfg.resolution, cfg.cell_tol, cfg.workers)
    return field_.sampler(), None


def _fit_or_exact(name: str, x: Sequence[float], y: Sequence[float], target: float,
                  result: ExperimentResult) -> None:
    """Slope verdict, or an exactness verdict when every measurement vanishes."""
    y = np.asarray(y, dtype=float)
    if np.all(y <= EXACT_TOL):
        verdict = Verdict(f"max {name}", float(y.max()), EXACT_TOL, "<=", ThresholdSource.THEORY,
                          raw={"values": y.tolist()})
        verdict.evaluate()
        result.verdicts.append(verdict)
        result.notes.append(f"{name}: all values below {EXACT_TOL:g}, no slope fitted")
        return
    fit = loglog_slope(x, y)
    result.fits[name] = fit
    verdict = Verdict(f"slope({name})", fit.slope, target, ">=", ThresholdSource.THEORY,
                      raw={"x": list(map(float, x)), "y": y.tolist(), "stderr": fit.stderr})
    verdict.evaluate()
    result.verdicts.append(verdict)


def _validate(cfg: ExperimentConfig) -> None:
    estimate_ellipticity(cfg.spec, seed=cfg.seed)


def run_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    """
    ||u_eps - u_0||_L2 / ||u_0||_H2-proxy against the sum of the eps_i the
    coefficient oscillates in, with u_0 solved with A^lambda,
    lambda = (1, eps_1/eps_2, ..., eps_1/eps_d).
    """
    spec = cfg.spec
    if not spec.variable_separated:
        raise StructureError(f"{spec.name}: the convergence sweep needs a variable-separated coefficient")
    _validate(cfg)
    d = spec.dimension
    domain = pde.Domain.unit(d, cfg.cells)
    law = REGIMES[cfg.regime]
    active = [i for i in spec.active_scales() if i < d]

    def job(k: float) -> Dict[str, Any]:
        eps = law(k, d)
        lam = tuple(eps[0] / e for e in eps)
        u_eps = pde.solve(fine_problem(spec, eps, cfg.source, name=f"fine k={k:g}"), domain,
                          cfg.tol, cfg.allow_underresolved)
        sampler, matrix = _effective_sampler(spec, lam, cfg)
        u_0 = pde.solve(pde.DirichletProblem(sampler, cfg.source, 0.0, name=f"effective k={k:g}"),
                        domain, cfg.tol)
        h2 = pde.h2_proxy(u_0)
        distance = pde.l2_distance(u_eps, u_0)
        row = {"k": float(k), "sum_eps": float(sum(eps[i] for i in active))}
        row.update({f"eps_{i + 1}": e for i, e in enumerate(eps)})
        row.update({f"lambda_{i + 1}": v for i, v in enumerate(lam)})
        row.update({"l2_distance": distance, "h2_proxy": h2,
                    "error": distance / h2 if h2 > 0 else distance,
                    "iterations": u_eps.iterations})
        logger.info("convergence k=%g: error %.4e", k, row["error"])
        return row

    rows = _map(cfg.workers, job, sorted(float(k) for k in cfg.k_grid))
    result = ExperimentResult(ExperimentKind.CONVERGENCE, rows, provenance=provenance(cfg))
    result.provenance["regime"] = cfg.regime
    _fit_or_exact("error vs sum eps", [r["sum_eps"] for r in rows], [r["error"] for r in rows],
                  cfg.slope_target, result)
    result.notes.append("rectangle domain: corners affect the constant, not the rate")
    return result


def _sweep_verdicts(result: ExperimentResult, name: str, values: Sequence[float],
                    ratios: Sequence[float], cfg: ExperimentConfig, evaluate: bool) -> None:
    values = np.asarray(values, dtype=float)
    median = float(np.median(values))
    spread = float(values.max() / median) if median > 0 else 1.0
    rank = spearman(ratios, values)
    raw = {"values": values.tolist(), "ratios": list(map(float, ratios))}
    bounded = Verdict(f"max/median {name}", spread, cfg.ratio_threshold, "<=", ThresholdSource.PILOT, raw=raw)
    trend = Verdict(f"|spearman| {name} vs eps_1/eps_2", abs(rank), cfg.correlation_threshold, "<=",
                    ThresholdSource.PILOT, raw=raw)
    if evaluate:
        bounded.evaluate()
        trend.evaluate()
    result.verdicts.extend([bounded, trend])


def _pair_scales(spec: CoefficientSpec, e1: float, e2: float) -> Tuple[float, ...]:
    if spec.variable_separated:
        return (e1, e2) + (e2,) * (spec.num_scales - 2) if spec.num_scales >= 2 else (e1,)
    return scale_tuple(spec, (e1, e2))


def run_lipschitz_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """
    Interior sup |grad u_eps| over ||u_eps||_L2 for every (eps_1, eps_2) pair.
    Coefficients that are not variable separated are reported without a
    verdict.
    """
    spec = cfg.spec
    _validate(cfg)
    domain = pde.Domain.unit(spec.dimension, cfg.cells)

    def job(pair: Tuple[float, float]) -> Dict[str, Any]:
        e1, e2 = pair
        problem = fine_problem(spec, _pair_scales(spec, e1, e2), cfg.source, name=f"pair {e1:.4g},{e2:.4g}")
        u = pde.solve(problem, domain, cfg.tol, cfg.allow_underresolved)
        norms = pde.norms(u, cfg.margin)
        ratio = norms.grad_sup / norms.l2 if norms.l2 > 0 else 0.0
        logger.info("lipschitz eps=(%.4g, %.4g): ratio %.4f", e1, e2, ratio)
        return {"eps_1": e1, "eps_2": e2, "scale_ratio": e1 / e2, "l2": norms.l2,
                "grad_sup": norms.grad_sup, "ratio": ratio, "iterations": u.iterations}

    rows = _map(cfg.workers, job, cfg.sweep_pairs())
    result = ExperimentResult(ExperimentKind.LIPSCHITZ, rows, provenance=provenance(cfg))
    evaluate = spec.variable_separated
    if not evaluate:
        result.notes.append(f"{spec.name} is not variable separated: uniform Lipschitz bounds are "
                            "an open question there, table reported without verdict")
    _sweep_verdicts(result, "grad_sup/l2", [r["ratio"] for r in rows],
                    [r["scale_ratio"] for r in rows], cfg, evaluate)
    return result


def run_holder_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """Campanato C^alpha seminorm over ||u_eps||_L2 across the pair sweep."""
    spec = cfg.spec
    if spec.dimension != 2:
        raise StructureError("the Hoelder sweep runs on the unit square")
    _validate(cfg)
    domain = pde.Domain.unit(2, cfg.cells)
    center = (0.5, 0.5)

    def job(pair: Tuple[float, float]) -> List[Dict[str, Any]]:
        e1, e2 = pair
        problem = fine_problem(spec, _pair_scales(spec, e1, e2), cfg.source, name=f"pair {e1:.4g},{e2:.4g}")
        u = pde.solve(problem, domain, cfg.tol, cfg.allow_underresolved)
        l2 = pde.norms(u, cfg.margin).l2
        out = []
        for alpha in cfg.alphas:
            seminorm = pde.campanato_seminorm(u, alpha, center, cfg.radii)
            out.append({"eps_1": e1, "eps_2": e2, "scale_ratio": e1 / e2, "alpha": float(alpha),
                        "seminorm": seminorm, "c_alpha": seminorm / l2 if l2 > 0 else 0.0})
        return out

    rows = [row for block in _map(cfg.workers, job, cfg.sweep_pairs()) for row in block]
    rows.sort(key=lambda r: (r["alpha"], r["eps_1"], r["eps_2"]))
    result = ExperimentResult(ExperimentKind.HOLDER, rows, provenance=provenance(cfg))
    for alpha in cfg.alphas:
        block = [r for r in rows if r["alpha"] == float(alpha)]
        _sweep_verdicts(result, f"C_{alpha:g}", [r["c_alpha"] for r in block],
                        [r["scale_ratio"] for r in block], cfg, evaluate=True)
    return result


def stability_resolution(base: int, kappas: Sequence[np.ndarray]) -> int:
    """
    One cell resolution for every kappa of a stability run: the smallest
    power of two >= base with STABILITY_POINTS_PER_PERIOD points per
    reperiodized period at the largest floor(kappa).
    """
    floor = max([1] + [int(np.floor(np.max(kappa))) for kappa in kappas])
    needed = STABILITY_POINTS_PER_PERIOD * floor
    return max(base, 1 << (needed - 1).bit_length())


def run_stability(cfg: ExperimentConfig) -> ExperimentResult:
    """
    Distances between effective tensors and correctors at lambda and kappa:
    kappa = lambda, kappa = lambda + delta e_d and kappa = t lambda.
    """
    spec = cfg.spec
    _validate(cfg)
    d = spec.dimension
    lam = np.asarray(cfg.lam, dtype=float)
    if lam.size != d:
        raise PreconditionError(f"stability base lambda needs {d} entries, got {lam.size}")
    x0 = np.zeros(d)

    cases: List[Tuple[str, float, np.ndarray]] = [("identity", 0.0, lam.copy())]
    for delta in sorted(cfg.deltas, reverse=True):
        kappa = lam.copy()
        kappa[-1] += delta
        cases.append(("perturbation", float(delta), kappa))
    for t in sorted(cfg.scalings):
        cases.append(("scaling", float(t), t * lam))
    resolution = stability_resolution(cfg.resolution, [kappa for _, _, kappa in cases])
    base_corrector, base_tensor = cell.corrector_and_tensor(spec, x0, lam, resolution, cfg.cell_tol)

    def job(case) -> Dict[str, Any]:
        label, parameter, kappa = case
        corrector, tensor = cell.corrector_and_tensor(spec, x0, kappa, resolution, cfg.cell_tol)
        tensor_distance = float(np.max(np.abs(base_tensor.matrix - tensor.matrix)))
        row = {"case": label, "parameter": parameter,
               "distance": float(np.linalg.norm(kappa - lam)),
               "tensor_distance": tensor_distance}
        row.update({f"kappa_{i + 1}": float(v) for i, v in enumerate(kappa)})
        if label == "scaling":
            row["corrector_distance_sq"] = float("nan")
        else:
            row["corrector_distance_sq"] = cell.corrector_distance(base_corrector, corrector) ** 2
        return row

    rows = _map(cfg.workers, job, cases)
    result = ExperimentResult(ExperimentKind.STABILITY, rows, provenance=provenance(cfg))
    result.provenance["lambda"] = lam.tolist()
    result.provenance["resolution"] = resolution

    perturbed = [r for r in rows if r["case"] == "perturbation"]
    if len(perturbed) >= 2:
        deltas = [r["distance"] for r in perturbed]
        _fit_or_exact("tensor distance vs delta", deltas, [r["tensor_distance"] for r in perturbed],
                      1.0 * cfg.slope_target, result)
        _fit_or_exact("corrector distance^2 vs delta", deltas,
                      [r["corrector_distance_sq"] for r in perturbed], 2.0 * cfg.slope_target, result)
    scaled = [r["tensor_distance"] for r in rows if r["case"] == "scaling"]
    if scaled:
        verdict = Verdict("max tensor distance under kappa = t lambda", max(scaled), 1e-8, "<=",
                          ThresholdSource.THEORY, raw={"values": scaled})
        verdict.evaluate()
        result.verdicts.append(verdict)
    return result


def _mean_flux(u: pde.FieldOnGrid, coefficient) -> np.ndarray:
    return np.array([float(np.mean(pde.face_flux(u, coefficient, axis)))
                     for axis in range(u.domain.dimension)])


def run_hconv_probe(cfg: ExperimentConfig) -> ExperimentResult:
    """
    u_k for A_k = A(x, x/eps_k) with eps_k = 1/k against u-bar solved with
    the effective tensor, and the same for B_k = A_k + (1/k) I.
    """
    spec = cfg.spec
    _validate(cfg)
    d = spec.dimension
    domain = pde.Domain.unit(d, cfg.cells)
    limit_sampler, _ = _effective_sampler(spec, (1.0,) * d, cfg)
    u_bar = pde.solve(pde.DirichletProblem(limit_sampler, cfg.source, 0.0, name="limit"), domain, cfg.tol)
    flux_bar = _mean_flux(u_bar, limit_sampler)

    def job(item) -> Dict[str, Any]:
        label, k = item
        problem = fine_problem(spec, (1.0 / k,) * d, cfg.source, name=f"{label} k={k:g}")
        coefficient = problem.coefficient
        if label == "perturbed":
            base = coefficient

            def coefficient(points, base=base, k=k):
                return base(points) + np.eye(d) / k

            problem = pde.DirichletProblem(coefficient, problem.source, problem.boundary,
                                           problem.scales, problem.name)
        u_k = pde.solve(problem, domain, cfg.tol, cfg.allow_underresolved)
        flux = _mean_flux(u_k, coefficient)
        return {"sequence": label, "k": float(k), "eps": 1.0 / k,
                "l2_distance": pde.l2_distance(u_k, u_bar),
                "flux_distance": float(np.max(np.abs(flux - flux_bar)))}

    items = [(label, float(k)) for label in ("periodic", "perturbed") for k in sorted(cfg.k_grid)]
    rows = _map(cfg.workers, job, items)
    result = ExperimentResult(ExperimentKind.HCONV, rows, provenance=provenance(cfg))
    blocks = {label: [r for r in rows if r["sequence"] == label] for label in ("periodic", "perturbed")}
    for label, block in blocks.items():
        _fit_or_exact(f"{label} l2 distance vs eps", [r["eps"] for r in block],
                      [r["l2_distance"] for r in block], cfg.slope_target, result)
    # finest k of both sequences
    reach = blocks["periodic"][-1]["l2_distance"]
    verdict = Verdict("perturbed final l2 distance", blocks["perturbed"][-1]["l2_distance"],
                      cfg.perturbation_factor * reach, "<=", ThresholdSource.PILOT,
                      raw={"periodic": reach, "factor": cfg.perturbation_factor})
    verdict.evaluate()
    result.verdicts.append(verdict)
    return result


def run_quasi_benchmark(cfg: ExperimentConfig) -> ExperimentResult:
    """
    One-dimensional quasi-periodic effective coefficient three ways: the
    reiterated tower, the torus harmonic mean and the flux of fine solves
    with u(0) = 0, u(1) = 1 at eps = 2^-k.
    """
    qspec = cfg.quasi
    if qspec is None:
        raise PreconditionError("the quasi benchmark needs a [quasi] projection")
    if qspec.base.dimension != 1 or qspec.num_scales != 1:
        raise StructureError(f"{qspec.name}: the quasi benchmark is one-dimensional with one scale")
    for M in qspec.projections:
        report = validate_nondegeneracy(M)
        if not report:
            raise NondegeneracyError(report.witness, report.value)
    estimate_ellipticity(qspec.base, seed=cfg.seed)

    tower = reiterated_effective(qspec, None, cfg.rho_schedule, cfg.cutoff, cfg.cell_tol,
                                 workers=cfg.workers)
    B0 = float(tower.B0[0, 0])
    oracle = torus_harmonic_mean(qspec)
    stretch = float(np.abs(qspec.projections[0]).max())
    # finest eps sets the grid: 8 points per shortest projected period
    finest = 2.0 ** -max(cfg.quasi_k)
    cells = max(cfg.cells, 2 ** math.ceil(math.log2(pde.POINTS_PER_PERIOD * stretch / finest)))
    domain = pde.Domain.unit(1, cells)
    u_0 = pde.solve(pde.DirichletProblem(pde.constant_sampler([[B0]]), cfg.source, 0.0, name="quasi effective"),
                    domain, cfg.tol)

    def job(k: int) -> Dict[str, Any]:
        eps = 2.0 ** -k
        sampler = qspec.sampler((eps,))
        scales = (eps / stretch,)
        slope = pde.solve(pde.DirichletProblem(sampler, 0.0, lambda p: p[..., 0], scales, f"quasi slope k={k}"),
                          domain, cfg.tol, cfg.allow_underresolved)
        fine = pde.solve(pde.DirichletProblem(sampler, cfg.source, 0.0, scales, f"quasi fine k={k}"),
                         domain, cfg.tol, cfg.allow_underresolved)
        flux = float(np.mean(pde.face_flux(slope, sampler, 0)))
        return {"k": int(k), "eps": eps, "flux_estimate": flux,
                "l2_distance": pde.l2_distance(fine, u_0)}

    rows = _map(cfg.workers, job, sorted(int(k) for k in cfg.quasi_k))
    result = ExperimentResult(ExperimentKind.QUASIBENCH, rows, provenance=provenance(cfg))
    result.provenance.update({"B0": B0, "oracle": oracle, "extrapolation_error": tower.error,
                              "tower": tower.as_dict()})

    checks = [("|B0 - harmonic mean|", abs(B0 - oracle)),
              ("|fine flux - B0|", abs(rows[-1]["flux_estimate"] - B0) if rows else 0.0)]
    for name, measured in checks:
        verdict = Verdict(name, measured, cfg.agreement, "<=", ThresholdSource.THEORY,
                          raw={"B0": B0, "oracle": oracle})
        verdict.evaluate()
        result.verdicts.append(verdict)
    distances = [r["l2_distance"] for r in rows]
    rises = sum(1 for a, b in zip(distances, distances[1:]) if b > a and b > EXACT_TOL)
    verdict = Verdict("increasing steps of the fine-solve distance", float(rises), 0.0, "<=",
                      ThresholdSource.THEORY, raw={"distances": distances})
    verdict.evaluate()
    result.verdicts.append(verdict)
    return result


RUNNERS: Dict[ExperimentKind, Callable[[ExperimentConfig], ExperimentResult]] = {
    ExperimentKind.CONVERGENCE: run_convergence,
    ExperimentKind.LIPSCHITZ: run_lipschitz_sweep,
    ExperimentKind.HOLDER: run_holder_sweep,
    ExperimentKind.STABILITY: run_stability,
    ExperimentKind.HCONV: run_hconv_probe,
    ExperimentKind.QUASIBENCH: run_quasi_benchmark,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    logger.info("running %s on %s", cfg.kind.value, cfg.spec.name)
    return RUNNERS[cfg.kind](cfg)
