"""
Cut-and-project quasi-periodic cell problems.

A quasi-periodic coefficient is A(x, y_1, ..., y_n) = B(x, M_1 y_1, ..., M_n y_n)
with B 1-periodic in every w_i in T^{m_i} and M_i an m_i x d matrix without
integer relations (M_i^T z != 0 for z != 0). The corrector equation on T^m
is degenerate, so it is regularized:

    -div(M B M^T grad chi^rho) - rho^2 Laplace chi^rho = div(M B e_j)

and the effective tensor is extrapolated to rho -> 0 with Richardson in
rho^2. For two scales the tower is built inductively: B_1(x, w_1) averages
B over T^{m_2} at every node of the T^{m_1} grid, then B_0 averages B_1.

Torus grids are odd, (2K + 1)^m points for Fourier cutoff K, so there is
no Nyquist mode and the only kernel is the constant.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre

from .coeff import CoefficientSpec, family
from .errors import (
    ConvergenceError, DimensionError, ExtrapolationError, NondegeneracyError,
    PreconditionError, ResolutionError, StructureError,
)
from .fitting import richardson
from .krylov import pcg
from .scales import DEFAULT_TAIL_WINDOW, ScaleSequence, classify
from .spectral import TorusGrid, flux_operator

logger = logging.getLogger(__name__)

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
NONDEGENERACY_THRESHOLD = 1e-12
DEFAULT_Z_MAX = 64
DEFAULT_SCHEDULE = (0.2, 0.1, 0.05, 0.025)
DEFAULT_CUTOFF = 32
DEFAULT_TOL = 1e-10
MAX_LEVELS = 2
# successive differences of the rho-sequence below this count as settled
SETTLED_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class CutProjectSpec:
    """
    Periodic field B(x, w_1, ..., w_n) with projections M_i (m_i x d).

    The base coefficient declares the torus dimensions in its fast_dims.
    """
    base: CoefficientSpec
    projections: Tuple[np.ndarray, ...]

    def __post_init__(self):
        d = self.base.dimension
        mats = tuple(np.atleast_2d(np.asarray(M, dtype=float)) for M in self.projections)
        if len(mats) != self.base.num_scales:
            raise DimensionError(
                f"need one projection per scale ({self.base.num_scales}), got {len(mats)}", index=len(mats))
        for i, (M, m) in enumerate(zip(mats, self.base.fast_dims)):
            if M.shape != (m, d):
                raise DimensionError(f"projection {i} must be {m} x {d}, got {M.shape}", index=i)
            if not np.all(np.isfinite(M)):
                raise DimensionError("projection is not finite", index=i)
            M.setflags(write=False)
        object.__setattr__(self, "projections", mats)

    @property
    def name(self) -> str:
        return self.base.name

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.base.dimension,) + tuple(self.base.fast_dims)

    @property
    def num_scales(self) -> int:
        return self.base.num_scales

    def bandwidth(self, i: int) -> int:
        """Largest |wave number| of B in w_i."""
        if not self.base.terms:
            return 0
        return int(np.abs(self.base._arrays["waves"][i]).max())

    def sampler(self, eps: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
        """Fine-scale coefficient x -> B(x, M_1 x/eps_1, ..., M_n x/eps_n)."""
        eps = tuple(float(e) for e in eps)
        if len(eps) != self.num_scales:
            raise DimensionError(f"expected {self.num_scales} scales, got {len(eps)}", index=len(eps))
        if any(e <= 0 for e in eps):
            raise DimensionError("scales must be positive")

        def sample(points: np.ndarray) -> np.ndarray:
            points = np.asarray(points, dtype=float)
            return self.base.evaluate(points, [points @ M.T / e for M, e in zip(self.projections, eps)])

        sample.scales = eps
        return sample

    def as_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "dims": list(self.dims),
                "projections": [M.tolist() for M in self.projections]}


def golden_spec() -> CutProjectSpec:
    """b = 2 + 0.5 sin(2 pi w_1) + 0.5 sin(2 pi w_2) seen along M = (1, golden)^T."""
    return CutProjectSpec(family("golden_quasi", 1), (np.array([[1.0], [GOLDEN]]),))


def periodic_embedding(spec: CoefficientSpec) -> CutProjectSpec:
    """The periodic coefficient as a cut-and-project one with M_i = I."""
    if not spec.is_periodic_view:
        raise StructureError(f"{spec.name}: already a cut-and-project coefficient")
    d = spec.dimension
    return CutProjectSpec(spec, tuple(np.eye(d) for _ in range(spec.num_scales)))


@dataclass(frozen=True)
class NondegeneracyReport:
    """Smallest |M^T z| over 0 < |z|_inf <= z_max and the z attaining it."""
    nondegenerate: bool
    witness: Tuple[int, ...]
    value: float
    z_max: int

    def __bool__(self) -> bool:
        return self.nondegenerate

    def as_dict(self) -> Dict[str, Any]:
        return {"nondegenerate": self.nondegenerate, "witness": list(self.witness),
                "value": self.value, "z_max": self.z_max}


def _upper_half(Z: np.ndarray) -> np.ndarray:
    """Rows that are nonzero with a positive first nonzero entry."""
    nonzero = Z != 0
    live = nonzero.any(axis=1)
    first = np.argmax(nonzero, axis=1)
    lead = Z[np.arange(Z.shape[0]), first]
    return Z[live & (lead > 0)]


def validate_nondegeneracy(M, z_max: int = DEFAULT_Z_MAX) -> NondegeneracyReport:
    """
    Search integer relations M^T z = 0 with 0 < |z|_inf <= z_max.

    z and -z give the same value, so only z with a positive first nonzero
    entry are scanned. Ties go to the smallest |z|_inf.
    """
    if z_max < 1:
        raise PreconditionError(f"z_max must be >= 1, got {z_max}")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m = M.shape[0]
    span = np.arange(-z_max, z_max + 1)
    if m == 1:
        rest = np.zeros((1, 0), dtype=int)
    else:
        rest = np.stack(np.meshgrid(*[span] * (m - 1), indexing="ij"), axis=-1).reshape(-1, m - 1)

    best = (np.inf, np.inf, ())
    for z1 in range(0, z_max + 1):
        Z = np.hstack([np.full((rest.shape[0], 1), z1), rest])
        if z1 == 0:
            Z = _upper_half(Z)
            if Z.size == 0:
                continue
        values = np.linalg.norm(Z @ M, axis=1)
        sizes = np.abs(Z).max(axis=1)
        low = values.min()
        ties = np.flatnonzero(values <= low + 1e-15)
        pick = ties[np.argmin(sizes[ties])]
        value, size = float(values[pick]), int(sizes[pick])
        if value < best[0] - 1e-15 or (abs(value - best[0]) <= 1e-15 and size < best[1]):
            best = (value, size, tuple(int(v) for v in Z[pick]))

    value, _, witness = best
    report = NondegeneracyReport(value > NONDEGENERACY_THRESHOLD, witness, value, int(z_max))
    logger.debug("nondegeneracy up to %d: min |M^T z| = %.3e at %s", z_max, value, witness)
    return report


@dataclass
class RegularizedCorrector:
    """
    chi^rho_j on the (2K + 1)^m torus grid.

    Attributes:
        coefficients: normalized Fourier coefficients of chi^rho
        values: grid values of chi^rho
        gradient: grad_w chi^rho, shape (m, grid)
        projected_gradient: M^T grad_w chi^rho, shape (d, grid)
        rho: regularization parameter
        j: direction
        cutoff: Fourier cutoff K
        iterations: CG iterations
        residual: final relative residual
        condition: condition number of the preconditioning symbol
    """
    coefficients: np.ndarray
    values: np.ndarray
    gradient: np.ndarray
    projected_gradient: np.ndarray
    rho: float
    j: int
    cutoff: int
    iterations: int
    residual: float
    condition: float

    @property
    def energy(self) -> float:
        """mean |M^T grad chi^rho|^2."""
        return float(np.mean(np.sum(self.projected_gradient ** 2, axis=0)))

    def metadata(self) -> Dict[str, Any]:
        return {"rho": self.rho, "j": self.j, "cutoff": self.cutoff, "iterations": self.iterations,
                "residual": self.residual, "condition": self.condition, "energy": self.energy}


def _level_grid(m: int, cutoff: int) -> TorusGrid:
    return TorusGrid((2 * cutoff + 1,) * m)


def _solve_level(B: np.ndarray, M: np.ndarray, grid: TorusGrid, rho: float, j: int,
                 tol: float, maxiter: int, label: str) -> RegularizedCorrector:
    m = M.shape[0]
    shift = rho ** 2
    S = np.einsum("ad,...de,be->...ab", M, B, M)
    mean_S = S.reshape(-1, m, m).mean(axis=0)
    operator = flux_operator(grid, S, shift=shift)
    precondition = grid.preconditioner(mean_S, shift=shift)
    sym = grid.symbol(mean_S, shift)[~grid.null_modes]
    condition = float(sym.max() / sym.min())

    rhs = grid.divergence(np.einsum("ad,...d->a...", M, B[..., :, j]))
    try:
        result = pcg(operator, rhs, precondition, tol=tol, maxiter=maxiter,
                     project=grid.zero_mean, label=label)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"{label}: rho={rho:g}, condition estimate {condition:.3e}", exc.residuals) from exc
    grad = grid.gradient(result.x)
    projected = np.einsum("ad,a...->d...", M, grad)
    return RegularizedCorrector(grid.forward(result.x), result.x, grad, projected, float(rho), j,
                                (grid.shape[0] - 1) // 2, result.iterations, result.residual, condition)


def _average(B: np.ndarray, correctors: Sequence[RegularizedCorrector], rho: float) -> np.ndarray:
    """mean (e_i + X_i) . B (e_j + X_j) + rho^2 mean grad chi_i . grad chi_j."""
    d = B.shape[-1]
    lead = B.ndim - 2
    fields = [np.eye(d)[j].reshape((d,) + (1,) * lead) + c.projected_gradient
              for j, c in enumerate(correctors)]
    matrix = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            flux = np.einsum("...ab,b...->a...", B, fields[j])
            energy = np.mean(np.sum(fields[i] * flux, axis=0))
            penalty = np.mean(np.sum(correctors[i].gradient * correctors[j].gradient, axis=0))
            matrix[i, j] = float(energy + rho ** 2 * penalty)
    return 0.5 * (matrix + matrix.T)


@dataclass
class LevelAverage:
    """rho -> 0 extrapolation of one averaging step."""
    matrix: np.ndarray
    error: float
    sequence: np.ndarray
    energies: List[float]
    iterations: int


def _check_schedule(schedule: Sequence[float]) -> np.ndarray:
    rho = np.asarray(schedule, dtype=float)
    if rho.ndim != 1 or rho.size < 2:
        raise PreconditionError("rho schedule needs at least two values")
    if np.any(rho <= 0) or np.any(np.diff(rho) >= 0):
        raise PreconditionError(f"rho schedule must be positive and decreasing, got {rho.tolist()}")
    return rho


def _check_settling(sequence: np.ndarray, label: str) -> None:
    """Raise unless successive differences of the rho-sequence shrink."""
    flat = sequence.reshape(sequence.shape[0], -1)
    steps = np.abs(np.diff(flat, axis=0)).max(axis=1)
    for a, b in zip(steps[:-1], steps[1:]):
        if b > SETTLED_FLOOR and b >= a:
            worst = int(np.argmax(np.ptp(flat, axis=0)))
            raise ExtrapolationError(f"{label}: rho-sequence does not settle", flat[:, worst].tolist())


def _extrapolate_level(B: np.ndarray, M: np.ndarray, grid: TorusGrid, rho: np.ndarray,
                       tol: float, maxiter: int, workers: int, label: str) -> LevelAverage:
    d = B.shape[-1]
    jobs = [(r, j) for r in rho for j in range(d)]

    def job(item):
        r, j = item
        return _solve_level(B, M, grid, float(r), j, tol, maxiter, f"{label} rho={r:g} j={j}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(job, jobs))
    else:
        solved = [job(item) for item in jobs]

    matrices, energies = [], []
    for k, r in enumerate(rho):
        correctors = solved[k * d:(k + 1) * d]
        matrices.append(_average(B, correctors, float(r)))
        energies.append(sum(c.energy for c in correctors))
    sequence = np.stack(matrices)
    _check_settling(sequence, label)
    extrapolated = richardson(sequence, rho ** 2)
    matrix = 0.5 * (extrapolated.value + extrapolated.value.T)
    return LevelAverage(matrix, extrapolated.error, sequence, energies,
                        sum(c.iterations for c in solved))


def _check_cutoff(spec: CutProjectSpec, cutoff: int) -> None:
    for i in range(spec.num_scales):
        need = 2 * spec.bandwidth(i)
        if cutoff < max(need, 1):
            raise ResolutionError(f"cutoff {cutoff} below twice the bandwidth of scale {i} ({need})")


def _slow_point(spec: CutProjectSpec, x) -> np.ndarray:
    d = spec.base.dimension
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float).reshape(-1)
    if x.size != d:
        raise DimensionError(f"slow point needs {d} coordinates, got {x.size}")
    return x


def solve_regularized_corrector(spec: CutProjectSpec, x=None, rho: float = 0.1, j: int = 0,
                                cutoff: int = DEFAULT_CUTOFF, tol: float = DEFAULT_TOL,
                                outer: Optional[Sequence] = None,
                                maxiter: int = 2000) -> RegularizedCorrector:
    """
    Regularized corrector of the innermost scale at slow point x.

    For two scales the outer torus point w_1 is fixed by `outer`
    (origin by default).

    Raises:
        PreconditionError: rho <= 0 or j out of range
        ResolutionError: cutoff < 2 * bandwidth
        ConvergenceError: CG stalled (message carries rho and the condition estimate)
    """
    if rho <= 0:
        raise PreconditionError(f"rho must be positive, got {rho}")
    x = _slow_point(spec, x)
    d = spec.base.dimension
    if not 0 <= j < d:
        raise DimensionError(f"direction {j} out of range", index=j)
    _check_cutoff(spec, cutoff)
    n = spec.num_scales
    if outer is None:
        outer = [np.zeros(m) for m in spec.base.fast_dims[:-1]]
    if len(outer) != n - 1:
        raise DimensionError(f"need {n - 1} outer torus points, got {len(outer)}")

    grid = _level_grid(spec.base.fast_dims[-1], cutoff)
    ws = [np.asarray(w, dtype=float) for w in outer] + [grid.points()]
    B = spec.base.evaluate(x, ws)
    return _solve_level(B, spec.projections[-1], grid, float(rho), j, tol, maxiter,
                        f"quasi {spec.name}")


@dataclass
class TowerLevel:
    """
    One level B_k of the reiterated tower.

    tensors holds B_k on the grid of its remaining torus variables (or the
    constant matrix for k = 0); the innermost input level of a two-scale
    tower is not stored.
    """
    level: int
    tensors: Optional[np.ndarray]
    error: float
    sequence: Optional[np.ndarray]
    energies: List[float]
    min_eigenvalue: float
    coercive: bool

    def as_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"level": self.level, "error": self.error, "energies": self.energies,
                               "min_eigenvalue": self.min_eigenvalue, "coercive": self.coercive}
        if self.level == 0 and self.tensors is not None:
            out["matrix"] = self.tensors.tolist()
        if self.sequence is not None:
            out["rho_sequence"] = self.sequence.tolist()
        return out


@dataclass
class ReiteratedTensor:
    """The tower B_n, ..., B_0 at one slow point."""
    levels: List[TowerLevel]
    x: np.ndarray
    schedule: Tuple[float, ...]
    cutoff: int
    spec_name: str
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def B0(self) -> np.ndarray:
        return self.levels[-1].tensors

    @property
    def error(self) -> float:
        return self.levels[-1].error

    @property
    def coercive(self) -> bool:
        return all(level.coercive for level in self.levels)

    def as_dict(self) -> Dict[str, Any]:
        return {"spec": self.spec_name, "x": self.x.tolist(), "schedule": list(self.schedule),
                "cutoff": self.cutoff, "B0": self.B0.tolist(), "error": self.error,
                "levels": [level.as_dict() for level in self.levels], "diagnostics": self.diagnostics}


def _min_eigenvalue(tensors: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(tensors).min())


def reiterated_effective(spec: CutProjectSpec, x=None, rho_schedule: Sequence[float] = DEFAULT_SCHEDULE,
                         cutoff: int = DEFAULT_CUTOFF, tol: float = DEFAULT_TOL,
                         z_max: int = DEFAULT_Z_MAX, maxiter: int = 2000,
                         workers: int = 1) -> ReiteratedTensor:
    """
    Effective tensor B_0 of a cut-and-project coefficient with n <= 2 scales.

    Each level solves the regularized correctors for every rho of the
    schedule, extrapolates the averaged tensor to rho = 0 and checks that
    its smallest eigenvalue stays above the declared ellipticity constant.

    Raises:
        StructureError: more than two scales
        NondegeneracyError: some M_i has an integer relation up to z_max
        ResolutionError: cutoff < 2 * bandwidth
        ExtrapolationError: the rho-sequence does not settle
    """
    n = spec.num_scales
    if n > MAX_LEVELS:
        raise StructureError(f"{spec.name}: at most {MAX_LEVELS} scales are supported, got {n}")
    rho = _check_schedule(rho_schedule)
    x = _slow_point(spec, x)
    _check_cutoff(spec, cutoff)
    reports = []
    for M in spec.projections:
        report = validate_nondegeneracy(M, z_max)
        if not report:
            raise NondegeneracyError(report.witness, report.value)
        reports.append(report.as_dict())

    fast_dims = spec.base.fast_dims
    grids = [_level_grid(m, cutoff) for m in fast_dims]
    levels: List[TowerLevel] = []

    if n == 1:
        B = spec.base.evaluate(x, [grids[0].points()])
        input_min = _min_eigenvalue(B)
        inner = None
    else:
        outer_points = grids[0].points().reshape(-1, fast_dims[0])
        inner_points = grids[1].points()

        def at(w1: np.ndarray) -> LevelAverage:
            Bw = spec.base.evaluate(x, [w1, inner_points])
            return _extrapolate_level(Bw, spec.projections[1], grids[1], rho, tol, maxiter, 1,
                                      f"quasi {spec.name} level 1")

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                inner = list(pool.map(at, outer_points))
        else:
            inner = [at(w1) for w1 in outer_points]
        input_min = min(_min_eigenvalue(spec.base.evaluate(x, [w1, inner_points])) for w1 in outer_points)
        d = spec.base.dimension
        B = np.stack([r.matrix for r in inner]).reshape(grids[0].shape + (d, d))

    lam = spec.base.lambda_decl if spec.base.lambda_decl is not None else input_min
    levels.append(TowerLevel(n, B if n == 1 else None, 0.0, None, [], input_min, input_min >= lam - tol))

    if inner is not None:
        worst = max(range(len(inner)), key=lambda i: inner[i].error)
        error = inner[worst].error
        low = _min_eigenvalue(B)
        levels.append(TowerLevel(1, B, error, inner[worst].sequence, inner[worst].energies, low,
                                 low >= lam - max(tol, error)))

    top = _extrapolate_level(B, spec.projections[0], grids[0], rho, tol, maxiter, workers,
                             f"quasi {spec.name} level 0")
    low = _min_eigenvalue(top.matrix)
    levels.append(TowerLevel(0, top.matrix, top.error, top.sequence, top.energies, low,
                             low >= lam - max(tol, top.error)))
    for level in levels:
        if not level.coercive:
            logger.warning("quasi %s: level %d loses coercivity (min eigenvalue %.6g < %.6g)",
                           spec.name, level.level, level.min_eigenvalue, lam)

    energies = top.energies
    diagnostics = {"nondegeneracy": reports, "lambda": float(lam), "iterations": top.iterations,
                   "energy_ratio": float(max(energies) / min(energies)) if min(energies) > 0 else 1.0}
    logger.info("quasi %s: B0 = %s (extrapolation error %.2e)", spec.name, top.matrix.tolist(), top.error)
    return ReiteratedTensor(levels, x, tuple(float(r) for r in rho), cutoff, spec.name, diagnostics)


def torus_harmonic_mean(spec: CutProjectSpec, x=None, resolution: int = 256) -> float:
    """(mean over T^m of 1/b)^-1 for a scalar one-dimensional coefficient."""
    if spec.base.dimension != 1 or spec.num_scales != 1:
        raise StructureError(f"{spec.name}: the harmonic-mean oracle needs d = 1 and one scale")
    x = _slow_point(spec, x)
    grid = TorusGrid((resolution,) * spec.base.fast_dims[0])
    b = spec.base.evaluate(x, [grid.points()])[..., 0, 0]
    return float(1.0 / np.mean(1.0 / b))


@dataclass(frozen=True)
class WeakMeanRow:
    k: float
    eps: Tuple[float, ...]
    integral: float
    target: float
    distance: float

    def as_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "eps": list(self.eps), "integral": self.integral,
                "target": self.target, "distance": self.distance}


@dataclass
class WeakMeanTable:
    """Oscillatory integrals against their weak limit [phi] * int psi."""
    rows: List[WeakMeanRow]
    mean: float

    @property
    def distances(self) -> np.ndarray:
        return np.array([row.distance for row in self.rows])

    def as_rows(self) -> List[Dict[str, Any]]:
        return [row.as_dict() for row in self.rows]


def _quadrature(d: int, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes (..., d) and weights on (0, 1)^d."""
    t, w = roots_legendre(order)
    h = 1.0 / panels
    left = np.arange(panels) * h
    nodes = (left[:, None] + 0.5 * h * (t[None, :] + 1.0)).reshape(-1)
    weights = np.tile(0.5 * h * w, panels)
    mesh = np.stack(np.meshgrid(*[nodes] * d, indexing="ij"), axis=-1)
    W = np.ones(mesh.shape[:-1])
    for axis in range(d):
        view = [1] * d
        view[axis] = weights.size
        W = W * weights.reshape(view)
    return mesh, W


def _torus_mean(phi: Callable, fast_dims: Sequence[int], resolution: int) -> float:
    grid = TorusGrid((resolution,) * sum(fast_dims))
    pts = grid.points()
    ws, start = [], 0
    for m in fast_dims:
        ws.append(pts[..., start:start + m])
        start += m
    return float(np.mean(phi(ws)))


def weak_mean_probe(phi: Callable[[List[np.ndarray]], np.ndarray], spec: CutProjectSpec,
                    eps_seq: ScaleSequence, quad_resolution: int = 256,
                    psi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                    order: int = 8, mean_resolution: int = 64,
                    tail_window: int = DEFAULT_TAIL_WINDOW) -> WeakMeanTable:
    """
    int_(0,1)^d phi(M_1 x/eps_1, ..., M_n x/eps_n) psi(x) dx for every row
    of eps_seq, next to [phi] int psi.

    phi takes the list of torus points w_i (shape (..., m_i)); psi defaults
    to 1. Sequences long enough to classify must be separated.
    """
    n = spec.num_scales
    if eps_seq.num_scales != n:
        raise DimensionError(f"scale sequence has {eps_seq.num_scales} scales, spec has {n}")
    if len(eps_seq) >= tail_window:
        if not classify(eps_seq, tail_window).separated:
            raise PreconditionError(f"scale sequence {eps_seq.label or ''} is not separated".strip())
    else:
        logger.info("weak mean probe: %d rows, separation not checked", len(eps_seq))

    d = spec.base.dimension
    nodes, weights = _quadrature(d, quad_resolution, order)
    psi_values = np.ones(nodes.shape[:-1]) if psi is None else np.asarray(psi(nodes), dtype=float)
    psi_integral = float(np.sum(weights * psi_values))
    mean = _torus_mean(phi, spec.base.fast_dims, mean_resolution)
    target = mean * psi_integral

    rows = []
    for k, eps in zip(eps_seq.k, eps_seq.entries):
        ws = [nodes @ M.T / e for M, e in zip(spec.projections, eps)]
        integral = float(np.sum(weights * np.asarray(phi(ws)) * psi_values))
        rows.append(WeakMeanRow(float(k), tuple(float(e) for e in eps), integral, target,
                                abs(integral - target)))
    return WeakMeanTable(rows, mean)
