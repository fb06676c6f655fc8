"""
Lambda-parametrized periodic cell problems and effective tensors.

For lambda = (lambda_1, ..., lambda_d), lambda_i >= 1, and a coefficient
frozen at the slow point x, the corrector chi~_j solves on the unit torus

    -div(M A(x, y) M grad chi~_j) = div(M A(x, y) e_j),   mean(chi~_j) = 0

with M = diag(lambda), and the effective tensor is

    A^ = mean over y of A (I + M grad chi~).

The solve runs on the reperiodized cell: psi_j(z) = chi~_j(floor(M) z)
solves the same problem with coefficient Phi A(x, floor(M) z) Phi and
right-hand side div(Phi A e_j), where 1 <= Phi <= 2 keeps the operator
well conditioned for every lambda. The grid must then resolve floor(M)
periods per cell: N >= 8 max floor(lambda_i).

Discretization is Fourier-Galerkin (collocation grid as quadrature) with
conjugate gradients preconditioned by the constant-coefficient symbol.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .coeff import CoefficientSpec
from .errors import DimensionError, PreconditionError, ResolutionError, StructureError
from .krylov import pcg
from .reperiod import ReperiodizationMap, build_maps
from .spectral import TWO_PI, TorusGrid, flux_operator

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 16
POINTS_PER_PERIOD = 8
DEFAULT_TOL = 1e-10


@dataclass
class CorrectorField:
    """
    Correctors psi_j on the reperiodized cell grid.

    Attributes:
        values: array (d, N, ..., N); values[j] = chi~_j(floor(M) z)
        maps: the reperiodization maps of lambda
        anchor_x: slow point at which A(x, .) was frozen
        resolution: grid points N per axis
        spec_name: coefficient the corrector belongs to
        tol: solver tolerance
        iterations: CG iterations per direction
        residuals: final relative residual per direction
    """
    values: np.ndarray
    maps: ReperiodizationMap
    anchor_x: np.ndarray
    resolution: int
    spec_name: str
    tol: float
    iterations: Tuple[int, ...] = ()
    residuals: Tuple[float, ...] = ()

    @property
    def lam(self) -> np.ndarray:
        return self.maps.lam

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def grid(self) -> TorusGrid:
        return TorusGrid((self.resolution,) * self.dimension)

    def scaled_gradient(self) -> np.ndarray:
        """M grad_y chi~ on the z grid, shape (d, d, N, ..., N), [j] for direction j."""
        grid = self.grid()
        phi = self.maps.phi.reshape((-1,) + (1,) * self.dimension)
        return np.stack([phi * grid.gradient(self.values[j]) for j in range(self.dimension)])

    def metadata(self) -> Dict[str, Any]:
        return {"spec": self.spec_name, "lambda": self.lam.tolist(), "anchor_x": self.anchor_x.tolist(),
                "resolution": self.resolution, "tol": self.tol,
                "iterations": list(self.iterations), "residuals": list(self.residuals)}


@dataclass
class EffectiveTensor:
    """Effective matrix at one slow point with its provenance."""
    matrix: np.ndarray
    provenance: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {"matrix": self.matrix.tolist(), "provenance": self.provenance}


def _check_inputs(spec: CoefficientSpec, x, lam, resolution: int) -> Tuple[np.ndarray, ReperiodizationMap]:
    d = spec.dimension
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != d:
        raise DimensionError(f"slow point needs {d} coordinates, got {x.size}")
    maps = build_maps(lam)
    if maps.lam.size != d:
        raise DimensionError(f"lambda needs {d} entries, got {maps.lam.size}")
    if not spec.is_periodic_view:
        raise StructureError(f"{spec.name}: use quasicell for cut-and-project coefficients")
    if resolution < MIN_RESOLUTION or resolution & (resolution - 1):
        raise ResolutionError(f"resolution must be a power of two >= {MIN_RESOLUTION}, got {resolution}")
    needed = POINTS_PER_PERIOD * int(maps.floor.max())
    if resolution < needed:
        raise ResolutionError(
            f"resolution {resolution} below {POINTS_PER_PERIOD} * max floor(lambda) = {needed}")
    return x, maps


def _cell_coefficient(spec: CoefficientSpec, x: np.ndarray, maps: ReperiodizationMap,
                      grid: TorusGrid) -> np.ndarray:
    """A(x, floor(M) z) on the z grid, shape (N, ..., N, d, d)."""
    z = grid.points()
    return spec.cell_field(x, z * maps.floor)


def _solve(spec: CoefficientSpec, x: np.ndarray, maps: ReperiodizationMap, resolution: int,
           tol: float, maxiter: int) -> Tuple[CorrectorField, np.ndarray]:
    d = spec.dimension
    grid = TorusGrid((resolution,) * d)
    A = _cell_coefficient(spec, x, maps, grid)
    phi = maps.phi
    B = phi[:, None] * A * phi[None, :]
    operator = flux_operator(grid, B)
    precondition = grid.preconditioner(B.reshape(-1, d, d).mean(axis=0))

    values, iterations, residuals = [], [], []
    for j in range(d):
        rhs = grid.divergence(np.moveaxis(phi * A[..., :, j], -1, 0))
        result = pcg(operator, rhs, precondition, tol=tol, maxiter=maxiter,
                     project=grid.zero_mean, label=f"cell {spec.name} j={j}")
        values.append(result.x)
        iterations.append(result.iterations)
        residuals.append(result.residual)
    corrector = CorrectorField(np.stack(values), maps, x, resolution, spec.name, tol,
                               tuple(iterations), tuple(residuals))
    logger.info("cell %s at lambda %s: iterations %s", spec.name, maps.lam.tolist(), iterations)
    return corrector, A


def solve_corrector(spec: CoefficientSpec, x, lam: Sequence[float], resolution: int = 64,
                    tol: float = DEFAULT_TOL, maxiter: int = 2000) -> CorrectorField:
    """
    Solve the lambda cell problem at slow point x.

    Raises:
        PreconditionError: some lambda_i < 1
        ResolutionError: N not a power of two >= 16, or N < 8 max floor(lambda)
        ConvergenceError: CG did not reach tol
    """
    x, maps = _check_inputs(spec, x, lam, resolution)
    corrector, _ = _solve(spec, x, maps, resolution, tol, maxiter)
    return corrector


def _average(A: np.ndarray, corrector: CorrectorField) -> np.ndarray:
    """A^_ij = mean (e_i + G_i) . A (e_j + G_j) with G_j = M grad chi~_j."""
    d = corrector.dimension
    G = corrector.scaled_gradient()
    fields = [np.eye(d)[j].reshape((d,) + (1,) * d) + G[j] for j in range(d)]
    matrix = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            flux = np.einsum("...ab,b...->a...", A, fields[j])
            matrix[i, j] = float(np.mean(np.sum(fields[i] * flux, axis=0)))
    return matrix


def effective_tensor(spec: CoefficientSpec, x, lam: Sequence[float], resolution: int = 64,
                     tol: float = DEFAULT_TOL, maxiter: int = 2000) -> EffectiveTensor:
    """
    Effective tensor A^ = mean A (I + M grad chi~) at slow point x.

    The average is taken in energy form, mean (e_i + G_i) . A (e_j + G_j),
    which equals the flux average at the discrete solution and is symmetric
    by construction.
    """
    return corrector_and_tensor(spec, x, lam, resolution, tol, maxiter)[1]


def corrector_and_tensor(spec: CoefficientSpec, x, lam: Sequence[float], resolution: int = 64,
                         tol: float = DEFAULT_TOL,
                         maxiter: int = 2000) -> Tuple[CorrectorField, EffectiveTensor]:
    """Corrector and effective tensor from a single solve."""
    x, maps = _check_inputs(spec, x, lam, resolution)
    corrector, A = _solve(spec, x, maps, resolution, tol, maxiter)
    matrix = _average(A, corrector)
    provenance = {"spec": spec.name, "lambda": maps.lam.tolist(), "x": x.tolist(),
                  "resolution": resolution, "tol": tol, "iterations": list(corrector.iterations)}
    return corrector, EffectiveTensor(matrix, provenance)


def _y_coefficients(c: CorrectorField, box: np.ndarray) -> np.ndarray:
    """
    Fourier coefficients of M grad chi~ on the y wave numbers k in `box`,
    obtained by subsampling chi~^(k) = psi^(floor(M) k); zero beyond Nyquist.
    Returns shape (d, d) + box shape (direction, component, modes).
    """
    d, N = c.dimension, c.resolution
    floor = c.maps.floor
    spectra = np.fft.fftn(c.values, axes=tuple(range(1, d + 1))) / N ** d
    ks = np.meshgrid(*[np.arange(-b, b + 1) for b in box], indexing="ij")
    valid = np.ones(ks[0].shape, dtype=bool)
    index = []
    for a in range(d):
        m = floor[a] * ks[a]
        valid &= np.abs(m) < N / 2
        index.append(np.mod(m, N))
    chi_hat = np.where(valid[None], spectra[(slice(None),) + tuple(index)], 0.0)
    out = np.empty((d, d) + ks[0].shape, dtype=complex)
    for a in range(d):
        out[:, a] = 1j * TWO_PI * c.lam[a] * ks[a] * chi_hat
    return out


def corrector_distance(c1: CorrectorField, c2: CorrectorField) -> float:
    """
    (mean over y of |M_1 grad chi~^1 - M_2 grad chi~^2|^2)^(1/2), summed over
    directions j, computed by Parseval on the y representation.

    Raises:
        DimensionError: correctors of different specs, anchors or resolutions
    """
    if c1.resolution != c2.resolution:
        raise DimensionError(f"resolution mismatch: {c1.resolution} vs {c2.resolution}")
    if c1.spec_name != c2.spec_name or not np.array_equal(c1.anchor_x, c2.anchor_x):
        raise DimensionError("correctors belong to different coefficients or slow points")
    N = c1.resolution
    box = np.array([max((N // 2 - 1) // int(f1), (N // 2 - 1) // int(f2))
                    for f1, f2 in zip(c1.maps.floor, c2.maps.floor)])
    diff = _y_coefficients(c1, box) - _y_coefficients(c2, box)
    return float(np.sqrt(np.sum(np.abs(diff) ** 2)))


def energy_norm(c: CorrectorField) -> float:
    """Mean over the cell of |M grad chi~|^2, summed over directions."""
    G = c.scaled_gradient()
    return float(np.sum(np.mean(np.sum(G ** 2, axis=1), axis=tuple(range(1, c.dimension + 1)))))


def voigt_reuss_bounds(spec: CoefficientSpec, x, resolution: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """
    Harmonic-mean (lower) and arithmetic-mean (upper) bounds for a scalar
    coefficient a(x, y) diag(w), evaluated on a grid of the unit cell.
    """
    if not spec.is_scalar:
        raise StructureError(f"{spec.name}: Voigt-Reuss bounds need A = a diag(w)")
    d = spec.dimension
    grid = TorusGrid((resolution,) * d)
    A = spec.cell_field(np.asarray(x, dtype=float), grid.points())
    W = np.diag(spec.weights)
    a = A[..., 0, 0] / W[0, 0]
    harmonic = 1.0 / np.mean(1.0 / a)
    arithmetic = float(np.mean(a))
    return harmonic * W, arithmetic * W


@dataclass
class EffectiveField:
    """Effective tensors on a tensor grid of slow points."""
    axes: Tuple[np.ndarray, ...]
    tensors: np.ndarray

    def sampler(self):
        """x -> A^(x) by multilinear interpolation of the tensor entries."""
        interp = RegularGridInterpolator(self.axes, self.tensors, method="linear",
                                         bounds_error=False, fill_value=None)

        def sample(points: np.ndarray) -> np.ndarray:
            points = np.asarray(points, dtype=float)
            flat = interp(points.reshape(-1, points.shape[-1]))
            out = flat.reshape(points.shape[:-1] + self.tensors.shape[-2:])
            return 0.5 * (out + np.swapaxes(out, -1, -2))

        return sample


def effective_tensor_field(spec: CoefficientSpec, axes: Sequence[Sequence[float]], lam: Sequence[float],
                           resolution: int = 64, tol: float = DEFAULT_TOL,
                           workers: int = 1) -> EffectiveField:
    """
    Effective tensors at every node of the slow grid spanned by `axes`
    (one array per coordinate); independent solves run on `workers` threads.
    """
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    if len(axes) != spec.dimension:
        raise DimensionError(f"need {spec.dimension} slow axes, got {len(axes)}")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    points = mesh.reshape(-1, spec.dimension)

    def job(x: np.ndarray) -> np.ndarray:
        return effective_tensor(spec, x, lam, resolution, tol).matrix

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        tensors = list(pool.map(job, points))
    d = spec.dimension
    return EffectiveField(axes, np.stack(tensors).reshape(mesh.shape[:-1] + (d, d)))
