"""
Finite-difference solver for -div(A grad u) = f on rectangles with u = g
on the boundary, and the norms used by the experiments.

Discretization (d = 1 or 2):
- nodes on a uniform grid including the boundary
- flux form: diagonal coefficients harmonically averaged between the two
  nodes of each face (5-point stencil in 2D)
- off-diagonal coefficients through a symmetric 9-point cross term
- the system on the interior nodes is symmetric positive definite and is
  solved by conjugate gradients preconditioned with a constant-coefficient
  Poisson solve (discrete sine transform)

Oscillating coefficients must be resolved: the grid spacing h has to be at
most eps_min/8 unless the caller explicitly accepts an under-resolved solve.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.fft import dstn, idstn
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .errors import DimensionError, DomainError, PreconditionError, ResolutionError, StructureError
from .krylov import pcg

logger = logging.getLogger(__name__)

# Points per smallest period
POINTS_PER_PERIOD = 8

Sampler = Callable[[np.ndarray], np.ndarray]
Data = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Domain:
    """
    Rectangle [lower, upper] with a uniform grid of `nodes` points per axis
    (boundary nodes included).
    """
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    nodes: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        d = len(self.lower)
        if d not in (1, 2):
            raise DimensionError(f"domains are 1D or 2D, got d = {d}")
        if len(self.upper) != d or len(self.nodes) != d:
            raise DimensionError("lower, upper and nodes must have the same length")
        for i in range(d):
            if self.upper[i] <= self.lower[i]:
                raise DimensionError("upper corner must exceed lower corner", index=i)
            if self.nodes[i] - 2 < 3:
                raise DimensionError("need at least 3 interior nodes per axis", index=i)

    @classmethod
    def unit(cls, dimension: int, cells: int) -> "Domain":
        """Unit square (or interval) with `cells` cells per axis."""
        return cls((0.0,) * dimension, (1.0,) * dimension, (cells + 1,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.nodes))

    @property
    def h(self) -> float:
        return max(self.spacing)

    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.nodes))

    def points(self) -> np.ndarray:
        """Node coordinates, shape nodes + (d,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def interior(self) -> np.ndarray:
        mask = np.zeros(self.nodes, dtype=bool)
        mask[tuple(slice(1, -1) for _ in self.nodes)] = True
        return mask

    def scaled(self, factors: Sequence[float]) -> "Domain":
        """Image of the domain under x -> diag(factors) x, same node counts."""
        f = np.asarray(factors, dtype=float)
        return Domain(tuple(np.asarray(self.lower) * f), tuple(np.asarray(self.upper) * f), self.nodes)

    def as_dict(self) -> Dict[str, Any]:
        return {"lower": list(self.lower), "upper": list(self.upper),
                "nodes": list(self.nodes), "h": list(self.spacing)}


@dataclass
class FieldOnGrid:
    """Nodal values on a domain plus solve metadata."""
    values: np.ndarray
    domain: Domain
    iterations: int = 0
    residual: float = 0.0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.nodes:
            raise DimensionError(f"values of shape {self.values.shape} do not match nodes {self.domain.nodes}")
        if not np.all(np.isfinite(self.values)):
            raise StructureError("field has non-finite values")

    def at(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation; points outside the domain raise DomainError."""
        points = np.asarray(points, dtype=float)
        lower, upper = np.asarray(self.domain.lower), np.asarray(self.domain.upper)
        slack = 1e-12 * (upper - lower)
        if np.any(points < lower - slack) or np.any(points > upper + slack):
            raise DomainError("evaluation point outside the domain")
        clipped = np.clip(points, lower, upper)
        interp = RegularGridInterpolator(self.domain.axes(), self.values, method="linear")
        return interp(clipped)

    def metadata(self) -> Dict[str, Any]:
        return {"domain": self.domain.as_dict(), "iterations": self.iterations,
                "residual": self.residual, **self.meta}


@dataclass(frozen=True)
class DirichletProblem:
    """
    -div(A grad u) = f in the domain, u = g on its boundary.

    Attributes:
        coefficient: x -> A(x), points (..., d) to matrices (..., d, d)
        source: f as a callable, a nodal array or a constant
        boundary: g as a callable or a constant
        scales: oscillation scales of the coefficient (empty when smooth)
        name: label for logs
    """
    coefficient: Sampler
    source: Data = 0.0
    boundary: Data = 0.0
    scales: Tuple[float, ...] = ()
    name: str = "problem"


def constant_sampler(matrix: np.ndarray) -> Sampler:
    """Sampler of a constant coefficient matrix."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))

    def sampler(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(matrix, points.shape[:-1] + matrix.shape).copy()

    return sampler


def _sample(data: Data, points: np.ndarray) -> np.ndarray:
    if callable(data):
        return np.broadcast_to(np.asarray(data(points), dtype=float), points.shape[:-1])
    return np.broadcast_to(np.asarray(data, dtype=float), points.shape[:-1])


def _coefficients(problem: DirichletProblem, domain: Domain) -> np.ndarray:
    d = domain.dimension
    A = np.asarray(problem.coefficient(domain.points()), dtype=float)
    if A.shape != domain.nodes + (d, d):
        raise DimensionError(f"coefficient sampler returned shape {A.shape}, expected {domain.nodes + (d, d)}")
    if not np.allclose(A, np.swapaxes(A, -1, -2), rtol=0.0, atol=1e-14 * np.abs(A).max()):
        raise StructureError(f"{problem.name}: coefficient is not symmetric")
    if np.any(np.diagonal(A, axis1=-2, axis2=-1) <= 0):
        raise StructureError(f"{problem.name}: coefficient has a non-positive diagonal")
    return A


def face_coefficients(A: np.ndarray, axis: int) -> np.ndarray:
    """Harmonic mean of A[axis, axis] between neighbouring nodes along axis."""
    a = A[..., axis, axis]
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    left, right = a[tuple(lo)], a[tuple(hi)]
    return 2.0 * left * right / (left + right)


def assemble(A: np.ndarray, domain: Domain) -> sparse.csr_matrix:
    """Stiffness matrix of -div(A grad .) over all nodes (rows of interior nodes are exact)."""
    d = domain.dimension
    h = domain.spacing
    idx = np.arange(int(np.prod(domain.nodes))).reshape(domain.nodes)
    rows, cols, vals = [], [], []

    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        w = (face_coefficients(A, axis) / h[axis] ** 2).ravel()
        p, q = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()
        rows += [p, p, q, q]
        cols += [p, q, q, p]
        vals += [w, -w, w, -w]

    if d == 2 and np.any(A[..., 0, 1] != 0):
        b = A[..., 0, 1]
        c = 1.0 / (4.0 * h[0] * h[1])
        center = idx[1:-1, 1:-1].ravel()
        east, west = b[2:, 1:-1].ravel(), b[:-2, 1:-1].ravel()
        north, south = b[1:-1, 2:].ravel(), b[1:-1, :-2].ravel()
        corners = [
            (idx[2:, 2:], -c * (east + north)),
            (idx[2:, :-2], c * (east + south)),
            (idx[:-2, 2:], c * (west + north)),
            (idx[:-2, :-2], -c * (west + south)),
        ]
        for neighbour, weight in corners:
            rows.append(center)
            cols.append(neighbour.ravel())
            vals.append(weight)

    n = idx.size
    return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n)).tocsr()


def _poisson_preconditioner(A: np.ndarray, domain: Domain):
    """Inverse of the constant-coefficient Dirichlet Laplacian via DST-I."""
    interior = tuple(n - 2 for n in domain.nodes)
    symbol = np.zeros(interior)
    for axis, (m, h) in enumerate(zip(interior, domain.spacing)):
        ref = float(np.mean(face_coefficients(A, axis)))
        j = np.arange(1, m + 1)
        eig = ref * (2.0 - 2.0 * np.cos(np.pi * j / (m + 1))) / h ** 2
        shape = [1] * len(interior)
        shape[axis] = m
        symbol = symbol + eig.reshape(shape)

    def apply(r: np.ndarray) -> np.ndarray:
        grid = r.reshape(interior)
        return idstn(dstn(grid, type=1) / symbol, type=1).ravel()

    return apply


def solve(problem: DirichletProblem, domain: Domain, tol: float = 1e-10,
          allow_underresolved: bool = False, maxiter: int = 5000) -> FieldOnGrid:
    """
    Solve the Dirichlet problem on the grid of `domain`.

    Raises:
        ResolutionError: h > eps_min/8 for an oscillating coefficient
        ConvergenceError: conjugate gradients did not reach tol
    """
    if problem.scales:
        eps_min = min(problem.scales)
        limit = eps_min / POINTS_PER_PERIOD
        if domain.h > limit * (1 + 1e-12):
            message = (f"{problem.name}: grid spacing {domain.h:.4g} exceeds eps_min/{POINTS_PER_PERIOD} "
                       f"= {limit:.4g}")
            if not allow_underresolved:
                raise ResolutionError(message)
            logger.warning("%s (solving anyway)", message)

    points = domain.points()
    A = _coefficients(problem, domain)
    K = assemble(A, domain)
    inner = domain.interior().ravel()
    K_ii = K[inner][:, inner]
    K_ib = K[inner][:, ~inner]
    skew = abs(K_ii - K_ii.T).max() if K_ii.nnz else 0.0
    if skew > 1e-12 * abs(K_ii).max():
        raise StructureError(f"{problem.name}: system matrix is not symmetric ({skew:.3e})")

    g = _sample(problem.boundary, points).ravel()
    f = _sample(problem.source, points).ravel()
    rhs = f[inner] - K_ib @ g[~inner]
    result = pcg(lambda v: K_ii @ v, rhs, precondition=_poisson_preconditioner(A, domain),
                 tol=tol, maxiter=maxiter, label=problem.name)

    values = g.copy()
    values[inner] = result.x
    logger.info("%s: solved %d unknowns in %d iterations (residual %.2e)",
                problem.name, int(inner.sum()), result.iterations, result.residual)
    return FieldOnGrid(values.reshape(domain.nodes), domain, result.iterations, result.residual,
                       {"problem": problem.name, "scales": list(problem.scales)})


def face_flux(u: FieldOnGrid, coefficient: Sampler, axis: int = 0) -> np.ndarray:
    """Discrete flux A_face * (u_{p+e} - u_p)/h on every face normal to axis."""
    A = np.asarray(coefficient(u.domain.points()), dtype=float)
    diff = np.diff(u.values, axis=axis) / u.domain.spacing[axis]
    return face_coefficients(A, axis) * diff


class Norms(NamedTuple):
    l2: float
    h1_semi: float
    grad_sup: float


def integrate(values: np.ndarray, domain: Domain) -> float:
    """Trapezoidal integral over the domain."""
    out = values
    for axis in reversed(range(domain.dimension)):
        out = trapezoid(out, dx=domain.spacing[axis], axis=axis)
    return float(out)


def gradient(u: FieldOnGrid) -> np.ndarray:
    """Centered-difference gradient, shape nodes + (d,)."""
    grads = np.gradient(u.values, *u.domain.spacing, edge_order=2)
    if u.domain.dimension == 1:
        grads = [grads]
    return np.stack(grads, axis=-1)


def inner_mask(domain: Domain, margin: float = 0.25) -> np.ndarray:
    """Nodes at relative distance >= margin from the boundary (inner half by default)."""
    masks = []
    for a, b, ax in zip(domain.lower, domain.upper, domain.axes()):
        width = b - a
        tol = 1e-12 * width
        masks.append((ax >= a + margin * width - tol) & (ax <= b - margin * width + tol))
    grids = np.meshgrid(*masks, indexing="ij")
    return np.logical_and.reduce(grids)


def norms(u: FieldOnGrid, margin: float = 0.25) -> Norms:
    """L2 norm, H1 seminorm and interior sup of |grad u|."""
    grad = gradient(u)
    speed = np.linalg.norm(grad, axis=-1)
    l2 = np.sqrt(integrate(u.values ** 2, u.domain))
    h1 = np.sqrt(integrate(speed ** 2, u.domain))
    inner = inner_mask(u.domain, margin)
    return Norms(l2, h1, float(speed[inner].max()))


def h2_proxy(u: FieldOnGrid) -> float:
    """L2 norm of all second differences (stand-in for the H2 norm)."""
    grad = gradient(u)
    total = np.zeros(u.domain.nodes)
    for a in range(u.domain.dimension):
        second = np.gradient(grad[..., a], *u.domain.spacing, edge_order=2)
        if u.domain.dimension == 1:
            second = [second]
        for comp in second:
            total += comp ** 2
    return float(np.sqrt(integrate(total, u.domain)))


def relative_l2(u: FieldOnGrid, v: FieldOnGrid) -> float:
    if u.domain != v.domain:
        raise DimensionError("fields live on different grids")
    base = np.sqrt(integrate(v.values ** 2, v.domain))
    diff = np.sqrt(integrate((u.values - v.values) ** 2, v.domain))
    return diff / base if base > 0 else diff


def l2_distance(u: FieldOnGrid, v: FieldOnGrid) -> float:
    if u.domain != v.domain:
        raise DimensionError("fields live on different grids")
    return float(np.sqrt(integrate((u.values - v.values) ** 2, u.domain)))


def campanato_profile(u: FieldOnGrid, alpha: float, center: Sequence[float],
                      radii: Sequence[float]) -> Dict[float, float]:
    """
    r^-alpha * (mean over the discrete ball B_r of |u - mean u|^2)^(1/2) per radius.

    Raises:
        PreconditionError: alpha outside (0, 1), or a ball leaving the domain
    """
    if not 0.0 < alpha < 1.0:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")
    center = np.asarray(center, dtype=float)
    if center.shape != (u.domain.dimension,):
        raise DimensionError("center must have one coordinate per axis")
    reach = min(min(c - a, b - c) for c, a, b in zip(center, u.domain.lower, u.domain.upper))
    dist = np.linalg.norm(u.domain.points() - center, axis=-1)
    profile = {}
    for r in radii:
        if r <= 0 or r > reach + 1e-12:
            raise PreconditionError(f"radius {r} exceeds the distance {reach:.4g} to the boundary")
        ball = u.values[dist <= r + 1e-12]
        if ball.size < 2:
            raise ResolutionError(f"ball of radius {r} holds fewer than 2 nodes")
        deviation = np.sqrt(np.mean((ball - ball.mean()) ** 2))
        profile[float(r)] = float(deviation / r ** alpha)
    return profile


def campanato_seminorm(u: FieldOnGrid, alpha: float, center: Sequence[float],
                       radii: Sequence[float]) -> float:
    """Largest value of the Campanato profile over the given radii."""
    return max(campanato_profile(u, alpha, center, radii).values())
