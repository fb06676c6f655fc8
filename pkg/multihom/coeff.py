"""
Multiscale coefficient fields A(x, y_1, ..., y_n).

This module provides CoefficientSpec, an immutable description of a
symmetric matrix field built from finite Fourier sums with integer wave
vectors:

    a(x, y_1..y_n) = c_0 + sum_j amp_j * mod_j(x) * trig(2 pi sum_i k_ji . y_i + phi_j)
    A = a * diag(w_1..w_d) + sum_t amp_t * mod_t(x) * trig(...) * S_t

where S_t are optional symmetric matrices. Because wave vectors are
integers, periodicity in every fast variable is exact; ellipticity is
guaranteed constructively (closed-form bounds) and validated by sampling.

Fast variables live in R^d by default. Cut-and-project coefficients use
fast variables on higher-dimensional tori (fast_dims), see quasicell.py.

Variable-separated (laminate) coefficients have one fast variable per
coordinate: the wave vector of scale i is supported on coordinate i only,
so A_eps(x) = A(x, x_1/eps_1, ..., x_d/eps_d).
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, NotEllipticError, StructureError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SlowModulation:
    """
    Slow factor mod(x) multiplying a Fourier term.

    Kinds:
        constant: 1
        affine:   c + w . x              params = (c, w_1, ..., w_d)
        cosine:   1 + a cos(2 pi k . x)  params = (a, k_1, ..., k_d)

    The slow wave vector k of `cosine` is real; it does not need to be an
    integer because x is not a periodic variable.
    """
    kind: str = "constant"
    params: Tuple[float, ...] = ()

    KINDS = ("constant", "affine", "cosine")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise StructureError(f"unknown modulation kind {self.kind!r}")
        if self.kind == "constant" and self.params:
            raise StructureError("constant modulation takes no parameters")
        if self.kind != "constant" and len(self.params) < 2:
            raise StructureError(f"{self.kind} modulation needs (scalar, vector) parameters")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def dimension(self) -> Optional[int]:
        return None if self.kind == "constant" else len(self.params) - 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.ones(x.shape[:-1])
        head, vec = self.params[0], np.asarray(self.params[1:])
        if self.kind == "affine":
            return head + x @ vec
        return 1.0 + head * np.cos(TWO_PI * (x @ vec))

    def bound(self, extent: Sequence[float]) -> float:
        """Max |mod(x)| over the box [0, extent]."""
        if self.kind == "constant":
            return 1.0
        head, vec = self.params[0], np.asarray(self.params[1:])
        if self.kind == "affine":
            reach = vec * np.asarray(extent, dtype=float)
            hi = head + np.clip(reach, 0.0, None).sum()
            lo = head + np.clip(reach, None, 0.0).sum()
            return float(max(abs(hi), abs(lo)))
        return 1.0 + abs(head)

    def lipschitz(self) -> float:
        if self.kind == "constant":
            return 0.0
        head, vec = self.params[0], np.asarray(self.params[1:])
        if self.kind == "affine":
            return float(np.linalg.norm(vec))
        return float(abs(head) * TWO_PI * np.linalg.norm(vec))

    def composed(self, scale: np.ndarray) -> "SlowModulation":
        """Return x -> mod(scale * x) for a diagonal scaling (as a vector)."""
        if self.kind == "constant":
            return self
        head, vec = self.params[0], np.asarray(self.params[1:])
        return SlowModulation(self.kind, (head, *(vec * scale)))


@dataclass(frozen=True)
class FourierTerm:
    """
    One term amp * mod(x) * trig(2 pi sum_i k_i . y_i + phase) [* S].

    Attributes:
        amplitude: real amplitude
        wave_vectors: one integer vector per fast variable
        phase: real phase
        trig: "sin" or "cos"
        modulation: slow factor in x
        matrix: optional symmetric d x d direction; scalar term when None
    """
    amplitude: float
    wave_vectors: Tuple[Tuple[int, ...], ...]
    phase: float = 0.0
    trig: str = "sin"
    modulation: SlowModulation = field(default_factory=SlowModulation)
    matrix: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        if self.trig not in ("sin", "cos"):
            raise StructureError(f"trig must be 'sin' or 'cos', got {self.trig!r}")
        vectors = []
        for i, k in enumerate(self.wave_vectors):
            k_arr = np.asarray(k, dtype=float)
            if not np.all(k_arr == np.round(k_arr)):
                raise DimensionError("wave vectors must be integer", index=i)
            vectors.append(tuple(int(v) for v in k_arr.ravel()))
        object.__setattr__(self, "wave_vectors", tuple(vectors))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "phase", float(self.phase))
        if self.matrix is not None:
            mat = np.asarray(self.matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise DimensionError("term matrix must be square")
            if not np.array_equal(mat, mat.T):
                raise StructureError("term matrix must be symmetric")
            object.__setattr__(self, "matrix", tuple(tuple(row) for row in mat))

    def matrix_norm(self) -> float:
        if self.matrix is None:
            return 0.0
        return float(np.linalg.norm(np.asarray(self.matrix), 2))


class EllipticityEstimate(NamedTuple):
    """Sampled extreme eigenvalues of A."""
    lambda_min: float
    lambda_max: float


@dataclass(frozen=True)
class CoefficientSpec:
    """
    Immutable multiscale coefficient A(x, y_1, ..., y_n).

    Attributes:
        dimension: spatial dimension d
        num_scales: number of fast variables n
        constant: c_0 of the scalar part
        terms: Fourier terms (scalar or matrix-valued)
        weights: anisotropy diag(w) multiplying the scalar part (default ones)
        variable_separated: laminate structure, scale i acts on coordinate i
        lambda_decl: declared ellipticity constant in (0, 1]
        lipschitz: declared Hoelder constant L in x
        holder_exponent: declared Hoelder exponent gamma in (0, 1]
        fast_dims: torus dimension of each fast variable (default d each)
        slow_extent: upper corner of the slow box [0, extent] used for bounds
        name: label used in reports
    """
    dimension: int
    num_scales: int
    constant: float = 1.0
    terms: Tuple[FourierTerm, ...] = ()
    weights: Optional[Tuple[float, ...]] = None
    variable_separated: bool = False
    lambda_decl: Optional[float] = None
    lipschitz: Optional[float] = None
    holder_exponent: float = 1.0
    fast_dims: Optional[Tuple[int, ...]] = None
    slow_extent: Optional[Tuple[float, ...]] = None
    name: str = "custom"

    def __post_init__(self):
        d, n = self.dimension, self.num_scales
        if d < 1:
            raise DimensionError("dimension must be >= 1")
        if n < 0:
            raise DimensionError("num_scales must be >= 0")
        fast_dims = tuple(self.fast_dims) if self.fast_dims is not None else (d,) * n
        if len(fast_dims) != n:
            raise DimensionError("fast_dims must list one torus dimension per scale")
        object.__setattr__(self, "fast_dims", fast_dims)
        weights = tuple(float(w) for w in self.weights) if self.weights is not None else (1.0,) * d
        if len(weights) != d:
            raise DimensionError("weights must have one entry per coordinate")
        object.__setattr__(self, "weights", weights)
        extent = tuple(float(e) for e in self.slow_extent) if self.slow_extent is not None else (1.0,) * d
        object.__setattr__(self, "slow_extent", extent)
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "constant", float(self.constant))

        for t, term in enumerate(self.terms):
            if len(term.wave_vectors) != n:
                raise DimensionError(f"term {t} needs {n} wave vectors", index=t)
            for i, k in enumerate(term.wave_vectors):
                if len(k) != fast_dims[i]:
                    raise DimensionError(
                        f"term {t}: wave vector {i} must have length {fast_dims[i]}", index=i)
            if term.matrix is not None and len(term.matrix) != d:
                raise DimensionError(f"term {t}: matrix must be {d}x{d}", index=t)
            dim = term.modulation.dimension()
            if dim is not None and dim != d:
                raise DimensionError(f"term {t}: modulation needs {d} coordinates", index=t)

        if self.variable_separated:
            if n != d or fast_dims != (d,) * d:
                raise StructureError("variable-separated specs need one fast variable per coordinate")
            for t, term in enumerate(self.terms):
                for i, k in enumerate(term.wave_vectors):
                    if any(v != 0 for j, v in enumerate(k) if j != i):
                        raise StructureError(
                            f"term {t}: scale {i} may only act on coordinate {i}")

        if not 0.0 < self.holder_exponent <= 1.0:
            raise StructureError("holder_exponent must lie in (0, 1]")
        lower, upper = constructive_bounds(self)
        if self.lambda_decl is None and lower > 0.0:
            object.__setattr__(self, "lambda_decl", float(min(lower, 1.0 / upper, 1.0)))
        if self.lambda_decl is not None and not 0.0 < self.lambda_decl <= 1.0:
            raise StructureError("lambda_decl must lie in (0, 1]")
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", _lipschitz_bound(self))

    @property
    def smoothness_decl(self) -> Tuple[float, float]:
        return float(self.lipschitz), float(self.holder_exponent)

    @property
    def is_scalar(self) -> bool:
        """True when A = a(x, y) * diag(weights) (no matrix terms)."""
        return all(term.matrix is None for term in self.terms)

    @property
    def is_periodic_view(self) -> bool:
        """True when every fast variable lives in R^d (no cut-and-project)."""
        return all(m == self.dimension for m in self.fast_dims)

    @property
    def is_slow_constant(self) -> bool:
        """True when A does not depend on x."""
        return all(term.modulation.kind == "constant" for term in self.terms)

    def active_scales(self) -> Tuple[int, ...]:
        """Indices of the fast variables some term actually oscillates in."""
        return tuple(i for i in range(self.num_scales)
                     if any(any(term.wave_vectors[i]) for term in self.terms))

    @cached_property
    def _arrays(self) -> Dict[str, np.ndarray]:
        """Packed term data for vectorized evaluation."""
        T = len(self.terms)
        waves = [np.array([term.wave_vectors[i] for term in self.terms], dtype=float).reshape(T, m)
                 for i, m in enumerate(self.fast_dims)]
        return {
            "waves": waves,
            "amp": np.array([term.amplitude for term in self.terms]),
            "phase": np.array([term.phase for term in self.terms]),
            "is_sin": np.array([term.trig == "sin" for term in self.terms], dtype=bool),
            "is_matrix": np.array([term.matrix is not None for term in self.terms], dtype=bool),
        }

    def evaluate(self, x, ys: Sequence) -> np.ndarray:
        """
        Evaluate A at (x, y_1, ..., y_n); arrays broadcast over leading axes.

        Args:
            x: slow point(s), shape (..., d)
            ys: n fast points, shape (..., m_i) each

        Returns:
            Symmetric matrices of shape (..., d, d)
        """
        d = self.dimension
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (d,):
            raise DimensionError(f"slow point must have {d} coordinates")
        if len(ys) != self.num_scales:
            raise DimensionError(
                f"expected {self.num_scales} fast points, got {len(ys)}", index=len(ys))
        ys = [np.asarray(y, dtype=float) for y in ys]
        for i, y in enumerate(ys):
            if y.shape[-1:] != (self.fast_dims[i],):
                raise DimensionError(
                    f"fast point {i} must have {self.fast_dims[i]} coordinates", index=i)
            if not np.all(np.isfinite(y)):
                raise DimensionError("fast point is not finite", index=i)
        if not np.all(np.isfinite(x)):
            raise DimensionError("slow point is not finite")

        lead = np.broadcast_shapes(x.shape[:-1], *(y.shape[:-1] for y in ys))
        scalar = np.full(lead, self.constant)
        W = np.diag(self.weights)
        if not self.terms:
            return scalar[..., None, None] * W

        arr = self._arrays
        cycles = np.zeros(lead + (len(self.terms),))
        for y, K in zip(ys, arr["waves"]):
            cycles = cycles + y @ K.T
        # mod 1: integer shifts of y give the same angles
        cycles = np.mod(cycles, 1.0)
        theta = TWO_PI * cycles + arr["phase"]
        wave = np.where(arr["is_sin"], np.sin(theta), np.cos(theta))
        mods = np.stack([np.broadcast_to(term.modulation(x), lead) for term in self.terms], axis=-1)
        coef = arr["amp"] * mods * wave

        scalar = scalar + np.where(arr["is_matrix"], 0.0, coef).sum(axis=-1)
        A = scalar[..., None, None] * W
        for t, term in enumerate(self.terms):
            if term.matrix is not None:
                A = A + coef[..., t, None, None] * np.asarray(term.matrix)
        return A

    def cell_field(self, x, y) -> np.ndarray:
        """One-scale cell view A(x, y, ..., y) for y on the unit torus T^d."""
        if not self.is_periodic_view:
            raise StructureError("cell view needs fast variables in R^d; use quasicell for cut-and-project")
        y = np.asarray(y, dtype=float)
        return self.evaluate(x, [y] * self.num_scales)

    def cell_bandwidth(self) -> np.ndarray:
        """Largest |K_i| per coordinate of the combined cell wave vectors."""
        if not self.terms:
            return np.zeros(self.dimension, dtype=int)
        combined = sum(self._arrays["waves"]) if self.num_scales else np.zeros((len(self.terms), self.dimension))
        return np.abs(combined).max(axis=0).astype(int)


def evaluate(spec: CoefficientSpec, x, ys: Sequence) -> np.ndarray:
    """Evaluate spec at a single point and return a d x d matrix."""
    A = spec.evaluate(x, ys)
    if A.ndim != 2:
        raise DimensionError("evaluate expects a single point; use spec.evaluate for batches")
    return A


def constructive_bounds(spec: CoefficientSpec) -> Tuple[float, float]:
    """
    Closed-form (lower, upper) bounds on the eigenvalues of A.

    The scalar part lies in c_0 -/+ sum |amp| * max|mod|; matrix terms
    subtract/add |amp| * max|mod| * ||S||_2.
    """
    s_lo = s_hi = spec.constant
    spread = 0.0
    for term in spec.terms:
        size = abs(term.amplitude) * term.modulation.bound(spec.slow_extent)
        if term.matrix is None:
            s_lo -= size
            s_hi += size
        else:
            spread += size * term.matrix_norm()
    w_min, w_max = min(spec.weights), max(spec.weights)
    lower = (s_lo * w_min if s_lo >= 0 else s_lo * w_max) - spread
    upper = (s_hi * w_max if s_hi >= 0 else s_hi * w_min) + spread
    return float(lower), float(upper)


def _lipschitz_bound(spec: CoefficientSpec) -> float:
    w_max = max(abs(w) for w in spec.weights)
    total = 0.0
    for term in spec.terms:
        direction = term.matrix_norm() if term.matrix is not None else w_max
        total += abs(term.amplitude) * term.modulation.lipschitz() * direction
    return float(total)


def estimate_ellipticity(spec: CoefficientSpec, n_samples: int = 4096,
                         seed: int = 0) -> EllipticityEstimate:
    """
    Sample A at random points and return its extreme eigenvalues.

    Raises:
        NotEllipticError: the minimum sampled eigenvalue is <= 0, or the
            samples leave [lambda_decl, 1/lambda_decl].
    """
    if n_samples < 1:
        raise DimensionError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n_samples, spec.dimension)) * np.asarray(spec.slow_extent)
    ys = [rng.uniform(0.0, 1.0, size=(n_samples, m)) for m in spec.fast_dims]
    eig = np.linalg.eigvalsh(spec.evaluate(x, ys))
    lo, hi = float(eig.min()), float(eig.max())
    logger.debug("ellipticity of %s over %d samples: [%.6g, %.6g]", spec.name, n_samples, lo, hi)
    if lo <= 0.0:
        raise NotEllipticError(f"{spec.name}: not elliptic (min eigenvalue {lo:.6g})", lo, hi)
    lam = spec.lambda_decl
    if lam is not None and (lo < lam * (1 - 1e-12) or hi > (1 + 1e-12) / lam):
        raise NotEllipticError(
            f"{spec.name}: sampled eigenvalues [{lo:.6g}, {hi:.6g}] violate "
            f"declared lambda {lam:.6g}", lo, hi)
    return EllipticityEstimate(lo, hi)


def check_smoothness(spec: CoefficientSpec, n_pairs: int = 256, seed: int = 0) -> float:
    """
    Largest observed |A(x,.) - A(x',.)| / |x - x'|^gamma over random pairs.

    The value is bounded by the declared Lipschitz constant for specs built
    from the supported modulations.
    """
    rng = np.random.default_rng(seed)
    extent = np.asarray(spec.slow_extent)
    x1 = rng.uniform(0.0, 1.0, size=(n_pairs, spec.dimension)) * extent
    x2 = rng.uniform(0.0, 1.0, size=(n_pairs, spec.dimension)) * extent
    ys = [rng.uniform(0.0, 1.0, size=(n_pairs, m)) for m in spec.fast_dims]
    diff = np.linalg.norm(spec.evaluate(x1, ys) - spec.evaluate(x2, ys), ord=2, axis=(-2, -1))
    dist = np.linalg.norm(x1 - x2, axis=-1) ** spec.holder_exponent
    ratio = np.divide(diff, dist, out=np.zeros_like(diff), where=dist > 0)
    return float(ratio.max())


def multiscale_sampler(spec: CoefficientSpec, eps: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """
    Fine-scale coefficient x -> A(x, x/eps_1, ..., x/eps_n).

    For variable-separated specs eps is the per-coordinate scale tuple;
    only coordinate i of x/eps_i enters scale i.
    """
    eps = tuple(float(e) for e in eps)
    if len(eps) != spec.num_scales:
        raise DimensionError(f"expected {spec.num_scales} scales, got {len(eps)}", index=len(eps))
    if not spec.is_periodic_view:
        raise StructureError("use quasicell.quasi_sampler for cut-and-project coefficients")
    if any(e <= 0 for e in eps):
        raise DimensionError("scales must be positive")

    def sampler(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return spec.evaluate(points, [points / e for e in eps])

    sampler.scales = eps
    return sampler


def _unit(d: int, i: int, k: int = 1) -> Tuple[int, ...]:
    return tuple(k if j == i else 0 for j in range(d))


def _zero(d: int) -> Tuple[int, ...]:
    return (0,) * d


def family(name: str, dimension: int = 2) -> CoefficientSpec:
    """
    Built-in coefficient families.

    identity      A = I
    laminate      a = 2 + sin(2 pi y_1), variable separated
    laminate2     a = 2 + 0.5 sin(2 pi y_1) + 0.5 sin(2 pi y_2), variable separated
    modulated     a = (2 + sin(2 pi y_1)) with (1 + 0.25 x_1) on the oscillation
    checkerboard  a = 2 + sin(2 pi y_1) sin(2 pi y_2), one scale
    coupled       a = 2 + 0.5 sin(2 pi y_1 . e_1) sin(2 pi y_2 . (e_1 + e_2)), two scales
    anisotropic   A = diag(2, 3)
    golden_quasi  b = 2 + 0.5 sin(2 pi w_1) + 0.5 sin(2 pi w_2), d = 1, w in T^2
    """
    d = dimension
    if name == "identity":
        return CoefficientSpec(dimension=d, num_scales=1, name=name)
    if name == "laminate":
        waves = (_unit(d, 0),) + tuple(_zero(d) for _ in range(d - 1))
        return CoefficientSpec(dimension=d, num_scales=d, constant=2.0,
                               terms=(FourierTerm(1.0, waves),),
                               variable_separated=True, name=name)
    if name == "laminate2":
        if d != 2:
            raise DimensionError("laminate2 is two-dimensional")
        return CoefficientSpec(
            dimension=2, num_scales=2, constant=2.0,
            terms=(FourierTerm(0.5, ((1, 0), (0, 0))), FourierTerm(0.5, ((0, 0), (0, 1)))),
            variable_separated=True, name=name)
    if name == "modulated":
        waves = (_unit(d, 0),) + tuple(_zero(d) for _ in range(d - 1))
        slow = SlowModulation("affine", (1.0, 0.25) + (0.0,) * (d - 1))
        return CoefficientSpec(dimension=d, num_scales=d, constant=2.0,
                               terms=(FourierTerm(0.8, waves, modulation=slow),),
                               variable_separated=True, name=name)
    if name == "checkerboard":
        if d != 2:
            raise DimensionError("checkerboard is two-dimensional")
        return CoefficientSpec(
            dimension=2, num_scales=1, constant=2.0,
            terms=(FourierTerm(0.5, ((1, -1),), trig="cos"),
                   FourierTerm(-0.5, ((1, 1),), trig="cos")),
            name=name)
    if name == "coupled":
        if d != 2:
            raise DimensionError("coupled is two-dimensional")
        # 0.5 sin(a) sin(b) = 0.25 cos(a - b) - 0.25 cos(a + b)
        return CoefficientSpec(
            dimension=2, num_scales=2, constant=2.0,
            terms=(FourierTerm(0.25, ((1, 0), (-1, -1)), trig="cos"),
                   FourierTerm(-0.25, ((1, 0), (1, 1)), trig="cos")),
            name=name)
    if name == "anisotropic":
        if d != 2:
            raise DimensionError("anisotropic is two-dimensional")
        return CoefficientSpec(dimension=2, num_scales=1, weights=(2.0, 3.0), name=name)
    if name == "golden_quasi":
        return CoefficientSpec(
            dimension=1, num_scales=1, constant=2.0, fast_dims=(2,),
            terms=(FourierTerm(0.5, ((1, 0),)), FourierTerm(0.5, ((0, 1),))),
            name=name)
    raise KeyError(name)


FAMILIES = ("identity", "laminate", "laminate2", "modulated", "checkerboard",
            "coupled", "anisotropic", "golden_quasi")


def with_name(spec: CoefficientSpec, name: str) -> CoefficientSpec:
    return replace(spec, name=name)
