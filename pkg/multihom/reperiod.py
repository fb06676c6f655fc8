"""
Reperiodization of variable-separated coefficients.

For lambda_i = eps_1/eps_i >= 1 set

    M = diag(lambda),  floor(M) = diag(floor(lambda)),  Phi = M floor(M)^-1

so that 1 <= Phi_ii < 2. With v(x) = u(Phi^-1 x) a laminate problem
-div(A(x, x_1/eps_1, ..., x_d/eps_d) grad u) = f turns into a problem
with the one-scale, 1-periodic coefficient

    A#(x, y) = Phi A(Phi^-1 x, floor(M) y) Phi,   y = x/eps_1

on Phi(Omega).
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .coeff import CoefficientSpec, FourierTerm
from .errors import DimensionError, PreconditionError, StructureError
from .pde import DirichletProblem, Domain, FieldOnGrid

logger = logging.getLogger(__name__)

# lambda_i within this of an integer snaps to it
SNAP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ReperiodizationMap:
    """The diagonals of M_lambda, floor(M_lambda) and Phi_lambda."""
    lam: np.ndarray
    floor: np.ndarray
    phi: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return np.diag(self.lam)

    @property
    def floor_M(self) -> np.ndarray:
        return np.diag(self.floor.astype(float))

    @property
    def Phi(self) -> np.ndarray:
        return np.diag(self.phi)

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.floor == 1) and np.all(self.phi == 1.0))

    def as_dict(self):
        return {"lambda": self.lam.tolist(), "floor": self.floor.tolist(), "phi": self.phi.tolist()}


def snap_lambda(lam: Sequence[float]) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    nearest = np.round(lam)
    return np.where(np.abs(lam - nearest) <= SNAP_TOL, nearest, lam)


def build_maps(lam: Sequence[float]) -> ReperiodizationMap:
    """
    Build (M, floor(M), Phi) for lambda_i >= 1.

    Raises:
        PreconditionError: some lambda_i < 1 (normalize so eps_1 is the largest scale)
    """
    lam = snap_lambda(lam)
    if lam.ndim != 1 or lam.size == 0:
        raise DimensionError("lambda must be a nonempty vector")
    bad = np.flatnonzero(~np.isfinite(lam) | (lam < 1.0))
    if bad.size:
        raise PreconditionError(f"lambda_{bad[0] + 1} = {lam[bad[0]]} is below 1")
    floor = np.floor(lam).astype(int)
    phi = lam / floor
    lam.setflags(write=False)
    return ReperiodizationMap(lam, floor, phi)


def _conjugate(matrix, phi: np.ndarray):
    S = np.asarray(matrix, dtype=float)
    return tuple(tuple(row) for row in phi[:, None] * S * phi[None, :])


def reperiodize(spec: CoefficientSpec, lam: Sequence[float]) -> CoefficientSpec:
    """
    Return A#(x, y) = Phi A(Phi^-1 x, floor(M) y) Phi as a variable-separated
    spec whose scales are all evaluated at y = x/eps_1.

    Wave vectors of scale i are multiplied by floor(lambda_i) and stay
    integer; the ellipticity constant becomes Lambda / max(Phi)^2 >= Lambda/4.
    """
    if not spec.variable_separated:
        raise StructureError(f"{spec.name}: reperiodization needs a variable-separated coefficient")
    maps = build_maps(lam)
    d = spec.dimension
    if maps.lam.size != d:
        raise DimensionError(f"lambda needs {d} entries, got {maps.lam.size}")
    if maps.is_identity:
        return spec

    phi = maps.phi
    terms = []
    for term in spec.terms:
        waves = tuple(tuple(int(maps.floor[i]) * v for v in k) for i, k in enumerate(term.wave_vectors))
        matrix = _conjugate(term.matrix, phi) if term.matrix is not None else None
        terms.append(FourierTerm(
            amplitude=term.amplitude, wave_vectors=waves, phase=term.phase, trig=term.trig,
            modulation=term.modulation.composed(1.0 / phi), matrix=matrix))

    top = float(phi.max())
    lambda_decl = spec.lambda_decl / top ** 2 if spec.lambda_decl is not None else None
    lipschitz = spec.lipschitz * top ** 2 / float(phi.min()) ** spec.holder_exponent
    result = replace(
        spec,
        terms=tuple(terms),
        weights=tuple(np.asarray(spec.weights) * phi ** 2),
        lambda_decl=lambda_decl,
        lipschitz=lipschitz,
        slow_extent=tuple(np.asarray(spec.slow_extent) * phi),
        name=f"{spec.name}#")
    logger.info("reperiodized %s with floor %s and phi %s", spec.name, maps.floor.tolist(), phi.tolist())
    return result


def change_of_variables(u: FieldOnGrid, Phi, target: Optional[Domain] = None) -> FieldOnGrid:
    """
    v(x) = u(Phi^-1 x) on Phi(Omega).

    Without a target grid, v lives on the image of u's grid and its nodal
    values are copied. With a target grid, u is interpolated multilinearly at
    Phi^-1 x for every target node.

    Raises:
        PreconditionError: Phi not diagonal with entries in [1, 2]
        DomainError: a target node maps outside u's domain
    """
    Phi = np.asarray(Phi, dtype=float)
    phi = np.diag(Phi) if Phi.ndim == 2 else Phi
    if Phi.ndim == 2 and not np.array_equal(Phi, np.diag(phi)):
        raise PreconditionError("Phi must be diagonal")
    if phi.size != u.domain.dimension:
        raise DimensionError(f"Phi needs {u.domain.dimension} entries")
    if np.any(phi < 1.0) or np.any(phi > 2.0):
        raise PreconditionError(f"Phi entries must lie in [1, 2], got {phi.tolist()}")

    meta = {**u.meta, "phi": phi.tolist()}
    if target is None:
        return FieldOnGrid(u.values.copy(), u.domain.scaled(phi), u.iterations, u.residual, meta)
    pulled = target.points() / phi
    return FieldOnGrid(u.at(pulled), target, u.iterations, u.residual, meta)


def pull_back_problem(problem: DirichletProblem, maps: ReperiodizationMap) -> DirichletProblem:
    """
    Problem solved by v(x) = u(Phi^-1 x) on Phi(Omega): coefficient
    Phi A(Phi^-1 x) Phi, source f(Phi^-1 x), boundary datum g(Phi^-1 x).
    """
    phi = maps.phi
    coefficient = problem.coefficient

    def sampler(points: np.ndarray) -> np.ndarray:
        A = coefficient(np.asarray(points) / phi)
        return phi[:, None] * A * phi[None, :]

    def compose(data):
        if callable(data):
            return lambda points: data(np.asarray(points) / phi)
        return data

    scales = problem.scales
    if len(scales) == phi.size:
        scales = tuple(float(s * p) for s, p in zip(scales, phi))
    elif scales:
        scales = tuple(float(s * phi.min()) for s in scales)
    return DirichletProblem(sampler, compose(problem.source), compose(problem.boundary),
                            scales, name=f"{problem.name}#")
