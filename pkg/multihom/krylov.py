"""
Preconditioned conjugate gradients with a residual history.

Operators and preconditioners are plain callables on arrays of any shape,
so the same loop serves the spectral cell solvers (fields on a torus grid)
and the finite-difference Dirichlet solver (vectors of interior unknowns).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import ConvergenceError

logger = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass
class KrylovResult:
    """Solution with the relative residual after every iteration."""
    x: np.ndarray
    iterations: int
    residuals: List[float] = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b).real)


def pcg(apply: Operator, rhs: np.ndarray, precondition: Optional[Operator] = None,
        x0: Optional[np.ndarray] = None, tol: float = 1e-10, maxiter: int = 1000,
        project: Optional[Operator] = None, label: str = "pcg") -> KrylovResult:
    """
    Solve apply(x) = rhs for a symmetric positive (semi)definite operator.

    Args:
        apply: the operator
        rhs: right-hand side
        precondition: approximate inverse, symmetric positive definite
        x0: initial guess (zero by default)
        tol: target relative residual |r| / |rhs|
        maxiter: iteration cap
        project: projection onto the solution space (e.g. zero mean),
            applied to the right-hand side, the iterates and the search
            directions of singular periodic problems
        label: name used in log lines and errors

    Raises:
        ConvergenceError: tol not reached within maxiter
    """
    project = project or (lambda v: v)
    precondition = precondition or (lambda v: v)
    rhs = project(rhs)
    norm_rhs = np.sqrt(_dot(rhs, rhs))
    x = np.zeros_like(rhs) if x0 is None else project(np.array(x0, dtype=rhs.dtype))
    if norm_rhs == 0.0:
        return KrylovResult(np.zeros_like(rhs), 0, [0.0])

    r = rhs - apply(x)
    z = project(precondition(r))
    p = z.copy()
    rz = _dot(r, z)
    residuals: List[float] = [np.sqrt(_dot(r, r)) / norm_rhs]

    iteration = 0
    while residuals[-1] > tol and iteration < maxiter:
        iteration += 1
        q = apply(p)
        curvature = _dot(p, q)
        if curvature <= 0.0:
            raise ConvergenceError(f"{label}: operator is not positive definite", residuals)
        alpha = rz / curvature
        x = x + alpha * p
        r = r - alpha * q
        residuals.append(np.sqrt(_dot(r, r)) / norm_rhs)
        logger.debug("%s iteration %d: residual %.3e", label, iteration, residuals[-1])
        z = project(precondition(r))
        rz_next = _dot(r, z)
        p = z + (rz_next / rz) * p
        rz = rz_next

    if residuals[-1] > tol:
        raise ConvergenceError(f"{label}: residual {residuals[-1]:.3e} above tol {tol:.1e}", residuals)
    logger.debug("%s converged in %d iterations (residual %.3e)", label, iteration, residuals[-1])
    return KrylovResult(project(x), iteration, residuals)
