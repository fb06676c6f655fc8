"""
Small fitting helpers shared by the solvers and the experiments:
log-log slopes, Richardson extrapolation to h -> 0 and rank correlation.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import stats

from .errors import PreconditionError
from .kinds import SlopeFit


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    """
    Least-squares fit of log y = slope * log x + intercept.

    Raises:
        PreconditionError: fewer than two points, or a non-positive entry
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise PreconditionError(f"need at least two matching points, got {x.size} and {y.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise PreconditionError("log-log fit needs positive data")
    fit = stats.linregress(np.log(x), np.log(y))
    stderr = float(fit.stderr) if x.size > 2 else 0.0
    return SlopeFit(float(fit.slope), float(fit.intercept), stderr, int(x.size))


@dataclass
class RichardsonResult:
    """Extrapolated value with the last correction as error estimate."""
    value: np.ndarray
    error: float
    table: List[List[np.ndarray]]


def richardson(values: Sequence, h: Sequence[float]) -> RichardsonResult:
    """
    Extrapolate values[i] ~ F(h[i]) to h = 0, assuming F is smooth in h.

    Neville's scheme on the polynomial interpolant in h; works for scalars
    and arrays alike. Entry table[i][j] uses values[i-j..i].
    """
    h = np.asarray(h, dtype=float)
    vals = [np.asarray(v, dtype=float) for v in values]
    if len(vals) != h.size or h.size == 0:
        raise PreconditionError("richardson needs one step size per value")
    if np.any(h <= 0) or np.unique(h).size != h.size:
        raise PreconditionError("step sizes must be positive and distinct")

    table: List[List[np.ndarray]] = []
    for i, v in enumerate(vals):
        row = [v]
        for j in range(1, i + 1):
            far, near = h[i - j], h[i]
            row.append((far * row[j - 1] - near * table[i - 1][j - 1]) / (far - near))
        table.append(row)

    best = table[-1][-1]
    if len(vals) == 1:
        error = float("inf")
    else:
        error = float(np.max(np.abs(best - table[-1][-2])))
    return RichardsonResult(best, error, table)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation; 0 when either side is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    rho = stats.spearmanr(x, y).statistic
    return float(rho)
