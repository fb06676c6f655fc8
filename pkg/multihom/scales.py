"""
Scale sequences: classification and rearrangement.

A scale sequence is a table of tuples (eps_1, ..., eps_n) indexed by k.
This module provides:
- ScaleSequence: the table, built from rows, a CSV file or sympy formulas
- classify: limit class of every scale and of consecutive ratios, and the
  separated / well-separated flags
- reduce_two_scale: the rewriting x/eps_2 = tau x/eps_1 + L x/eps_1 for n = 2
- rearrange: repeated block rewriting until the remaining vanishing scales
  are pairwise separated, followed by bundling of the fast variables

Limits are estimated from the tail of the table:
1. A tail whose relative spread is below `tol` converges; its limit is
   extrapolated from the geometric decay of its increments when they decay,
   otherwise the tail mean is used
2. A monotone tail whose increments contract geometrically converges if the
   extrapolated remainder is below `tol` times the limit
3. Any other monotone tail vanishes (decreasing) or diverges (increasing)
4. Everything else is inconclusive; we never pick subsequences
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from .errors import DimensionError, InsufficientDataError, PreconditionError, ScaleOrderError
from .kinds import ScaleLimit

logger = logging.getLogger(__name__)

# Remainders at or below this collapse a scale
COLLAPSE_TOL = 1e-12

# Rational detection
MAX_DENOMINATOR = 64
RATIONAL_TOL = 1e-9

DEFAULT_TAIL_WINDOW = 8
DEFAULT_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class ScaleSequence:
    """
    Table of scale tuples.

    Attributes:
        entries: array (K, n), row k holds (eps_1, ..., eps_n)
        k: index values of the rows (used for log-log slopes)
        label: free-form description, e.g. the source formulas
    """
    entries: np.ndarray
    k: np.ndarray
    label: str = ""

    def __post_init__(self):
        entries = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if entries.size == 0:
            raise DimensionError("scale sequence is empty")
        k = np.asarray(self.k, dtype=float)
        if k.shape != (entries.shape[0],):
            raise DimensionError("k grid must have one value per row")
        for row in range(entries.shape[0]):
            for i in range(entries.shape[1]):
                value = entries[row, i]
                if not np.isfinite(value) or value <= 0:
                    raise ScaleOrderError(row, i, "scales must be positive and finite")
                if i > 0 and value > entries[row, i - 1]:
                    raise ScaleOrderError(row, i, "scales must be non-increasing")
        entries.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "k", k)

    def __len__(self) -> int:
        return self.entries.shape[0]

    @property
    def num_scales(self) -> int:
        return self.entries.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.entries[:, i]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], k: Optional[Sequence[float]] = None,
                  label: str = "") -> "ScaleSequence":
        entries = np.atleast_2d(np.asarray(rows, dtype=float))
        grid = np.arange(1, entries.shape[0] + 1, dtype=float) if k is None else k
        return cls(entries, grid, label)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ScaleSequence":
        """One tuple per row, comma separated; lines starting with # are skipped."""
        rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls.from_rows(rows, label=str(path))

    @classmethod
    def from_family(cls, formulas: Sequence[str], k_grid: Optional[Sequence[float]] = None) -> "ScaleSequence":
        """
        Evaluate closed forms eps_i(k) on a k grid.

        Formulas are sympy expressions in `k`; `eps` stands for 1/k, `phi`
        for the golden ratio and `ln` for the natural logarithm, e.g.
        "eps**2", "eps/(ln(k) + 1)", "1/(2*k + sqrt(k))".
        """
        k_sym = sympy.Symbol("k", positive=True)
        names = {"k": k_sym, "eps": 1 / k_sym, "phi": (1 + sympy.sqrt(5)) / 2, "ln": sympy.log}
        grid = np.asarray(k_grid if k_grid is not None else 2.0 ** np.arange(1, 25), dtype=float)
        columns = []
        for i, text in enumerate(formulas):
            try:
                expr = sympy.sympify(text, locals=names)
            except (sympy.SympifyError, SyntaxError, TypeError) as exc:
                raise DimensionError(f"cannot parse scale formula {text!r}: {exc}", index=i) from exc
            extra = expr.free_symbols - {k_sym}
            if extra:
                raise DimensionError(f"scale formula {text!r} has unknown symbols {sorted(map(str, extra))}", index=i)
            func = sympy.lambdify(k_sym, expr, "numpy")
            columns.append(np.broadcast_to(np.asarray(func(grid), dtype=float), grid.shape))
        return cls(np.stack(columns, axis=1), grid, label="; ".join(formulas))


@dataclass(frozen=True)
class ScaleClassification:
    """
    Limit classes of a scale sequence.

    Attributes:
        limits: limit class of every eps_i
        limit_values: estimated lim eps_i (0 for vanishing, inf for infinite)
        ratio_classes: limit class of eps_{i+1}/eps_i
        ratio_limits: estimated gamma_i = lim eps_{i+1}/eps_i (nan when inconclusive)
        separated: eps_1 -> 0 and every ratio vanishes
        well_separated: some N makes (1/eps_i)(eps_{i+1}/eps_i)^N vanish for all i
        exponents: per ratio, the smallest N that works at the end of the tail
    """
    limits: Tuple[ScaleLimit, ...]
    limit_values: Tuple[float, ...]
    ratio_classes: Tuple[ScaleLimit, ...]
    ratio_limits: Tuple[float, ...]
    separated: bool
    well_separated: bool
    exponents: Tuple[Optional[int], ...]
    tail_window: int
    tol: float

    def as_dict(self) -> Dict[str, Any]:
        return {
            "limits": [c.name.lower() for c in self.limits],
            "limit_values": list(self.limit_values),
            "ratio_classes": [c.name.lower() for c in self.ratio_classes],
            "ratio_limits": list(self.ratio_limits),
            "separated": self.separated,
            "well_separated": self.well_separated,
            "exponents": list(self.exponents),
            "tail_window": self.tail_window,
            "tol": self.tol,
        }


def rational_limit(value: float, max_denominator: int = MAX_DENOMINATOR,
                   tol: float = RATIONAL_TOL) -> Optional[Fraction]:
    """Return p/q with q <= max_denominator within tol of value, or None."""
    if not np.isfinite(value):
        return None
    candidate = Fraction(float(value)).limit_denominator(max_denominator)
    if abs(float(candidate) - value) <= tol:
        return candidate
    return None


def _extrapolate(tail: np.ndarray) -> Tuple[float, float]:
    """
    Geometric-series extrapolation of a tail.

    Returns (limit, remainder). When the increments do not contract with a
    fixed sign the tail mean is returned with an infinite remainder.
    """
    steps = np.diff(tail)
    if len(steps) >= 2 and np.all(steps != 0) and (np.all(steps > 0) or np.all(steps < 0)):
        q = steps[1:] / steps[:-1]
        if np.all((q > 0) & (q < 1)):
            q_max = float(q.max())
            remainder = float(steps[-1] * q_max / (1.0 - q_max))
            return float(tail[-1] + remainder), abs(remainder)
    return float(tail.mean()), float("inf")


def estimate_limit(values: np.ndarray, tail_window: int = DEFAULT_TAIL_WINDOW,
                   tol: float = DEFAULT_TOL) -> Tuple[ScaleLimit, float]:
    """Limit class and estimated limit of a positive sequence."""
    values = np.asarray(values, dtype=float)
    if tail_window < 2 or tail_window > len(values):
        raise PreconditionError(f"tail_window must lie in [2, {len(values)}], got {tail_window}")
    tail = values[-tail_window:]
    if not np.all(np.isfinite(tail)):
        return ScaleLimit.INCONCLUSIVE, float("nan")
    if np.all(tail == 0):
        return ScaleLimit.VANISHING, 0.0
    mean = float(tail.mean())
    limit, remainder = _extrapolate(tail)
    if mean > 0 and np.ptp(tail) <= tol * mean:
        return ScaleLimit.FINITE, (limit if remainder <= tol * mean else mean)
    if limit > 0 and remainder <= tol * limit:
        return ScaleLimit.FINITE, limit
    steps = np.diff(tail)
    if np.all(steps < 0):
        return ScaleLimit.VANISHING, 0.0
    if np.all(steps > 0):
        return ScaleLimit.INFINITE, float("inf")
    return ScaleLimit.INCONCLUSIVE, float("nan")


def _loglog_slopes(values: np.ndarray, k: np.ndarray, tail_window: int) -> np.ndarray:
    return np.diff(np.log(values[-tail_window:])) / np.diff(np.log(k[-tail_window:]))


def classify(seq: ScaleSequence, tail_window: int = DEFAULT_TAIL_WINDOW,
             tol: float = DEFAULT_TOL) -> ScaleClassification:
    """
    Classify every scale and every consecutive ratio of seq.

    Well-separation is decided on local log-log slopes: with eps_i ~ k^-a and
    eps_{i+1}/eps_i ~ k^-b (b > 0, slopes stable to tol) the witness is
    N = floor(a/b) + 1.
    """
    if tail_window > len(seq):
        raise PreconditionError(f"tail_window {tail_window} exceeds sequence length {len(seq)}")
    n = seq.num_scales
    limits, limit_values = [], []
    for i in range(n):
        cls, value = estimate_limit(seq.column(i), tail_window, tol)
        limits.append(cls)
        limit_values.append(value)

    ratio_classes, ratio_limits, exponents = [], [], []
    well = True
    for i in range(n - 1):
        ratio = seq.column(i + 1) / seq.column(i)
        cls, value = estimate_limit(ratio, tail_window, tol)
        ratio_classes.append(cls)
        ratio_limits.append(value)
        if cls is ScaleLimit.INCONCLUSIVE:
            logger.warning("ratio eps_%d/eps_%d is inconclusive on the last %d rows", i + 2, i + 1, tail_window)
        exponent = None
        if cls is ScaleLimit.VANISHING:
            ratio_slopes = _loglog_slopes(ratio, seq.k, tail_window)
            b = -float(ratio_slopes[-1])
            a = -float(_loglog_slopes(seq.column(i), seq.k, tail_window)[-1])
            stable = np.ptp(ratio_slopes) <= tol * abs(ratio_slopes.mean())
            if b > 0:
                exponent = 1 if a <= 0 else int(np.floor(a / b)) + 1
            well = well and stable and b > 0
        else:
            well = False
        exponents.append(exponent)

    separated = limits[0] is ScaleLimit.VANISHING and all(c is ScaleLimit.VANISHING for c in ratio_classes)
    well_separated = separated and well
    result = ScaleClassification(
        limits=tuple(limits), limit_values=tuple(limit_values),
        ratio_classes=tuple(ratio_classes), ratio_limits=tuple(ratio_limits),
        separated=separated, well_separated=well_separated,
        exponents=tuple(exponents), tail_window=tail_window, tol=tol)
    logger.info("classified %s: separated=%s well_separated=%s",
                seq.label or f"{n}-scale sequence", separated, well_separated)
    return result


@dataclass
class RewriteStep:
    """
    One block rewriting round.

    For every rewritten index i of the block anchored at a:
        x/eps_i = limits[i] * x/eps_a + tau[i] * x/eps_a
    """
    round: int
    anchor: int
    block: Tuple[int, ...]
    limits: Dict[int, float] = field(default_factory=dict)
    rational: Dict[int, Optional[str]] = field(default_factory=dict)
    tau: Dict[int, np.ndarray] = field(default_factory=dict)
    signs: Dict[int, int] = field(default_factory=dict)
    collapsed: Tuple[int, ...] = ()

    def as_dict(self) -> Dict[str, Any]:
        return {
            "round": self.round,
            "anchor": self.anchor,
            "block": list(self.block),
            "limits": {str(i): v for i, v in self.limits.items()},
            "rational": {str(i): v for i, v in self.rational.items()},
            "tau": {str(i): t.tolist() for i, t in self.tau.items()},
            "signs": {str(i): s for i, s in self.signs.items()},
            "collapsed": list(self.collapsed),
        }


@dataclass
class FastVariable:
    """
    A bundled fast variable x/eps entering the original variables as
    y_i = coefficients[i] * x/eps.

    kind is "periodic" when the coefficients are integers (rational column
    bundled into one variable with an enlarged period) and "quasi" otherwise;
    quasi columns are normalized so their largest coefficient is 1.
    """
    column: int
    kind: str
    coefficients: Tuple[float, ...]
    scales: np.ndarray

    def projection(self, dimension: int) -> np.ndarray:
        """Cut-and-project matrix (n*d x d) stacking c_i * I_d."""
        return np.vstack([c * np.eye(dimension) for c in self.coefficients])

    def as_dict(self) -> Dict[str, Any]:
        return {"column": self.column, "kind": self.kind,
                "coefficients": list(self.coefficients), "scales": self.scales.tolist()}


# Column states
VANISHING = "vanishing"
FIXED = "fixed"
COLLAPSED = "collapsed"


@dataclass
class RearrangementPlan:
    """
    Result of rewriting a scale sequence.

    The substitution matrix C records 1/eps_i = sum_j C[i, j] / eps~_j for
    every row, where eps~_j are the columns of `scales`. Column j starts as
    the input index j and ends in exactly one state: vanishing (a separated
    fast scale), fixed (limit delta in (0, inf]) or collapsed (merged into
    its anchor).
    """
    substitution: np.ndarray
    scales: np.ndarray
    status: List[str]
    deltas: Dict[int, float]
    steps: List[RewriteStep]
    variables: List[FastVariable]
    rewrite_needed: bool = True
    lambda_: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def num_scales(self) -> int:
        return self.substitution.shape[0]

    @property
    def rounds(self) -> int:
        return len(self.steps)

    @property
    def fixed_scales(self) -> Tuple[float, ...]:
        return tuple(self.deltas[j] for j in sorted(self.deltas))

    @property
    def m(self) -> int:
        return len(self.deltas)

    @property
    def vanishing(self) -> Tuple[int, ...]:
        return tuple(j for j, s in enumerate(self.status) if s == VANISHING)

    @property
    def collapsed(self) -> Tuple[int, ...]:
        return tuple(j for j, s in enumerate(self.status) if s == COLLAPSED)

    def coverage(self) -> Dict[str, List[int]]:
        groups: Dict[str, List[int]] = {COLLAPSED: [], FIXED: [], VANISHING: []}
        for j, s in enumerate(self.status):
            groups[s].append(j)
        return groups

    def as_dict(self) -> Dict[str, Any]:
        return {
            "rewrite_needed": self.rewrite_needed,
            "lambda": self.lambda_,
            "substitution": self.substitution.tolist(),
            "status": list(self.status),
            "fixed_scales": [d if np.isfinite(d) else "inf" for d in self.fixed_scales],
            "m": self.m,
            "coverage": self.coverage(),
            "rounds": [s.as_dict() for s in self.steps],
            "variables": [v.as_dict() for v in self.variables],
            "notes": list(self.notes),
        }


CONVENTION_NOTE = (
    "remainders use tau_i = eps_a/eps_i - L_i with L_i = lim eps_a/eps_i so that tau_i -> 0; "
    "subtracting 1/gamma_i with gamma_i = lim eps_a/eps_i does not vanish unless gamma_i = 1")


def _snap(value: float) -> Tuple[float, Optional[Fraction]]:
    frac = rational_limit(value)
    return (float(frac), frac) if frac is not None else (value, None)


def _rewrite(scales: np.ndarray, C: np.ndarray, anchor: int, i: int,
             step: RewriteStep, tail_window: int, tol: float) -> bool:
    """Rewrite column i against the anchor in place; True when it collapses."""
    ratio = scales[:, anchor] / scales[:, i]
    cls, value = estimate_limit(ratio, tail_window, tol)
    if cls is not ScaleLimit.FINITE:
        raise InsufficientDataError(f"eps~{anchor}/eps~{i}", f"limit is {cls.name.lower()}")
    limit, frac = _snap(value)
    tau = ratio - limit
    step.limits[i] = limit
    step.rational[i] = str(frac) if frac is not None else None
    step.tau[i] = tau
    C[:, anchor] += limit * C[:, i]
    if np.all(np.abs(tau) <= COLLAPSE_TOL):
        C[:, i] = 0.0
        scales[:, i] = np.nan
        return True
    signs = np.sign(tau)
    if not (np.all(signs > 0) or np.all(signs < 0)):
        raise InsufficientDataError(f"tau{i}", "remainder changes sign or vanishes at some rows")
    sign = int(signs[0])
    step.signs[i] = sign
    C[:, i] *= sign
    scales[:, i] = scales[:, anchor] / np.abs(tau)
    return False


def _bundle(C: np.ndarray, scales: np.ndarray, column: int) -> FastVariable:
    coeffs = C[:, column]
    top = float(np.abs(coeffs).max())
    normalized = coeffs / top
    fracs = [rational_limit(c) for c in normalized]
    if all(f is not None for f in fracs):
        period = lcm(*(f.denominator for f in fracs))
        integers = tuple(float(f * period) for f in fracs)
        factor = top / period
        return FastVariable(column, "periodic", integers, scales[:, column] / factor)
    return FastVariable(column, "quasi", tuple(normalized), scales[:, column] / top)


def _settle(scales: np.ndarray, status: List[str], deltas: Dict[int, float],
            tail_window: int, tol: float) -> None:
    """Move columns with a finite or infinite limit out of the pool."""
    for j, s in enumerate(status):
        if s != VANISHING:
            continue
        cls, value = estimate_limit(scales[:, j], tail_window, tol)
        if cls is ScaleLimit.INCONCLUSIVE:
            raise InsufficientDataError(f"eps~{j}", "limit does not settle on the tail")
        if cls in (ScaleLimit.FINITE, ScaleLimit.INFINITE):
            status[j] = FIXED
            deltas[j] = value
            logger.info("scale column %d is fixed with delta = %g", j, value)


def _finish(C: np.ndarray, scales: np.ndarray, status: List[str], deltas: Dict[int, float],
            steps: List[RewriteStep], **extra) -> RearrangementPlan:
    variables = [_bundle(C, scales, j) for j, s in enumerate(status) if s == VANISHING]
    plan = RearrangementPlan(C, scales, status, deltas, steps, variables, **extra)
    plan.notes.append(CONVENTION_NOTE)
    return plan


def reduce_two_scale(seq: ScaleSequence, tail_window: int = DEFAULT_TAIL_WINDOW,
                     tol: float = DEFAULT_TOL) -> RearrangementPlan:
    """
    Rewrite A(x/eps_1, x/eps_2) with lambda = lim eps_2/eps_1 > 0 as
    A'(x/eps_1, x/eps_2') with A'(y_1, y_2) = A(y_1, y_2 + y_1/lambda) and
    eps_2' = eps_1 / (eps_1/eps_2 - 1/lambda).

    Returns an identity plan with rewrite_needed = False when eps_2/eps_1
    vanishes (the scales are already separated).
    """
    if seq.num_scales != 2:
        raise DimensionError(f"reduce_two_scale needs n = 2, got {seq.num_scales}")
    C = np.eye(2)
    scales = np.array(seq.entries, dtype=float)
    status = [VANISHING, VANISHING]
    deltas: Dict[int, float] = {}
    gamma_cls, _ = estimate_limit(seq.column(1) / seq.column(0), tail_window, tol)
    if gamma_cls is ScaleLimit.VANISHING:
        logger.info("eps_2/eps_1 vanishes; no rewrite needed")
        _settle(scales, status, deltas, tail_window, tol)
        return _finish(C, scales, status, deltas, [], rewrite_needed=False, lambda_=0.0)
    if gamma_cls is not ScaleLimit.FINITE:
        raise InsufficientDataError("eps_2/eps_1", f"limit is {gamma_cls.name.lower()}")

    step = RewriteStep(round=1, anchor=0, block=(0, 1))
    collapsed = _rewrite(scales, C, 0, 1, step, tail_window, tol)
    lam = 1.0 / step.limits[1]
    if collapsed:
        status[1] = COLLAPSED
        step.collapsed = (1,)
    _settle(scales, status, deltas, tail_window, tol)
    logger.info("two-scale rewrite: lambda = %.12g, collapsed = %s", lam, collapsed)
    return _finish(C, scales, status, deltas, [step], lambda_=lam)


def rearrange(seq: ScaleSequence, classification: Optional[ScaleClassification] = None,
              tail_window: Optional[int] = None, tol: Optional[float] = None) -> RearrangementPlan:
    """
    Reduce a scale sequence to fixed scales plus separated vanishing scales.

    Each round takes the block of comparable scales containing the largest
    remaining vanishing scale, anchors it on that scale and rewrites the
    others (collapse, or a new scale eps_a/|tau_i|). The anchor is then
    separated from every remaining scale and leaves the pool, so at most
    n - 1 rounds run.
    """
    if classification is not None:
        tail_window = classification.tail_window if tail_window is None else tail_window
        tol = classification.tol if tol is None else tol
    tail_window = DEFAULT_TAIL_WINDOW if tail_window is None else tail_window
    tol = DEFAULT_TOL if tol is None else tol

    n = seq.num_scales
    C = np.eye(n)
    scales = np.array(seq.entries, dtype=float)
    status = [VANISHING] * n
    deltas: Dict[int, float] = {}
    steps: List[RewriteStep] = []
    finalized: List[int] = []

    while True:
        _settle(scales, status, deltas, tail_window, tol)
        pool = [j for j, s in enumerate(status) if s == VANISHING and j not in finalized]
        pool.sort(key=lambda j: -scales[-1, j])
        block: List[int] = []
        for a, b in zip(pool, pool[1:]):
            cls, _ = estimate_limit(scales[:, b] / scales[:, a], tail_window, tol)
            if cls is ScaleLimit.INCONCLUSIVE:
                raise InsufficientDataError(f"eps~{b}/eps~{a}", "ratio does not settle on the tail")
            if cls is ScaleLimit.FINITE:
                if not block:
                    block = [a]
                block.append(b)
            elif block:
                break
        if not block:
            break
        if len(steps) >= n - 1:
            raise InsufficientDataError("rearrangement", f"no termination after {n - 1} rounds")
        anchor = block[0]
        step = RewriteStep(round=len(steps) + 1, anchor=anchor, block=tuple(block))
        merged = []
        for i in block[1:]:
            if _rewrite(scales, C, anchor, i, step, tail_window, tol):
                status[i] = COLLAPSED
                merged.append(i)
        step.collapsed = tuple(merged)
        steps.append(step)
        finalized.append(anchor)
        logger.info("round %d: block %s anchored at %d, collapsed %s",
                    step.round, block, anchor, merged)

    plan = _finish(C, scales, status, deltas, steps, rewrite_needed=bool(steps))
    _check_separated(plan, tail_window, tol)
    return plan


def _check_separated(plan: RearrangementPlan, tail_window: int, tol: float) -> None:
    order = sorted(plan.vanishing, key=lambda j: -plan.scales[-1, j])
    for a, b in zip(order, order[1:]):
        cls, _ = estimate_limit(plan.scales[:, b] / plan.scales[:, a], tail_window, tol)
        if cls is not ScaleLimit.VANISHING:
            raise InsufficientDataError(f"eps~{b}/eps~{a}", "final vanishing scales are not separated")


def rewriting_residual(seq: ScaleSequence, plan: RearrangementPlan) -> float:
    """Largest relative defect of 1/eps_i = sum_j C[i, j]/eps~_j over all rows."""
    inverse = np.zeros_like(plan.scales)
    live = [j for j, s in enumerate(plan.status) if s != COLLAPSED]
    inverse[:, live] = 1.0 / plan.scales[:, live]
    rebuilt = inverse @ plan.substitution.T
    direct = 1.0 / seq.entries
    return float(np.max(np.abs(rebuilt - direct) / np.abs(direct)))
