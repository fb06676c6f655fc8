"""
Enumerations and small records shared across modules.

This module defines the vocabulary used by the analysis and experiment code:
- ScaleLimit: limit class of a scale sequence or of a ratio of scales
- ExperimentKind: the experiment harnesses the CLI can run
- ThresholdSource: where a pass/fail threshold came from
- SlopeFit: result of a least-squares fit on log-log data
- Verdict: one pass/fail line with its threshold and raw measurement
- EXPERIMENT_DESCRIPTIONS: human-readable descriptions for reports

Verdicts are evaluated in two layers:
1. Rates (fitted slopes) against targets derived from the theory
2. Constants (ratios of measurements) against pilot-calibrated thresholds
"""

from enum import Enum, auto
from dataclasses import dataclass, field
from typing import Any, Dict, Optional


class ScaleLimit(Enum):
    """
    Limit class of a positive sequence estimated from a finite tail.

    - VANISHING: tends to 0
    - FINITE: settles at a positive constant
    - INFINITE: grows without bound
    - INCONCLUSIVE: oscillates or drifts without a clear trend
    """
    VANISHING = auto()
    FINITE = auto()
    INFINITE = auto()
    INCONCLUSIVE = auto()


class ExperimentKind(Enum):
    """Experiment harnesses, keyed by their CLI subcommand."""
    CONVERGENCE = "convergence"
    LIPSCHITZ = "lipschitz"
    HOLDER = "holder"
    STABILITY = "stability"
    HCONV = "hconv"
    QUASIBENCH = "quasibench"


class ThresholdSource(Enum):
    """Origin of a verdict threshold."""
    THEORY = "theory"  # rate targets implied by the estimates
    PILOT = "pilot"    # constants calibrated on a pilot run


@dataclass(frozen=True)
class SlopeFit:
    """
    Least-squares line through (log x, log y).

    Attributes:
        slope: fitted exponent
        intercept: fitted log-constant
        stderr: standard error of the slope (0 for two points)
        points: number of points used
    """
    slope: float
    intercept: float
    stderr: float
    points: int

    def as_dict(self) -> Dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept,
                "stderr": self.stderr, "points": self.points}


@dataclass
class Verdict:
    """
    One pass/fail decision of an experiment.

    Attributes:
        name: what was checked, e.g. "slope(err vs sum eps)"
        measured: the measured quantity
        threshold: the bound it is compared against
        comparison: ">=" or "<="
        source: where the threshold comes from
        passed: outcome, None when the check is report-only
        raw: the measurements the quantity was computed from
    """
    name: str
    measured: float
    threshold: float
    comparison: str
    source: ThresholdSource
    passed: Optional[bool] = None
    raw: Dict[str, Any] = field(default_factory=dict)

    def evaluate(self) -> bool:
        """Set and return `passed` from measured vs threshold."""
        if self.comparison == ">=":
            self.passed = bool(self.measured >= self.threshold)
        else:
            self.passed = bool(self.measured <= self.threshold)
        return self.passed

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "measured": self.measured,
            "threshold": self.threshold,
            "comparison": self.comparison,
            "threshold_source": self.source.value,
            "passed": self.passed,
            "raw": self.raw,
        }


# Human-readable descriptions for reports
EXPERIMENT_DESCRIPTIONS = {
    ExperimentKind.CONVERGENCE: "L2 rate of u_eps - u_0 against the sum of scales",
    ExperimentKind.LIPSCHITZ: "interior gradient bound across scale ratios",
    ExperimentKind.HOLDER: "Campanato C^alpha bound across scale ratios",
    ExperimentKind.STABILITY: "effective tensor and corrector stability in lambda",
    ExperimentKind.HCONV: "H-convergence of a periodic sequence and a perturbed one",
    ExperimentKind.QUASIBENCH: "quasi-periodic effective coefficient, three routes",
}
