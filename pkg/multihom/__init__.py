"""
multihom -- Numerical homogenization with several non-separated scales.

This package computes effective coefficients of elliptic operators whose
coefficient oscillates on several scales that need not separate. It
classifies and rearranges scale sequences, solves reperiodized and
quasi-periodic cell problems, solves the fine and effective Dirichlet
problems and runs experiment harnesses that check convergence rates and
regularity bounds.

Quick start:
    from multihom import family, effective_tensor
    spec = family("laminate", 2)
    A_hat = effective_tensor(spec, x=[0.0, 0.0], lam=[1.0, 2.5]).matrix
"""

from .errors import (
    MultihomError, ConfigError, PreconditionError, DimensionError, ResolutionError,
    StructureError, DomainError, ScaleOrderError, NotEllipticError, InsufficientDataError,
    ConvergenceError, ExtrapolationError, NondegeneracyError,
)
from .kinds import ScaleLimit, ExperimentKind, ThresholdSource, SlopeFit, Verdict, EXPERIMENT_DESCRIPTIONS
from .coeff import (
    SlowModulation, FourierTerm, CoefficientSpec, evaluate, estimate_ellipticity,
    constructive_bounds, check_smoothness, multiscale_sampler, family, FAMILIES,
)
from .scales import (
    ScaleSequence, ScaleClassification, RearrangementPlan, classify, reduce_two_scale,
    rearrange, rational_limit, rewriting_residual,
)
from .reperiod import ReperiodizationMap, build_maps, reperiodize, change_of_variables, pull_back_problem
from .cell import (
    CorrectorField, EffectiveTensor, solve_corrector, effective_tensor, corrector_distance,
    energy_norm, voigt_reuss_bounds, effective_tensor_field,
)
from .quasicell import (
    CutProjectSpec, NondegeneracyReport, RegularizedCorrector, ReiteratedTensor,
    validate_nondegeneracy, solve_regularized_corrector, reiterated_effective,
    torus_harmonic_mean, weak_mean_probe, golden_spec, periodic_embedding,
)
from .pde import Domain, FieldOnGrid, DirichletProblem, solve, norms, h2_proxy, campanato_seminorm
from .fitting import loglog_slope, richardson, spearman
from .experiments import (
    ExperimentConfig, ExperimentResult, run, run_convergence, run_lipschitz_sweep,
    run_holder_sweep, run_stability, run_hconv_probe, run_quasi_benchmark,
)
from .config import RunConfig, DEFAULTS
from .artifacts import RunDirectory
from .cli import dispatch, main

__all__ = [
    'MultihomError',
    'ConfigError',
    'PreconditionError',
    'DimensionError',
    'ResolutionError',
    'StructureError',
    'DomainError',
    'ScaleOrderError',
    'NotEllipticError',
    'InsufficientDataError',
    'ConvergenceError',
    'ExtrapolationError',
    'NondegeneracyError',
    'ScaleLimit',
    'ExperimentKind',
    'ThresholdSource',
    'SlopeFit',
    'Verdict',
    'EXPERIMENT_DESCRIPTIONS',
    'SlowModulation',
    'FourierTerm',
    'CoefficientSpec',
    'evaluate',
    'estimate_ellipticity',
    'constructive_bounds',
    'check_smoothness',
    'multiscale_sampler',
    'family',
    'FAMILIES',
    'ScaleSequence',
    'ScaleClassification',
    'RearrangementPlan',
    'classify',
    'reduce_two_scale',
    'rearrange',
    'rational_limit',
    'rewriting_residual',
    'ReperiodizationMap',
    'build_maps',
    'reperiodize',
    'change_of_variables',
    'pull_back_problem',
    'CorrectorField',
    'EffectiveTensor',
    'solve_corrector',
    'effective_tensor',
    'corrector_distance',
    'energy_norm',
    'voigt_reuss_bounds',
    'effective_tensor_field',
    'CutProjectSpec',
    'NondegeneracyReport',
    'RegularizedCorrector',
    'ReiteratedTensor',
    'validate_nondegeneracy',
    'solve_regularized_corrector',
    'reiterated_effective',
    'torus_harmonic_mean',
    'weak_mean_probe',
    'golden_spec',
    'periodic_embedding',
    'Domain',
    'FieldOnGrid',
    'DirichletProblem',
    'solve',
    'norms',
    'h2_proxy',
    'campanato_seminorm',
    'loglog_slope',
    'richardson',
    'spearman',
    'ExperimentConfig',
    'ExperimentResult',
    'run',
    'run_convergence',
    'run_lipschitz_sweep',
    'run_holder_sweep',
    'run_stability',
    'run_hconv_probe',
    'run_quasi_benchmark',
    'RunConfig',
    'DEFAULTS',
    'RunDirectory',
    'dispatch',
    'main',
]
