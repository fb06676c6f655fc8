"""
Run configuration: TOML file, defaults and command-line overrides.

A config file only lists the keys it changes; everything else comes from
DEFAULTS. Unknown tables or keys and values whose type does not match the
default are rejected with the dotted key in the message.

TOML has no null, so "not declared" is spelled with neutral values:
an empty list, an empty string, lambda_decl = 0 and lipschitz < 0.
"""

import copy
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coeff import CoefficientSpec, FourierTerm, SlowModulation, family
from .errors import ConfigError
from .kinds import ExperimentKind
from .quasicell import GOLDEN, CutProjectSpec
from .scales import ScaleSequence

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
THREADS_ENV = "MULTIHOM_THREADS"

DEFAULTS: Dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "coefficient": {
        "family": "laminate",
        "dimension": 2,
        "num_scales": 1,
        "constant": 1.0,
        "weights": [],
        "variable_separated": False,
        "lambda_decl": 0.0,
        "lipschitz": -1.0,
        "holder_exponent": 1.0,
        "fast_dims": [],
        "slow_extent": [],
        "name": "custom",
        "terms": [],
    },
    "scales": {
        "formulas": ["eps", "eps/phi"],
        "csv": "",
        "k_grid": [],
        "tail_window": 8,
        "tol": 1e-3,
    },
    "cell": {
        "lambda": [1.0, 1.0],
        "x": [],
        "resolution": 64,
        "tol": 1e-10,
        "maxiter": 2000,
        "slow_nodes": 5,
    },
    "quasi": {
        "projections": [],
        "rho_schedule": [0.2, 0.1, 0.05, 0.025],
        "cutoff": 32,
        "tol": 1e-10,
        "z_max": 64,
        "fine_k": [3, 4, 5, 6, 7],
    },
    "pde": {
        "cells": 1024,
        "tol": 1e-10,
        "allow_underresolved": False,
        "margin": 0.25,
        "source": 1.0,
        "eps": [],
    },
    "experiment": {
        "kind": "convergence",
        "k_grid": [8, 16, 32, 64],
        "regime": "equal",
        "pairs": [],
        "alphas": [0.5, 0.9],
        "radii": [0.25, 0.125, 0.0625, 0.03125],
        "lambda": [2.0, 2.0],
        "deltas": [0.2, 0.1, 0.05],
        "scalings": [0.5, 2.0, 7.3],
        "slope_target": 0.9,
        "ratio_threshold": 2.0,
        "correlation_threshold": 0.5,
        "perturbation_factor": 2.0,
        "agreement": 1e-3,
        "seed": 0,
        "workers": 1,
    },
    "output": {
        "root": "runs",
        "dump_fields": False,
    },
}

TERM_KEYS = {
    "amplitude": 1.0,
    "wave_vectors": [],
    "phase": 0.0,
    "trig": "sin",
    "modulation": "constant",
    "modulation_params": [],
    "matrix": [],
}


def _type_name(value: Any) -> str:
    return type(value).__name__


def _coerce(key: str, default: Any, value: Any) -> Any:
    """Check value against the type of its default; ints are accepted for floats."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected bool, got {_type_name(value)}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected int, got {_type_name(value)}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected float, got {_type_name(value)}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected string, got {_type_name(value)}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected array, got {_type_name(value)}")
        return value
    raise ConfigError(key, "unsupported value")


def _merge(base: Dict[str, Any], given: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in given.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(dotted, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(dotted, "expected a table")
            out[key] = _merge(base[key], value, f"{dotted}.")
        else:
            out[key] = _coerce(dotted, base[key], value)
    return out


def _check_terms(terms: List[Any]) -> None:
    for i, term in enumerate(terms):
        where = f"coefficient.terms[{i}]"
        if not isinstance(term, dict):
            raise ConfigError(where, "expected a table")
        for key, value in term.items():
            if key not in TERM_KEYS:
                raise ConfigError(f"{where}.{key}", "unknown key")
            _coerce(f"{where}.{key}", TERM_KEYS[key], value)


def parse_literal(text: str) -> Any:
    """A TOML literal ("128", "[1, 2.5]", "true", "'x'"), else the bare string."""
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def _comma_floats(text: Any) -> Any:
    """Accept "1,2.5" for float arrays given on the command line."""
    if isinstance(text, str) and "," in text:
        try:
            return [float(v) for v in text.split(",")]
        except ValueError:
            return text
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return [float(text)]
    return text


@dataclass
class RunConfig:
    """
    Validated configuration of one run.

    Attributes:
        data: the full configuration, defaults included
        source: file the configuration was read from, if any
    """
    data: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    source: Optional[Path] = None

    def __post_init__(self):
        version = self.data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
        _check_terms(self.data["coefficient"]["terms"])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RunConfig) and self.data == other.data

    @classmethod
    def from_dict(cls, given: Dict[str, Any], source: Optional[Path] = None) -> "RunConfig":
        given = dict(given)
        given.setdefault("schema_version", SCHEMA_VERSION)
        return cls(_merge(DEFAULTS, given), source)

    @classmethod
    def from_toml(cls, text: str, source: Optional[Path] = None) -> "RunConfig":
        try:
            given = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(source or "<config>"), f"not valid TOML: {exc}") from exc
        return cls.from_dict(given, source)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from exc
        return cls.from_toml(text, path.resolve())

    def to_toml(self) -> str:
        return tomli_w.dumps(self.data)

    def get(self, dotted: str) -> Any:
        node: Any = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(dotted, "unknown key")
            node = node[part]
        return node

    def section(self, name: str) -> Dict[str, Any]:
        return self.get(name)

    def with_overrides(self, overrides: Iterable[Tuple[str, Any]]) -> "RunConfig":
        """
        Apply (dotted key, value) pairs; string values are parsed as TOML
        literals first.
        """
        given: Dict[str, Any] = {}
        for key, value in overrides:
            if isinstance(value, str):
                value = parse_literal(value)
            parts = key.split(".")
            if len(parts) != 2:
                raise ConfigError(key, "overrides take the form --section.key value")
            section, name = parts
            if section not in DEFAULTS or not isinstance(DEFAULTS[section], dict):
                raise ConfigError(key, "unknown key")
            if isinstance(DEFAULTS[section].get(name), list):
                value = _comma_floats(value)
            given.setdefault(section, {})[name] = value
        merged = copy.deepcopy(self.data)
        for section, values in given.items():
            merged[section] = _merge(DEFAULTS[section], {**self.data[section], **values}, f"{section}.")
        return RunConfig(merged, self.source)

    def resolved(self, base: Optional[Path] = None) -> "RunConfig":
        """Copy with output.root and scales.csv made absolute."""
        base = Path(base) if base is not None else (self.source.parent if self.source else Path.cwd())
        data = copy.deepcopy(self.data)
        data["output"]["root"] = str((base / data["output"]["root"]).resolve())
        if data["scales"]["csv"]:
            path = (base / data["scales"]["csv"]).resolve()
            if not path.is_file():
                raise ConfigError("scales.csv", f"file not found: {path}")
            data["scales"]["csv"] = str(path)
        return RunConfig(data, self.source)

    @property
    def workers(self) -> int:
        """experiment.workers, capped by MULTIHOM_THREADS when set."""
        workers = max(1, self.data["experiment"]["workers"])
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                workers = min(workers, max(1, int(env)))
            except ValueError as exc:
                raise ConfigError(THREADS_ENV, f"expected an integer, got {env!r}") from exc
        return workers

    def coefficient(self) -> CoefficientSpec:
        c = self.data["coefficient"]
        if c["family"]:
            try:
                return family(c["family"], c["dimension"])
            except KeyError as exc:
                raise ConfigError("coefficient.family", f"unknown family {c['family']!r}") from exc
        terms = []
        for i, t in enumerate(c["terms"]):
            t = {**TERM_KEYS, **t}
            modulation = SlowModulation(t["modulation"], tuple(t["modulation_params"]))
            matrix = tuple(tuple(row) for row in t["matrix"]) if t["matrix"] else None
            waves = tuple(tuple(int(v) for v in k) for k in t["wave_vectors"])
            terms.append(FourierTerm(t["amplitude"], waves, t["phase"], t["trig"], modulation, matrix))
        d = c["dimension"]
        kwargs: Dict[str, Any] = {
            "dimension": d,
            "num_scales": c["num_scales"],
            "constant": c["constant"],
            "terms": tuple(terms),
            "variable_separated": c["variable_separated"],
            "holder_exponent": c["holder_exponent"],
            "name": c["name"],
        }
        if c["weights"]:
            kwargs["weights"] = tuple(float(w) for w in c["weights"])
        if c["lambda_decl"] > 0:
            kwargs["lambda_decl"] = c["lambda_decl"]
        if c["lipschitz"] >= 0:
            kwargs["lipschitz"] = c["lipschitz"]
        if c["fast_dims"]:
            kwargs["fast_dims"] = tuple(int(m) for m in c["fast_dims"])
        if c["slow_extent"]:
            kwargs["slow_extent"] = tuple(float(v) for v in c["slow_extent"])
        return CoefficientSpec(**kwargs)

    @property
    def has_quasi(self) -> bool:
        return bool(self.data["quasi"]["projections"]) or self.data["coefficient"]["family"] == "golden_quasi"

    def quasi_spec(self) -> Optional[CutProjectSpec]:
        """The cut-and-project coefficient, or None without a [quasi] projection."""
        if not self.has_quasi:
            return None
        base = self.coefficient()
        projections = self.data["quasi"]["projections"]
        if not projections:
            projections = [[[1.0], [GOLDEN]]]
        try:
            mats = tuple(np.asarray(M, dtype=float) for M in projections)
        except ValueError as exc:
            raise ConfigError("quasi.projections", "projections must be rectangular matrices") from exc
        return CutProjectSpec(base, mats)

    def scale_sequence(self) -> ScaleSequence:
        s = self.data["scales"]
        if s["csv"]:
            return ScaleSequence.from_csv(s["csv"])
        if not s["formulas"]:
            raise ConfigError("scales.formulas", "give formulas or a csv file")
        return ScaleSequence.from_family(s["formulas"], s["k_grid"] or None)

    def slow_point(self) -> np.ndarray:
        x = self.data["cell"]["x"]
        return np.asarray(x, dtype=float) if x else np.zeros(self.coefficient().dimension)

    def reference(self, kind: ExperimentKind) -> "RunConfig":
        """
        Copy running `kind` on its reference family when neither the
        [coefficient] table nor quasi.projections were changed; self otherwise.
        """
        from .experiments import REFERENCE_FAMILIES

        if self.data["coefficient"] != DEFAULTS["coefficient"] or self.data["quasi"]["projections"]:
            return self
        name, dimension = REFERENCE_FAMILIES[kind]
        data = copy.deepcopy(self.data)
        data["coefficient"].update(family=name, dimension=dimension)
        logger.info("%s runs on the reference family %s", kind.value, name)
        return RunConfig(data, self.source)

    def experiment_config(self, kind: Optional[ExperimentKind] = None):
        """ExperimentConfig for `kind` (default: experiment.kind)."""
        from .experiments import ExperimentConfig

        e, cell, quasi, pde = (self.data[s] for s in ("experiment", "cell", "quasi", "pde"))
        if kind is None:
            try:
                kind = ExperimentKind(e["kind"])
            except ValueError as exc:
                raise ConfigError("experiment.kind", f"unknown experiment {e['kind']!r}") from exc
        chosen = self.reference(kind)
        qspec = chosen.quasi_spec() if kind is ExperimentKind.QUASIBENCH else None
        spec = qspec.base if qspec is not None else chosen.coefficient()
        return ExperimentConfig(
            kind=kind,
            spec=spec,
            k_grid=tuple(float(k) for k in e["k_grid"]),
            regime=e["regime"],
            pairs=tuple(tuple(float(v) for v in pair) for pair in e["pairs"]),
            cells=pde["cells"],
            tol=pde["tol"],
            resolution=cell["resolution"],
            cell_tol=cell["tol"],
            source=pde["source"],
            margin=pde["margin"],
            alphas=tuple(float(a) for a in e["alphas"]),
            radii=tuple(float(r) for r in e["radii"]),
            lam=tuple(float(v) for v in e["lambda"]),
            deltas=tuple(float(v) for v in e["deltas"]),
            scalings=tuple(float(v) for v in e["scalings"]),
            slope_target=e["slope_target"],
            ratio_threshold=e["ratio_threshold"],
            correlation_threshold=e["correlation_threshold"],
            perturbation_factor=e["perturbation_factor"],
            agreement=e["agreement"],
            quasi=qspec,
            rho_schedule=tuple(float(r) for r in quasi["rho_schedule"]),
            cutoff=quasi["cutoff"],
            quasi_k=tuple(int(k) for k in quasi["fine_k"]),
            slow_nodes=cell["slow_nodes"],
            seed=e["seed"],
            workers=self.workers,
            allow_underresolved=pde["allow_underresolved"],
        )
