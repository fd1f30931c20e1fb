"""JSON run configuration: schema, defaults, parsing and emission.

A configuration document has five optional sections::

    {
      "reactor":    {"L": 100.0, "n_elements": 40, ...},
      "h_spec":     {"mean": 0.17, "cov": 0.1, "corr_length": 15.0, ...},
      "sigma_spec": {"mean": 0.0195, ...},
      "solver":     {"p": 4, "eps1": 0.01, ...},
      "output":     {"directory": null, ...}
    }

Missing keys take the reference-problem defaults; unknown keys are rejected.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import jsonschema

from .driver import SolverSettings
from .errors import ConfigurationError
from .randomfield import EIGENFUNCTION_NORMS, FieldSpec
from .reactor import ReactorConfig

__all__ = [
    "OutputSettings",
    "RunConfig",
    "SCHEMA",
    "parse_config",
    "parse_document",
    "emit_document",
    "config_hash",
    "model_hash",
]


@dataclass(frozen=True)
class OutputSettings:
    """Output options.

    Attributes
    ----------
    directory : str or None
        Output directory; ``None`` defers to ``--out`` or ``STOCHKAP_OUT``.
    field_samples : int
        Random field realizations written by ``sample``.
    histogram_samples : int
        Surrogate draws for the joint histogram of the reduced variables.
    histogram_bins : int
    compare_samples : int
        Monte Carlo samples used by ``compare`` and ``convergence`` (the
        latter keeps every iterate, so this bounds its memory).
    """

    directory: str = None
    field_samples: int = 5
    histogram_samples: int = 100_000
    histogram_bins: int = 40
    compare_samples: int = 10_000


@dataclass(frozen=True)
class RunConfig:
    reactor: ReactorConfig = field(default_factory=ReactorConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: OutputSettings = field(default_factory=OutputSettings)


_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_UNIT = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}


def _section(props):
    return {"type": "object", "properties": props, "additionalProperties": False}


_FIELD = _section(
    {
        "mean": _POS,
        "cov": {"type": "number", "minimum": 0, "exclusiveMaximum": 3**-0.5},
        "corr_length": _POS,
        "n_terms": _POS_INT,
        "eigenfunction_norm": {"enum": list(EIGENFUNCTION_NORMS)},
    }
)

SCHEMA = _section(
    {
        "reactor": _section(
            {
                "L": _POS,
                "n_elements": _POS_INT,
                "k": _POS,
                "T_inf": _POS,
                "E_f": _POS,
                "Sigma_f_ref": _POS,
                "D_ref": _POS,
                "nu": _POS,
                "s": _POS,
                "T_ref": _POS,
                "T_min": _POS,
                "T_max": _POS,
            }
        ),
        "h_spec": _FIELD,
        "sigma_spec": _FIELD,
        "solver": _section(
            {
                "p": _POS_INT,
                "eps1": _UNIT,
                "eps2": _UNIT,
                "max_outer_iters": _POS_INT,
                "xi_zeta_rule_level": {"oneOf": [_POS_INT, {"type": "null"}]},
                "mixed_rule_level_offset": _POS_INT,
                "xi_parent_level": _POS_INT,
                "mc_samples": _POS_INT,
                "rng_seed": _NONNEG_INT,
                "q_cap": _NONNEG_INT,
                "warm_cap": {"type": "boolean"},
                "stagnation_tol": {"type": "number", "minimum": 0},
                "stagnation_patience": _NONNEG_INT,
                "monitor_samples": _POS_INT,
                "chunk_size": _POS_INT,
                "threads": _POS_INT,
            }
        ),
        "output": _section(
            {
                "directory": {"type": ["string", "null"]},
                "field_samples": _POS_INT,
                "histogram_samples": _POS_INT,
                "histogram_bins": _POS_INT,
                "compare_samples": _POS_INT,
            }
        ),
    }
)


def _describe(error):
    path = ".".join(str(p) for p in error.absolute_path) or "<document>"
    if error.validator == "additionalProperties":
        known = set(error.schema.get("properties", {}))
        extra = sorted(set(error.instance) - known)
        path = ".".join([*map(str, error.absolute_path), extra[0]]) if extra else path
        return f"{path}: unknown key"
    return f"{path}: {error.message}"


def _build(cls, section, values):
    try:
        return cls(**values)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{section}: {exc}") from exc


def parse_document(doc):
    """Validate a decoded JSON document and build a :class:`RunConfig`."""
    if doc is None:
        doc = {}
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigurationError("; ".join(_describe(e) for e in errors))
    defaults = ReactorConfig()
    h = dataclasses.asdict(defaults.h_spec) | doc.get("h_spec", {})
    sigma = dataclasses.asdict(defaults.sigma_spec) | doc.get("sigma_spec", {})
    reactor = _build(
        ReactorConfig,
        "reactor",
        dict(
            doc.get("reactor", {}),
            h_spec=_build(FieldSpec, "h_spec", h),
            sigma_spec=_build(FieldSpec, "sigma_spec", sigma),
        ),
    )
    solver = _build(SolverSettings, "solver", doc.get("solver", {}))
    output = _build(OutputSettings, "output", doc.get("output", {}))
    return RunConfig(reactor, solver, output)


def parse_config(path):
    """Read and validate a JSON configuration file; ``None`` gives the defaults."""
    if path is None:
        return parse_document({})
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: malformed JSON ({exc})") from exc
    return parse_document(doc)


def emit_document(cfg):
    """Complete JSON-ready document; ``parse_document(emit_document(c)) == c``."""
    reactor = dataclasses.asdict(cfg.reactor)
    h = reactor.pop("h_spec")
    sigma = reactor.pop("sigma_spec")
    return {
        "reactor": reactor,
        "h_spec": h,
        "sigma_spec": sigma,
        "solver": dataclasses.asdict(cfg.solver),
        "output": dataclasses.asdict(cfg.output),
    }


def _digest(doc):
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def config_hash(cfg):
    """SHA-256 of the canonical JSON form, excluding output and thread settings."""
    doc = emit_document(cfg)
    doc.pop("output")
    doc["solver"].pop("threads")
    return _digest(doc)


def model_hash(cfg):
    """SHA-256 of the physical model alone (reactor and field sections).

    Stores produced by different drivers are comparable when this matches.
    """
    doc = emit_document(cfg)
    return _digest({k: doc[k] for k in ("reactor", "h_spec", "sigma_spec")})
