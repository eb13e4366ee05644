"""TOML experiment configuration with a strict schema.

One config file drives one experiment.  The schema is strict on purpose:
an unknown key anywhere is a validation error that lists every offending
key, because a silently ignored typo in a weight parameter would change
what a certificate means.  Sections are tables; numbers follow TOML types
(integers are accepted wherever floats are expected).

Layout::

    experiment = "simulate"        # which runner to invoke

    [model]                        # kind = "kfp" | "fhn"
    kind = "kfp"
    gamma = 2.0
    beta = 2.0

    [weight]                       # kind = "gaussian" | "kfp"
    kind = "gaussian"
    r = 0.1

    [grid]                         # phase-space box [-Lx,Lx] x [-Lv,Lv]
    Lx = 6.0
    Lv = 6.0
    nx = 128
    nv = 128

    [run]                          # experiment-specific keys, see SCHEMA
    t_end = 4.0

Models with closure-valued coefficients are library-only; the file format
covers the two named families.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from kfpcert.model import (
    FitzHughNagumo,
    KineticFokkerPlanck,
    ValidationError,
    to_general_form,
)
from kfpcert.solver import Grid, build_grid
from kfpcert.weights import GaussianQuadratic, KfpWeight

EXPERIMENTS = (
    "simulate",
    "verify",
    "harris-rate",
    "subsolution",
    "regularize",
    "steady-state",
    "report",
)

_NUM = (int, float)

# section -> key -> (types, required); model/weight keys depend on kind
_MODEL_KEYS = {
    "kfp": {"kind": (str, True), "gamma": (_NUM, False), "beta": (_NUM, False), "d": (int, False)},
    "fhn": {"kind": (str, True), "a": (_NUM, False), "b": (_NUM, False), "c": (_NUM, False), "d": (int, False)},
}
_WEIGHT_KEYS = {
    "gaussian": {"kind": (str, True), "r": (_NUM, True), "d": (int, False)},
    "kfp": {"kind": (str, True), "lam": (_NUM, True), "eps": (_NUM, True), "gamma": (_NUM, False), "d": (int, False)},
}
_GRID_KEYS = {
    "Lx": (_NUM, True),
    "Lv": (_NUM, True),
    "nx": (int, True),
    "nv": (int, True),
}

# run-section keys per experiment: key -> (types, required)
_RUN_KEYS = {
    "simulate": {
        "t_end": (_NUM, True),
        "observations": (int, False),
        "obs_times": (list, False),
        "seed": (int, False),
        "initial": (str, False),
        "limiter": (bool, False),
        "dt": (_NUM, False),
        "checkpoint": (bool, False),
        "svg": (bool, False),
        "svg_observable": (str, False),
        "mass_tol": (_NUM, False),
        "sink_M": (_NUM, False),
        "sink_R": (_NUM, False),
    },
    "verify": {
        "box": (_NUM, True),
        "n": (int, False),
        "n_max": (int, False),
        "p_list": (list, False),
        "search_radius": (_NUM, False),
        "phi_p_box": (_NUM, False),
        "phi_p_n": (int, False),
        "seed": (int, False),
    },
    "harris-rate": {
        "alpha": (_NUM, True),
        "b": (_NUM, True),
        "T": (_NUM, True),
        "mu_mass": (_NUM, True),
        "m_of_R": (_NUM, True),
        "seed": (int, False),
    },
    "subsolution": {
        "r": (_NUM, True),
        "tau": (_NUM, False),
        "tau_frac": (_NUM, False),
        "alpha": (_NUM, True),
        "x0": (_NUM, False),
        "v0": (_NUM, False),
        "V": (_NUM, False),
        "samples": (int, False),
        "tol": (_NUM, False),
        "seed": (int, False),
    },
    "regularize": {
        "t_ladder": (list, True),
        "svg": (bool, False),
        "seed": (int, False),
    },
    "steady-state": {
        "tol": (_NUM, False),
        "limiter": (bool, False),
        "max_time": (_NUM, False),
        "check_interval": (_NUM, False),
        "checkpoint": (bool, False),
        "seed": (int, False),
    },
    "report": {
        "sections": (list, True),
        "seed": (int, False),
    },
}

_REQUIRED_SECTIONS = {
    "simulate": ("model", "grid", "run"),
    "verify": ("model", "weight", "run"),
    "harris-rate": ("run",),
    "subsolution": ("model", "run"),
    "regularize": ("model", "weight", "grid", "run"),
    "steady-state": ("model", "grid", "run"),
    "report": ("run",),
}

# keys that must be strictly positive when present
_POSITIVE_KEYS = {
    "tol", "mass_tol", "dt", "box", "search_radius", "phi_p_box",
    "r", "tau", "tau_frac", "alpha", "samples", "max_time",
    "check_interval", "sink_M", "sink_R", "V",
}


class ConfigError(ValidationError):
    """Config validation failure carrying the full list of offending items."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; ``raw`` echoes the parsed file."""

    experiment: str
    run: dict
    model: Optional[dict] = None
    weight: Optional[dict] = None
    grid: Optional[dict] = None
    raw: dict = field(default_factory=dict)


def _type_ok(value, types) -> bool:
    # bool is an int subclass; keep the two apart so `nx = true` is rejected
    if types is bool:
        return isinstance(value, bool)
    return not isinstance(value, bool) and isinstance(value, types)


def _check_section(name, data, keys, errors):
    for key, value in data.items():
        if key not in keys:
            errors.append(f"unknown key '{name}.{key}'")
            continue
        types, _ = keys[key]
        if not _type_ok(value, types):
            want = "number" if types is _NUM else types.__name__
            errors.append(f"key '{name}.{key}' must be a {want}, got {value!r}")
        elif key in _POSITIVE_KEYS and isinstance(value, _NUM) and value <= 0:
            errors.append(f"key '{name}.{key}' must be positive, got {value!r}")
    for key, (types, required) in keys.items():
        if required and key not in data:
            errors.append(f"missing required key '{name}.{key}'")


def _check_kinded(name, data, kinds, errors):
    kind = data.get("kind")
    if kind not in kinds:
        errors.append(
            f"key '{name}.kind' must be one of {sorted(kinds)}, got {kind!r}"
        )
        return
    _check_section(name, data, kinds[kind], errors)


def validate_config(data: dict) -> ExperimentConfig:
    """Validate a parsed config document, collecting every problem at once."""
    errors = []
    if not isinstance(data, dict):
        raise ConfigError(["config root must be a table"])

    experiment = data.get("experiment")
    if experiment not in EXPERIMENTS:
        errors.append(
            f"key 'experiment' must be one of {sorted(EXPERIMENTS)}, got {experiment!r}"
        )
        raise ConfigError(errors)

    known_top = {"experiment", "model", "weight", "grid", "run"}
    for key in data:
        if key not in known_top:
            errors.append(f"unknown key '{key}'")

    for section in _REQUIRED_SECTIONS[experiment]:
        if section not in data:
            errors.append(
                f"missing section '{section}' required by experiment '{experiment}'"
            )

    if "model" in data:
        _check_kinded("model", data["model"], _MODEL_KEYS, errors)
    if "weight" in data:
        _check_kinded("weight", data["weight"], _WEIGHT_KEYS, errors)
    if "grid" in data:
        _check_section("grid", data["grid"], _GRID_KEYS, errors)
    if "run" in data:
        _check_section("run", data["run"], _RUN_KEYS[experiment], errors)
        run = data["run"]
        if experiment == "simulate" and isinstance(run.get("t_end"), _NUM):
            if run["t_end"] < 0:
                errors.append(f"key 'run.t_end' must be >= 0, got {run['t_end']!r}")
        if "initial" in run and run["initial"] not in ("gaussian", "random"):
            errors.append(
                f"key 'run.initial' must be 'gaussian' or 'random', got {run['initial']!r}"
            )
        if ("sink_M" in run) != ("sink_R" in run):
            errors.append("keys 'run.sink_M' and 'run.sink_R' must be given together")
        if "observations" in run and isinstance(run["observations"], int):
            if run["observations"] < 2:
                errors.append("key 'run.observations' must be at least 2")
        if "seed" in run and isinstance(run["seed"], int):
            if not 0 <= run["seed"] < 2**64:
                errors.append("key 'run.seed' must fit an unsigned 64-bit integer")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        experiment=experiment,
        run=dict(data.get("run", {})),
        model=dict(data["model"]) if "model" in data else None,
        weight=dict(data["weight"]) if "weight" in data else None,
        grid=dict(data["grid"]) if "grid" in data else None,
        raw=data,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"config does not parse as TOML: {exc}"]) from exc
    return validate_config(data)


def build_model_spec(cfg: ExperimentConfig):
    """Instantiate the configured model family."""
    section = cfg.model
    if section is None:
        raise ConfigError(["experiment needs a model section"])
    kind = section["kind"]
    params = {k: v for k, v in section.items() if k != "kind"}
    if kind == "kfp":
        return KineticFokkerPlanck(**params)
    return FitzHughNagumo(**params)


def build_general_model(cfg: ExperimentConfig):
    return to_general_form(build_model_spec(cfg))


def build_weight_spec(cfg: ExperimentConfig):
    """Instantiate the configured weight, or None when the section is absent."""
    section = cfg.weight
    if section is None:
        return None
    params = {k: v for k, v in section.items() if k != "kind"}
    if section["kind"] == "gaussian":
        return GaussianQuadratic(**params)
    return KfpWeight(**params)


def build_grid_spec(cfg: ExperimentConfig) -> Grid:
    g = cfg.grid
    if g is None:
        raise ConfigError(["experiment needs a grid section"])
    return build_grid(g["Lx"], g["Lv"], g["nx"], g["nv"])
