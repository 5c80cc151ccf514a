"""Flat key=value config files and construction of objects from them.

One format serves every subcommand: one `key = value` per line, `#`
comments, values parsed as Python literals with a bare-string fallback, so
`means = [(0.0, 1.0), (1.0, 0.0)]` and `name = demo` both work.
"""

from __future__ import annotations

import ast
from typing import Optional

from .errors import InvalidParamError, MissingFieldError
from .experiments import ExperimentConfig, moderate_gmm4, paper_gmm8
from .schedules import Schedule, make_schedule
from .targets import Target, gaussian_target, mixture_target

__all__ = [
    "experiment_from_config",
    "load_config",
    "parse_config_text",
    "schedule_from_config",
    "target_from_config",
]


def parse_config_text(text: str) -> dict:
    """Parse key=value lines into a dict; later duplicates win.

    Inline `#` comments are stripped before parsing, so hash characters
    inside quoted values are not supported.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParamError(f"config line {lineno} has no '=': {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise InvalidParamError(f"config line {lineno} has an empty key")
        value = value.strip()
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            out[key] = value
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


_TARGET_KINDS = ("gaussian", "gmm", "paper-gmm8", "moderate-gmm4")


def target_from_config(cfg: dict, suffix: str = "") -> Target:
    """Build the target named by key `target<suffix>`.

    suffix="2" reads target2/mean2/... so one file can hold both ends of a
    cycle experiment.
    """
    kind = cfg.get("target" + suffix)
    if kind is None:
        raise MissingFieldError(f"config needs a 'target{suffix}' key")
    kind = str(kind).strip().lower().replace("_", "-")

    def need(key: str):
        value = cfg.get(key + suffix)
        if value is None:
            raise MissingFieldError(f"target kind {kind!r} needs key '{key}{suffix}'")
        return value

    if kind == "gaussian":
        return gaussian_target(mean=need("mean"), var=float(need("var")))
    if kind == "gmm":
        means = need("means")
        weights = cfg.get("weights" + suffix)
        if weights is None:
            weights = [1.0 / len(means)] * len(means)
        return mixture_target(weights=weights, means=means,
                              sigma=float(need("sigma")))
    if kind == "paper-gmm8":
        return paper_gmm8()
    if kind == "moderate-gmm4":
        return moderate_gmm4()
    raise InvalidParamError(f"unknown target kind {kind!r}; known: {_TARGET_KINDS}")


_SCHEDULE_PARAM_KEYS = ("sigma_max", "alpha0", "p", "zeta")


def schedule_from_config(cfg: dict, default: Optional[str] = None) -> Schedule:
    """Build the schedule named by the `schedule` key (family parameters are
    picked up from their own keys)."""
    family = cfg.get("schedule", default)
    if family is None:
        raise MissingFieldError("config needs a 'schedule' key")
    params = {k: cfg[k] for k in _SCHEDULE_PARAM_KEYS if k in cfg}
    return make_schedule(str(family), **params)


_EXPERIMENT_KEYS = {
    "n": int,
    "steps": int,
    "seed": int,
    "threads": int,
    "early_stop": float,
    "zeta_grid": tuple,
    "eps_grid": tuple,
    "t_grid": tuple,
    "steps_grid": tuple,
    "delta": tuple,
    "check_bound": bool,
}
_KNOWN_KEYS = (
    set(_EXPERIMENT_KEYS)
    | {"target", "schedule", "mean", "var", "means", "weights", "sigma"}
    | {"target2", "mean2", "var2", "means2", "weights2", "sigma2"}
    | set(_SCHEDULE_PARAM_KEYS)
)


def experiment_from_config(cfg: dict, **overrides) -> ExperimentConfig:
    """Assemble an ExperimentConfig; keyword overrides beat config values.

    Unknown keys are rejected so typos fail loudly instead of silently
    running with defaults.
    """
    unknown = sorted(set(cfg) - _KNOWN_KEYS)
    if unknown:
        raise InvalidParamError(f"unknown config keys: {', '.join(unknown)}")
    kwargs: dict = {
        "target": target_from_config(cfg),
        "sched": schedule_from_config(cfg, default="linear"),
    }
    if cfg.get("target2") is not None:
        kwargs["target2"] = target_from_config(cfg, suffix="2")
    for key, cast in _EXPERIMENT_KEYS.items():
        if key in cfg:
            value = cfg[key]
            kwargs[key] = cast(value) if not isinstance(value, cast) else value
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)
