"""Experiment configuration: flat ``key=value`` files overridden by CLI flags."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping

from ..amplification import PopulationPolicy
from ..randomizers import MECHANISMS
from ..tasks import TASKS

SCENARIOS = ("randomize", "amplify", "crowdsourcing", "social", "incentive", "protocol-demo", "rates")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


def _floats(text: str) -> tuple[float, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            out.append(math.inf if part.lower() in ("inf", "infinity") else float(part))
    return tuple(out)


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "^" in part:
            base, exp = part.split("^", 1)
            out.append(int(base) ** int(exp))
        else:
            value = float(part)
            if value != int(value):
                raise ValueError(f"{part!r} is not an integer")
            out.append(int(value))
    return tuple(out)


def _mechanisms(text: str) -> tuple[str, ...]:
    text = text.strip()
    if text == "all":
        return MECHANISMS
    mechs = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in mechs if m not in MECHANISMS]
    if bad:
        raise ValueError(f"unknown mechanism(s) {bad}; expected {MECHANISMS} or 'all'")
    return mechs


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "mechanism": _mechanisms,
    "eps": _floats,
    "eps_central": _floats,
    "delta": float,
    "n": _ints,
    "groups": int,
    "tau": float,
    "trials": int,
    "seed": int,
    "dataset": str,
    "out": str,
    "policy": PopulationPolicy.parse,
    "dim": int,
    "domain": str,
    "task": str,
    "samples": int,
    "clip": float,
    "box": _floats,
    "deterministic_keys": _bool,
    "radius_mode": str,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One CLI invocation.

    ``eps`` (local budget, LDP mode) and ``eps_central`` (PIC mode) are sweep
    lists; exactly one is set for the experiment scenarios. ``n`` lists group
    sizes (or the population grid for ``rates``). ``trials`` counts reports for
    ``randomize`` and repeated seeds elsewhere. ``policy`` of ``None`` selects
    the scenario default.
    """

    scenario: str
    mechanism: tuple[str, ...] = ("minkowski",)
    eps: tuple[float, ...] = ()
    eps_central: tuple[float, ...] = ()
    delta: float | None = None
    n: tuple[int, ...] = ()
    groups: int | None = None
    tau: float | None = None
    trials: int | None = None
    seed: int = 0
    dataset: str | None = None
    out: str | None = None
    policy: PopulationPolicy | None = None
    dim: int | None = None
    domain: str | None = None
    task: str | None = None
    samples: int = 200
    clip: float = 1.0
    box: tuple[float, ...] = ()
    deterministic_keys: bool = False
    radius_mode: str = "searched"

    @property
    def privacy_mode(self) -> str:
        return "pic" if self.eps_central else "ldp"

    @property
    def epsilons(self) -> tuple[float, ...]:
        return self.eps_central or self.eps


def parse_value(key: str, raw: str):
    key = key.replace("-", "_")
    if key not in _PARSERS:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        return key, _PARSERS[key](raw)
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def read_config_file(path: str | Path) -> dict[str, object]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return dict(parse_value(k, v) for k, v in parser["config"].items())


def build_config(scenario: str, file_values: Mapping[str, object], flag_values: Mapping[str, object]) -> ExperimentConfig:
    """Merge file values with flag values (flags win) and validate."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(merged) - known
    if extra:
        raise ConfigError(f"unknown configuration keys {sorted(extra)}")
    cfg = ExperimentConfig(scenario=scenario, **merged)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    s = cfg.scenario
    if s in ("randomize", "crowdsourcing", "social", "incentive", "protocol-demo"):
        if bool(cfg.eps) == bool(cfg.eps_central):
            raise ConfigError("set exactly one privacy mode: --eps (LDP) or --eps-central (PIC)")
    if s == "amplify" and bool(cfg.eps) == bool(cfg.eps_central):
        raise ConfigError("amplify needs exactly one of --eps (forward) or --eps-central (inverse)")
    if s == "amplify" and not cfg.n:
        raise ConfigError("amplify needs --n")
    if s == "rates" and not cfg.eps_central:
        raise ConfigError("rates needs --eps-central")
    if any(not e > 0 for e in cfg.epsilons):
        raise ConfigError("privacy budgets must be positive")
    if cfg.delta is not None and not 0 < cfg.delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    if cfg.trials is not None and cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if any(n < 1 for n in cfg.n):
        raise ConfigError("group sizes must be positive")
    if cfg.tau is not None and not cfg.tau > 0:
        raise ConfigError("tau must be positive")
    if cfg.dim is not None and cfg.dim < 1:
        raise ConfigError("dim must be positive")
    if cfg.domain is not None and cfg.domain not in ("ball", "cube"):
        raise ConfigError("domain must be 'ball' or 'cube'")
    if cfg.task is not None and cfg.task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    if cfg.groups is not None and cfg.groups < 1:
        raise ConfigError("groups must be positive")
    if cfg.groups is not None and len(cfg.n) > 1 and len(cfg.n) != cfg.groups:
        raise ConfigError("--groups disagrees with the number of --n sizes")
    if cfg.samples < 1:
        raise ConfigError("samples must be >= 1")
    if not cfg.clip > 0:
        raise ConfigError("clip must be positive")
    if cfg.box and len(cfg.box) != 4:
        raise ConfigError("box is xmin,xmax,ymin,ymax")
    if cfg.radius_mode not in ("searched", "formula"):
        raise ConfigError("radius_mode must be 'searched' or 'formula'")


def with_defaults(cfg: ExperimentConfig, **defaults) -> ExperimentConfig:
    """Fill unset (``None`` or empty) fields from scenario defaults."""
    updates = {k: v for k, v in defaults.items() if getattr(cfg, k) in (None, ())}
    return replace(cfg, **updates) if updates else cfg


def group_sizes(cfg: ExperimentConfig, default: tuple[int, ...]) -> tuple[int, ...]:
    sizes = cfg.n or default
    groups = cfg.groups or len(sizes)
    if len(sizes) == 1 and groups > 1:
        sizes = sizes * groups
    if len(sizes) != groups:
        raise ConfigError(f"expected {groups} group sizes, got {len(sizes)}")
    return sizes


__all__ = [
    "SCENARIOS",
    "ConfigError",
    "ExperimentConfig",
    "build_config",
    "group_sizes",
    "parse_value",
    "read_config_file",
    "validate",
    "with_defaults",
]
