"""Run configuration: JSON file plus command-line flags over preset defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from daecbf.numeric import DEFAULT_RANK_TOL
from daecbf.projection import DEFAULT_MANIFOLD_TOL
from daecbf.verifier.correctness import DEFAULT_GRID, DEFAULT_STARTS
from daecbf.verifier.feasibility import DEFAULT_SAMPLES
from daecbf.verifier.report import CHECKS
from daecbf.verifier.stacks import DEFAULT_BOUNDARY_BAND

COMMANDS = ("simulate", "verify", "filter-step", "analyze")
MODES = ("aware", "unaware", "nominal")
POLICIES = ("hold_nominal", "hold_zero", "halt")
TOLERANCES = ("boundary_band", "manifold_tol", "rank_tol")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    benchmark: str | None = None
    mode: str = "aware"
    dt: float | None = None
    horizon: float | None = None
    seed: int = 0
    samples: int = DEFAULT_SAMPLES
    threads: int | None = None
    out: str | None = None
    checks: tuple = CHECKS
    overrides: dict = field(default_factory=dict)
    policy: str = "hold_nominal"
    boundary_band: float = DEFAULT_BOUNDARY_BAND
    manifold_tol: float = DEFAULT_MANIFOLD_TOL
    rank_tol: float = DEFAULT_RANK_TOL
    grid_points: int = DEFAULT_GRID
    starts: int = DEFAULT_STARTS
    box_lo: tuple | None = None
    box_hi: tuple | None = None
    state: tuple | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.benchmark is None:
            raise ConfigError("a benchmark is required (--benchmark or 'benchmark' in the config file)")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {', '.join(POLICIES)}")
        for name in TOLERANCES:
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("dt", "horizon"):
            value = getattr(self, name)
            if value is not None and not float(value) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.samples < 1 or self.starts < 1 or self.grid_points < 2:
            raise ConfigError("samples and starts must be >= 1, grid_points >= 2")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        checks = tuple(self.checks)
        bad = [c for c in checks if c not in CHECKS]
        if bad or not checks:
            raise ConfigError(f"checks must be a non-empty subset of {','.join(CHECKS)}")
        object.__setattr__(self, "checks", checks)
        for name in ("box_lo", "box_hi", "state"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in value))
        if (self.box_lo is None) != (self.box_hi is None):
            raise ConfigError("box_lo and box_hi must be given together")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["checks"] = list(self.checks)
        out["overrides"] = dict(sorted(self.overrides.items()))
        return out


FILE_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "command")
_INT_KEYS = ("seed", "samples", "threads", "grid_points", "starts")
_FLOAT_KEYS = ("dt", "horizon") + TOLERANCES


def parse_override(text: str):
    """'K=V' with V parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form K=V")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in _INT_KEYS:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} has invalid value {value!r}") from None
    if key == "checks" and isinstance(value, str):
        return tuple(c.strip() for c in value.split(",") if c.strip())
    if key == "overrides" and not isinstance(value, dict):
        raise ConfigError("overrides must be a JSON object")
    return value


def load_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(data) - set(FILE_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return {k: _coerce(k, v) for k, v in data.items()}


def resolve(command: str, file_values: dict | None, flag_values: dict) -> RunConfig:
    """Flags over file values over defaults; overrides merge key by key."""
    merged = dict(file_values or {})
    overrides = dict(merged.pop("overrides", {}) or {})
    for key, value in flag_values.items():
        if key == "overrides":
            overrides.update(value)
        elif value is not None:
            merged[key] = _coerce(key, value)
    unknown = sorted(set(merged) - set(FILE_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return RunConfig(command=command, overrides=overrides, **merged)


def with_defaults(cfg: RunConfig, **kwargs) -> RunConfig:
    return replace(cfg, **kwargs)
