"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

from .certificates import ExampleConstants
from .controller import DEFAULT_ZENO_CAP, ControllerMode, ModeKind, TriggerRule
from .dde_core import SolverConfig, scalar_delay_model

MODES = tuple(m.value for m in ModeKind)


class ConfigError(ValueError):
    """Bad configuration text; carries the offending line or key when known."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.key = key
        self.line = line

    def record(self) -> dict:
        return {"error": "config", "message": str(self), "key": self.key, "line": self.line}


@dataclass(frozen=True)
class RunConfig:
    model: str = "builtin"
    b: float = -0.1
    k: float = -0.2
    r: float = 16.0
    phi: float = 1.0
    mode: str = "open_loop"
    sigma0: float = 0.36
    sigma: Optional[float] = None
    chi_exponent: float = 2.0
    alpha1_exponent: float = 2.0
    h: float = 0.666
    beta: float = -0.293
    q: float = 3.0
    t0: float = 0.0
    dt: float = 0.01
    T: float = 100.0
    tol_event: float = 1e-9
    interpolation: str = "linear"
    zeno_cap: int = DEFAULT_ZENO_CAP
    trajectory_csv: str = "trajectory.csv"
    events_csv: str = "events.csv"
    report_json: str = "report.json"
    summary_json: str = "summary.json"
    plot_svg: str = ""

    # no random number generation anywhere in a run
    random_free: bool = True

    @property
    def trigger_sigma(self) -> float:
        return self.sigma0 if self.sigma is None else self.sigma

    def model_obj(self, impulses: bool = True):
        return scalar_delay_model(self.b, self.k, self.r, self.beta if impulses else 0.0)

    def rule(self) -> TriggerRule:
        return TriggerRule.power(self.trigger_sigma, self.chi_exponent, self.alpha1_exponent)

    def controller_mode(self, mode: Optional[str] = None) -> ControllerMode:
        kind = ModeKind(mode or self.mode)
        needs_h = kind in (ModeKind.IMPULSIVE_ONLY, ModeKind.HYBRID)
        return ControllerMode(kind, self.h if needs_h else None)

    def solver(self, horizon: Optional[float] = None) -> SolverConfig:
        return SolverConfig(dt=self.dt, horizon=self.T if horizon is None else horizon,
                            interpolation=self.interpolation, tol_event=self.tol_event, t0=self.t0)

    def constants(self) -> ExampleConstants:
        return ExampleConstants(b=self.b, k=self.k, r=self.r, sigma0=self.sigma0,
                                q=self.q, h=self.h, beta=self.beta)


_FIELDS = {f.name: f for f in fields(RunConfig) if f.name != "random_free"}
_FLOATS = {"b", "k", "r", "phi", "sigma0", "sigma", "chi_exponent", "alpha1_exponent",
           "h", "beta", "q", "t0", "dt", "T", "tol_event"}
_INTS = {"zeno_cap"}
_CUSTOM_KEYS = ("b", "k", "r", "phi")


def convert_value(key: str, raw: str, line: Optional[int] = None):
    try:
        if key in _FLOATS:
            if raw.lower() in ("none", ""):
                if key == "sigma":
                    return None
                raise ValueError
            return float(raw)
        if key in _INTS:
            return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}", key=key, line=line) from None
    return raw


def parse_config(text: str, overrides: Optional[list[str]] = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) plus ``key=value`` overrides."""
    values: dict = {}
    lines = [(n, ln) for n, ln in enumerate(text.splitlines(), start=1)]
    lines += [(None, o) for o in overrides or []]
    for n, raw_line in lines:
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            where = f"line {n}" if n is not None else f"override {raw_line!r}"
            raise ConfigError(f"{where}: expected 'key = value'", line=n)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=n)
        values[key] = convert_value(key, raw, n)
    cfg = RunConfig(**values)
    validate(cfg, explicit=set(values))
    return cfg


def validate(cfg: RunConfig, explicit: frozenset | set = frozenset()) -> None:
    for key in _FLOATS:
        v = getattr(cfg, key)
        if v is not None and not math.isfinite(v):
            raise ConfigError(f"{key} must be finite", key=key)
    if cfg.model not in ("builtin", "custom"):
        raise ConfigError(f"model must be builtin or custom, got {cfg.model!r}", key="model")
    if cfg.model == "custom":
        missing = [k for k in _CUSTOM_KEYS if k not in explicit]
        if missing:
            raise ConfigError(f"custom model needs {', '.join(missing)}", key=missing[0])
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}", key="mode")
    if not cfg.dt > 0:
        raise ConfigError("dt must be positive", key="dt")
    if cfg.r < 0:
        raise ConfigError("r must be nonnegative", key="r")
    if cfg.r > 0 and cfg.dt > cfg.r:
        raise ConfigError("dt must not exceed the delay r", key="dt")
    if not cfg.T > cfg.t0:
        raise ConfigError("T must exceed t0", key="T")
    if not cfg.tol_event > 0:
        raise ConfigError("tol_event must be positive", key="tol_event")
    if cfg.interpolation not in ("linear", "cubic"):
        raise ConfigError("interpolation must be linear or cubic", key="interpolation")
    if cfg.zeno_cap < 1:
        raise ConfigError("zeno_cap must be at least 1", key="zeno_cap")
    if "sigma" in explicit and "sigma0" in explicit and cfg.sigma is not None:
        raise ConfigError("give either sigma0 or sigma, not both", key="sigma")
    if cfg.mode in ("event_only", "hybrid"):
        if not cfg.trigger_sigma > 0:
            raise ConfigError("trigger ratio must be positive", key="sigma" if cfg.sigma is not None else "sigma0")
        for key in ("chi_exponent", "alpha1_exponent"):
            if not getattr(cfg, key) > 0:
                raise ConfigError(f"{key} must be positive", key=key)
    if cfg.mode in ("impulsive_only", "hybrid") and not cfg.h > 0:
        raise ConfigError("h must be positive", key="h")
    if not cfg.q > 1:
        raise ConfigError("q must exceed 1", key="q")


