"""JSON experiment configuration: system definitions, Xi data, battery and numerics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

from .battery import DEFAULT_DT, DEFAULT_HORIZON, InputBattery
from .expr import ExpressionError
from .iqc import XiConstraint
from .ni_analysis import BandConfig
from .signal import FreqGrid
from .sysmodel import BUILTIN_NAMES, LTI, ModelError, Nonlinear, Parallel, Scaled, builtin

__all__ = ["ConfigError", "Numerics", "ExperimentConfig", "load_config", "XI_PRESETS"]

SCHEMA_VERSION = 1

XI_PRESETS = {
    "xi1": [[0.0, 1.0], [1.0, 0.0]],
    "xi2": [[1.0, 0.0], [0.0, -1.0]],
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class Numerics:
    dt: float = DEFAULT_DT
    horizon: float = DEFAULT_HORIZON
    omega_max: float = 100.0
    omega_count: int = 4096
    omega_lo_star: float = 0.05
    omega_hi_star: float = 50.0
    probe_bands: tuple = ((0.05, 50.0), (0.02, 50.0), (0.05, 80.0), (0.02, 80.0))
    tau_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    pulse_width: float = 0.01
    loop_horizon: float = 50.0
    decay_below: float = 0.1
    grow_above: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "probe_bands", tuple(tuple(float(v) for v in b) for b in self.probe_bands))
        object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("numerics.dt must be positive")
        if self.horizon <= 0 or self.loop_horizon <= 0:
            raise ConfigError("horizons must be positive")
        if self.omega_max > math.pi / self.dt:
            raise ConfigError(f"omega_max {self.omega_max:g} exceeds Nyquist {math.pi / self.dt:g}")
        if not self.tau_grid or any(not 0.0 <= t <= 1.0 for t in self.tau_grid):
            raise ConfigError("tau_grid values must lie in [0, 1]")
        if not 0 < self.pulse_width < self.loop_horizon:
            raise ConfigError("pulse_width must lie in (0, loop_horizon)")
        if self.decay_below > self.grow_above:
            raise ConfigError("decay_below must not exceed grow_above")
        try:
            self.bands()
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def bands(self):
        return BandConfig(self.omega_lo_star, self.omega_hi_star, self.probe_bands)

    def grid(self):
        return FreqGrid(self.omega_max, self.omega_count)


def _xi_from(data, where):
    if data is None:
        return None
    if isinstance(data, str):
        if data not in XI_PRESETS:
            raise ConfigError(f"{where}: unknown preset {data!r}; choose from {sorted(XI_PRESETS)}")
        return XiConstraint(XI_PRESETS[data], 0.0)
    if not isinstance(data, dict) or "xi" not in data:
        raise ConfigError(f"{where} must be a preset name or an object with 'xi' and 'epsilon'")
    raw = data["xi"]
    if isinstance(raw, str):
        raw = XI_PRESETS.get(raw)
        if raw is None:
            raise ConfigError(f"{where}: unknown preset {data['xi']!r}")
    try:
        return XiConstraint(raw, float(data.get("epsilon", 0.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    systems: dict = field(default_factory=dict)
    xi: dict | str | None = None
    xi_inf: dict | str | None = None
    battery: dict = field(default_factory=lambda: {"seed": 0, "count": 50})
    numerics: Numerics = field(default_factory=Numerics)

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        unknown = set(data) - {"schema_version", "systems", "xi", "xi_inf", "battery", "numerics"}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        num = data.get("numerics", {})
        allowed = {f.name for f in fields(Numerics)}
        if set(num) - allowed:
            raise ConfigError(f"unknown numerics keys: {sorted(set(num) - allowed)}")
        try:
            numerics = Numerics(**num)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        bat = dict(data.get("battery", {}))
        if set(bat) - {"seed", "count"}:
            raise ConfigError("battery accepts only 'seed' and 'count'")
        battery = {"seed": int(bat.get("seed", 0)), "count": int(bat.get("count", 50))}
        systems = data.get("systems", {})
        if not isinstance(systems, dict):
            raise ConfigError("systems must be an object mapping names to definitions")
        cfg = cls(systems, data.get("xi"), data.get("xi_inf"), battery, numerics)
        cfg.validate()
        return cfg

    def to_dict(self):
        num = asdict(self.numerics)
        num["probe_bands"] = [list(b) for b in self.numerics.probe_bands]
        num["tau_grid"] = list(self.numerics.tau_grid)
        out = {
            "schema_version": SCHEMA_VERSION,
            "systems": self.systems,
            "battery": dict(self.battery),
            "numerics": num,
        }
        if self.xi is not None:
            out["xi"] = self.xi
        if self.xi_inf is not None:
            out["xi_inf"] = self.xi_inf
        return json.loads(json.dumps(out))

    def with_seed(self, seed):
        return replace(self, battery={**self.battery, "seed": int(seed)})

    def with_numerics(self, **kw):
        try:
            return replace(self, numerics=replace(self.numerics, **kw))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self):
        for name in self.systems:
            self.system(name)
        self.xi_constraint()
        self.xi_inf_constraint()
        if self.battery["count"] < 1:
            raise ConfigError("battery count must be positive")
        try:
            self.make_battery()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------------
    def make_battery(self):
        n = self.numerics
        return InputBattery(seed=self.battery["seed"], count=self.battery["count"], dt=n.dt, horizon=n.horizon)

    def xi_constraint(self, override=None, epsilon=None):
        c = _xi_from(override if override is not None else self.xi, "xi")
        if c is not None and epsilon is not None:
            c = c.with_epsilon(epsilon)
        return c

    def xi_inf_constraint(self):
        return _xi_from(self.xi_inf, "xi_inf")

    def system(self, name, _seen=None):
        """Resolve ``name`` against the configured systems, then the builtins."""
        seen = _seen or set()
        if name in seen:
            raise ConfigError(f"system {name!r} is defined in terms of itself")
        if name not in self.systems:
            if name in BUILTIN_NAMES:
                return builtin(name)
            raise ConfigError(f"unknown system {name!r}")
        spec = self.systems[name]
        seen = seen | {name}
        try:
            return self._build(name, spec, seen)
        except (ModelError, ExpressionError, TypeError, KeyError) as exc:
            raise ConfigError(f"system {name!r}: {exc}") from exc

    def _build(self, name, spec, seen):
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ConfigError(f"system {name!r} needs exactly one of builtin/tf/nonlinear/scaled/parallel")
        (kind, body), = spec.items()
        if kind == "builtin":
            return builtin(body)
        if kind == "tf":
            return LTI.from_tf([float(v) for v in body["num"]], [float(v) for v in body["den"]], name=name)
        if kind == "nonlinear":
            if "n_x" in body and int(body["n_x"]) != len(body["f"]):
                raise ConfigError(f"system {name!r}: n_x={body['n_x']} but {len(body['f'])} state equations")
            return Nonlinear.from_exprs(list(body["f"]), list(body["h"]), n=int(body.get("n", 1)), name=name)
        if kind == "scaled":
            return Scaled(float(body["tau"]), self.system(body["of"], seen), name=name)
        if kind == "parallel":
            left, right = body
            return Parallel(self.system(left, seen), self.system(right, seen), name=name)
        raise ConfigError(f"system {name!r}: unknown kind {kind!r}")


def load_config(path=None):
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)
