"""Scenario configuration: nested dataclasses loaded from YAML.

Every section is a frozen dataclass; unknown keys, wrong types and
out-of-range values raise ``ConfigError`` naming the offending key path.
"""
from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


def _check(cond, path, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


@dataclass(frozen=True)
class ScenarioSection:
    mode: str = "model_free"
    n_sensors: int = 10
    formation_radius_m: float = 1.75
    source_position_m: tuple[float, float] = (35.254, 35.254)
    initial_centroid_m: tuple[float, float] = (4.0, 4.0)
    t_max: int = 30
    n_reps: int = 50
    master_seed: int = 0

    def validate(self, path="scenario"):
        _check(self.mode in ("model_free", "model_based"), f"{path}.mode",
               f"must be model_free or model_based, got {self.mode!r}")
        _check(self.n_sensors >= 1, f"{path}.n_sensors", "must be >= 1")
        _check(self.formation_radius_m > 0, f"{path}.formation_radius_m", "must be > 0")
        _check(self.t_max >= 1, f"{path}.t_max", "must be >= 1")
        _check(self.n_reps >= 1, f"{path}.n_reps", "must be >= 1")
        _check(self.master_seed >= 0, f"{path}.master_seed", "must be >= 0")


@dataclass(frozen=True)
class EnvironmentSection:
    grid_file: str | None = None
    # particle prior support [xmin, xmax, ymin, ymax]; defaults to the grid extent
    workspace_m: tuple[float, float, float, float] | None = None

    def validate(self, path="environment"):
        if self.workspace_m is not None:
            x0, x1, y0, y1 = self.workspace_m
            _check(x1 > x0 and y1 > y0, f"{path}.workspace_m", "needs xmin < xmax and ymin < ymax")


@dataclass(frozen=True)
class RssSection:
    p_tx_dbm: float = 18.0
    g_tx_dbi: float = 1.5
    l_tx_db: float = 0.0
    g_rx_dbi: float = 1.5
    l_rx_db: float = 0.0
    freq_mhz: float = 2400.0
    alpha_multiwall_db: float = 30.0
    beta_wall_db_per_m: float = 15.0
    rician_mu: float = 4.0
    rician_mu_is: str = "noncentrality"
    sigma_db: float = 20.0

    def validate(self, path="signal.rss"):
        _check(self.freq_mhz > 0, f"{path}.freq_mhz", "must be > 0")
        _check(self.sigma_db > 0, f"{path}.sigma_db", "must be > 0")
        _check(self.rician_mu >= 0, f"{path}.rician_mu", "must be >= 0")
        _check(self.rician_mu_is in ("noncentrality", "mean"), f"{path}.rician_mu_is",
               "must be noncentrality or mean")


@dataclass(frozen=True)
class QuadraticSection:
    scale: float = 1.0
    noise_sd: float = 0.0

    def validate(self, path="signal.quadratic"):
        _check(self.scale > 0, f"{path}.scale", "must be > 0")
        _check(self.noise_sd >= 0, f"{path}.noise_sd", "must be >= 0")


@dataclass(frozen=True)
class SignalSection:
    model: str = "rss"
    rss: RssSection = field(default_factory=RssSection)
    quadratic: QuadraticSection = field(default_factory=QuadraticSection)

    def validate(self, path="signal"):
        _check(self.model in ("rss", "quadratic"), f"{path}.model", "must be rss or quadratic")
        self.rss.validate(f"{path}.rss")
        self.quadratic.validate(f"{path}.quadratic")


@dataclass(frozen=True)
class RbffdSection:
    delta: float | None = None  # None: tuned to the nominal ring

    def validate(self, path="rbffd"):
        _check(self.delta is None or self.delta > 0, f"{path}.delta", "must be > 0")


@dataclass(frozen=True)
class CommSection:
    radius_m: float = 6.0

    def validate(self, path="comm"):
        _check(self.radius_m > 0, f"{path}.radius_m", "must be > 0")


@dataclass(frozen=True)
class MfSection:
    estimator: str = "distributed"
    k_max: int = 50
    k_meas: int | None = 10
    gamma0: float = 2.0
    gamma_p: float = 0.7
    rel_meas_var_m2: float = 0.4
    prior_precision: float = 1e-6
    freeze_after_meas: bool = True
    consensus_beta: float | None = None

    def validate(self, path="mf"):
        _check(self.estimator in ("distributed", "centralized"), f"{path}.estimator",
               "must be distributed or centralized")
        _check(self.k_max >= 1, f"{path}.k_max", "must be >= 1")
        _check(self.k_meas is None or self.k_meas >= 1, f"{path}.k_meas", "must be >= 1 or null")
        _check(self.gamma0 >= 0, f"{path}.gamma0", "must be >= 0")
        _check(0.5 < self.gamma_p <= 1.0, f"{path}.gamma_p", "must be in (0.5, 1]")
        _check(self.rel_meas_var_m2 > 0, f"{path}.rel_meas_var_m2", "must be > 0")
        _check(self.prior_precision > 0, f"{path}.prior_precision", "must be > 0")


@dataclass(frozen=True)
class MbSection:
    n_particles: int = 4000
    n_meas_per_step: int = 5
    n_z: int = 10
    gamma0: float = 10000.0
    gamma_p: float = 0.7
    sense_radius_m: float = math.inf

    def validate(self, path="mb"):
        _check(self.n_particles >= 1, f"{path}.n_particles", "must be >= 1")
        _check(self.n_meas_per_step >= 1, f"{path}.n_meas_per_step", "must be >= 1")
        _check(self.n_z >= 1, f"{path}.n_z", "must be >= 1")
        _check(self.gamma0 >= 0, f"{path}.gamma0", "must be >= 0")
        _check(0.5 < self.gamma_p <= 1.0, f"{path}.gamma_p", "must be in (0.5, 1]")
        _check(self.sense_radius_m > 0, f"{path}.sense_radius_m", "must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    signal: SignalSection = field(default_factory=SignalSection)
    rbffd: RbffdSection = field(default_factory=RbffdSection)
    comm: CommSection = field(default_factory=CommSection)
    mf: MfSection = field(default_factory=MfSection)
    mb: MbSection = field(default_factory=MbSection)
    base_dir: str = field(default=".", compare=False)

    def validate(self):
        for f in dataclasses.fields(self):
            if f.name != "base_dir":
                getattr(self, f.name).validate(f.name)
        if self.environment.grid_file is not None:
            p = self.grid_path
            _check(p.is_file(), "environment.grid_file", f"file not found: {p}")
        if self.scenario.mode == "model_based":
            _check(self.signal.model == "rss", "signal.model", "model_based mode needs the rss model")
            _check(self.environment.grid_file is not None or self.environment.workspace_m is not None,
                   "environment.workspace_m", "model_based mode needs a workspace or a grid file")
        if self.scenario.mode == "model_free" and self.mf.estimator == "distributed":
            _check(self.scenario.n_sensors >= 2, "scenario.n_sensors", "distributed mode needs >= 2 sensors")
        return self

    @property
    def grid_path(self) -> Path | None:
        g = self.environment.grid_file
        if g is None:
            return None
        p = Path(g)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def replace(self, **sections) -> "ScenarioConfig":
        """New config with some section fields changed, e.g. ``replace(scenario={"n_reps": 2})``."""
        kw = {}
        for name, changes in sections.items():
            kw[name] = dataclasses.replace(getattr(self, name), **changes)
        return dataclasses.replace(self, **kw).validate()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        if self.grid_path is not None:
            d["environment"]["grid_file"] = str(self.grid_path.resolve())
        return _plain(d)


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _coerce(value, tp, path):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            _check(type(None) in args, path, "may not be null")
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is tuple:
        args = typing.get_args(tp)
        _check(isinstance(value, (list, tuple)) and len(value) == len(args), path,
               f"expected a list of {len(args)} numbers")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if tp is bool:
        _check(isinstance(value, bool), path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        _check(isinstance(value, int) and not isinstance(value, bool), path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), path,
               f"expected a number, got {value!r}")
        _check(not math.isnan(value), path, "may not be NaN")
        return float(value)
    if tp is str:
        _check(isinstance(value, str), path, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported field type {tp}")


def _build(cls, data, path):
    if data is None:
        data = {}
    _check(isinstance(data, dict), path or "<root>", "expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.name != "base_dir"}
    for key in data:
        _check(key in names, f"{path}.{key}" if path else str(key), "unknown key")
    kw = {k: _coerce(v, hints[k], f"{path}.{k}" if path else k) for k, v in data.items()}
    return cls(**kw)


def config_from_dict(data: dict, base_dir=".") -> ScenarioConfig:
    cfg = _build(ScenarioConfig, data, "")
    return dataclasses.replace(cfg, base_dir=str(base_dir)).validate()


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return config_from_dict(data or {}, base_dir=path.parent)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
