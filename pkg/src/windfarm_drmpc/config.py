"""Experiment configuration (JSON)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path


@dataclass
class ScenarioConfig:
    w0: float = 12.0
    TI: float = 0.1
    n_wt: int = 5
    spacing: float = 400.0
    T: int = 900
    turb_corr: float = 0.95
    dt: float = 1.0
    deficit_coef: float = 0.1
    wake_expansion: float = 0.075
    delta_TI: float = 0.05


@dataclass
class ModelConfig:
    # "surrogate" builds default_turbine per operating wind; otherwise a model file path
    source: str = "surrogate"
    params: dict = field(default_factory=dict)
    # "wake": linearize turbine i at the expected mean wake wind; "uniform": at w0
    operating_winds: str = "wake"


@dataclass
class ArmaConfig:
    orders: list = field(default_factory=lambda: [2, 3])
    training_samples: int = 1000
    training_seed_offset: int = 1_000_003
    file: str | None = None


@dataclass
class AmbiguityConfig:
    kappa: float = 2.36
    beta: float = 0.05
    method: str = "configured"
    proxy: float = 1.0
    sigma_diag: list | None = None
    file: str | None = None


@dataclass
class WeightConfig:
    r: float = 1.0
    lambda_penalty: float = 5.0
    rated_power: float = 5.0e6
    tower_scale: float = 0.27e6
    shaft_scale: float = 2.5e6


@dataclass
class ConstraintConfig:
    bound: float = 1.0e6
    prob: float = 0.9


@dataclass
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    arma: ArmaConfig = field(default_factory=ArmaConfig)
    ambiguity: AmbiguityConfig = field(default_factory=AmbiguityConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    horizon: int = 5
    p_ref0: float = 3.0e6
    power_tau: float = 0.5
    swf_cp_max: float = 0.45
    strict_balance: bool = False
    # wall-clock solve times make traces non-reproducible; off by default
    record_solve_time: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data):
    if data is None:
        return cls()
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> Config:
    return _build(Config, data)


def load_config(path) -> Config:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: Config, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2))
