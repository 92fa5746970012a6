"""Scenario configuration: strict JSON schema and conversion to domain objects.

Units are fixed: USD for costs and fines, veh/hr for rates.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .cost_model import Mm1CostParams, TrafficEnvironment
from .game import GameParams

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TrafficConfig(_Strict):
    theta: float = Field(gt=0.0, lt=1.0, description="fraction of high-priority agents")
    lambda_total: float = Field(gt=0.0, description="total arrival rate, veh/hr")


class Mm1Config(_Strict):
    mu_H: float = Field(gt=0.0, description="service rate of server H, veh/hr")
    mu_L: float = Field(gt=0.0, description="service rate of server L, veh/hr")
    vot: float = Field(gt=0.0, description="value of time, USD/hr")


class CostModelConfig(_Strict):
    mm1: Mm1Config | None = None

    @model_validator(mode="after")
    def _one_tag(self):
        tags = [k for k in type(self).model_fields if getattr(self, k) is not None]
        if len(tags) != 1:
            raise ValueError(f"exactly one cost model tag required, got {tags or 'none'}")
        return self


class GameConfig(_Strict):
    p_t_h: float = Field(0.0, ge=0.0, description="type-h misbehavior cost, USD")
    p_t_l: float = Field(gt=0.0, description="type-l misbehavior cost, USD")
    p_d: float = Field(gt=0.0, description="inspection cost, USD")
    F_h: float = Field(0.0, ge=0.0, description="fine on type h, USD")
    F_l: float = Field(ge=0.0, description="fine on type l, USD")
    detect_prob: float = Field(1.0, gt=0.0, le=1.0)


class SolverConfig(_Strict):
    boundary_rel_tol: float = Field(1e-9, gt=0.0)
    utility_tol: float = Field(1e-9, gt=0.0)
    bisection_tol: float = Field(1e-12, gt=0.0)


class QueueCheckConfig(_Strict):
    arrival_rate: float = Field(gt=0.0)
    service_rate: float = Field(gt=0.0)
    horizon: int = Field(1_000_000, ge=10_000)
    rel_tol: float = Field(0.02, gt=0.0)


class VerifyConfig(_Strict):
    sigma_steps: int = Field(2000, ge=100)
    seed: int = Field(20240611, ge=0)
    draws: int = Field(20, ge=0)
    sigma_d_tol: float = Field(1e-6, gt=0.0)
    dynamics: bool = True
    damping: float = Field(0.2, gt=0.0, le=1.0)
    max_iter: int = Field(2000, ge=1)
    # None: check server H at its baseline and equilibrium demand
    queue_checks: list[QueueCheckConfig] | None = None


class AxisConfig(_Strict):
    variable: Literal["p_t_l", "p_d", "theta", "F_l"]
    min: float
    max: float
    steps: int = Field(ge=1)
    scale: Literal["linear", "log"] = "linear"

    @model_validator(mode="after")
    def _range(self):
        if self.max < self.min:
            raise ValueError("max must be >= min")
        if self.scale == "log" and self.min <= 0.0:
            raise ValueError("log axis needs min > 0")
        return self

    def values(self) -> list[float]:
        if self.steps == 1:
            return [float(self.min)]
        if self.scale == "log":
            return [float(v) for v in np.geomspace(self.min, self.max, self.steps)]
        return [float(v) for v in np.linspace(self.min, self.max, self.steps)]


class SweepConfig(_Strict):
    axes: list[AxisConfig] = Field(default_factory=list)
    workers: int = Field(1, ge=1)


class ScenarioConfig(_Strict):
    schema_version: Literal[1]
    traffic: TrafficConfig
    cost_model: CostModelConfig
    game: GameConfig
    solver: SolverConfig = SolverConfig()
    verify: VerifyConfig = VerifyConfig()
    sweep: SweepConfig = SweepConfig()

    def environment(self) -> TrafficEnvironment:
        return TrafficEnvironment(self.traffic.theta, self.traffic.lambda_total)

    def model(self):
        m = self.cost_model.mm1
        return Mm1CostParams(m.mu_H, m.mu_L, m.vot)

    def params(self) -> GameParams:
        g = self.game
        return GameParams(g.p_t_h, g.p_t_l, g.p_d, g.F_h, g.F_l, g.detect_prob)


class ConfigError(Exception):
    pass


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(data)


def etc_example(p_t_l: float = 0.5, p_d: float = 5.0, F_l: float = 100.0) -> dict:
    """Toll-evasion scenario: two 1700 veh/hr M/M/1 servers, 2400 veh/hr demand."""
    return {
        "schema_version": SCHEMA_VERSION,
        "traffic": {"theta": 0.3, "lambda_total": 2400.0},
        "cost_model": {"mm1": {"mu_H": 1700.0, "mu_L": 1700.0, "vot": 50.0}},
        "game": {"p_t_h": 0.0, "p_t_l": p_t_l, "p_d": p_d, "F_h": 0.0, "F_l": F_l, "detect_prob": 1.0},
    }
