"""Game primitives: parameters, strategies, beliefs, utilities and the PBE checker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .cost_model import CostModel, MisbehaviorStrategy, TrafficEnvironment

BELIEF_SUM_TOL = 1e-12
CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class GameParams:
    """Misbehavior costs, inspection cost and fines, all in USD."""

    p_t_h: float
    p_t_l: float
    p_d: float
    F_h: float
    F_l: float
    detect_prob: float = 1.0

    def __post_init__(self):
        if not self.p_t_l > 0.0:
            raise ValueError(f"p_t_l must be > 0, got {self.p_t_l}")
        if not self.p_d > 0.0:
            raise ValueError(f"p_d must be > 0, got {self.p_d}")
        for name in ("p_t_h", "F_h", "F_l"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite value >= 0, got {v}")
        if not 0.0 < self.detect_prob <= 1.0:
            raise ValueError(f"detect_prob must lie in (0, 1], got {self.detect_prob}")

    @property
    def fine_l(self) -> float:
        """Effective fine on type l: fine times detection probability."""
        return self.F_l * self.detect_prob

    @property
    def fine_h(self) -> float:
        return self.F_h * self.detect_prob


@dataclass(frozen=True)
class OperatorStrategy:
    sigma_d_H: float = 0.0
    sigma_d_L: float = 0.0

    def __post_init__(self):
        for name in ("sigma_d_H", "sigma_d_L"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class StrategyProfile:
    traveler: MisbehaviorStrategy
    operator: OperatorStrategy


@dataclass(frozen=True)
class Belief:
    b_h_given_H: float
    b_l_given_H: float
    b_h_given_L: float
    b_l_given_L: float
    off_path_H: bool = False
    off_path_L: bool = False

    def __post_init__(self):
        for name in ("b_h_given_H", "b_l_given_H", "b_h_given_L", "b_l_given_L"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if abs(self.b_h_given_H + self.b_l_given_H - 1.0) > BELIEF_SUM_TOL:
            raise ValueError("beliefs given H must sum to 1")
        if abs(self.b_h_given_L + self.b_l_given_L - 1.0) > BELIEF_SUM_TOL:
            raise ValueError("beliefs given L must sum to 1")

    def to_dict(self) -> dict:
        return {
            "h_given_H": self.b_h_given_H,
            "l_given_H": self.b_l_given_H,
            "h_given_L": self.b_h_given_L,
            "l_given_L": self.b_l_given_L,
            "off_path_H": self.off_path_H,
            "off_path_L": self.off_path_L,
        }


@dataclass(frozen=True)
class AgentUtilities:
    """Expected utilities per (type, server); ``-inf`` marks an unstable server."""

    u_h_H: float
    u_h_L: float
    u_l_H: float
    u_l_L: float


def agent_utilities(
    env: TrafficEnvironment, model: CostModel, params: GameParams, profile: StrategyProfile
) -> AgentUtilities:
    strat = profile.traveler
    c_high = model.cost_high(env, strat).as_float()
    c_low = model.cost_low(env, strat).as_float()
    op = profile.operator
    return AgentUtilities(
        u_h_H=-c_high,
        u_h_L=-c_low - params.p_t_h - params.F_h * op.sigma_d_L * params.detect_prob,
        u_l_H=-c_high - params.p_t_l - params.F_l * op.sigma_d_H * params.detect_prob,
        u_l_L=-c_low,
    )


def inspection_gain_H(params: GameParams, belief: Belief) -> float:
    """Coefficient of the H inspection rate in the operator's utility."""
    return -params.p_d + params.F_l * belief.b_l_given_H * params.detect_prob


def inspection_gain_L(params: GameParams, belief: Belief) -> float:
    return -params.p_d + params.F_h * belief.b_h_given_L * params.detect_prob


def operator_utilities(params: GameParams, profile: StrategyProfile, belief: Belief) -> tuple[float, float]:
    op = profile.operator
    return (
        inspection_gain_H(params, belief) * op.sigma_d_H,
        inspection_gain_L(params, belief) * op.sigma_d_L,
    )


def bayes_update(env: TrafficEnvironment, traveler: MisbehaviorStrategy) -> Belief:
    """Posterior over types given each signal.

    A zero-probability signal gets probability one on the type for whom the
    signal is truthful, and is flagged off-path.
    """
    theta = env.theta
    h_on_H = theta * (1.0 - traveler.sigma_h)
    l_on_H = (1.0 - theta) * traveler.sigma_l
    h_on_L = theta * traveler.sigma_h
    l_on_L = (1.0 - theta) * (1.0 - traveler.sigma_l)

    den_H = h_on_H + l_on_H
    if den_H > 0.0:
        bhH, blH, off_H = h_on_H / den_H, l_on_H / den_H, False
    else:
        bhH, blH, off_H = 1.0, 0.0, True
    den_L = h_on_L + l_on_L
    if den_L > 0.0:
        bhL, blL, off_L = h_on_L / den_L, l_on_L / den_L, False
    else:
        bhL, blL, off_L = 0.0, 1.0, True
    return Belief(bhH, blH, bhL, blL, off_H, off_L)


@dataclass(frozen=True)
class ConditionResult:
    name: str
    applies: bool
    passed: bool
    slack: float | None  # >= 0 means satisfied with margin; None when the premise is false

    def to_dict(self) -> dict:
        s = self.slack
        if s is not None and not math.isfinite(s):
            s = "unbounded" if s < 0 else "unbounded_above"
        return {"name": self.name, "applies": self.applies, "passed": self.passed, "slack": s}


@dataclass
class PbeReport:
    conditions: list[ConditionResult] = field(default_factory=list)
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def violated(self) -> list[str]:
        return [c.name for c in self.conditions if not c.passed]

    def get(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def min_slack(self) -> float:
        vals = [c.slack for c in self.conditions if c.slack is not None]
        return min(vals) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "violated": self.violated(),
            "conditions": [c.to_dict() for c in self.conditions],
        }


def _gap(a: float, b: float) -> float:
    # a - b, treating two equal infinities as a tie
    if math.isinf(a) and math.isinf(b) and (a > 0) == (b > 0):
        return 0.0
    return a - b


def _operator_regret(gain: float, rate: float) -> float:
    # best achievable minus achieved; the utility is linear in the rate
    if gain > 0.0:
        return gain * (1.0 - rate)
    return -gain * rate


def check_pbe(
    env: TrafficEnvironment,
    model: CostModel,
    params: GameParams,
    profile: StrategyProfile,
    belief: Belief,
    tol: float = 1e-9,
) -> PbeReport:
    """Evaluate every PBE condition for ``(profile, belief)``.

    Traveler conditions compare utilities with absolute tolerance ``tol``.
    Operator optimality uses the exact regret of the linear utility. Beliefs
    must match Bayes' rule on on-path signals.
    """
    if not tol > 0.0:
        raise ValueError("tol must be > 0")
    u = agent_utilities(env, model, params, profile)
    t = profile.traveler
    report = PbeReport(tol=tol)
    add = report.conditions.append

    def traveler_cond(name, premise, slack):
        if not premise:
            add(ConditionResult(name, False, True, None))
        else:
            add(ConditionResult(name, True, slack >= -tol, slack))

    traveler_cond("h_switch_to_L", t.sigma_h > 0.0, _gap(u.u_h_L, u.u_h_H))
    traveler_cond("h_stay_on_H", t.sigma_h < 1.0, _gap(u.u_h_H, u.u_h_L))
    traveler_cond("l_switch_to_H", t.sigma_l > 0.0, _gap(u.u_l_H, u.u_l_L))
    traveler_cond("l_stay_on_L", t.sigma_l < 1.0, _gap(u.u_l_L, u.u_l_H))

    op = profile.operator
    regret_H = _operator_regret(inspection_gain_H(params, belief), op.sigma_d_H)
    regret_L = _operator_regret(inspection_gain_L(params, belief), op.sigma_d_L)
    add(ConditionResult("operator_H", True, regret_H <= tol, -regret_H))
    add(ConditionResult("operator_L", True, regret_L <= tol, -regret_L))

    bayes = bayes_update(env, t)
    if bayes.off_path_H:
        add(ConditionResult("consistency_H", False, True, None))
    else:
        diff = abs(belief.b_h_given_H - bayes.b_h_given_H)
        add(ConditionResult("consistency_H", True, diff <= CONSISTENCY_TOL, -diff))
    if bayes.off_path_L:
        add(ConditionResult("consistency_L", False, True, None))
    else:
        diff = abs(belief.b_h_given_L - bayes.b_h_given_L)
        add(ConditionResult("consistency_L", True, diff <= CONSISTENCY_TOL, -diff))
    return report
