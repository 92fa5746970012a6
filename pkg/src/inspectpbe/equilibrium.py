"""Closed-form PBE: misbehavior threshold, regime classification, solver and sweeps."""

from __future__ import annotations

import csv
import enum
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .cost_model import (
    CostModel,
    MisbehaviorStrategy,
    TrafficEnvironment,
    check_assumptions,
    delta_c,
    inverse_delta_c,
)
from .errors import AssumptionViolation, BoundaryParameters, InspectionGameError, InternalConsistencyError
from .game import (
    AgentUtilities,
    Belief,
    GameParams,
    OperatorStrategy,
    PbeReport,
    StrategyProfile,
    agent_utilities,
    check_pbe,
    operator_utilities,
)

REGIME_LABELS = ("A", "B1", "B2", "B3", "Boundary")


class NoInspectionEver:
    """Marker: the inspection cost is at or above the maximal expected fine."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_INSPECTION_EVER"


NO_INSPECTION_EVER = NoInspectionEver()


class BestResponse(enum.Enum):
    ZERO = "zero"
    INTERVAL01 = "interval01"
    ONE = "one"


@dataclass(frozen=True)
class Regime:
    label: str
    boundary_detail: str | None = None

    def __post_init__(self):
        if self.label not in REGIME_LABELS:
            raise ValueError(f"unknown regime label {self.label!r}")
        if self.label == "Boundary" and not self.boundary_detail:
            raise ValueError("Boundary regime needs a detail")
        if self.label != "Boundary" and self.boundary_detail is not None:
            raise ValueError("only Boundary carries a detail")

    @property
    def is_boundary(self) -> bool:
        return self.label == "Boundary"

    def to_dict(self) -> dict:
        return {"label": self.label, "boundary_detail": self.boundary_detail}


def misbehavior_threshold(env: TrafficEnvironment, params: GameParams):
    """Type-l misbehavior rate that leaves the operator indifferent about inspecting H.

    Returns :data:`NO_INSPECTION_EVER` when ``p_d >= (1 - theta) * fine``.
    """
    fine = params.fine_l
    theta = env.theta
    if params.p_d >= (1.0 - theta) * fine:
        return NO_INSPECTION_EVER
    return params.p_d * theta / ((1.0 - theta) * (fine - params.p_d))


def _near(a: float, b: float, rel_tol: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= rel_tol * max(abs(a), abs(b))


def operator_best_response(
    env: TrafficEnvironment, params: GameParams, sigma_l: float, rel_tol: float = 1e-9
) -> BestResponse:
    if not 0.0 <= sigma_l <= 1.0:
        raise ValueError(f"sigma_l must lie in [0, 1], got {sigma_l}")
    s_hat = misbehavior_threshold(env, params)
    if s_hat is NO_INSPECTION_EVER:
        return BestResponse.ZERO
    if _near(sigma_l, s_hat, rel_tol):
        return BestResponse.INTERVAL01
    return BestResponse.ZERO if sigma_l < s_hat else BestResponse.ONE


@dataclass(frozen=True)
class Thresholds:
    """Quantities the regime partition is defined by."""

    dc0: float
    max_expected_fine: float
    sigma_hat: float | None  # None when the operator never inspects
    dc_hat: float | None

    def to_dict(self) -> dict:
        return {
            "delta_c_0": self.dc0,
            "max_expected_fine": self.max_expected_fine,
            "sigma_hat": self.sigma_hat,
            "delta_c_sigma_hat": self.dc_hat,
        }


def regime_thresholds(env: TrafficEnvironment, model: CostModel, params: GameParams) -> Thresholds:
    s_hat = misbehavior_threshold(env, params)
    dc0 = delta_c(env, model, 0.0)
    if s_hat is NO_INSPECTION_EVER:
        return Thresholds(dc0, (1.0 - env.theta) * params.fine_l, None, None)
    return Thresholds(dc0, (1.0 - env.theta) * params.fine_l, s_hat, delta_c(env, model, s_hat))


_assumption_cache: dict = {}


def ensure_assumptions(env: TrafficEnvironment, model: CostModel, grid_n: int = 64) -> None:
    """Raise :class:`AssumptionViolation` if the model fails (A1)-(A3); results are cached."""
    try:
        key = (env, model, grid_n)
        report = _assumption_cache.get(key)
    except TypeError:  # unhashable model
        key, report = None, None
    if report is None:
        report = check_assumptions(env, model, grid_n)
        if key is not None:
            _assumption_cache[key] = report
    if not report.passed:
        raise AssumptionViolation(
            f"cost model violates {', '.join(report.failed_names())}", report=report
        )


def classify_thresholds(params: GameParams, th: Thresholds, rel_tol: float = 1e-9) -> Regime:
    """Regime of ``(p_t_l, p_d)`` given precomputed thresholds."""
    p = params.p_t_l
    if _near(p, th.dc0, rel_tol):
        return Regime("Boundary", "A/B boundary: p_t_l = dc(0)")
    if p > th.dc0:
        return Regime("A")
    if _near(params.p_d, th.max_expected_fine, rel_tol):
        return Regime("Boundary", "inspection-cost boundary: p_d = (1-theta)*F_l")
    if th.sigma_hat is None:
        return Regime("B1")
    upper = max(th.dc_hat, 0.0)
    lower = max(th.dc_hat - params.fine_l, 0.0)
    if upper > 0.0 and _near(p, upper, rel_tol):
        return Regime("Boundary", "B1/B2 boundary: p_t_l = dc(sigma_hat)")
    if lower > 0.0 and _near(p, lower, rel_tol):
        return Regime("Boundary", "B2/B3 boundary: p_t_l = dc(sigma_hat) - F_l")
    if p > upper:
        return Regime("B1")
    if p > lower:
        return Regime("B2")
    return Regime("B3")


def classify_regime(
    env: TrafficEnvironment,
    model: CostModel,
    params: GameParams,
    rel_tol: float = 1e-9,
    check: bool = True,
) -> Regime:
    if check:
        ensure_assumptions(env, model)
    return classify_thresholds(params, regime_thresholds(env, model, params), rel_tol)


@dataclass
class Equilibrium:
    profile: StrategyProfile
    belief: Belief
    regime: Regime
    diagnostics: PbeReport
    derived: Thresholds
    utilities: AgentUtilities
    operator_utility: tuple[float, float]
    costs: tuple[float, float]  # (c_H, c_L) at the equilibrium

    @property
    def sigma_l(self) -> float:
        return self.profile.traveler.sigma_l

    @property
    def sigma_d_H(self) -> float:
        return self.profile.operator.sigma_d_H

    def to_dict(self) -> dict:
        u = self.utilities
        return {
            "regime": self.regime.label,
            "boundary_detail": self.regime.boundary_detail,
            "strategies": {
                "sigma_h": self.profile.traveler.sigma_h,
                "sigma_l": self.profile.traveler.sigma_l,
                "sigma_d_H": self.profile.operator.sigma_d_H,
                "sigma_d_L": self.profile.operator.sigma_d_L,
            },
            "beliefs": self.belief.to_dict(),
            "utilities": {
                "u_h_H": u.u_h_H,
                "u_h_L": u.u_h_L,
                "u_l_H": u.u_l_H,
                "u_l_L": u.u_l_L,
                "u_d_H": self.operator_utility[0],
                "u_d_L": self.operator_utility[1],
            },
            "costs": {"c_H": self.costs[0], "c_L": self.costs[1]},
            "derived": self.derived.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
        }


def _belief_from_rate(theta: float, sigma_l: float) -> Belief:
    den = theta + (1.0 - theta) * sigma_l
    return Belief(theta / den, (1.0 - theta) * sigma_l / den, 0.0, 1.0)


def solve_pbe(
    env: TrafficEnvironment,
    model: CostModel,
    params: GameParams,
    rel_tol: float = 1e-9,
    utility_tol: float = 1e-9,
    bisection_tol: float = 1e-12,
    check: bool = True,
) -> Equilibrium:
    """Unique PBE of a non-boundary instance, in closed form per regime."""
    if check:
        ensure_assumptions(env, model)
    th = regime_thresholds(env, model, params)
    regime = classify_thresholds(params, th, rel_tol)
    if regime.is_boundary:
        raise BoundaryParameters(regime.boundary_detail, regime=regime)

    fine = params.fine_l
    theta = env.theta
    if regime.label == "A":
        sigma_l, sigma_d = 0.0, 0.0
        belief = Belief(1.0, 0.0, 0.0, 1.0)
    elif regime.label == "B1":
        sigma_l = inverse_delta_c(env, model, params.p_t_l, tol=bisection_tol, check=False)
        sigma_d = 0.0
        belief = _belief_from_rate(theta, sigma_l)
    elif regime.label == "B2":
        sigma_l = th.sigma_hat
        sigma_d = (th.dc_hat - params.p_t_l) / fine
        if sigma_d < -1e-9 or sigma_d > 1.0 + 1e-9:
            raise InternalConsistencyError(f"B2 inspection rate {sigma_d!r} outside [0, 1]")
        sigma_d = min(max(sigma_d, 0.0), 1.0)
        belief = Belief((fine - params.p_d) / fine, params.p_d / fine, 0.0, 1.0)
    else:
        sigma_l = inverse_delta_c(env, model, params.p_t_l + fine, tol=bisection_tol, check=False)
        sigma_d = 1.0
        belief = _belief_from_rate(theta, sigma_l)

    profile = StrategyProfile(MisbehaviorStrategy(0.0, sigma_l), OperatorStrategy(sigma_d, 0.0))
    report = check_pbe(env, model, params, profile, belief, tol=utility_tol)
    if not report.passed:
        raise InternalConsistencyError(
            f"regime {regime.label} solution fails PBE conditions {report.violated()}"
        )
    c_H = model.cost_high(env, profile.traveler).as_float()
    c_L = model.cost_low(env, profile.traveler).as_float()
    return Equilibrium(
        profile=profile,
        belief=belief,
        regime=regime,
        diagnostics=report,
        derived=th,
        utilities=agent_utilities(env, model, params, profile),
        operator_utility=operator_utilities(params, profile, belief),
        costs=(c_H, c_L),
    )


# --------------------------------------------------------------------------- sweeps

SWEEP_VARIABLES = ("p_t_l", "p_d", "theta", "F_l")
SWEEP_COLUMNS = (
    "p_t_l", "p_d", "theta", "F_l", "regime", "sigma_l_star", "sigma_dH_star",
    "u_l", "u_h", "u_d", "status",
)
MONO_TOL = 1e-9


@dataclass
class SweepRow:
    p_t_l: float
    p_d: float
    theta: float
    F_l: float
    regime: str | None = None
    sigma_l_star: float | None = None
    sigma_dH_star: float | None = None
    u_l: float | None = None
    u_h: float | None = None
    u_d: float | None = None
    status: str = "ok"

    def values(self) -> list:
        return [getattr(self, c) for c in SWEEP_COLUMNS]


@dataclass
class SweepTable:
    axes: list[tuple[str, list[float]]]
    rows: list[SweepRow] = field(default_factory=list)

    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for _, v in self.axes)

    def summary(self) -> dict:
        """Trend of sigma_l* and sigma_dH* along p_t_l and p_d, per regime."""
        out = {}
        shape = self.shape()
        names = [n for n, _ in self.axes]
        for var in ("p_t_l", "p_d"):
            if var not in names:
                continue
            k = names.index(var)
            diffs = {}
            for idx in itertools.product(*(range(n) for n in shape)):
                if idx[k] + 1 >= shape[k]:
                    continue
                nxt = idx[:k] + (idx[k] + 1,) + idx[k + 1:]
                a, b = self.rows[_flat(idx, shape)], self.rows[_flat(nxt, shape)]
                if a.status != "ok" or b.status != "ok" or a.regime != b.regime:
                    continue
                d = diffs.setdefault(a.regime, {"sigma_l_star": [], "sigma_dH_star": []})
                d["sigma_l_star"].append(b.sigma_l_star - a.sigma_l_star)
                d["sigma_dH_star"].append(b.sigma_dH_star - a.sigma_dH_star)
            out[var] = {
                reg: {q: trend(v) for q, v in d.items()} for reg, d in sorted(diffs.items())
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v)
                        for v in r.values()])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "columns": list(SWEEP_COLUMNS),
            "axes": [{"variable": n, "values": v} for n, v in self.axes],
            "rows": [dict(zip(SWEEP_COLUMNS, r.values())) for r in self.rows],
            "summary": self.summary(),
        }

    def regime_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for r in self.rows:
            key = r.regime if r.regime is not None else "error"
            counts[key] = counts.get(key, 0) + 1
        return counts


def _flat(idx, shape):
    f = 0
    for i, n in zip(idx, shape):
        f = f * n + i
    return f


def trend(diffs: list[float], tol: float = MONO_TOL) -> str:
    if not diffs:
        return "n/a"
    up = any(d > tol for d in diffs)
    down = any(d < -tol for d in diffs)
    if up and down:
        return "mixed"
    if up:
        return "increasing"
    if down:
        return "decreasing"
    return "constant"


def _solve_cell(args) -> SweepRow:
    env, model, params, rel_tol, utility_tol, bisection_tol = args
    row = SweepRow(params.p_t_l, params.p_d, env.theta, params.F_l)
    try:
        ensure_assumptions(env, model)
        th = regime_thresholds(env, model, params)
        regime = classify_thresholds(params, th, rel_tol)
        row.regime = regime.label
        if regime.is_boundary:
            row.status = "boundary"
            return row
        eq = solve_pbe(env, model, params, rel_tol, utility_tol, bisection_tol, check=False)
    except InspectionGameError as exc:
        row.status = f"error: {type(exc).__name__}: {exc}"
        return row
    row.sigma_l_star = eq.sigma_l
    row.sigma_dH_star = eq.sigma_d_H
    row.u_l = eq.utilities.u_l_L
    row.u_h = eq.utilities.u_h_H
    row.u_d = eq.operator_utility[0]
    return row


def sweep(
    env: TrafficEnvironment,
    model: CostModel,
    params: GameParams,
    axes: list[tuple[str, list[float]]],
    rel_tol: float = 1e-9,
    utility_tol: float = 1e-9,
    bisection_tol: float = 1e-12,
    workers: int = 1,
) -> SweepTable:
    """Solve every cell of the cartesian product of ``axes``.

    The first axis varies slowest. Cell errors are recorded in the row's
    status and never abort the sweep. Output order does not depend on
    ``workers``.
    """
    if not axes or any(len(v) == 0 for _, v in axes):
        raise ValueError("sweep needs at least one non-empty axis")
    for name, _ in axes:
        if name not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {name!r}; expected one of {SWEEP_VARIABLES}")

    tasks = []
    for combo in itertools.product(*(v for _, v in axes)):
        over = dict(zip((n for n, _ in axes), combo))
        cell_env = TrafficEnvironment(over.get("theta", env.theta), env.lambda_total)
        kw = {k: over[k] for k in ("p_t_l", "p_d", "F_l") if k in over}
        tasks.append((cell_env, model, replace(params, **kw), rel_tol, utility_tol, bisection_tol))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_solve_cell, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [_solve_cell(t) for t in tasks]
    return SweepTable([(n, list(v)) for n, v in axes], rows)
