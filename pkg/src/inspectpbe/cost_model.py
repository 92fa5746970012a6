"""Congestion cost model: server costs, the incentive gap and its inverse.

Costs are in USD, rates in veh/hr. A cost model is any object exposing
``cost_high(env, strat)`` and ``cost_low(env, strat)`` returning
:class:`ServerCost`; :class:`Mm1CostParams` is the built-in two-queue model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import LUnstable, NotMonotone, TargetAboveMax, TargetBelowMin

# Marker for a cost gap that diverges to minus infinity (server H unstable).
UNBOUNDED_BELOW = -math.inf


@dataclass(frozen=True)
class TrafficEnvironment:
    theta: float
    lambda_total: float

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.lambda_total > 0.0:
            raise ValueError(f"lambda_total must be > 0, got {self.lambda_total}")


@dataclass(frozen=True)
class MisbehaviorStrategy:
    sigma_h: float = 0.0
    sigma_l: float = 0.0

    def __post_init__(self):
        for name in ("sigma_h", "sigma_l"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class ServerCost:
    """Travel cost of one server; ``value is None`` means the queue is unstable."""

    value: float | None

    @classmethod
    def unstable_cost(cls) -> ServerCost:
        return cls(None)

    @property
    def unstable(self) -> bool:
        return self.value is None

    @property
    def finite(self) -> bool:
        return self.value is not None

    def as_float(self) -> float:
        return math.inf if self.value is None else self.value

    def to_json(self):
        return "unstable" if self.value is None else self.value


class CostModel(Protocol):
    def cost_high(self, env: TrafficEnvironment, strat: MisbehaviorStrategy) -> ServerCost: ...

    def cost_low(self, env: TrafficEnvironment, strat: MisbehaviorStrategy) -> ServerCost: ...


@dataclass(frozen=True)
class Mm1CostParams:
    """Two parallel M/M/1 servers; cost = VoT times expected system time."""

    mu_H: float
    mu_L: float
    vot: float

    def __post_init__(self):
        for name in ("mu_H", "mu_L", "vot"):
            v = getattr(self, name)
            if not v > 0.0:
                raise ValueError(f"{name} must be > 0, got {v}")

    def cost_high(self, env, strat):
        return cost_high(env, self, strat)

    def cost_low(self, env, strat):
        return cost_low(env, self, strat)


def demand_high(env: TrafficEnvironment, strat: MisbehaviorStrategy) -> float:
    lam = env.lambda_total
    return env.theta * lam * (1.0 - strat.sigma_h) + (1.0 - env.theta) * lam * strat.sigma_l


def demand_low(env: TrafficEnvironment, strat: MisbehaviorStrategy) -> float:
    lam = env.lambda_total
    return (1.0 - env.theta) * lam * (1.0 - strat.sigma_l) + env.theta * lam * strat.sigma_h


def _mm1_cost(demand: float, mu: float, vot: float) -> ServerCost:
    # demand == mu is unstable: the stable branch needs a strict inequality
    if demand < mu:
        return ServerCost(vot / (mu - demand))
    return ServerCost.unstable_cost()


def cost_high(env: TrafficEnvironment, params: Mm1CostParams, strat: MisbehaviorStrategy) -> ServerCost:
    return _mm1_cost(demand_high(env, strat), params.mu_H, params.vot)


def cost_low(env: TrafficEnvironment, params: Mm1CostParams, strat: MisbehaviorStrategy) -> ServerCost:
    return _mm1_cost(demand_low(env, strat), params.mu_L, params.vot)


def delta_c(env: TrafficEnvironment, model: CostModel, sigma_l: float) -> float:
    """Cost gap c_L - c_H when type-l agents misbehave at rate ``sigma_l``.

    Type-h agents are held compliant. Returns ``UNBOUNDED_BELOW`` when server
    H is unstable; raises :class:`LUnstable` when server L is.
    """
    strat = MisbehaviorStrategy(0.0, sigma_l)
    c_low = model.cost_low(env, strat)
    if c_low.unstable:
        raise LUnstable(f"server L unstable at sigma_l={sigma_l!r}")
    c_high = model.cost_high(env, strat)
    if c_high.unstable:
        return UNBOUNDED_BELOW
    return c_low.value - c_high.value


def stability_bound(env: TrafficEnvironment, model: CostModel, tol: float = 1e-15) -> float:
    """Largest sampled sigma_l in [0, 1] at which server H is still stable.

    Returns 1.0 when H is stable under full type-l misbehavior, and -1.0 when
    H is unstable even without misbehavior.
    """
    def stable(s):
        return model.cost_high(env, MisbehaviorStrategy(0.0, s)).finite

    if stable(1.0):
        return 1.0
    if not stable(0.0):
        return -1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def check_gap_decreasing(env: TrafficEnvironment, model: CostModel, n: int = 65) -> None:
    """Raise :class:`NotMonotone` unless the cost gap strictly decreases on a sample grid."""
    s_max = stability_bound(env, model)
    if s_max < 0.0:
        raise NotMonotone("server H unstable at sigma_l = 0")
    prev = None
    for s in np.linspace(0.0, s_max, n):
        try:
            d = delta_c(env, model, float(s))
        except LUnstable as exc:
            raise NotMonotone(str(exc)) from exc
        if prev is not None and not d < prev[1]:
            raise NotMonotone(
                f"cost gap not strictly decreasing: dc({prev[0]:.6g})={prev[1]:.6g}, "
                f"dc({s:.6g})={d:.6g}"
            )
        prev = (float(s), d)


def inverse_delta_c(
    env: TrafficEnvironment,
    model: CostModel,
    target: float,
    tol: float = 1e-12,
    check: bool = True,
) -> float:
    """Misbehavior rate at which the cost gap equals ``target``.

    Bracketed bisection on the strictly decreasing gap. The right end of the
    bracket approaches the stability bound of server H geometrically until the
    gap there drops below ``target``.
    """
    if check:
        check_gap_decreasing(env, model)
    d0 = delta_c(env, model, 0.0)
    if target > d0:
        raise TargetAboveMax(f"target {target!r} exceeds dc(0) = {d0!r}")
    if target == d0:
        return 0.0

    s_max = stability_bound(env, model)
    lo = 0.0
    if s_max >= 1.0 and delta_c(env, model, 1.0) > target:
        raise TargetBelowMin(f"target {target!r} below dc(1) = {delta_c(env, model, 1.0)!r}")
    if s_max >= 1.0:
        hi = 1.0
    else:
        eps = 0.5 * s_max
        hi = s_max - eps
        while delta_c(env, model, hi) > target:
            lo = hi
            eps *= 0.5
            nxt = s_max - eps
            if nxt <= hi:
                raise TargetBelowMin(f"no root for target {target!r} below the stability bound")
            hi = nxt

    f_lo = delta_c(env, model, lo) - target
    f_hi = delta_c(env, model, hi) - target
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = delta_c(env, model, mid) - target
        if f_mid > 0.0:
            lo, f_lo = mid, f_mid
        elif f_mid < 0.0:
            hi, f_hi = mid, f_mid
        else:
            return mid
    return lo if abs(f_lo) <= abs(f_hi) else hi


@dataclass
class AssumptionCheck:
    name: str
    passed: bool = True
    failures: list[str] = field(default_factory=list)
    max_failures: int = 5

    def fail(self, msg: str) -> None:
        self.passed = False
        if len(self.failures) < self.max_failures:
            self.failures.append(msg)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "failures": list(self.failures)}


@dataclass
class AssumptionReport:
    a1: AssumptionCheck
    a2: AssumptionCheck
    a3: AssumptionCheck

    @property
    def passed(self) -> bool:
        return self.a1.passed and self.a2.passed and self.a3.passed

    def failed_names(self) -> list[str]:
        return [c.name for c in (self.a1, self.a2, self.a3) if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "A1": self.a1.to_dict(),
            "A2": self.a2.to_dict(),
            "A3": self.a3.to_dict(),
        }


def _fmt(c: float) -> str:
    return "unstable" if math.isinf(c) else f"{c:.9g}"


def _check_monotone(check, label, pairs, increasing):
    # pairs: iterable of (where_a, c_a, where_b, c_b) with b the larger argument
    for wa, ca, wb, cb in pairs:
        both_finite = math.isfinite(ca) and math.isfinite(cb)
        if increasing:
            ok = cb > ca if both_finite else cb >= ca
        else:
            ok = cb < ca if both_finite else cb <= ca
        if not ok:
            check.fail(f"{label}: c({wa})={_fmt(ca)} vs c({wb})={_fmt(cb)}")


def check_assumptions(env: TrafficEnvironment, model: CostModel, grid_n: int = 64) -> AssumptionReport:
    """Sampled check of (A1)-(A3) for an opaque cost model.

    (A2) is strict between finite neighbours on a grid_n x grid_n lattice.
    (A3) is checked weakly along the sigma_h = 0 slice, the only slice the
    equilibrium analysis evaluates costs on.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")

    def ch(e, sh, sl):
        return model.cost_high(e, MisbehaviorStrategy(sh, sl)).as_float()

    def cl(e, sh, sl):
        return model.cost_low(e, MisbehaviorStrategy(sh, sl)).as_float()

    a1 = AssumptionCheck("A1")
    h00, l00 = ch(env, 0.0, 0.0), cl(env, 0.0, 0.0)
    h01, l01 = ch(env, 0.0, 1.0), cl(env, 0.0, 1.0)
    if not math.isfinite(h00):
        a1.fail("c_H(0,0) not finite")
    if not math.isfinite(l00):
        a1.fail("c_L(0,0) not finite")
    if not h00 < l00:
        a1.fail(f"c_H(0,0)={_fmt(h00)} not < c_L(0,0)={_fmt(l00)}")
    if not h01 > l01:
        a1.fail(f"c_H(0,1)={_fmt(h01)} not > c_L(0,1)={_fmt(l01)}")

    grid = [float(x) for x in np.linspace(0.0, 1.0, grid_n)]
    H = [[ch(env, sh, sl) for sl in grid] for sh in grid]
    L = [[cl(env, sh, sl) for sl in grid] for sh in grid]
    a2 = AssumptionCheck("A2")
    n = grid_n
    for i in range(n):
        for j in range(n - 1):
            # along sigma_l at fixed sigma_h = grid[i]
            w0, w1 = f"{grid[i]:.4g},{grid[j]:.4g}", f"{grid[i]:.4g},{grid[j + 1]:.4g}"
            _check_monotone(a2, "c_H increasing in sigma_l", [(w0, H[i][j], w1, H[i][j + 1])], True)
            _check_monotone(a2, "c_L decreasing in sigma_l", [(w0, L[i][j], w1, L[i][j + 1])], False)
            # along sigma_h at fixed sigma_l = grid[i]
            v0, v1 = f"{grid[j]:.4g},{grid[i]:.4g}", f"{grid[j + 1]:.4g},{grid[i]:.4g}"
            _check_monotone(a2, "c_H decreasing in sigma_h", [(v0, H[j][i], v1, H[j + 1][i])], False)
            _check_monotone(a2, "c_L increasing in sigma_h", [(v0, L[j][i], v1, L[j + 1][i])], True)

    a3 = AssumptionCheck("A3")
    thetas = [k / (grid_n + 1) for k in range(1, grid_n + 1)]
    envs = [TrafficEnvironment(t, env.lambda_total) for t in thetas]
    for sl in grid:
        hs = [ch(e, 0.0, sl) for e in envs]
        ls = [cl(e, 0.0, sl) for e in envs]
        for k in range(len(envs) - 1):
            t0, t1 = thetas[k], thetas[k + 1]
            if not hs[k + 1] >= hs[k]:
                a3.fail(f"c_H decreases in theta at sigma_l={sl:.4g}: "
                        f"theta {t0:.4g}->{t1:.4g}, {_fmt(hs[k])}->{_fmt(hs[k + 1])}")
            if not ls[k + 1] <= ls[k]:
                a3.fail(f"c_L increases in theta at sigma_l={sl:.4g}: "
                        f"theta {t0:.4g}->{t1:.4g}, {_fmt(ls[k])}->{_fmt(ls[k + 1])}")
    return AssumptionReport(a1, a2, a3)
