"""Independent oracles for the closed-form solver.

* :func:`grid_search_pbe` scans type-l misbehavior rates against each operator
  branch using only utilities, Bayes' rule and the PBE checker.
* :func:`best_response_iterate` runs damped alternating best responses.
* :func:`simulate_mm1` estimates the M/M/1 mean system time by simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .cost_model import CostModel, MisbehaviorStrategy, TrafficEnvironment, delta_c, inverse_delta_c
from .equilibrium import (
    BestResponse,
    Equilibrium,
    classify_regime,
    operator_best_response,
    solve_pbe,
)
from .errors import UnstableQueue
from .game import (
    Belief,
    GameParams,
    OperatorStrategy,
    PbeReport,
    StrategyProfile,
    agent_utilities,
    bayes_update,
    check_pbe,
    inspection_gain_H,
)

RNG_NAME = "numpy.random.PCG64"


# --------------------------------------------------------------------------- grid search


@dataclass(frozen=True)
class Candidate:
    profile: StrategyProfile
    belief: Belief
    max_slack: float  # worst (most negative) slack among applicable conditions

    @property
    def sigma_l(self) -> float:
        return self.profile.traveler.sigma_l

    @property
    def sigma_d_H(self) -> float:
        return self.profile.operator.sigma_d_H


@dataclass
class GridSearchResult:
    candidates: list[Candidate]
    sigma_steps: int
    branches: tuple[str, ...] = ("zero", "interior", "one")
    tol: float = 1e-9

    @property
    def step(self) -> float:
        return 1.0 / self.sigma_steps

    def clusters(self) -> list[list[Candidate]]:
        """Passing candidates grouped when within two grid steps on sigma_l."""
        out: list[list[Candidate]] = []
        for c in sorted(self.candidates, key=lambda c: (c.sigma_l, c.sigma_d_H)):
            if out and c.sigma_l - out[-1][-1].sigma_l <= 2.0 * self.step:
                out[-1].append(c)
            else:
                out.append([c])
        return out

    @property
    def unique(self) -> bool:
        return len(self.clusters()) == 1

    def matches(self, eq: Equilibrium, sigma_d_tol: float = 1e-6) -> bool:
        """True iff there is exactly one cluster and it contains the closed-form point."""
        cl = self.clusters()
        if len(cl) != 1:
            return False
        return any(
            abs(c.sigma_l - eq.sigma_l) <= 2.0 * self.step
            and abs(c.sigma_d_H - eq.sigma_d_H) <= sigma_d_tol
            for c in cl[0]
        )

    def to_dict(self) -> dict:
        return {
            "sigma_steps": self.sigma_steps,
            "branches": list(self.branches),
            "tol": self.tol,
            "n_candidates": len(self.candidates),
            "n_clusters": len(self.clusters()),
            "candidates": [
                {"sigma_l": c.sigma_l, "sigma_d_H": c.sigma_d_H, "max_slack": c.max_slack}
                for c in self.candidates
            ],
        }


def _bisect_sign_change(f, lo, hi, f_lo):
    # f(lo) and f(hi) have opposite signs (or f(hi) is -inf); bisect to full precision
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid


def grid_search_pbe(
    env: TrafficEnvironment,
    model: CostModel,
    params: GameParams,
    sigma_steps: int = 2000,
    tol: float = 1e-9,
) -> GridSearchResult:
    """Brute-force PBE search over a sigma_l grid.

    Type h is held compliant and L is never inspected. For the pure operator
    branches (inspect H with rate 0 or 1) the type-l utility gap is scanned
    for sign changes; for the interior branch the operator's inspection gain
    is scanned instead and the inspection rate is then taken from the
    type-l indifference condition. Every bracketed root, together with the
    grid corners, is refined by bisection inside its cell and then run
    through :func:`check_pbe`; only passing candidates are returned.
    """
    if sigma_steps < 100:
        raise ValueError("sigma_steps must be >= 100")
    grid = [i / sigma_steps for i in range(sigma_steps + 1)]

    def profile(s, d):
        return StrategyProfile(MisbehaviorStrategy(0.0, s), OperatorStrategy(d, 0.0))

    def l_gap(s, d):
        u = agent_utilities(env, model, params, profile(s, d))
        return u.u_l_H - u.u_l_L

    def op_gain(s):
        return inspection_gain_H(params, bayes_update(env, MisbehaviorStrategy(0.0, s)))

    trial: list[tuple[float, float]] = []
    for d in (0.0, 1.0):
        vals = [l_gap(s, d) for s in grid]
        trial += [(0.0, d), (1.0, d)]
        for i in range(sigma_steps):
            a, b = vals[i], vals[i + 1]
            if a == 0.0:
                trial.append((grid[i], d))
            elif (a > 0.0) != (b > 0.0) and b != 0.0:
                root = _bisect_sign_change(lambda s: l_gap(s, d), grid[i], grid[i + 1], a)
                trial.append((root, d))

    gains = [op_gain(s) for s in grid]
    for i in range(sigma_steps + 1):
        roots = []
        if gains[i] == 0.0:
            roots.append(grid[i])
        elif i < sigma_steps and (gains[i] > 0.0) != (gains[i + 1] > 0.0) and gains[i + 1] != 0.0:
            roots.append(_bisect_sign_change(op_gain, grid[i], grid[i + 1], gains[i]))
        for s in roots:
            # inspection rate that makes type l indifferent between H and L
            d = l_gap(s, 0.0) / params.fine_l if params.fine_l > 0 else -1.0
            if 0.0 < d < 1.0:
                trial.append((s, d))

    passers = []
    seen = set()
    for s, d in trial:
        if (s, d) in seen:
            continue
        seen.add((s, d))
        prof = profile(s, d)
        belief = bayes_update(env, prof.traveler)
        rep = check_pbe(env, model, params, prof, belief, tol=tol)
        if rep.passed:
            passers.append(Candidate(prof, belief, rep.min_slack))
    return GridSearchResult(passers, sigma_steps, tol=tol)


# --------------------------------------------------------------------------- random draws


@dataclass
class DrawOutcome:
    params: GameParams
    regime: str
    sigma_l: float
    sigma_d_H: float
    n_clusters: int
    matched: bool
    grid_sigma_l: float | None
    grid_sigma_d_H: float | None

    def to_dict(self) -> dict:
        p = self.params
        return {
            "p_t_l": p.p_t_l, "p_d": p.p_d, "F_l": p.F_l, "regime": self.regime,
            "sigma_l": self.sigma_l, "sigma_d_H": self.sigma_d_H,
            "grid_sigma_l": self.grid_sigma_l, "grid_sigma_d_H": self.grid_sigma_d_H,
            "n_clusters": self.n_clusters, "matched": self.matched,
        }


def draw_parameters(
    env: TrafficEnvironment,
    model: CostModel,
    base: GameParams,
    n: int,
    seed: int,
    rel_tol: float = 1e-9,
    max_tries: int = 100_000,
) -> list[GameParams]:
    """Seeded non-boundary parameter draws cycling through regimes A, B1, B2, B3.

    p_t_l is log-uniform over [0.01, 10] * dc(0), the type-l fine log-uniform
    over [0.1, 10] * dc(0), and p_d log-uniform over [0.01, 2] * (1 - theta) * fine.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    dc0 = delta_c(env, model, 0.0)
    targets = ("A", "B1", "B2", "B3")
    out = []
    for i in range(n):
        want = targets[i % 4]
        for _ in range(max_tries):
            u = rng.uniform(size=3)
            p_t_l = dc0 * 10.0 ** (-2.0 + 3.0 * u[0])
            F_l = dc0 * 10.0 ** (-1.0 + 2.0 * u[1])
            fine = F_l * base.detect_prob
            p_d = (1.0 - env.theta) * fine * 10.0 ** (-2.0 + math.log10(200.0) * u[2])
            params = GameParams(base.p_t_h, p_t_l, p_d, base.F_h, F_l, base.detect_prob)
            regime = classify_regime(env, model, params, rel_tol, check=False)
            if regime.label == want:
                out.append(params)
                break
        else:
            raise RuntimeError(f"could not draw regime {want} in {max_tries} tries")
    return out


def oracle_equivalence(
    env: TrafficEnvironment,
    model: CostModel,
    base: GameParams,
    draws: int = 20,
    seed: int = 20240611,
    sigma_steps: int = 2000,
    tol: float = 1e-9,
    solver=solve_pbe,
) -> list[DrawOutcome]:
    outcomes = []
    for params in draw_parameters(env, model, base, draws, seed):
        eq = solver(env, model, params)
        gs = grid_search_pbe(env, model, params, sigma_steps, tol)
        cl = gs.clusters()
        near = None
        if cl:
            near = min(cl[0], key=lambda c: abs(c.sigma_l - eq.sigma_l))
        outcomes.append(DrawOutcome(
            params, eq.regime.label, eq.sigma_l, eq.sigma_d_H, len(cl), gs.matches(eq),
            near.sigma_l if near else None, near.sigma_d_H if near else None,
        ))
    return outcomes


# --------------------------------------------------------------------------- dynamics


@dataclass
class DynamicsResult:
    converged: bool
    iterations: int
    trajectory: list[tuple[float, float]]
    profile: StrategyProfile | None = None
    belief: Belief | None = None
    report: PbeReport | None = None

    @property
    def status(self) -> str:
        return "converged" if self.converged else "NonConvergence"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "fixed_point": None if self.profile is None else {
                "sigma_l": self.profile.traveler.sigma_l,
                "sigma_d_H": self.profile.operator.sigma_d_H,
            },
            "passes_pbe": None if self.report is None else self.report.passed,
            "trajectory_tail": [list(p) for p in self.trajectory[-5:]],
        }


def best_response_iterate(
    env: TrafficEnvironment,
    model: CostModel,
    params: GameParams,
    damping: float = 0.2,
    max_iter: int = 2000,
    tol: float = 1e-13,
    start: tuple[float, float] = (0.5, 0.5),
    utility_tol: float = 1e-9,
) -> DynamicsResult:
    """Damped alternating best responses on (sigma_l, sigma_d_H).

    Each outer iteration lets type-l travelers take damped steps toward the
    rate that equalizes their utilities given the current inspection rate
    until they settle, then moves the operator a damped step toward its best
    response. The operator remembers which inspection rates its past responses
    have ruled out (always inspecting at a rate means the fixed point lies
    above it, never inspecting means below) and never steps outside that
    interval, so with damping < 1 a mixed equilibrium is approached instead of
    cycled around. With damping = 1 the operator jumps between the interval
    ends and mixed regimes typically report NonConvergence.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    fine = params.fine_l
    dc0 = delta_c(env, model, 0.0)

    def traveler_target(d):
        t = params.p_t_l + fine * d
        if t >= dc0:
            return 0.0
        return inverse_delta_c(env, model, t, check=False)

    def toward(x, goal):
        nxt = x + damping * (goal - x)
        return goal if abs(goal - nxt) <= tol else nxt

    def settle(s, target):
        for _ in range(100_000):
            nxt = toward(s, target)
            if nxt == target or abs(nxt - s) <= tol:
                return nxt
            s = nxt
        return s

    s, d = start
    d_lo, d_hi = 0.0, 1.0
    traj = [(s, d)]
    for k in range(1, max_iter + 1):
        s_new = settle(s, traveler_target(d))
        br = operator_best_response(env, params, s_new)
        if br is BestResponse.ZERO:
            d_hi = min(d_hi, d)
            goal = d_lo
        elif br is BestResponse.ONE:
            d_lo = max(d_lo, d)
            goal = d_hi
        else:
            goal = (delta_c(env, model, s_new) - params.p_t_l) / fine
            goal = min(max(goal, d_lo), d_hi)
        d_new = toward(d, goal)
        moved = max(abs(s_new - s), abs(d_new - d))
        s, d = s_new, d_new
        traj.append((s, d))
        if moved <= tol:
            prof = StrategyProfile(MisbehaviorStrategy(0.0, s), OperatorStrategy(d, 0.0))
            belief = bayes_update(env, prof.traveler)
            rep = check_pbe(env, model, params, prof, belief, tol=utility_tol)
            return DynamicsResult(True, k, traj, prof, belief, rep)
    return DynamicsResult(False, max_iter, traj)


# --------------------------------------------------------------------------- queue simulation


@dataclass(frozen=True)
class QueueSimResult:
    mean_system_time: float
    sample_count: int
    rng_seed: int
    half_width_95: float
    arrival_rate: float
    service_rate: float
    horizon: int
    batches: int = 20
    rng: str = RNG_NAME

    @property
    def analytic_mean(self) -> float:
        return 1.0 / (self.service_rate - self.arrival_rate)

    @property
    def relative_error(self) -> float:
        return abs(self.mean_system_time - self.analytic_mean) / self.analytic_mean

    def to_dict(self) -> dict:
        return {
            "arrival_rate": self.arrival_rate,
            "service_rate": self.service_rate,
            "horizon": self.horizon,
            "rng": self.rng,
            "rng_seed": self.rng_seed,
            "batches": self.batches,
            "sample_count": self.sample_count,
            "mean_system_time": self.mean_system_time,
            "half_width_95": self.half_width_95,
            "analytic_mean": self.analytic_mean,
            "relative_error": self.relative_error,
        }


def simulate_mm1(
    arrival_rate: float,
    service_rate: float,
    horizon: int,
    seed: int,
    batches: int = 20,
    chunk: int = 1_000_000,
) -> QueueSimResult:
    """FIFO M/M/1 simulation over ``horizon`` departures, batch-means estimate.

    Departure times follow D_i = max(A_i, D_{i-1}) + S_i, evaluated in closed
    form as D_i = Q_i + max_{k<=i}(A_k - Q_{k-1}) with Q the running service
    total. The first batch is discarded as warm-up.
    """
    if not arrival_rate < service_rate:
        raise UnstableQueue(f"arrival rate {arrival_rate} >= service rate {service_rate}")
    if arrival_rate <= 0:
        raise ValueError("arrival_rate must be > 0")
    if horizon < 10_000:
        raise ValueError("horizon must be >= 10^4 departures")
    if batches < 3:
        raise ValueError("need at least 3 batches")

    rng = np.random.Generator(np.random.PCG64(seed))
    sojourn = np.empty(horizon)
    t_arr = 0.0  # last arrival time
    q_prev = 0.0  # service total before this chunk
    run_max = -math.inf  # running max of A_k - Q_{k-1}
    for start in range(0, horizon, chunk):
        n = min(chunk, horizon - start)
        inter = rng.exponential(1.0 / arrival_rate, n)
        serv = rng.exponential(1.0 / service_rate, n)
        arr = t_arr + np.cumsum(inter)
        q = q_prev + np.cumsum(serv)
        q_before = np.concatenate(([q_prev], q[:-1]))
        m = np.maximum.accumulate(np.maximum(arr - q_before, run_max))
        sojourn[start:start + n] = q + m - arr
        t_arr, q_prev, run_max = arr[-1], q[-1], m[-1]

    size = horizon // batches
    means = sojourn[: size * batches].reshape(batches, size).mean(axis=1)[1:]
    k = len(means)
    mean = float(means.mean())
    half = float(stats.t.ppf(0.975, k - 1) * means.std(ddof=1) / math.sqrt(k))
    return QueueSimResult(mean, size * k, seed, half, arrival_rate, service_rate, horizon, batches)
