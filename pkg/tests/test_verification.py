import numpy as np
import pytest

from inspectpbe import GameParams, UnstableQueue, best_response_iterate, grid_search_pbe, simulate_mm1, solve_pbe
from inspectpbe.verification import draw_parameters, oracle_equivalence


def test_grid_oracle_finds_etc_equilibrium(etc_env, etc_model, etc_params):
    eq = solve_pbe(etc_env, etc_model, etc_params)
    gs = grid_search_pbe(etc_env, etc_model, etc_params, sigma_steps=2000)
    assert gs.unique
    assert gs.matches(eq)


@pytest.mark.parametrize("p_t_l,p_d,F_l", [(3.0, 5.0, 100.0), (2.0, 5.0, 100.0), (0.3, 0.01, 1.0)])
def test_grid_oracle_other_regimes(etc_env, etc_model, p_t_l, p_d, F_l):
    params = GameParams(0.0, p_t_l, p_d, 0.0, F_l)
    gs = grid_search_pbe(etc_env, etc_model, params, sigma_steps=2000)
    assert len(gs.clusters()) == 1
    assert gs.matches(solve_pbe(etc_env, etc_model, params))


def test_draws_cover_all_regimes_and_are_seeded(etc_env, etc_model, etc_params):
    a = draw_parameters(etc_env, etc_model, etc_params, 8, seed=7)
    b = draw_parameters(etc_env, etc_model, etc_params, 8, seed=7)
    assert a == b
    labels = [solve_pbe(etc_env, etc_model, p).regime.label for p in a]
    assert labels == ["A", "B1", "B2", "B3"] * 2


def test_oracle_equivalence_small(etc_env, etc_model, etc_params):
    outs = oracle_equivalence(etc_env, etc_model, etc_params, draws=4, seed=3, sigma_steps=500)
    assert all(o.matched and o.n_clusters == 1 for o in outs)


def test_oracle_equivalence_detects_wrong_solver(etc_env, etc_model, etc_params):
    def shifted(env, model, params):
        eq = solve_pbe(env, model, params)
        from dataclasses import replace

        from inspectpbe import MisbehaviorStrategy, StrategyProfile
        t = MisbehaviorStrategy(0.0, min(1.0, eq.sigma_l + 0.05))
        return replace(eq, profile=StrategyProfile(t, eq.profile.operator))

    outs = oracle_equivalence(etc_env, etc_model, etc_params, draws=4, seed=3, sigma_steps=500,
                              solver=shifted)
    assert not any(o.matched for o in outs)


@pytest.mark.parametrize("p_t_l,p_d,F_l", [(3.0, 5.0, 100.0), (2.0, 5.0, 100.0), (0.5, 5.0, 100.0),
                                           (0.3, 0.01, 1.0)])
def test_dynamics_converge_to_closed_form(etc_env, etc_model, p_t_l, p_d, F_l):
    params = GameParams(0.0, p_t_l, p_d, 0.0, F_l)
    eq = solve_pbe(etc_env, etc_model, params)
    res = best_response_iterate(etc_env, etc_model, params, damping=0.2)
    assert res.status == "converged"
    assert res.report.passed
    assert res.profile.traveler.sigma_l == pytest.approx(eq.sigma_l, abs=1e-6)
    assert res.profile.operator.sigma_d_H == pytest.approx(eq.sigma_d_H, abs=1e-6)


def test_undamped_dynamics_report_nonconvergence(etc_env, etc_model, etc_params):
    res = best_response_iterate(etc_env, etc_model, etc_params, damping=1.0, max_iter=300)
    assert res.status == "NonConvergence"
    assert res.to_dict()["status"] == "NonConvergence"


def lindley_oracle(arrival_rate, service_rate, n, seed, chunk=1_000_000):
    # plain event-by-event FIFO recursion on the same random stream
    rng = np.random.Generator(np.random.PCG64(seed))
    inter, serv = [], []
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        inter.append(rng.exponential(1.0 / arrival_rate, m))
        serv.append(rng.exponential(1.0 / service_rate, m))
    inter, serv = np.concatenate(inter), np.concatenate(serv)
    t = dep = 0.0
    out = np.empty(n)
    for i in range(n):
        t += inter[i]
        dep = max(t, dep) + serv[i]
        out[i] = dep - t
    return out


def test_simulation_matches_event_loop():
    n = 20_000
    ref = lindley_oracle(720.0, 1700.0, n, seed=11)
    res = simulate_mm1(720.0, 1700.0, n, seed=11)
    size = n // 20
    expect = ref[size: size * 20].mean()
    assert res.mean_system_time == pytest.approx(expect, rel=1e-9)
    assert res.sample_count == size * 19


def test_simulation_chunking_is_exact():
    # chunk boundaries must not break the recursion
    a = simulate_mm1(1500.0, 1700.0, 50_000, seed=5, chunk=7_000)
    ref = lindley_oracle(1500.0, 1700.0, 50_000, seed=5, chunk=7_000)
    size = 50_000 // 20
    assert a.mean_system_time == pytest.approx(ref[size:].mean(), rel=1e-9)


def test_simulation_is_deterministic():
    a = simulate_mm1(720.0, 1700.0, 100_000, seed=42)
    b = simulate_mm1(720.0, 1700.0, 100_000, seed=42)
    c = simulate_mm1(720.0, 1700.0, 100_000, seed=43)
    assert a.to_dict() == b.to_dict()
    assert a.mean_system_time != c.mean_system_time


def test_simulation_rejects_unstable_and_short():
    with pytest.raises(UnstableQueue):
        simulate_mm1(1700.0, 1700.0, 100_000, seed=1)
    with pytest.raises(ValueError):
        simulate_mm1(100.0, 1700.0, 100, seed=1)


def test_simulation_million_departures():
    res = simulate_mm1(720.0, 1700.0, 1_000_000, seed=20240611)
    assert res.relative_error < 0.02
    assert res.half_width_95 > 0


@pytest.mark.slow
def test_simulation_ten_million_departures():
    res = simulate_mm1(720.0, 1700.0, 10_000_000, seed=20240611)
    assert res.relative_error < 0.005
    assert abs(res.mean_system_time - res.analytic_mean) < 3 * res.half_width_95
