import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import random_problem
from cogamc.adaptation import (brute_force_problem, compute_decisions, optimize_constant_power,
                               optimize_problem, optimize_variable_power, policy_to_csv, primary_gain_step)
from cogamc.montecarlo_eval import ConstantPowerEvaluator
from cogamc.region_grid import AllocationProblem


def tiny_problem(need=0.0, budget=np.inf):
    # Two regions, modes (0, 1, 2) with rates (0, 1, 2).
    return AllocationProblem(
        rates=[0.0, 1.0, 2.0],
        cognitive_thresholds=[0.0, 1.0, 3.0],
        prob=[0.5, 0.5],
        norm_power=[1.0, 2.0],
        primary_rate=[[2.0, 2.0, 1.0], [2.0, 1.0, 0.0]],
        required_primary_ase=need,
        power_budget=budget,
    )


def naive_optimum(problem):
    best = None
    for modes in itertools.product(range(problem.rates.size), repeat=problem.n_regions):
        k1, k2, p2 = problem.averages(modes)
        if k1 >= problem.required_primary_ase and p2 <= problem.power_budget:
            if best is None or k2 > best[0]:
                best = (k2, modes)
    return best


def test_unconstrained_keeps_top_rate():
    pol = optimize_problem(tiny_problem())
    assert pol.feasible and list(pol.modes) == [2, 2]
    assert pol.k2_avg == 2.0 and pol.k1_avg == 0.5
    assert pol.trace == []


def test_decision_values():
    p = tiny_problem()
    st_ = compute_decisions(p, [2, 2])
    # Region 0: drop one mode, primary 1 -> 2, cognitive 2 -> 1, power saving (3 - 1) * 1.
    assert st_.step[0] == 1 and st_.d1[0] == 1.0 and st_.d3[0] == 2.0
    assert st_.d2[1] == pytest.approx((3 - 1) * 2.0)
    assert primary_gain_step(p, 0, 1) == 0


def test_primary_constraint_branch():
    pol = optimize_problem(tiny_problem(need=1.0))
    k1, k2, _ = tiny_problem().averages(pol.modes)
    assert pol.feasible and k1 >= 1.0
    assert k2 == pytest.approx(naive_optimum(tiny_problem(need=1.0))[0])


def test_power_constraint_branch():
    p = tiny_problem(budget=1.5)
    pol = optimize_problem(p)
    assert pol.feasible and pol.p2_avg <= 1.5
    assert pol.k2_avg == pytest.approx(naive_optimum(p)[0])


def test_infeasible_primary():
    pol = optimize_problem(tiny_problem(need=2.5))
    assert not pol.feasible and not pol.modes.any()


def test_brute_force_matches_naive():
    rng = np.random.default_rng(1)
    for _ in range(25):
        p = random_problem(rng, n_regions=int(rng.integers(2, 7)))
        best = naive_optimum(p)
        bf = brute_force_problem(p)
        if best is None:
            assert not bf.feasible
        else:
            assert bf.feasible and bf.k2_avg == pytest.approx(best[0], abs=1e-12)


def test_brute_force_limit():
    p = random_problem(np.random.default_rng(0), n_regions=12)
    with pytest.raises(ValueError):
        brute_force_problem(p, limit=3**11)
    assert brute_force_problem(p, limit=3**12).n_regions == 12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_greedy_trace_monotone(seed):
    p = random_problem(np.random.default_rng(seed))
    pol = optimize_problem(p)
    start = p.averages(np.where(p.prob > 0, p.rates.size - 1, 0))
    trace = [start] + pol.trace
    k1, k2, p2 = (np.array(c) for c in zip(*trace))
    assert np.all(np.diff(k2) < 0)
    assert np.all(np.diff(k1) >= -1e-12)
    assert np.all(np.diff(p2) <= 1e-12)
    if pol.feasible:
        assert pol.k1_avg >= p.required_primary_ase - 1e-12
        assert pol.p2_avg <= p.power_budget + 1e-12
        ref = brute_force_problem(p)
        assert pol.k2_avg <= ref.k2_avg + 1e-12


def test_greedy_running_sums_match(small_grid, scenario):
    pol = optimize_variable_power(small_grid, scenario.with_requirement(3.0))
    problem = small_grid.problem(scenario.with_requirement(3.0))
    assert pol.feasible
    assert (pol.k1_avg, pol.k2_avg, pol.p2_avg) == pytest.approx(problem.averages(pol.modes), rel=1e-12)
    assert pol.trace[-1] == pytest.approx((pol.k1_avg, pol.k2_avg, pol.p2_avg), rel=1e-9)
    assert pol.modes[0] == 0


def test_variable_policy_tightens(small_grid, scenario):
    k2 = [optimize_variable_power(small_grid, scenario.with_requirement(k)).k2_avg for k in (3.0, 3.5, 3.75)]
    assert k2[0] > k2[1] > k2[2]


def test_constant_bisection_matches_scan(table, scenario):
    ev = ConstantPowerEvaluator(scenario, table, 50_000, seed=8)
    need = 3.2
    pol = optimize_constant_power(scenario.with_requirement(need), table, evaluator=ev)
    grid = np.linspace(0, scenario.cognitive_power_budget, 2001)
    ok = [p for p in grid if ev.averages(p)[0] >= need]
    step = grid[1] - grid[0]
    assert pol.feasible
    assert max(ok) <= pol.power < max(ok) + step
    assert ev.averages(pol.power)[0] >= need


def test_constant_power_edges(table, scenario):
    ev = ConstantPowerEvaluator(scenario, table, 20_000, seed=8)
    full = optimize_constant_power(scenario.with_requirement(0.0), table, evaluator=ev)
    assert full.power == scenario.cognitive_power_budget
    none = optimize_constant_power(scenario.with_requirement(4.5), table, evaluator=ev)
    assert not none.feasible and none.power == 0


def test_policy_csv(small_grid, scenario):
    pol = optimize_variable_power(small_grid, scenario)
    text = policy_to_csv(pol, small_grid, seed=3)
    rows = [line for line in text.splitlines() if not line.startswith("#")]
    assert rows[0] == "region,k2,k1,prob,norm_power"
    assert len(rows) == 1 + small_grid.n_regions


def test_hand_fixture_d3_ordering():
    # Region 0: drop 2 -> 1 raises primary 1 -> 2 and saves (3 - 1) * 1 power per unit rate.
    # Region 1: drop 2 -> 1 raises primary 0 -> 1 and saves (3 - 1) * 2 = 4 per unit rate.
    p = tiny_problem()
    d = compute_decisions(p, [2, 2])
    assert d.d3[0] == pytest.approx(2.0) and d.d3[1] == pytest.approx(4.0)
    assert int(np.argmax(d.d3)) == 1


def test_no_primary_gain_gives_zero_d1():
    p = AllocationProblem([0, 1, 2], [0, 1, 3], [1.0], [1.0], [[2, 2, 2]], 0, np.inf)
    d = compute_decisions(p, [2])
    assert d.d1[0] == 0 and d.d3[0] == 0 and d.step[0] == 0
    p2 = AllocationProblem([0, 1], [0, 2.0], [1.0], [0.5], [[1, 0]], 0, np.inf)
    assert compute_decisions(p2, [1]).d2[0] == pytest.approx(2.0 * 0.5 / 1)


def test_single_region_matches_scan():
    p = AllocationProblem([0, 1, 2, 3], [0, 1, 2, 5], [1.0], [0.4], [[3, 2, 1, 0]], 1.0, 1.0)
    scan = max(m for m in range(4) if p.averages([m])[0] >= 1.0 and p.averages([m])[2] <= 1.0)
    assert list(brute_force_problem(p).modes) == [scan]


def test_infeasible_matches_oracle():
    p = tiny_problem(need=3.0)
    assert not optimize_problem(p).feasible and not brute_force_problem(p).feasible


def test_termination_bound():
    rng = np.random.default_rng(5)
    for _ in range(30):
        p = random_problem(rng)
        assert len(optimize_problem(p).trace) <= p.n_regions * (p.rates.size - 1)


def test_unconstrained_grid_policy(small_grid, scenario):
    sc = scenario.with_requirement(0.0)
    from dataclasses import replace
    pol = optimize_variable_power(small_grid, replace(sc, cognitive_power_budget=np.inf))
    heavy = small_grid.heavy_tailed
    live = (small_grid.prob > 0) & ~heavy
    assert np.all(pol.cognitive_rate[live] == 4) and np.all(pol.cognitive_rate[heavy] == 0)
    assert pol.k2_avg == pytest.approx(4 * (1 - small_grid.prob[heavy].sum()), rel=1e-12)
    assert not optimize_variable_power(small_grid, scenario.with_requirement(4.01)).feasible


def test_constant_complementary_slackness(table, scenario):
    ev = ConstantPowerEvaluator(scenario, table, 50_000, seed=1)
    for need in (1.0, 2.6, 3.3):
        pol = optimize_constant_power(scenario.with_requirement(need), table, evaluator=ev)
        slack_power = scenario.cognitive_power_budget - pol.power
        slack_rate = pol.k1_avg - need
        # The sample-set average moves in steps of at most R_N / n.
        assert slack_power < 1e-6 or slack_rate <= table.max_rate / ev.n_samples
