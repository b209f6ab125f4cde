"""Cognitive link adaptation policies.

The variable-power optimiser starts every region at the top cognitive rate
and greedily lowers rates in the regions with the best exchange ratio until
the primary-rate and power constraints hold.  The constant-power scheme
picks a single cognitive power by bisection.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from .amc_model import AmcTable
from .channel import Scenario
from .montecarlo_eval import ConstantPowerEvaluator
from .region_grid import AllocationProblem, RegionGrid

VARIABLE_POWER = "variable_power"
CONSTANT_POWER = "constant_power"

BRUTE_FORCE_LIMIT = 10**7


@dataclass
class Policy:
    kind: str
    feasible: bool
    k1_avg: float
    k2_avg: float
    p2_avg: float
    modes: np.ndarray | None = None
    cognitive_rate: np.ndarray | None = None
    primary_rate: np.ndarray | None = None
    power: float | None = None
    required_primary_ase: float = 0.0
    power_budget: float = np.inf
    trace: list = field(default_factory=list, repr=False)
    note: str = ""

    @property
    def n_regions(self) -> int:
        return 0 if self.modes is None else self.modes.size


def _variable_policy(problem: AllocationProblem, modes, feasible, trace=None, note="") -> Policy:
    modes = np.asarray(modes, dtype=int)
    rows = np.arange(problem.n_regions)
    k1, k2, p2 = problem.averages(modes)
    return Policy(
        kind=VARIABLE_POWER,
        feasible=feasible,
        k1_avg=k1,
        k2_avg=k2,
        p2_avg=p2,
        modes=modes,
        cognitive_rate=problem.rates[modes],
        primary_rate=problem.primary_rate[rows, modes],
        required_primary_ase=problem.required_primary_ase,
        power_budget=problem.power_budget,
        trace=trace or [],
        note=note,
    )


def _satisfied(problem: AllocationProblem, k1: float, p2: float) -> tuple[bool, bool]:
    return k1 >= problem.required_primary_ase, p2 <= problem.power_budget


# --- decision variables ------------------------------------------------------


@dataclass
class DecisionState:
    """Per-region exchange ratios for the current assignment.

    ``step[i]`` is the number of modes to drop in region ``i`` for the
    smallest strict primary-rate gain (0 when no drop raises it).  Regions
    that cannot be lowered hold ``-inf`` everywhere.
    """

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    step: np.ndarray


def primary_gain_step(problem: AllocationProblem, region: int, mode: int) -> int:
    """Smallest drop ``n >= 1`` that strictly raises the primary rate, else 0."""
    row = problem.primary_rate[region]
    for n in range(1, mode + 1):
        if row[mode - n] > row[mode]:
            return n
    return 0


def _decision_row(problem: AllocationProblem, i: int, m: int, top_rate: float):
    rates, g = problem.rates, problem.cognitive_thresholds
    pw = problem.norm_power[i]
    d2 = (g[m] - g[m - 1]) * pw / (rates[m] - rates[m - 1])
    k1_now = problem.primary_rate[i, m]
    n = 0 if k1_now >= top_rate else primary_gain_step(problem, i, m)
    if n == 0:
        return 0.0, d2, 0.0, 0
    gain = problem.primary_rate[i, m - n] - k1_now
    d_rate = rates[m] - rates[m - n]
    d1 = gain / d_rate
    d3 = (g[m] - g[m - n]) * pw / d_rate
    return d1, d2, d3, n


def compute_decisions(problem: AllocationProblem, modes, active=None) -> DecisionState:
    modes = np.asarray(modes, dtype=int)
    n = problem.n_regions
    if active is None:
        active = _active_regions(problem)
    d1 = np.full(n, -np.inf)
    d2 = np.full(n, -np.inf)
    d3 = np.full(n, -np.inf)
    step = np.zeros(n, dtype=int)
    top = problem.rates[-1]
    for i in np.flatnonzero(active & (modes > 0)):
        d1[i], d2[i], d3[i], step[i] = _decision_row(problem, i, modes[i], top)
    return DecisionState(d1, d2, d3, step)


def _active_regions(problem: AllocationProblem) -> np.ndarray:
    return (problem.prob > 0) & ~problem.pinned


# --- variable-power greedy ---------------------------------------------------


def _pick(score: np.ndarray, candidates: np.ndarray):
    """Argmax of ``score`` over candidates; lowest index wins ties."""
    if not candidates.any():
        return None
    return int(np.argmax(np.where(candidates, score, -np.inf)))


def optimize_problem(problem: AllocationProblem) -> Policy:
    """Greedy rate reduction over an allocation problem."""
    active = _active_regions(problem)
    top = problem.rates.size - 1
    modes = np.where(active, top, 0)
    state = compute_decisions(problem, modes, active)
    rates, g = problem.rates, problem.cognitive_thresholds
    trace = []

    def lower(i, n, k1, k2, p2):
        m = modes[i]
        k1 += (problem.primary_rate[i, m - n] - problem.primary_rate[i, m]) * problem.prob[i]
        k2 -= (rates[m] - rates[m - n]) * problem.prob[i]
        p2 -= (g[m] - g[m - n]) * problem.prob[i] * problem.norm_power[i]
        modes[i] = m - n
        if modes[i] > 0:
            row = _decision_row(problem, i, modes[i], rates[-1])
        else:
            row = (-np.inf, -np.inf, -np.inf, 0)
        state.d1[i], state.d2[i], state.d3[i], state.step[i] = row
        trace.append((k1, k2, p2))
        return k1, k2, p2

    def infeasible(why):
        return _variable_policy(problem, np.zeros_like(modes), False, trace, why)

    while True:
        # Resynchronise the running sums before every branch decision.
        k1, k2, p2 = problem.averages(modes)
        ok1, ok2 = _satisfied(problem, k1, p2)
        if ok1 and ok2:
            return _variable_policy(problem, modes, True, trace)
        if not ok1 and not ok2:
            while True:
                i = _pick(state.d3, state.step > 0)
                if i is None:
                    return infeasible("primary requirement unreachable")
                k1, k2, p2 = lower(i, state.step[i], k1, k2, p2)
                ok1, ok2 = _satisfied(problem, k1, p2)
                if ok1 or ok2:
                    break
        elif not ok1:
            while True:
                i = _pick(state.d1, state.step > 0)
                if i is None:
                    return infeasible("primary requirement unreachable")
                k1, k2, p2 = lower(i, state.step[i], k1, k2, p2)
                if _satisfied(problem, k1, p2)[0]:
                    break
        else:
            while True:
                i = _pick(state.d2, modes > 0)
                if i is None:
                    return infeasible("power budget unreachable")
                k1, k2, p2 = lower(i, 1, k1, k2, p2)
                if _satisfied(problem, k1, p2)[1]:
                    break


def optimize_variable_power(grid: RegionGrid, scenario: Scenario) -> Policy:
    """Variable rate and power policy for the scenario's constraints."""
    return optimize_problem(grid.problem(scenario))


# --- exhaustive oracle -------------------------------------------------------


def brute_force_problem(problem: AllocationProblem, limit: int = BRUTE_FORCE_LIMIT) -> Policy:
    """Exact optimum by enumerating every assignment of the active regions.

    Refuses instances with more than ``limit`` assignments of nonzero modes
    (``N ** regions``); the outage mode is enumerated as well.
    """
    active = np.flatnonzero(_active_regions(problem))
    n_choices = problem.rates.size
    count = (n_choices - 1) ** active.size
    if count > limit:
        raise ValueError(
            f"exhaustive search needs {n_choices - 1}^{active.size} = {count} assignments, limit is {limit}"
        )
    base = np.zeros(problem.n_regions, dtype=int)
    if active.size == 0:
        k1, _, p2 = problem.averages(base)
        ok = all(_satisfied(problem, k1, p2))
        return _variable_policy(problem, base, ok, note="" if ok else "no feasible assignment")

    # Meet in the middle: enumerate each half, combine one slab at a time.
    halves = np.array_split(active, 2) if active.size > 1 else [active, active[:0]]
    parts = []
    for regions in halves:
        combos = np.array(list(itertools.product(range(n_choices), repeat=regions.size)), dtype=int)
        combos = combos.reshape(n_choices**regions.size, regions.size)
        pr = problem.prob[regions]
        k1 = (problem.primary_rate[regions[None, :], combos] * pr).sum(axis=1)
        k2 = (problem.rates[combos] * pr).sum(axis=1)
        p2 = (problem.cognitive_thresholds[combos] * problem.norm_power[regions] * pr).sum(axis=1)
        parts.append((combos, k1, k2, p2))
    (ca, k1a, k2a, p2a), (cb, k1b, k2b, p2b) = parts
    k1_fixed = problem.averages(base)[0] - float(np.sum(problem.primary_rate[active, 0] * problem.prob[active]))
    need = problem.required_primary_ase - k1_fixed
    best_val, best = -np.inf, None
    slab = max(1, (1 << 22) // k2b.size)
    for start in range(0, k2a.size, slab):
        sl = slice(start, start + slab)
        ok = (k1a[sl, None] + k1b[None, :] >= need) & (p2a[sl, None] + p2b[None, :] <= problem.power_budget)
        if not ok.any():
            continue
        k2 = np.where(ok, k2a[sl, None] + k2b[None, :], -np.inf)
        flat = int(np.argmax(k2))
        if k2.flat[flat] > best_val:
            best_val = k2.flat[flat]
            best = (start + flat // k2b.size, flat % k2b.size)
    if best is None:
        return _variable_policy(problem, base, False, note="no feasible assignment")
    modes = base.copy()
    modes[halves[0]] = ca[best[0]]
    if halves[1].size:
        modes[halves[1]] = cb[best[1]]
    return _variable_policy(problem, modes, True)


def brute_force_policy(grid: RegionGrid, scenario: Scenario, limit: int = BRUTE_FORCE_LIMIT) -> Policy:
    return brute_force_problem(grid.problem(scenario), limit)


# --- constant power ----------------------------------------------------------


def optimize_constant_power(
    scenario: Scenario,
    table: AmcTable,
    eval_budget: int = 200_000,
    seed: int = 0,
    rel_tol: float = 1e-9,
    evaluator: ConstantPowerEvaluator | None = None,
) -> Policy:
    """Largest constant cognitive power that keeps the primary requirement.

    The primary average rate is evaluated on a fixed sample set, so it is a
    non-increasing function of the cognitive power and bisection is exact up
    to ``rel_tol``.
    """
    ev = evaluator or ConstantPowerEvaluator(scenario, table, eval_budget, seed)
    budget = scenario.cognitive_power_budget
    need = scenario.required_primary_ase

    def policy(p2, feasible, note=""):
        k1, k2 = ev.averages(p2)
        return Policy(
            kind=CONSTANT_POWER, feasible=feasible, k1_avg=k1, k2_avg=k2, p2_avg=p2, power=p2,
            required_primary_ase=need, power_budget=budget, note=note,
        )

    if ev.averages(0.0)[0] < need:
        return policy(0.0, False, "primary requirement unreachable even with a silent cognitive link")
    if ev.averages(budget)[0] >= need:
        return policy(budget, True)
    lo, hi = 0.0, budget
    while hi - lo > rel_tol * budget:
        mid = 0.5 * (lo + hi)
        if ev.averages(mid)[0] >= need:
            lo = mid
        else:
            hi = mid
    return policy(lo, True)


# --- dumps -------------------------------------------------------------------


def policy_to_csv(policy: Policy, grid: RegionGrid | None = None, seed=None) -> str:
    buf = io.StringIO()
    buf.write(f"# kind={policy.kind} feasible={policy.feasible}\n")
    buf.write(f"# k1_avg={policy.k1_avg!r} k2_avg={policy.k2_avg!r} p2_avg={policy.p2_avg!r}\n")
    buf.write(f"# k1_required={policy.required_primary_ase!r} p2_budget={policy.power_budget!r} seed={seed}\n")
    if grid is not None:
        buf.write(f"# rays={grid.n_rays} products={grid.n_products} n_samples={grid.n_samples} "
                  f"grid_seed={grid.seed}\n")
    if policy.kind == CONSTANT_POWER:
        buf.write(f"# power={policy.power!r}\n")
        return buf.getvalue()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["region", "k2", "k1", "prob", "norm_power"])
    prob = grid.prob if grid is not None else np.full(policy.n_regions, np.nan)
    power = grid.norm_power if grid is not None else np.full(policy.n_regions, np.nan)
    for i in range(policy.n_regions):
        writer.writerow([i + 1, repr(float(policy.cognitive_rate[i])), repr(float(policy.primary_rate[i])),
                         repr(float(prob[i])), repr(float(power[i]))])
    return buf.getvalue()
