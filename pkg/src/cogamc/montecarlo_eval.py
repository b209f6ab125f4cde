"""Block-level Monte Carlo measurement of policies and baselines.

Every evaluation re-includes thermal noise.  Blocks are drawn in fixed-size
chunks, each from its own substream of the seed, so a report depends only on
``(seed, n_blocks)`` and not on how chunks are scheduled.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .amc_model import AmcTable
from .channel import CHUNK_SIZE, Scenario, iter_sample_chunks, make_rng, sample_block, scaled_snirs, snir
from .region_grid import RegionGrid, locate_region

_MOMENTS = ("k1", "k2", "p2", "outage", "silent", "viol_p", "viol_c")


@dataclass(frozen=True)
class EvaluationReport:
    primary_ase: float
    cognitive_ase: float
    avg_cognitive_power: float
    primary_outage_prob: float
    cognitive_silence_prob: float
    ber_violation_rate_primary: float
    ber_violation_rate_cognitive: float
    se_primary_ase: float
    se_cognitive_ase: float
    se_cognitive_power: float
    se_violation_cognitive: float
    n_blocks: int
    seed: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BlockOutcome:
    """Per-block rates, power and BER checks for a batch of blocks."""

    k1: np.ndarray
    k2: np.ndarray
    p2: np.ndarray
    viol_p: np.ndarray
    viol_c: np.ndarray


def link_outcome(sample, p2, k2_mode, scenario: Scenario, table: AmcTable) -> BlockOutcome:
    """Primary adapts to its realised SNIR; the cognitive link uses ``k2_mode``.

    ``k2_mode`` of ``None`` makes the cognitive link adapt to its realised
    SNIR as well.  BER is checked against the application targets.
    """
    targets = scenario.ber_targets
    p2 = np.broadcast_to(np.asarray(p2, dtype=float), np.shape(sample.s11))
    g1, g2 = snir(sample, scenario.primary_power, p2, scenario.noise_power)
    m1 = table.select_index(g1, targets.design_primary)
    if k2_mode is None:
        m2 = np.where(p2 > 0, table.select_index(g2, targets.design_cognitive), 0)
    else:
        m2 = np.where(p2 > 0, k2_mode, 0)
    rates = table.rates
    coeff = np.array([0.0] + [m.coeff for m in table.modes[1:]])
    decay = np.array([0.0] + [m.decay for m in table.modes[1:]])
    ber1 = coeff[m1] * np.exp(-decay[m1] * g1)
    ber2 = coeff[m2] * np.exp(-decay[m2] * g2)
    return BlockOutcome(
        k1=rates[m1],
        k2=rates[m2],
        p2=np.where(m2 > 0, p2, 0.0),
        viol_p=(m1 > 0) & (ber1 > targets.primary),
        viol_c=(m2 > 0) & (ber2 > targets.cognitive),
    )


def _moments(out: BlockOutcome) -> np.ndarray:
    cols = [out.k1, out.k2, out.p2, (out.k1 == 0), (out.k2 == 0), out.viol_p, out.viol_c]
    vals = np.vstack([np.asarray(c, dtype=float) for c in cols])
    return np.stack([vals.sum(axis=1), (vals**2).sum(axis=1)])


def _report(totals: np.ndarray, n: int, seed: int) -> EvaluationReport:
    mean = totals[0] / n
    var = np.maximum(totals[1] / n - mean**2, 0.0)
    se = np.sqrt(var / n) if n > 1 else np.zeros_like(mean)
    m = dict(zip(_MOMENTS, mean.tolist()))
    s = dict(zip(_MOMENTS, se.tolist()))
    return EvaluationReport(
        primary_ase=m["k1"],
        cognitive_ase=m["k2"],
        avg_cognitive_power=m["p2"],
        primary_outage_prob=m["outage"],
        cognitive_silence_prob=m["silent"],
        ber_violation_rate_primary=m["viol_p"],
        ber_violation_rate_cognitive=m["viol_c"],
        se_primary_ase=s["k1"],
        se_cognitive_ase=s["k2"],
        se_cognitive_power=s["p2"],
        se_violation_cognitive=s["viol_c"],
        n_blocks=n,
        seed=seed,
    )


def simulate(block_fn, scenario: Scenario, n_blocks: int, seed: int, workers: int = 1) -> EvaluationReport:
    """Run ``block_fn(sample) -> BlockOutcome`` over ``n_blocks`` blocks.

    Chunk totals are summed in chunk order, so the report is identical for
    any ``workers``.
    """
    n_chunks = -(-n_blocks // CHUNK_SIZE)

    def run(k):
        size = min(CHUNK_SIZE, n_blocks - k * CHUNK_SIZE)
        return _moments(block_fn(sample_block(scenario, make_rng(seed, k), size)))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(k) for k in range(n_chunks)]
    totals = np.zeros((2, len(_MOMENTS)))
    for part in parts:
        totals += part
    return _report(totals, n_blocks, seed)


def evaluate_policy(policy, grid: RegionGrid | None, scenario: Scenario, table: AmcTable,
                    n_blocks: int, seed: int, workers: int = 1) -> EvaluationReport:
    """Measure a variable- or constant-power policy with noise included."""
    if policy.kind == "variable_power":
        if grid is None or policy.n_regions != grid.n_regions:
            raise ValueError("variable-power policy does not match the region grid")
        g2 = table.thresholds(scenario.ber_targets.design_cognitive)
        modes = policy.modes

        def block_fn(sample):
            sc = scaled_snirs(sample)
            k2 = modes[locate_region(sc.alpha, sc.beta, grid)]
            p2 = scenario.primary_power * g2[k2] / sc.beta
            return link_outcome(sample, p2, k2, scenario, table)

    elif policy.kind == "constant_power":
        def block_fn(sample):
            return link_outcome(sample, policy.power, None, scenario, table)

    else:
        raise ValueError(f"unknown policy kind {policy.kind!r}")
    return simulate(block_fn, scenario, n_blocks, seed, workers)


class ConstantPowerEvaluator:
    """Average rates of both links at a fixed cognitive power, on a frozen sample set.

    Common random numbers make ``averages`` a deterministic, monotone
    function of the power.
    """

    def __init__(self, scenario: Scenario, table: AmcTable, n_samples: int, seed: int):
        self.scenario = scenario
        self.table = table
        self.samples = [s for _, s in iter_sample_chunks(scenario, n_samples, seed)]
        self.n_samples = n_samples

    def averages(self, p2: float) -> tuple[float, float]:
        sc, t = self.scenario, self.scenario.ber_targets
        k1 = k2 = 0.0
        for s in self.samples:
            g1, g2 = snir(s, sc.primary_power, p2, sc.noise_power)
            k1 += self.table.select_rate(g1, t.design_primary).sum()
            if p2 > 0:
                k2 += self.table.select_rate(g2, t.design_cognitive).sum()
        return float(k1 / self.n_samples), float(k2 / self.n_samples)


def constant_power_ase_exact(scenario: Scenario, table: AmcTable, p2: float) -> tuple[float, float]:
    """Closed-form average rates at constant power for exponential gains.

    ``P(p_i s_ii / (p_j s_ji + N0) >= v) = exp(-v N0 / (p_i m_ii)) / (1 + v p_j m_ji / (p_i m_ii))``.
    """
    t = scenario.ber_targets
    rates = table.rates

    def ase(p_sig, m_sig, p_int, m_int, target):
        if p_sig <= 0:
            return 0.0
        v = table.thresholds(target)[1:]
        ccdf = np.exp(-v * scenario.noise_power / (p_sig * m_sig)) / (1 + v * p_int * m_int / (p_sig * m_sig))
        return float(np.sum(np.diff(rates) * ccdf))

    k1 = ase(scenario.primary_power, scenario.s11, p2, scenario.s21, t.design_primary)
    k2 = ase(p2, scenario.s22, scenario.primary_power, scenario.s12, t.design_cognitive)
    return k1, k2


# --- tradeoff sweeps ---------------------------------------------------------


@dataclass(frozen=True)
class TradeoffPoint:
    scheme: str
    k1_required: float
    feasible: bool
    report: EvaluationReport | None
    predicted_k1: float = math.nan
    predicted_k2: float = math.nan
    parameter: float = math.nan

    @property
    def cognitive_ase(self) -> float:
        return self.report.cognitive_ase if (self.feasible and self.report) else math.nan


def sweep_tradeoff(scheme, scenario: Scenario, k1_requirements, point_fn) -> list[TradeoffPoint]:
    """Optimise and evaluate one point per primary requirement.

    ``point_fn(scenario_with_requirement) -> TradeoffPoint`` does the
    scheme-specific work; requirements must be ascending.
    """
    reqs = list(k1_requirements)
    if any(b < a for a, b in zip(reqs, reqs[1:])):
        raise ValueError("primary requirements must be ascending")
    return [point_fn(scenario.with_requirement(k)) for k in reqs]


REPORT_COLUMNS = ["scheme", "k1_req", "k1_ase", "k2_ase", "p2_avg", "outage", "ber_viol_p", "ber_viol_c",
                  "se_k1", "se_k2", "n_blocks", "seed", "status", "parameter"]


def curve_to_csv(points: list[TradeoffPoint], header: str = "") -> str:
    buf = io.StringIO()
    for line in header.splitlines():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for pt in points:
        r = pt.report
        if r is None:
            writer.writerow([pt.scheme, repr(pt.k1_required)] + [""] * 10 + ["infeasible", repr(pt.parameter)])
            continue
        writer.writerow([
            pt.scheme, repr(pt.k1_required), repr(r.primary_ase), repr(r.cognitive_ase),
            repr(r.avg_cognitive_power), repr(r.primary_outage_prob), repr(r.ber_violation_rate_primary),
            repr(r.ber_violation_rate_cognitive), repr(r.se_primary_ase), repr(r.se_cognitive_ase),
            r.n_blocks, r.seed, "feasible" if pt.feasible else "infeasible", repr(pt.parameter),
        ])
    return buf.getvalue()
