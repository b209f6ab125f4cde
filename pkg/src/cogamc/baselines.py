"""Underlay and interweave reference schemes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .amc_model import AmcTable
from .channel import FadingSample, Scenario
from .montecarlo_eval import BlockOutcome, EvaluationReport, link_outcome, simulate

# Interweave bursts and underlay peaks are capped at this multiple of the
# average budget.
BURST_CAP_FACTOR = 10.0


@dataclass(frozen=True)
class UnderlayConfig:
    interference_threshold: float
    peak_power: float

    def __post_init__(self):
        if self.interference_threshold < 0 or self.peak_power < 0:
            raise ValueError("underlay threshold and peak power must be non-negative")


@dataclass(frozen=True)
class TdmaConfig:
    cognitive_share: float

    def __post_init__(self):
        if not 0.0 <= self.cognitive_share <= 1.0:
            raise ValueError("cognitive_share must lie in [0, 1]")


def underlay_power(sample: FadingSample, cfg: UnderlayConfig):
    """Largest power keeping ``p2 * s21`` at or below the threshold, capped at the peak."""
    s21 = np.asarray(sample.s21, dtype=float)
    with np.errstate(divide="ignore"):
        cap = np.where(s21 > 0, cfg.interference_threshold / np.where(s21 > 0, s21, 1.0), np.inf)
    p2 = np.minimum(cfg.peak_power, cap)
    return float(p2) if p2.ndim == 0 else p2


def underlay_block(sample: FadingSample, cfg: UnderlayConfig, scenario: Scenario, table: AmcTable):
    """``(p2, k2, k1)`` for each block: power from the interference cap, then AMC on both links."""
    p2 = underlay_power(sample, cfg)
    out = link_outcome(sample, p2, None, scenario, table)
    return out.p2, out.k2, out.k1


def underlay_mean_power(cfg: UnderlayConfig, scenario: Scenario) -> float:
    """Exact mean of ``min(peak, Pth / s21)`` for exponential ``s21``."""
    if cfg.interference_threshold == 0 or cfg.peak_power == 0:
        return 0.0
    mu = scenario.s21
    x = cfg.interference_threshold / cfg.peak_power / mu
    return cfg.peak_power * -math.expm1(-x) + cfg.interference_threshold / mu * float(exp1(x))


def calibrate_peak(pth: float, scenario: Scenario, target_power: float | None = None) -> float:
    """Peak power at which the underlay average power equals the budget.

    Small thresholds would need an unbounded peak; the peak is then held at
    ``BURST_CAP_FACTOR`` times the budget and the average falls short of it.
    """
    target = scenario.cognitive_power_budget if target_power is None else target_power
    if pth <= 0 or target <= 0:
        return 0.0
    cap = BURST_CAP_FACTOR * target
    if underlay_mean_power(UnderlayConfig(pth, cap), scenario) <= target:
        return cap
    lo, hi = 0.0, cap
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if underlay_mean_power(UnderlayConfig(pth, mid), scenario) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return lo


def evaluate_underlay(cfg: UnderlayConfig, scenario: Scenario, table: AmcTable, n_blocks: int,
                      seed: int, workers: int = 1) -> EvaluationReport:
    def block_fn(sample):
        return link_outcome(sample, underlay_power(sample, cfg), None, scenario, table)

    return simulate(block_fn, scenario, n_blocks, seed, workers)


def interweave_power(scenario: Scenario, cfg: TdmaConfig) -> float:
    """Burst power during the cognitive share: the budget spread over the share, capped."""
    tau = cfg.cognitive_share
    if tau == 0:
        return 0.0
    return min(scenario.cognitive_power_budget / tau, BURST_CAP_FACTOR * scenario.cognitive_power_budget)


def interweave_tdma(scenario: Scenario, table: AmcTable, cfg: TdmaConfig, n_blocks: int, seed: int,
                    workers: int = 1) -> EvaluationReport:
    """Time-shared operation: each link alone and interference-free in its share.

    Every block contributes both links' interference-free rates weighted by
    the time shares, so the primary ASE is exactly linear in ``1 - tau``
    for a fixed seed.
    """
    tau = cfg.cognitive_share
    burst = interweave_power(scenario, cfg)
    t = scenario.ber_targets
    n0 = scenario.noise_power

    def block_fn(sample):
        snr1 = scenario.primary_power * sample.s11 / n0
        snr2 = burst * sample.s22 / n0
        m1 = table.select_index(snr1, t.design_primary)
        m2 = table.select_index(snr2, t.design_cognitive) if burst > 0 else np.zeros_like(m1)
        rates = table.rates
        zeros = np.zeros(np.shape(m1), dtype=bool)
        return BlockOutcome(
            k1=(1 - tau) * rates[m1],
            k2=tau * rates[m2],
            p2=tau * np.where(m2 > 0, burst, 0.0),
            viol_p=zeros,
            viol_c=zeros,
        )

    return simulate(block_fn, scenario, n_blocks, seed, workers)
