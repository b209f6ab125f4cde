"""Partition of the scaled-SNIR plane into common rate regions.

Product boundaries (``alpha * beta = const``) separate bands inside which the
set of feasible (primary, cognitive) rate pairs is fixed; rays
(``beta / alpha = const``) and auxiliary product boundaries refine the bands
into ``rays * products`` regions.  Regions are numbered row-major: region
``band * rays + ray``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .amc_model import AmcTable, BerTargets
from .channel import Scenario, iter_sample_chunks, make_rng, sample_block, scaled_snirs

# Relative tolerance for treating two threshold products as the same boundary.
PRODUCT_RTOL = 1e-9

DEFAULT_PILOT_SAMPLES = 100_000


def distinct_products(table: AmcTable, targets: BerTargets) -> np.ndarray:
    """Sorted distinct threshold products ``g_B1(R_n) * g_B2(R_m)``, ``n, m >= 1``."""
    g1 = table.thresholds(targets.design_primary)[1:]
    g2 = table.thresholds(targets.design_cognitive)[1:]
    prods = np.sort(np.outer(g1, g2).ravel())
    keep = np.ones(prods.size, dtype=bool)
    keep[1:] = np.diff(prods) > PRODUCT_RTOL * prods[1:]
    return prods[keep]


@dataclass
class AllocationProblem:
    """Discrete average-constrained rate assignment over regions.

    ``primary_rate[i, m]`` is the primary rate in region ``i`` when the
    cognitive link uses mode ``m``; column 0 holds the silent-cognitive rate.
    ``cognitive_thresholds[0]`` is 0 (no transmission, no power).
    """

    rates: np.ndarray
    cognitive_thresholds: np.ndarray
    prob: np.ndarray
    norm_power: np.ndarray
    primary_rate: np.ndarray
    required_primary_ase: float
    power_budget: float
    pinned: np.ndarray | None = None

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        self.cognitive_thresholds = np.asarray(self.cognitive_thresholds, dtype=float)
        self.prob = np.asarray(self.prob, dtype=float)
        self.norm_power = np.asarray(self.norm_power, dtype=float)
        self.primary_rate = np.asarray(self.primary_rate, dtype=float)
        if self.pinned is None:
            self.pinned = np.zeros(self.prob.size, dtype=bool)
        n_regions, n_cols = self.primary_rate.shape
        if n_cols != self.rates.size or self.prob.size != n_regions or self.norm_power.size != n_regions:
            raise ValueError("inconsistent allocation problem dimensions")
        if self.cognitive_thresholds[0] != 0:
            raise ValueError("the outage mode must have a zero threshold")

    @property
    def n_regions(self) -> int:
        return self.prob.size

    def averages(self, modes) -> tuple[float, float, float]:
        """``(k1_avg, k2_avg, p2_avg)`` for per-region cognitive mode indices."""
        modes = np.asarray(modes, dtype=int)
        rows = np.arange(self.n_regions)
        k1 = float(np.sum(self.primary_rate[rows, modes] * self.prob))
        k2 = float(np.sum(self.rates[modes] * self.prob))
        p2 = float(np.sum(self.cognitive_thresholds[modes] * self.norm_power * self.prob))
        return k1, k2, p2


@dataclass
class RegionGrid:
    """Region geometry plus Monte Carlo statistics once estimated.

    ``product_boundaries`` excludes 0 and infinity, likewise ``ray_boundaries``.
    """

    table: AmcTable
    targets: BerTargets
    rate_products: np.ndarray
    product_boundaries: np.ndarray
    ray_boundaries: np.ndarray
    prob: np.ndarray | None = None
    norm_power: np.ndarray | None = None
    silent_rate: np.ndarray | None = None
    n_samples: int = 0
    seed: int | None = None
    counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_rays(self) -> int:
        return self.ray_boundaries.size + 1

    @property
    def n_products(self) -> int:
        return self.product_boundaries.size + 1

    @property
    def n_bands(self) -> int:
        """Number of common-rate-set bands (M)."""
        return self.rate_products.size + 1

    @property
    def n_regions(self) -> int:
        return self.n_rays * self.n_products

    @property
    def has_stats(self) -> bool:
        return self.prob is not None

    def product_range(self, index: int) -> tuple[float, float]:
        band = index // self.n_rays
        edges = np.concatenate(([0.0], self.product_boundaries, [np.inf]))
        return float(edges[band]), float(edges[band + 1])

    def ray_range(self, index: int) -> tuple[float, float]:
        ray = index % self.n_rays
        edges = np.concatenate(([0.0], self.ray_boundaries, [np.inf]))
        return float(edges[ray]), float(edges[ray + 1])

    def product_lower(self) -> np.ndarray:
        """Infimum of ``alpha * beta`` for every region."""
        lo = np.concatenate(([0.0], self.product_boundaries))
        return np.repeat(lo, self.n_rays)

    @property
    def heavy_tailed(self) -> np.ndarray:
        """Regions where the conditional mean of ``1/beta`` diverges.

        Only the cell touching the origin band and the first ray sector lets
        ``beta`` approach 0 with non-vanishing density.
        """
        flags = np.zeros(self.n_regions, dtype=bool)
        flags[0] = True
        return flags

    def rate_map(self) -> np.ndarray:
        """Primary rate for every region and cognitive mode, shape ``(regions, N + 1)``.

        Column 0 is unused (set to 0); see ``silent_rate`` for the silent case.
        """
        return np.vstack([rate_pair_map(lo, self.table, self.targets) for lo in self.product_lower()])

    def problem(self, scenario: Scenario) -> AllocationProblem:
        if not self.has_stats:
            raise ValueError("region statistics have not been estimated")
        primary_rate = self.rate_map()
        primary_rate[:, 0] = self.silent_rate
        return AllocationProblem(
            rates=self.table.rates,
            cognitive_thresholds=self.table.thresholds(self.targets.design_cognitive),
            prob=self.prob,
            norm_power=self.norm_power,
            primary_rate=primary_rate,
            required_primary_ase=scenario.required_primary_ase,
            power_budget=scenario.cognitive_power_budget,
            pinned=self.heavy_tailed.copy(),
        )


def rate_pair_map(product_lower: float, table: AmcTable, targets: BerTargets) -> np.ndarray:
    """Primary rate induced by each cognitive mode at the given product infimum.

    The primary gets the highest rate whose threshold fits under
    ``product_lower / g_B2(r)``, or outage when none does.
    """
    g1 = table.thresholds(targets.design_primary)[1:]
    g2 = table.thresholds(targets.design_cognitive)[1:]
    rates = table.rates
    out = np.zeros(rates.size)
    for m, gm in enumerate(g2, start=1):
        fits = g1 * gm <= product_lower * (1 + PRODUCT_RTOL)
        out[m] = rates[np.flatnonzero(fits)[-1] + 1] if fits.any() else 0.0
    return out


def locate_region(alpha, beta, grid: RegionGrid):
    """Row-major region index of each scaled-SNIR point (half-open cells)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    band = np.searchsorted(grid.product_boundaries, alpha * beta, side="right")
    ray = np.searchsorted(grid.ray_boundaries, beta / alpha, side="right")
    idx = band * grid.n_rays + ray
    return int(idx) if idx.ndim == 0 else idx


def _split_bands(boundaries: np.ndarray, products: np.ndarray, n_splits: int) -> np.ndarray:
    """Add ``n_splits`` boundaries, each at the conditional median of the most populated band."""
    bounds = list(boundaries)
    for _ in range(n_splits):
        edges = np.concatenate(([0.0], bounds, [np.inf]))
        band = np.searchsorted(edges[1:-1], products, side="right")
        counts = np.bincount(band, minlength=edges.size - 1)
        for b in np.argsort(-counts, kind="stable"):
            inside = products[band == b]
            if inside.size < 2:
                continue
            cut = float(np.median(inside))
            if edges[b] < cut < edges[b + 1]:
                bounds = sorted(bounds + [cut])
                break
        else:
            raise ValueError("not enough pilot samples to place auxiliary product boundaries")
    return np.array(bounds)


def build_grid(
    table: AmcTable,
    targets: BerTargets,
    rays: int,
    products: int,
    scenario: Scenario,
    seed: int = 0,
    pilot_samples: int = DEFAULT_PILOT_SAMPLES,
) -> RegionGrid:
    """Construct region geometry from a pilot Monte Carlo run.

    Parameters
    ----------
    rays : int
        Number of ray sectors (L); sector edges sit at equally spaced
        quantiles of the pilot ``beta / alpha``.
    products : int
        Number of product bands after refinement (C); must be at least the
        number of common-rate-set bands.
    """
    if rays < 1:
        raise ValueError("need at least one ray sector")
    z = distinct_products(table, targets)
    m_bands = z.size + 1
    if products < m_bands:
        raise ValueError(f"products={products} is below the {m_bands} common rate set bands")
    pilot = scaled_snirs(sample_block(scenario, make_rng(seed), pilot_samples))
    ray_bounds = np.quantile(pilot.beta / pilot.alpha, np.arange(1, rays) / rays)
    prod_bounds = _split_bands(z, pilot.alpha * pilot.beta, products - m_bands)
    return RegionGrid(table, targets, z, prod_bounds, np.asarray(ray_bounds, dtype=float))


def grid_from_boundaries(table, targets, product_boundaries, ray_boundaries) -> RegionGrid:
    """Grid with explicit boundaries; every common-rate-set boundary must be included."""
    z = distinct_products(table, targets)
    pb = np.sort(np.asarray(product_boundaries, dtype=float))
    missing = [v for v in z if not np.any(np.isclose(pb, v, rtol=PRODUCT_RTOL, atol=0))]
    if missing:
        raise ValueError(f"product boundaries miss common-rate-set boundaries {missing}")
    return RegionGrid(table, targets, z, pb, np.sort(np.asarray(ray_boundaries, dtype=float)))


def estimate_region_stats(grid: RegionGrid, scenario: Scenario, n_samples: int, seed: int) -> RegionGrid:
    """Fill region probability, normalised power and silent-cognitive primary rate.

    The normalised power is ``P1 * E[1/beta | region]``; the silent rate is the
    in-region average of the rate the primary picks from ``P1 * s11 / N0``.
    """
    n = grid.n_regions
    counts = np.zeros(n, dtype=np.int64)
    inv_beta = np.zeros(n)
    silent = np.zeros(n)
    target = grid.targets.design_primary
    for _, sample in iter_sample_chunks(scenario, n_samples, seed):
        sc = scaled_snirs(sample)
        idx = locate_region(sc.alpha, sc.beta, grid)
        counts += np.bincount(idx, minlength=n)
        inv_beta += np.bincount(idx, weights=1.0 / sc.beta, minlength=n)
        snr1 = scenario.primary_power * sample.s11 / scenario.noise_power
        silent += np.bincount(idx, weights=grid.table.select_rate(snr1, target), minlength=n)
    safe = np.maximum(counts, 1)
    grid.counts = counts
    grid.prob = counts / n_samples
    grid.norm_power = np.where(counts > 0, scenario.primary_power * inv_beta / safe, 0.0)
    grid.silent_rate = np.where(counts > 0, silent / safe, 0.0)
    grid.n_samples = n_samples
    grid.seed = seed
    return grid


def grid_to_csv(grid: RegionGrid) -> str:
    """CSV dump with one row per region (regions numbered from 1)."""
    n_modes = grid.table.n_modes
    buf = io.StringIO()
    buf.write(f"# rays={grid.n_rays} products={grid.n_products} bands={grid.n_bands} "
              f"regions={grid.n_regions} n_samples={grid.n_samples} seed={grid.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["region", "prod_lo", "prod_hi", "ray_lo", "ray_hi", "prob", "norm_power", "silent_rate"]
        + [f"k1_at_r{m}" for m in range(1, n_modes + 1)]
    )
    rate_map = grid.rate_map()
    for i in range(grid.n_regions):
        plo, phi = grid.product_range(i)
        rlo, rhi = grid.ray_range(i)
        writer.writerow(
            [i + 1, repr(plo), repr(phi), repr(rlo), repr(rhi),
             repr(float(grid.prob[i])), repr(float(grid.norm_power[i])), repr(float(grid.silent_rate[i]))]
            + [repr(float(v)) for v in rate_map[i, 1:]]
        )
    return buf.getvalue()
