import numpy as np
import pytest
from scipy import integrate

from cogamc.amc_model import BerTargets
from cogamc.channel import make_rng, sample_block, scaled_snirs
from cogamc.region_grid import (AllocationProblem, build_grid, distinct_products, estimate_region_stats,
                                grid_from_boundaries, grid_to_csv, locate_region, rate_pair_map)

# P(alpha * beta <= z) on the symmetric 1 / 0.05 setup, by quadrature over beta.
C = 0.05
BAND_ORACLE = {
    1.2052214731809798: 0.014573893990622295,
    17.19134602515626: 0.10276797288378708,
    4289.0178346979865: 0.8337520204970098,
}
# E[1/beta ; alpha * beta >= g1(R1) g2(R1)] at design BER 1e-4, same setup.
INV_BETA_ABOVE_Z0 = 0.24184590658109623


def test_band_oracle_reproduces():
    f = lambda b: C / (1 + b * C) ** 2
    F = lambda z: 1 - 1 / (1 + z * C)
    for z, p in BAND_ORACLE.items():
        assert integrate.quad(lambda b: f(b) * F(z / b), 0, np.inf, limit=400)[0] == pytest.approx(p, rel=1e-8)


def test_distinct_products(table):
    z = distinct_products(table, BerTargets())
    assert z.size == 27
    assert np.all(np.diff(z) > 0)
    assert distinct_products(table, BerTargets(1e-3, 1e-4)).size == 45


def test_product_band_probabilities(small_grid):
    edges = small_grid.product_boundaries
    for z, p in BAND_ORACLE.items():
        hit = np.flatnonzero(np.isclose(edges, z, rtol=1e-9))
        if hit.size == 0:
            continue
        below = small_grid.prob[: (hit[0] + 1) * small_grid.n_rays].sum()
        se = np.sqrt(p * (1 - p) / small_grid.n_samples)
        assert abs(below - p) < 4 * se


def test_norm_power_above_first_band(small_grid, scenario):
    first = small_grid.n_rays  # regions of band 0 sit before this index
    band0_hi = small_grid.product_boundaries[0]
    assert band0_hi == pytest.approx(small_grid.rate_products[0])
    total = np.sum(small_grid.prob[first:] * small_grid.norm_power[first:]) / scenario.primary_power
    assert total == pytest.approx(INV_BETA_ABOVE_Z0, rel=0.03)


def test_probabilities_sum_to_one(small_grid):
    assert small_grid.prob.sum() == pytest.approx(1.0, abs=1e-12)
    assert small_grid.n_regions == 100
    assert small_grid.n_bands == 28


def test_ray_sectors_balanced(small_grid):
    by_ray = small_grid.prob.reshape(-1, small_grid.n_rays).sum(axis=0)
    assert np.allclose(by_ray, 1 / small_grid.n_rays, atol=0.01)


def test_locate_matches_linear_scan(small_grid, scenario):
    ab = scaled_snirs(sample_block(scenario, make_rng(77), 10_000))
    fast = locate_region(ab.alpha, ab.beta, small_grid)
    prod, ratio = ab.alpha * ab.beta, ab.beta / ab.alpha
    for k in range(10_000):
        found = [i for i in range(small_grid.n_regions)
                 if small_grid.product_range(i)[0] <= prod[k] < small_grid.product_range(i)[1]
                 and small_grid.ray_range(i)[0] <= ratio[k] < small_grid.ray_range(i)[1]]
        assert found == [fast[k]]


def test_locate_boundary_goes_up(table):
    g = grid_from_boundaries(table, BerTargets(), distinct_products(table, BerTargets()), [1.0])
    z0 = g.product_boundaries[0]
    # alpha * beta == z0 and beta / alpha == 1 sit in the upper band and upper sector.
    a = np.sqrt(z0)
    assert locate_region(a, a, g) == 1 * g.n_rays + 1


def test_rate_map_monotone(small_grid):
    rm = small_grid.rate_map()[:, 1:]
    assert np.all(np.diff(rm, axis=1) <= 0)
    assert np.all(np.diff(rm.reshape(-1, small_grid.n_rays, rm.shape[1])[:, 0, :], axis=0) >= 0)


def test_rate_pair_map_bands(table):
    t = BerTargets()
    g1 = table.thresholds(t.design_primary)
    g2 = table.thresholds(t.design_cognitive)
    # Just above g1(R3) * g2(R2): primary R3 when cognitive uses R2.
    row = rate_pair_map(g1[3] * g2[2] * (1 + 1e-12), table, t)
    assert row[2] == table.rates[3]
    assert rate_pair_map(0.5 * g1[1] * g2[1], table, t)[1:].max() == 0


def test_silent_rate_bounds(small_grid, table):
    # Noise can hold the silent rate a little under the interference-free map.
    rm = small_grid.rate_map()
    occupied = small_grid.prob > 0
    assert np.all(small_grid.silent_rate[occupied] >= rm[occupied, 1] - 0.1)
    assert np.all(small_grid.silent_rate <= table.max_rate)
    assert np.all(small_grid.silent_rate[occupied] > 3.5)


def test_heavy_tail_flag(small_grid):
    flags = small_grid.heavy_tailed
    assert flags[0] and flags.sum() == 1


def test_problem_pins_heavy_region(small_grid, scenario):
    prob = small_grid.problem(scenario)
    assert prob.pinned[0] and not prob.pinned[1:].any()
    assert np.array_equal(prob.primary_rate[:, 0], small_grid.silent_rate)


def test_build_grid_validation(table, scenario):
    with pytest.raises(ValueError):
        build_grid(table, scenario.ber_targets, 2, 10, scenario)
    with pytest.raises(ValueError):
        build_grid(table, scenario.ber_targets, 0, 50, scenario)
    with pytest.raises(ValueError):
        grid_from_boundaries(table, scenario.ber_targets, [1.0, 2.0], [])


def test_stats_are_seeded(table, scenario):
    def make():
        g = build_grid(table, scenario.ber_targets, 2, 40, scenario, seed=4, pilot_samples=20_000)
        return estimate_region_stats(g, scenario, 50_000, 5)
    a, b = make(), make()
    assert np.array_equal(a.prob, b.prob) and np.array_equal(a.norm_power, b.norm_power)
    assert grid_to_csv(a) == grid_to_csv(b)


def test_grid_csv(small_grid):
    lines = grid_to_csv(small_grid).splitlines()
    assert lines[0].startswith("#")
    assert lines[1].split(",")[:3] == ["region", "prod_lo", "prod_hi"]
    assert len(lines) == 2 + small_grid.n_regions
    assert lines[2].split(",")[0] == "1"


def test_problem_dimension_check():
    with pytest.raises(ValueError):
        AllocationProblem([0, 1], [0, 1], [1.0], [1.0], [[1, 1, 1]], 0, 1)
    with pytest.raises(ValueError):
        AllocationProblem([0, 1], [1, 2], [1.0], [1.0], [[1, 1]], 0, 1)


def _ratio_ray_cdf(w, scenario):
    """P(beta / alpha <= w) by quadrature over alpha."""
    ca = scenario.s21 / scenario.s11
    cb = scenario.s12 / scenario.s22
    f_alpha = lambda a: ca / (1 + a * ca) ** 2
    return integrate.quad(lambda a: f_alpha(a) * (1 - 1 / (1 + w * a * cb)), 0, np.inf, limit=400)[0]


def test_ray_sector_probabilities(table, scenario):
    z = distinct_products(table, scenario.ber_targets)
    g = estimate_region_stats(grid_from_boundaries(table, scenario.ber_targets, z, [0.3, 2.0]),
                              scenario, 200_000, 3)
    by_ray = g.prob.reshape(-1, 3).sum(axis=0)
    edges = [0.0, _ratio_ray_cdf(0.3, scenario), _ratio_ray_cdf(2.0, scenario), 1.0]
    expected = np.diff(edges)
    se = np.sqrt(expected * (1 - expected) / 200_000)
    assert np.all(np.abs(by_ray - expected) < 3 * se)


def test_two_mode_band_count():
    from cogamc.amc_model import AmcMode, AmcTable
    t = AmcTable([AmcMode(0, 0.0), AmcMode(1, 1.0, 0.2, 1.0), AmcMode(2, 2.0, 0.15, 0.3)])
    targets = BerTargets(1e-3, 1e-4, 1.0)
    assert distinct_products(t, targets).size + 1 == 5


def test_tiling(small_grid, scenario):
    ab = scaled_snirs(sample_block(scenario, make_rng(8), 100_000))
    idx = locate_region(ab.alpha, ab.beta, small_grid)
    assert idx.min() >= 0 and idx.max() < small_grid.n_regions
    assert locate_region(1e-3, 1e-6, small_grid) == 0


def test_outer_and_inner_bands(small_grid, table):
    rm = small_grid.rate_map()
    assert np.all(rm[-small_grid.n_rays:, 1:] == table.max_rate)
    assert np.all(rm[: small_grid.n_rays, 1:] == 0)


def test_conservative_primary_ber(small_grid, scenario, table):
    # With p2 = P1 g2(r) / beta the interference-limited gamma1 is alpha * beta / g2(r).
    g1 = table.thresholds(scenario.ber_targets.design_primary)
    g2 = table.thresholds(scenario.ber_targets.design_cognitive)
    rates = list(table.rates)
    rm = small_grid.rate_map()
    ab = scaled_snirs(sample_block(scenario, make_rng(10), 20_000))
    idx = locate_region(ab.alpha, ab.beta, small_grid)
    for r in range(1, 8):
        k1 = rm[idx, r]
        gamma1 = ab.alpha * ab.beta / g2[r]
        need = np.array([g1[rates.index(v)] for v in k1])
        assert np.all(gamma1 >= need * (1 - 1e-9))


def test_single_region_probability(table, scenario):
    g = grid_from_boundaries(table, scenario.ber_targets, distinct_products(table, scenario.ber_targets), [])
    g = estimate_region_stats(g, scenario, 50_000, 0)
    assert g.n_rays == 1 and g.prob.sum() == pytest.approx(1.0)
