import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nakernel.errors import InvalidArgumentError, UnsupportedRegionError
from nakernel.randpath import phi_cdf
from nakernel.reflect import (SupEventQuery, bound_abs_sup_interval, density_limit_bound,
                              prob_hit_then_below, simulate_sup_paths, sup_tail_bound)
from nakernel.rng import derive_rng


@pytest.fixture(scope="module")
def paths():
    hi, lo, end = simulate_sup_paths(derive_rng(2024), 40000, 1.0, 2000)
    return hi, lo, end


def test_hit_then_below_values():
    assert prob_hit_then_below(1, 1, 1) == pytest.approx(1 - phi_cdf(1), abs=1e-15)
    assert prob_hit_then_below(1, 0.5, 1) == pytest.approx(1 - phi_cdf(1.5), abs=1e-15)
    with pytest.raises(InvalidArgumentError):
        prob_hit_then_below(0.0, 1.0, 1.0)


def test_hit_then_below_matches_mc(paths):
    hi, _, end = paths
    for a, x in [(1.0, 0.5), (1.0, 2.0), (0.7, -0.4)]:
        mc = np.mean((hi >= a) & (end <= x))
        exact = prob_hit_then_below(a, x, 1.0)
        # discrete sup under-counts crossings
        assert -0.005 <= exact - mc <= 0.02


def test_regions():
    assert SupEventQuery(2, -1, 1, 1).region() == "R1"
    assert SupEventQuery(1, -3, -2, 1).region() == "R2"
    assert SupEventQuery(1, 2, 3, 1).region() == "R3"
    assert SupEventQuery(1, 0.5, 3, 1).region() == "R4"
    with pytest.raises(UnsupportedRegionError):
        SupEventQuery(1, -2, 0, 1).region()
    with pytest.raises(InvalidArgumentError):
        SupEventQuery(1, 1, 1, 1)
    with pytest.raises(InvalidArgumentError):
        SupEventQuery(1, 0, 1, 0)


def test_r1_formula_value():
    P = phi_cdf
    expected = 2 * P(5) - 2 * P(3) + 2 * P(5) - 2 * P(3)
    assert bound_abs_sup_interval(SupEventQuery(2, -1, 1, 1)) == pytest.approx(expected, abs=1e-15)


def test_zero_barrier_dominates_interval_mass():
    val = bound_abs_sup_interval(SupEventQuery(0, -1, 1, 1))
    assert val >= phi_cdf(1) - phi_cdf(-1)


def _random_query(rng, region):
    t = rng.uniform(0.5, 2)
    a = rng.uniform(0.2, 2)
    if region == "R1":
        x, y = np.sort(rng.uniform(-a, a, 2))
    elif region == "R2":
        x, y = np.sort(rng.uniform(-a - 3, -a - 1e-3, 2))
    elif region == "R3":
        x, y = np.sort(rng.uniform(a + 1e-3, a + 3, 2))
    else:
        x, y = rng.uniform(1e-3, a), rng.uniform(a + 1e-3, a + 3)
    return SupEventQuery(a, x, y, t)


@pytest.mark.parametrize("region", ["R1", "R2", "R3", "R4"])
def test_bounds_dominate_mc(paths, region):
    hi, lo, end = paths
    absmax = np.maximum(hi, -lo)
    rng = derive_rng(7, ord(region[1]))
    for _ in range(50):
        q = _random_query(rng, region)
        assert q.region() == region
        s = np.sqrt(q.t)   # Brownian scaling maps horizon t to 1
        mask = (absmax >= q.a / s) & (end >= q.x / s) & (end <= q.y / s)
        p = mask.mean()
        se = np.sqrt(p * (1 - p) / mask.size)
        assert bound_abs_sup_interval(q) >= p - 3 * se - 1e-12


@pytest.mark.parametrize("region", ["R1", "R2", "R3", "R4"])
def test_bound_nonincreasing_in_barrier(region):
    rng = derive_rng(8, ord(region[1]))
    for _ in range(50):
        q = _random_query(rng, region)
        a2 = q.a * 1.01
        q2 = SupEventQuery(a2, q.x, q.y, q.t)
        try:
            if q2.region() != region:
                continue
        except UnsupportedRegionError:
            continue
        assert bound_abs_sup_interval(q2) <= bound_abs_sup_interval(q) + 1e-12


def test_density_limit_values():
    assert density_limit_bound(0, 0, 1) == pytest.approx(2 / np.sqrt(np.pi))
    assert density_limit_bound(3, 1, 1) == pytest.approx(2 / np.sqrt(np.pi) * np.exp(-25 / 4))
    assert density_limit_bound(1, 1, 1) == pytest.approx(2 / np.sqrt(np.pi) * np.exp(-0.25))
    with pytest.raises(InvalidArgumentError):
        density_limit_bound(1, 0, 0)


def test_branch_continuity_100_points():
    rng = derive_rng(99)
    for a, t in zip(rng.uniform(0.1, 3, 100), rng.uniform(0.2, 3, 100)):
        below = np.nextafter(a, -np.inf)
        assert abs(prob_hit_then_below(a, a, t) - prob_hit_then_below(a, below, t)) <= 1e-10
        assert abs(density_limit_bound(a, a, t) - density_limit_bound(a, below, t)) <= 1e-10
        assert abs(density_limit_bound(a, -a, t) - density_limit_bound(a, -below, t)) <= 1e-10


def test_sup_tail_bound(paths):
    hi, lo, _ = paths
    assert sup_tail_bound(1.0, 1.0, 1.0, c=1.0) == 1.0
    assert sup_tail_bound(0, 2, 1) == pytest.approx(2 * np.exp(-1))
    p = np.mean(np.maximum(hi, -lo) >= 2)
    assert sup_tail_bound(0, 2, 1) >= p - 0.005
    with pytest.raises(InvalidArgumentError):
        sup_tail_bound(2, 1, 1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 4), st.floats(-6, 6), st.floats(-6, 6), st.floats(0.05, 5))
def test_bounds_in_unit_range(a, x, y, t):
    if abs(x - y) < 1e-9:
        return
    x, y = min(x, y), max(x, y)
    try:
        val = bound_abs_sup_interval(SupEventQuery(a, x, y, t))
    except UnsupportedRegionError:
        return
    assert -1e-12 <= val
    if a > 0:
        p = prob_hit_then_below(a, x, t)
        assert 0 <= p <= 1
