import math
import warnings

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from uneqot import (ConfigurationError, CostModel, KProfile, NestedTransport, SourceMeasure, TargetDensity,
                    check_nestedness, density_from_k, minimal_mass_difference, nestedness_by_bounds,
                    solve_k_profile, solve_nested, superlevel_mass, transport_cost, transport_map)
from uneqot.nested import containment_level


@pytest.fixture(scope="module")
def uniform_profile():
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    nu = TargetDensity.uniform((0.0, 0.5 * math.pi), 257)
    return cost, mu, nu, solve_k_profile(cost, mu, nu)


def test_uniform_target_gives_zero_levels(uniform_profile):
    # the radial ray at angle y splits the quarter disk in proportion y/(pi/2)
    _, _, _, kp = uniform_profile
    assert np.max(np.abs(kp.k)) <= 1e-12


def test_levels_split_the_target_mass(uniform_profile):
    cost, mu, nu, kp = uniform_profile
    for i in (10, 100, 200):
        assert superlevel_mass(cost, mu, kp.grid[i], kp.k[i]) == pytest.approx(nu.cdf_at(kp.grid[i]), abs=1e-12)


def test_uniform_map_is_the_polar_angle(uniform_profile, rng):
    cost, mu, _, kp = uniform_profile
    x = mu.sample(500, rng)
    y = transport_map(cost, mu, kp, x).y
    assert np.allclose(y, np.arctan2(x[:, 1], x[:, 0]), atol=1e-10)


def test_reconstructed_density_uniform(uniform_profile):
    cost, mu, nu, kp = uniform_profile
    rec = density_from_k(cost, mu, kp, nu.interval)
    assert np.allclose(rec.values, 2.0 / math.pi, atol=1e-10)


def test_uniform_profile_nested(uniform_profile):
    cost, mu, nu, kp = uniform_profile
    res = check_nestedness(cost, mu, kp, nu)
    assert res.nested and res.witness is None


def test_increasing_density_not_nested():
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    nu = TargetDensity.from_function(lambda y: np.exp(8.0 * y), (0.0, 0.5 * math.pi), 256)
    kp = solve_k_profile(cost, mu, nu)
    res = check_nestedness(cost, mu, kp, nu)
    assert not res.nested
    y0, y1 = res.witness
    # brute-force witness check: a point of X_>=(y0, k0) lies strictly below the later level
    pts = mu.sample_grid(401)
    inside0 = cost.dy(pts, y0) >= kp(y0)
    below1 = cost.dy(pts, y1) < kp(y1) - 1e-9
    assert np.any(inside0 & below1)


def test_exponential_target_nested_and_ks():
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    nu = TargetDensity.from_function(lambda y: np.exp(-y), (0.0, 0.5), 512)
    sol = solve_nested(cost, mu, nu, n_samples=50_000, seed=3)
    assert sol.nested
    assert sol.ks_statistic <= 0.01
    # reconstructed density against the normalised target away from the end layers
    inner = slice(8, -8)
    assert np.allclose(sol.nu_density.values[inner], nu.values[inner], rtol=2e-3)


def test_map_is_deterministic(uniform_profile, rng):
    cost, mu, _, kp = uniform_profile
    x = mu.sample(64, rng)
    assert np.array_equal(transport_map(cost, mu, kp, x).y, transport_map(cost, mu, kp, x).y)


def test_transport_cost_uniform_arc(uniform_profile):
    # T(x) = polar angle, so c(x, T(x)) = -|x| and the cost is -E|x| = -2/3
    cost, mu, _, kp = uniform_profile
    assert transport_cost(cost, mu, kp, n_cells=64) == pytest.approx(-2.0 / 3.0, abs=1e-3)


def test_containment_level_matches_brute_force():
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    y0, y1, k0 = 0.3, 0.8, -0.2
    pts = mu.sample_grid(801)
    sup0 = pts[cost.dy(pts, y0) >= k0]
    assert containment_level(cost, mu, y0, y1, k0) == pytest.approx(cost.dy(sup0, y1).min(), abs=2e-3)


def test_minimal_mass_difference_pseudo_index_vanishes():
    cost = CostModel("pseudo_index", m=2, params={"w": [1.0, 1.0], "q": 1.0})
    mu = SourceMeasure("rectangle")
    for k0 in (-0.5, 0.0, 0.5):
        assert minimal_mass_difference(cost, mu, 0.2, 0.7, k0) == pytest.approx(0.0, abs=1e-14)


def test_minimal_mass_difference_positive_for_rotation():
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    assert minimal_mass_difference(cost, mu, 0.2, 0.7, -0.3) > 0.01


def test_minimal_mass_difference_rejects_unordered():
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    with pytest.raises(ConfigurationError):
        minimal_mass_difference(cost, mu, 0.7, 0.2, 0.0)


def test_nestedness_by_bounds_pseudo_index():
    cost = CostModel("pseudo_index", m=2, params={"w": [1.0, 1.0], "q": 1.0})
    mu = SourceMeasure("rectangle")
    assert nestedness_by_bounds(cost, mu, lambda y: 0.0, (0.0, 1.0), n_y=9, n_k=5)


def test_nestedness_by_bounds_small_interval():
    # on a short interval the uniform density 1/ybar dominates the minimal mass difference ratio
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    assert nestedness_by_bounds(cost, mu, lambda y: 1.0 / 0.2, (0.0, 0.2), n_y=9, n_k=5)
    assert not nestedness_by_bounds(cost, mu, lambda y: 0.01, (0.0, 1.5), n_y=9, n_k=5)


def test_kprofile_validation():
    with pytest.raises(ConfigurationError):
        KProfile(np.linspace(0, 1, 5), np.zeros(4))


def test_estimator_api(rng):
    est = NestedTransport()
    with pytest.raises(NotFittedError):
        est.transform(np.array([[0.5, 0.5]]))
    est.fit(np.ones(256))
    assert est.nested_
    x = np.array([[0.5, 0.5], [0.3, 0.1]])
    assert np.allclose(est.predict(x), np.arctan2(x[:, 1], x[:, 0]), atol=1e-10)
    assert est.get_params()["cost"] == "bilinear_arc"


def test_map_outside_transported_region_raises(uniform_profile):
    cost, mu, _, kp = uniform_profile
    short = KProfile(kp.grid[:64], kp.k[:64])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = transport_map(cost, mu, short, np.array([[0.0, 1.0], [1.0, 0.0]]), strict=False)
    assert math.isnan(res.y[0]) and res.y[1] == pytest.approx(0.0, abs=1e-12)


def test_nested_solution_respects_minimal_mass_difference():
    # nestedness forces D^min(y0, y1, k(y0)) <= nu([y0, y1]) up to grid tolerance
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    nu = TargetDensity.from_function(lambda y: np.exp(-y), (0.0, 0.5), 128)
    kp = solve_k_profile(cost, mu, nu)
    assert check_nestedness(cost, mu, kp, nu).nested
    for i in range(0, 128, 16):
        for j in range(i + 8, 128, 24):
            y0, y1 = kp.grid[i], kp.grid[j]
            d = minimal_mass_difference(cost, mu, y0, y1, kp.k[i])
            assert d <= float(nu.interval_mass(y0, y1)) + 1e-9
