import dataclasses

import numpy as np
import pytest
from scipy import integrate
from sklearn.exceptions import NotFittedError

from uneqot import (HedonicEquilibrium, HedonicInstance, HypothesisViolation, KProfile, boundary_vanishing_check,
                    differential_condition, hedonic_nestedness_check, solve_M)
from uneqot.hedonic import discretize_solution, hedonic_objective, solve_M_at


def exact_M(y):
    y = np.asarray(y, dtype=float)
    return np.where(y <= 0.8, 0.75 * y, np.sqrt(np.maximum(4.0 * y - y * y, 0.0)) - 1.0)


def exact_density(y):
    y = np.asarray(y, dtype=float)
    return np.where(y < 0.8, 0.75, (2.0 - y) / np.sqrt(4.0 * y - y * y))


@pytest.fixture(scope="module")
def solved():
    inst = HedonicInstance.example()
    return inst, solve_M(inst, grid=512)


@pytest.mark.parametrize("y", [0.3, 0.8, 1.2, 1.7])
def test_levels_balance_both_markets(y):
    inst = HedonicInstance.example()
    M, k1, k2 = solve_M_at(inst, y)
    assert k1 + k2 == pytest.approx(0.0, abs=1e-12)
    # buyers: {y x1 - x2 >= k1} on the unit square; sellers: {x <= y - k2} on the unit interval
    buyer = integrate.quad(lambda s: min(max(y * s - k1, 0.0), 1.0), 0.0, 1.0,
                           points=[t for t in (k1 / y, (1 + k1) / y) if 0 < t < 1] or None, epsabs=1e-14)[0]
    assert buyer == pytest.approx(M, abs=1e-12)
    assert y - k2 == pytest.approx(M, abs=1e-12)
    assert M == pytest.approx(float(exact_M(y)), abs=1e-12)


def test_profile_matches_exact(solved):
    _, sol = solved
    g = sol.support_grid
    assert np.max(np.abs(sol.M[sol.in_support] - exact_M(g))) <= 1e-10


def test_support_and_transition(solved):
    _, sol = solved
    assert sol.support == pytest.approx((0.0, 2.0), abs=1e-9)
    assert len(sol.transition_points) == 1
    assert sol.transition_points[0] == pytest.approx(0.8, abs=1e-9)


def test_values_at_transition_and_top():
    inst = HedonicInstance.example()
    M, k1, k2 = solve_M_at(inst, 0.8)
    assert (M, k1, k2) == pytest.approx((0.6, -0.2, 0.2), abs=1e-12)
    assert solve_M_at(inst, 2.0)[0] == pytest.approx(1.0, abs=1e-12)


def test_outside_support_raises():
    with pytest.raises(HypothesisViolation):
        solve_M_at(HedonicInstance.example(), 2.5)


def test_density_interior(solved):
    _, sol = solved
    y = np.array([0.2, 0.5, 1.0, 1.5])
    assert np.allclose(sol.nu.pdf(y), exact_density(y), atol=1e-4)


def test_residual_and_potentials(solved):
    _, sol = solved
    assert sol.residual <= 1e-12


def test_nested(solved):
    inst, sol = solved
    res = hedonic_nestedness_check(inst, sol)
    assert res.nested and res.witness is None
    assert res.monotone and res.intercept_increasing


def test_reversed_levels_not_nested(solved):
    inst, sol = solved
    bad = dataclasses.replace(sol, k1=KProfile(sol.k1.grid, sol.k1.k[::-1]))
    res = hedonic_nestedness_check(inst, bad)
    assert not res.nested
    side, y0, y1 = res.witness
    assert side == 1 and y0 < y1
    # brute force: a buyer in X_>=(y0, k(y0)) sits strictly below the later level
    cost, _ = inst.buyer
    s = np.linspace(0.0, 1.0, 201)
    pts = np.stack(np.meshgrid(s, s), axis=-1).reshape(-1, 2)
    k0, k1 = bad.k1(y0), bad.k1(y1)
    assert np.any((cost.dy(pts, y0) >= k0) & (cost.dy(pts, y1) < k1 - 1e-12))


@pytest.mark.parametrize("y", [0.5, 1.2])
def test_differential_condition_slope(y):
    # sellers give k1 = M - y, so k1' = M' - 1
    inst = HedonicInstance.example()
    M, k1, k2 = solve_M_at(inst, y)
    x1 = np.array([0.5, 0.5 * y - k1])
    dc = differential_condition(inst, y, x1, np.array([y - k2]))
    assert dc.k1prime == pytest.approx(float(exact_density(y)) - 1.0, abs=1e-10)


def test_differential_condition_rejects_unmatched():
    inst = HedonicInstance.example()
    with pytest.raises(HypothesisViolation):
        differential_condition(inst, 0.5, np.array([0.5, 0.5]), np.array([0.2]))


def test_boundary_behaviour():
    inst = HedonicInstance.example((0.0, 2.0))
    sol = solve_M(inst, grid=512)
    rep = boundary_vanishing_check(inst, sol)
    lo, hi = rep
    assert not lo and rep.nu_lo == pytest.approx(0.75, abs=1e-3)
    assert hi and rep.precondition_hi


def test_equilibrium_beats_perturbations(solved):
    inst, sol = solved
    y, w = discretize_solution(sol, 40)
    base = hedonic_objective(inst, y, w, n_cells=16)
    for shift in (0.05, -0.05):
        pert = np.clip(w * (1.0 + shift * np.sign(y - 1.0)), 0.0, None)
        assert hedonic_objective(inst, y, pert / pert.sum(), n_cells=16) > base - 1e-12


def test_estimator_api():
    est = HedonicEquilibrium(grid=256)
    with pytest.raises(NotFittedError):
        est.predict([0.5])
    est.fit()
    assert est.nested_
    assert est.predict([0.4, 1.0]) == pytest.approx(exact_M([0.4, 1.0]), abs=1e-4)
