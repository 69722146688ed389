import itertools
import math

import numpy as np
import pytest

from uneqot import ConfigurationError, CostModel, DiscreteOTProblem, SourceMeasure, mc_mass, solve_discrete_ot
from uneqot import superlevel_mass


def test_single_atom():
    res = solve_discrete_ot(DiscreteOTProblem([[0.3, 0.4]], [1.0], [[1.0]], [1.0], cost=[[2.5]]))
    assert res.cost == pytest.approx(2.5, abs=1e-12)
    assert res.plan[0, 0] == 1.0


def test_monotone_quadratic_matching(rng):
    xs = np.sort(rng.normal(size=15))
    ys = np.sort(rng.normal(size=15))
    w = np.full(15, 1.0 / 15)
    res = solve_discrete_ot(DiscreteOTProblem(xs, w, ys, w, cost_fn=lambda x, y: 0.5 * np.sum((x - y) ** 2, -1)))
    assert np.allclose(res.plan, np.diag(w), atol=1e-9)
    assert res.cost == pytest.approx(0.5 * np.mean((xs - ys) ** 2), abs=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_assignment_brute_force(rng, n):
    C = rng.uniform(size=(n, n))
    brute = min(sum(C[i, p[i]] for i in range(n)) / n for p in itertools.permutations(range(n)))
    w = np.full(n, 1.0 / n)
    res = solve_discrete_ot(DiscreteOTProblem(np.arange(n), w, np.arange(n), w, cost=C))
    assert res.cost == pytest.approx(brute, abs=1e-12)


@pytest.mark.parametrize("method", ["highs-ds", "highs-ipm"])
def test_duality_and_marginals(rng, method):
    a, b = rng.dirichlet(np.ones(30)), rng.dirichlet(np.ones(20))
    p = DiscreteOTProblem(rng.normal(size=(30, 2)), a, rng.normal(size=(20, 2)), b)
    res = solve_discrete_ot(p, method=method)
    assert abs(res.gap) <= 1e-8 * abs(res.cost)
    assert res.marginal_error <= 1e-9
    # returned potentials are dual feasible
    assert np.all(res.dual_u[:, None] + res.dual_v[None, :] <= p.cost + 1e-12)


def test_validation_errors():
    with pytest.raises(ConfigurationError):
        DiscreteOTProblem([[0.0]], [0.5], [[1.0]], [1.0])
    with pytest.raises(ConfigurationError):
        DiscreteOTProblem([[0.0]], [1.0], [[1.0]], [1.0], cost=[[np.inf]])


@pytest.mark.parametrize("method", ["mc", "rqmc"])
def test_mc_mass_half_quarter_disk(method):
    mu = SourceMeasure()
    est = mc_mass(mu, lambda x: x[:, 0] >= x[:, 1], n_samples=200_000, seed=7, method=method)
    assert abs(est.estimate - 0.5) <= 4 * est.stderr


def test_mc_mass_against_exact():
    cost, mu = CostModel("bilinear_arc"), SourceMeasure()
    a, b = cost.affine_dy(0.9)
    est = mc_mass(mu, lambda x: x @ np.asarray(a) + b >= -0.4, n_samples=400_000, seed=1)
    assert abs(est.estimate - superlevel_mass(cost, mu, 0.9, -0.4)) <= 4 * est.stderr


def test_mc_mass_reproducible():
    mu = SourceMeasure()
    pred = lambda x: x[:, 0] > 0.3  # noqa: E731
    assert mc_mass(mu, pred, 10_000, seed=3) == mc_mass(mu, pred, 10_000, seed=3)


def test_rqmc_beats_mc_stderr():
    mu = SourceMeasure("rectangle")
    pred = lambda x: x[:, 0] + x[:, 1] <= 1.0  # noqa: E731
    mc = mc_mass(mu, pred, 2**16, seed=0)
    rq = mc_mass(mu, pred, 2**16, seed=0, method="rqmc")
    assert rq.stderr < mc.stderr
    assert rq.estimate == pytest.approx(0.5, abs=4 * rq.stderr + 1e-12)


def test_quarter_disk_area_mc():
    est = mc_mass(SourceMeasure(), lambda x: np.ones(len(x), bool), n_samples=100_000, seed=2)
    assert est.estimate == pytest.approx(1.0, abs=max(4 * est.stderr, 1e-12))
    assert math.isfinite(est.stderr)
