import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from uneqot import (BestReplySolver, ConfigurationError, CostModel, DiscreteMeasure, DiscreteOTProblem,
                    HypothesisViolation, InteractionSpec, SourceMeasure, best_response, estimate_hypotheses,
                    first_variation, generalized_nestedness_check, solve_discrete_ot, solve_fixed_point, w1)
from uneqot.best_reply import quantile_particles


@pytest.fixture(scope="module")
def instance():
    cost = CostModel("quadratic", m=1)
    spec = InteractionSpec(V="quadratic", alpha=1.0, y0=(0.0,), W="quadratic_interaction", beta=1.0)
    src = SourceMeasure("unit_interval")
    return cost, spec, src, quantile_particles(src, 400)


def test_first_variation_brute_force(rng):
    spec = InteractionSpec(alpha=0.7, y0=(0.2,), beta=1.3)
    nu = DiscreteMeasure(rng.normal(size=(30, 1)), rng.dirichlet(np.ones(30)))
    y = rng.normal(size=5)
    val, grad, hess = first_variation(spec, nu, y[:, None])
    z, w = nu.points[:, 0], nu.weights
    ref = 0.35 * (y - 0.2) ** 2 + np.array([np.sum(w * 0.65 * (t - z) ** 2) for t in y])
    dref = 0.7 * (y - 0.2) + np.array([np.sum(w * 1.3 * (t - z)) for t in y])
    assert np.allclose(val, ref)
    assert np.allclose(grad[:, 0], dref)
    assert np.allclose(hess[:, 0, 0], 2.0)


def test_best_response_closed_form(instance, rng):
    cost, spec, _, _ = instance
    nu = DiscreteMeasure(rng.uniform(0.0, 1.0, size=(20, 1)))
    x = rng.uniform(0.0, 1.0, size=50)
    m = float(nu.mean()[0])
    assert np.allclose(best_response(cost, spec, nu, x), (x + m) / 3.0, atol=1e-12)


def test_best_response_grid_search_polynomial_potential():
    cost = CostModel("quadratic", m=1)
    spec = InteractionSpec(V="polynomial", coeffs=(0.0, -0.3, 0.2, 0.0, 0.5), W="none")
    nu = DiscreteMeasure.dirac([0.0])
    x = np.linspace(0.0, 1.0, 7)
    ys = np.linspace(-1.0, 2.0, 300_001)
    V = -0.3 * ys + 0.2 * ys**2 + 0.5 * ys**4
    ref = np.array([ys[np.argmin(0.5 * (xi - ys) ** 2 + V)] for xi in x])
    assert np.allclose(best_response(cost, spec, nu, x), ref, atol=2e-5)


def test_best_response_two_dimensional(rng):
    cost = CostModel("quadratic", m=2)
    spec = InteractionSpec(alpha=1.0, y0=(0.1, -0.2), beta=0.5, n=2)
    nu = DiscreteMeasure(rng.uniform(0.0, 1.0, size=(10, 2)))
    x = rng.uniform(0.0, 1.0, size=(8, 2))
    ref = (x + 0.5 * nu.mean() + np.array([0.1, -0.2])) / 2.5
    got = best_response(cost, spec, nu, x, Y=[(-1.0, 2.0), (-1.0, 2.0)])
    assert np.allclose(got, ref, atol=1e-10)


def test_inward_boundary_gradient_raises(instance):
    cost, _, _, _ = instance
    spec = InteractionSpec(alpha=1.0, y0=(5.0,), W="none")
    with pytest.raises(HypothesisViolation):
        best_response(cost, spec, DiscreteMeasure.dirac([0.0]), np.array([0.5]))


def test_w1_matches_lp(rng):
    a = DiscreteMeasure(rng.normal(size=(12, 1)), rng.dirichlet(np.ones(12)))
    b = DiscreteMeasure(rng.normal(size=(9, 1)), rng.dirichlet(np.ones(9)))
    lp = solve_discrete_ot(DiscreteOTProblem(a.points, a.weights, b.points, b.weights))
    assert w1(a, b) == pytest.approx(lp.cost, abs=1e-10)


def test_w1_translation():
    a = DiscreteMeasure(np.linspace(0, 1, 11)[:, None])
    b = DiscreteMeasure(np.linspace(0, 1, 11)[:, None] + 0.3)
    assert w1(a, b) == pytest.approx(0.3, abs=1e-14)


def test_w1_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        w1(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([0.0, 1.0]))


def test_fixed_point_closed_form_recursion(instance):
    # mean recursion m <- (1/2 + m)/3 with fixed point 1/4 and ratio 1/3
    cost, spec, src, mu = instance
    nu, log = solve_fixed_point(cost, spec, mu, tol=1e-10, source=src, estimate=False)
    m = 0.5
    for i, mean in enumerate(log.means):
        m = (0.5 + m) / 3.0
        assert mean[0] == pytest.approx(m, abs=1e-12)
    assert nu.mean()[0] == pytest.approx(0.25, abs=1e-10)
    assert np.allclose([r for r, d in zip(log.ratios, log.w1) if d > 1e-9], 1.0 / 3.0, atol=1e-6)
    assert np.allclose(nu.points[:, 0], (mu.points[:, 0] + 0.25) / 3.0, atol=1e-10)


def test_no_interaction_converges_in_one_step(instance):
    cost, _, src, mu = instance
    spec = InteractionSpec(W="none")
    _, log = solve_fixed_point(cost, spec, mu, source=src, estimate=False)
    assert log.converged and log.steps_to_fixed_point == 1


def test_hypothesis_estimates(instance):
    cost, spec, src, mu = instance
    h = estimate_hypotheses(cost, spec, mu, source=src)
    assert h.eta == pytest.approx(1.0)
    assert h.lam == pytest.approx(2.0)
    assert h.k == pytest.approx(1.0 / 3.0)
    assert h.boundary_ok and h.symmetric


def test_generalized_nestedness(instance):
    cost, spec, src, mu = instance
    nu, _ = solve_fixed_point(cost, spec, mu, tol=1e-10, source=src, estimate=False)
    assert generalized_nestedness_check(cost, spec, nu, mu, source=src).nested


def test_estimator_api():
    est = BestReplySolver(n_particles=200)
    with pytest.raises(NotFittedError):
        est.predict([0.5])
    est.fit()
    assert est.log_.converged
    assert est.predict(np.array([0.5]))[0] == pytest.approx((0.5 + 0.25) / 3.0, abs=1e-7)


def test_bad_interaction_spec():
    with pytest.raises(ConfigurationError):
        InteractionSpec(V="cubic")
    with pytest.raises(ConfigurationError):
        InteractionSpec(V="polynomial", n=2)
