import numpy as np
import pytest

from uneqot import ConfigurationError, CostModel, SourceMeasure

CASES = [
    (CostModel("bilinear_arc"), 2),
    (CostModel("quadratic", m=2, params={"direction": [1.0, 2.0]}), 2),
    (CostModel("pseudo_index", m=2, params={"w": [1.0, 0.5], "q": 0.7, "w0": 0.2}), 2),
    (CostModel("hedonic_buyer"), 2),
    (CostModel("hedonic_seller", m=1), 1),
]


@pytest.mark.parametrize("cost,m", CASES, ids=lambda c: getattr(c, "family", ""))
def test_y_derivatives_match_finite_differences(cost, m, rng):
    x = rng.uniform(0.1, 0.9, size=(6, m))
    y = rng.uniform(0.1, 1.4, size=6)
    h = 1e-5
    fd1 = (cost(x, y + h) - cost(x, y - h)) / (2 * h)
    fd2 = (cost.dy(x, y + h) - cost.dy(x, y - h)) / (2 * h)
    assert np.allclose(cost.dy(x, y), fd1, atol=1e-8)
    assert np.allclose(cost.dyy(x, y), fd2, atol=1e-8)


@pytest.mark.parametrize("cost,m", CASES, ids=lambda c: getattr(c, "family", ""))
def test_mixed_and_x_derivatives(cost, m, rng):
    x = rng.uniform(0.1, 0.9, size=(4, m))
    y = rng.uniform(0.1, 1.4, size=4)
    h = 1e-5
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        fdx = (cost(x + e, y) - cost(x - e, y)) / (2 * h)
        fdxy = (cost.dy(x + e, y) - cost.dy(x - e, y)) / (2 * h)
        assert np.allclose(np.asarray(cost.dx(x, y))[..., i], fdx, atol=1e-8)
        assert np.allclose(np.asarray(cost.dyx(x, y))[..., i], fdxy, atol=1e-8)


@pytest.mark.parametrize("cost,m", CASES, ids=lambda c: getattr(c, "family", ""))
def test_affine_form_of_dy(cost, m, rng):
    x = rng.uniform(0.0, 1.0, size=(5, m))
    for y in (0.2, 0.9):
        a, b = cost.affine_dy(y)
        assert np.allclose(x @ np.asarray(a) + b, cost.dy(x, y), atol=1e-14)
        assert cost.cross_norm(y) == pytest.approx(np.linalg.norm(a), abs=1e-14)


def test_bilinear_arc_value():
    cost = CostModel("bilinear_arc")
    assert cost(np.array([1.0, 0.0]), 0.0) == pytest.approx(-1.0)


def test_twist_and_nondegeneracy():
    cost = CostModel("bilinear_arc")
    mu = SourceMeasure()
    assert cost.check_twist(mu, (0.0, 1.5))
    assert cost.check_nondegenerate((0.0, 1.5))


def test_lipschitz_y_quarter_disk():
    # |D_y c| = |x1 sin y - x2 cos y| <= |x| = 1 on the quarter disk
    cost = CostModel("bilinear_arc")
    assert cost.lipschitz_y(SourceMeasure(), (0.0, np.pi / 2)) == pytest.approx(1.0, abs=1e-12)


def test_unknown_family():
    with pytest.raises(ConfigurationError):
        CostModel("nope")
