import math

import numpy as np
import pytest
from scipy import integrate

from uneqot import ConfigurationError, CostModel, SourceMeasure, k_range, level_integral, mass_to_k, superlevel_mass
from uneqot import geometry as geo
from uneqot.core import level_curve, quarter_disk_mass_closed_form


def test_quarter_disk_area():
    assert geo.area(geo.quarter_disk_boundary()) == pytest.approx(math.pi / 4, abs=1e-14)


def test_clip_rectangle_half():
    pieces = geo.clip(geo.rectangle_boundary(0, 2, 0, 1), (1.0, 0.0), 1.0)
    assert geo.area(pieces) == pytest.approx(1.0, abs=1e-14)


def test_clip_disk_by_diagonal_is_half():
    pieces = geo.clip(geo.quarter_disk_boundary(), (1.0, -1.0), 0.0)
    assert geo.area(pieces) == pytest.approx(math.pi / 8, abs=1e-14)


def test_linear_extremes_on_arc():
    lo, hi = geo.linear_extremes(geo.quarter_disk_boundary(), (1.0, 1.0))
    assert lo == pytest.approx(0.0, abs=1e-14)
    assert hi == pytest.approx(math.sqrt(2.0), abs=1e-14)


@pytest.mark.parametrize("y,k", [(0.3, -0.5), (0.0, -0.2), (1.2, -0.05), (0.7, -0.7)])
def test_superlevel_mass_matches_polar_quadrature(quarter, y, k):
    cost, mu = quarter

    # D_y c = x1 sin y - x2 cos y = r sin(y - t) in polar coordinates
    def inner(t):
        s = math.sin(y - t)
        if s >= 0.0:
            return 0.5 if k <= 0.0 else (0.5 * (1.0 - (k / s) ** 2) if s > k else 0.0)
        # s < 0: r sin(y - t) >= k means r <= k / s
        return 0.5 * min(k / s, 1.0) ** 2 if k < 0.0 else 0.0

    kinks = [t for t in (y, y - math.asin(k)) if 0.0 < t < 0.5 * math.pi]
    ref, _ = integrate.quad(inner, 0.0, 0.5 * math.pi, points=kinks or None, epsabs=1e-13, limit=200)
    assert superlevel_mass(cost, mu, y, k) == pytest.approx(ref * 4.0 / math.pi, abs=1e-10)


def test_closed_form_agrees_with_clipping(quarter):
    cost, mu = quarter
    for y in np.linspace(0.05, 1.5, 9):
        for k in np.linspace(-math.cos(y), 0.0, 7):
            generic = mu.mass([(cost.affine_dy(y)[0], k - cost.affine_dy(y)[1])])
            assert quarter_disk_mass_closed_form(y, k) == pytest.approx(generic, abs=1e-12)


def test_superlevel_mass_rectangle_dblquad():
    cost = CostModel("hedonic_buyer")
    mu = SourceMeasure("rectangle", (0.0, 1.0, 0.0, 1.0))
    y, k = 0.7, 0.1
    # D_y c = y x1 - x2 >= k  <=>  x2 <= y x1 - k, integrated over x1
    ref, _ = integrate.quad(lambda x1: min(max(y * x1 - k, 0.0), 1.0), 0.0, 1.0, points=[k / y], epsabs=1e-14)
    assert superlevel_mass(cost, mu, y, k) == pytest.approx(ref, abs=1e-12)


def test_k_range_quarter(quarter):
    cost, mu = quarter
    y = 0.4
    assert k_range(cost, mu, y) == pytest.approx((-math.cos(y), math.sin(y)), abs=1e-14)


def test_mass_to_k_endpoints(quarter):
    cost, mu = quarter
    kmin, kmax = k_range(cost, mu, 0.6)
    assert mass_to_k(cost, mu, 0.6, 0.0) == kmax
    assert mass_to_k(cost, mu, 0.6, 1.0) == kmin


def test_mass_to_k_rejects_bad_mass(quarter):
    cost, mu = quarter
    with pytest.raises(ConfigurationError):
        mass_to_k(cost, mu, 0.3, 1.5)


def test_uniform_arc_level_is_zero(quarter):
    # by rotational symmetry the y-th diagonal halves the mass at y * 2/pi
    cost, mu = quarter
    for y in (0.2, 0.8, 1.3):
        assert mass_to_k(cost, mu, y, y * 2.0 / math.pi) == pytest.approx(0.0, abs=1e-12)


def test_level_integral_uniform_quarter(quarter):
    # for k = 0 the level segment is a unit radius, |D_xy c| = 1, density 4/pi
    cost, mu = quarter
    assert level_integral(cost, mu, 0.5, 0.0) == pytest.approx(4.0 / math.pi, abs=1e-12)


def test_level_integral_is_mass_derivative(quarter):
    cost, mu = quarter
    y, k, h = 0.6, -0.3, 1e-6
    fd = -(superlevel_mass(cost, mu, y, k + h) - superlevel_mass(cost, mu, y, k - h)) / (2 * h)
    assert level_integral(cost, mu, y, k) == pytest.approx(fd, rel=1e-6)


def test_level_integral_empty_set(quarter):
    cost, mu = quarter
    assert level_integral(cost, mu, 0.5, 5.0) == 0.0
    assert level_curve(cost, mu, 0.5, 5.0).length == 0.0


def test_gridded_density_mass_matches_quadrature():
    vals = np.array([[1.0, 3.0], [2.0, 4.0]])
    mu = SourceMeasure("rectangle", (0.0, 1.0, 0.0, 1.0), density="gridded", values=vals)
    cost = CostModel("quadratic", m=2)
    # D_y c = y - x1 for the default direction e1
    assert mu.mass() == pytest.approx(1.0, abs=1e-13)
    # x1 <= 0.3 lies in the left column of cells, values 1 and 2 out of a mean of 2.5
    assert superlevel_mass(cost, mu, 0.3, 0.0) == pytest.approx(0.3 * 1.5 / 2.5, abs=1e-12)


def test_incompatible_dimensions():
    with pytest.raises(ConfigurationError):
        superlevel_mass(CostModel("bilinear_arc"), SourceMeasure("unit_interval"), 0.1, 0.0)
