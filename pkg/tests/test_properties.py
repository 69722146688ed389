import json
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from uneqot import (CostModel, DiscreteMeasure, DiscreteOTProblem, SourceMeasure, k_range, mass_to_k,
                    solve_discrete_ot, superlevel_mass, w1)
from uneqot.core import quarter_disk_mass_closed_form
from uneqot.io import dumps

COST = CostModel("bilinear_arc")
MU = SourceMeasure()
SQUARE = SourceMeasure("rectangle")
BUYER = CostModel("hedonic_buyer")

ys = st.floats(0.0, 0.5 * math.pi - 1e-9)
unit = st.floats(0.0, 1.0)
settings.register_profile("fast", max_examples=200, deadline=None)
settings.load_profile("fast")


def _measure(draw_points, draw_weights):
    pts = np.asarray(draw_points, dtype=float)[:, None]
    w = np.asarray(draw_weights, dtype=float) + 1e-3
    return DiscreteMeasure(pts, w / w.sum())


measures = st.integers(1, 25).flatmap(
    lambda n: st.tuples(st.lists(st.floats(-5, 5), min_size=n, max_size=n),
                        st.lists(st.floats(0, 1), min_size=n, max_size=n))).map(lambda t: _measure(*t))


@given(ys, unit, unit)
def test_superlevel_mass_monotone(y, s, t):
    kmin, kmax = k_range(COST, MU, y)
    k0, k1 = sorted((kmin + s * (kmax - kmin), kmin + t * (kmax - kmin)))
    assert superlevel_mass(COST, MU, y, k0) >= superlevel_mass(COST, MU, y, k1)


@given(ys, unit)
def test_mass_to_k_round_trip(y, M):
    assert abs(superlevel_mass(COST, MU, y, mass_to_k(COST, MU, y, M)) - M) <= 1e-8


@given(st.floats(0.05, 2.0), st.floats(-1.0, 1.5))
def test_complementary_masses(y, k):
    a, b = BUYER.affine_dy(y)
    up = SQUARE.mass([(a, k - b)])
    down = SQUARE.mass([(tuple(-np.asarray(a)), b - k)])
    assert abs(up + down - 1.0) <= 1e-12


@given(ys, unit)
def test_closed_form_matches_clipping(y, s):
    k = -math.cos(y) * s
    a, b = COST.affine_dy(y)
    assert abs(quarter_disk_mass_closed_form(y, k) - MU.mass([(a, k - b)])) <= 1e-12


@given(measures, measures, measures)
def test_w1_metric_axioms(a, b, c):
    assert w1(a, a) <= 1e-12
    assert abs(w1(a, b) - w1(b, a)) <= 1e-12
    assert w1(a, c) <= w1(a, b) + w1(b, c) + 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(2, 8))
def test_lp_beats_product_coupling(seed, n, m):
    rng = np.random.Generator(np.random.Philox(seed))
    a, b = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
    C = rng.normal(size=(n, m))
    res = solve_discrete_ot(DiscreteOTProblem(np.arange(n), a, np.arange(m), b, cost=C))
    assert res.cost <= float(a @ C @ b) + 1e-12
    assert abs(res.gap) <= 1e-9 * max(1.0, abs(res.cost))


@given(st.lists(st.floats(allow_nan=True, allow_infinity=True), max_size=20))
def test_dumps_round_trip(values):
    back = json.loads(dumps({"v": values}))["v"]
    assert back == [v if math.isfinite(v) else None for v in values]
