"""Level sets of ``D_y c``, their masses, and line integrals over them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import optimize

from .costs import CostModel
from .exceptions import ConfigurationError, NumericalError
from .measures import SourceMeasure

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)

WEIGHTS = ("one_over_cross", "cyy_over_cross")


def check_compatible(cost: CostModel, mu: SourceMeasure) -> None:
    if cost.m != mu.dim:
        raise ConfigurationError(
            f"cost {cost.family} acts on {cost.m}-dimensional sources but domain {mu.domain} has dimension {mu.dim}"
        )


def level_length(y, k):
    """Length ``L(y, k) = sqrt(1 - k^2) + k tan y`` of the quarter-disk level segment."""
    return np.sqrt(1.0 - np.square(k)) + k * np.tan(y)


def quarter_disk_mass_closed_form(y, k):
    """``mu(X_>=(y, k))`` for the bilinear arc cost and uniform quarter disk, ``-cos y <= k <= 0``.

    The super-level set is the union of a sector of angle ``y - arcsin k`` and
    a triangle with legs ``-k/cos y`` and ``L(y, k) cos y``.
    """
    return (4.0 / np.pi) * (-0.5 * k * level_length(y, k) + 0.5 * (y - np.arcsin(k)))


def _closed_form_applies(cost: CostModel, mu: SourceMeasure, y: float, k: float) -> bool:
    return (
        cost.family == "bilinear_arc"
        and mu.domain == "quarter_disk"
        and mu.values is None
        and 0.0 <= y < 0.5 * math.pi
        and -math.cos(y) <= k <= 0.0
    )


def superlevel_halfplane(cost: CostModel, y: float, k: float):
    a, b = cost.affine_dy(y)
    return a, k - b


def superlevel_mass(cost: CostModel, mu: SourceMeasure, y: float, k: float) -> float:
    """``mu(X_>=(y, k))`` where ``X_>=(y, k) = {x : D_y c(x, y) >= k}``."""
    check_compatible(cost, mu)
    if _closed_form_applies(cost, mu, y, k):
        return float(min(max(quarter_disk_mass_closed_form(y, k), 0.0), 1.0))
    return mu.mass([superlevel_halfplane(cost, y, k)])


def k_range(cost: CostModel, mu: SourceMeasure, y: float) -> Tuple[float, float]:
    """``(min, max)`` of ``D_y c(., y)`` over the closed domain."""
    a, b = cost.affine_dy(y)
    lo, hi = mu.extremes(a)
    return lo + b, hi + b


def mass_to_k(cost: CostModel, mu: SourceMeasure, y: float, M: float, xtol: float = 1e-13) -> float:
    """Level ``k`` with ``mu(X_>=(y, k)) = M``.

    ``M = 0`` and ``M = 1`` return the exact extremes of ``D_y c(., y)``.
    Otherwise a bracketed root search on the nonincreasing mass profile.
    """
    if not 0.0 <= M <= 1.0:
        raise ConfigurationError(f"mass {M} outside [0, 1]")
    kmin, kmax = k_range(cost, mu, y)
    if M == 0.0:
        return kmax
    if M == 1.0:
        return kmin

    def resid(k):
        return superlevel_mass(cost, mu, y, k) - M

    r_lo, r_hi = resid(kmin), resid(kmax)
    if not (r_lo >= 0.0 >= r_hi):
        raise NumericalError(
            f"mass profile not bracketing at y={y}: mass(kmin={kmin})-M={r_lo}, mass(kmax={kmax})-M={r_hi}"
        )
    if r_lo == 0.0:
        return kmin
    if r_hi == 0.0:
        return kmax
    return optimize.brentq(resid, kmin, kmax, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


@dataclass
class LevelCurve:
    """``X_=(y, k)`` discretised by Gauss-Legendre nodes with arclength weights.

    On an interval domain the level set is a point and ``weights`` holds the
    counting measure.
    """

    y: float
    k: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def length(self) -> float:
        return float(self.weights.sum())


def level_curve(cost: CostModel, mu: SourceMeasure, y: float, k: float) -> LevelCurve:
    check_compatible(cost, mu)
    a, b = cost.affine_dy(y)
    chord = mu.level_set(a, k - b)
    if chord is None:
        return LevelCurve(y, k, np.empty((0, mu.dim)), np.empty(0))
    if mu.dim == 1:
        return LevelCurve(y, k, np.array([chord[0]]), np.array([1.0]))
    p, q = chord
    nodes, weights = [], []
    for s0, s1 in mu.split_chord(p, q):
        seg_len = math.hypot(s1[0] - s0[0], s1[1] - s0[1])
        if seg_len == 0.0:
            continue
        t = 0.5 * (_GL_NODES + 1.0)
        nodes.append(np.column_stack([s0[0] + t * (s1[0] - s0[0]), s0[1] + t * (s1[1] - s0[1])]))
        weights.append(0.5 * seg_len * _GL_WEIGHTS)
    if not nodes:
        return LevelCurve(y, k, np.empty((0, 2)), np.empty(0))
    return LevelCurve(y, k, np.concatenate(nodes), np.concatenate(weights))


def level_integral(cost: CostModel, mu: SourceMeasure, y: float, k: float, weight: str = "one_over_cross") -> float:
    """``∫_{X_=(y,k)} w(x) mu_bar(x) / |D_xy c(x, y)| dH^{m-1}(x)``.

    ``weight`` is ``one_over_cross`` (``w = 1``) or ``cyy_over_cross``
    (``w = D_yy c``).  An empty level set integrates to zero.
    """
    if weight not in WEIGHTS:
        raise ConfigurationError(f"unknown weight {weight!r}")
    curve = level_curve(cost, mu, y, k)
    if curve.weights.size == 0:
        return 0.0
    dens = mu.density_at(curve.nodes)
    w = cost.dyy(curve.nodes, y) if weight == "cyy_over_cross" else 1.0
    return float(np.sum(curve.weights * dens * w) / cost.cross_norm(y))
