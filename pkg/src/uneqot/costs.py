"""Cost families.

Every family admitted here has a y-derivative that is affine in ``x``::

    D_y c(x, y) = a(y) . x + b(y)
    D_yy c(x, y) = a'(y) . x + b'(y)

so level sets of ``D_y c(., y)`` are hyperplanes and ``|D_xy c| = |a(y)|`` is
constant along each of them.  Geometry routines rely on this structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .exceptions import ConfigurationError

FAMILIES = ("bilinear_arc", "quadratic", "pseudo_index", "hedonic_buyer", "hedonic_seller")

_SOURCE_DIM = {"bilinear_arc": 2, "hedonic_buyer": 2, "hedonic_seller": 1}


@dataclass(frozen=True)
class CostModel:
    """A cost ``c(x, y)`` with its derivatives in ``y``.

    Parameters
    ----------
    family : str
        One of ``bilinear_arc`` (``c = -x.(cos y, sin y)``), ``quadratic``
        (``c = |x - y e|^2 / 2`` with ``y`` embedded along the unit vector
        ``e``), ``pseudo_index`` (``c = -I(x) y + q y^2/2`` with affine
        ``I(x) = w.x + w0``), ``hedonic_buyer`` (``c = x1 y^2/2 - x2 y``) and
        ``hedonic_seller`` (``c = -x y + y^2/2``).
    params : dict
        Family-specific reals: ``direction`` for ``quadratic``; ``w``, ``w0``
        and ``q`` for ``pseudo_index``.
    m : int
        Source dimension.
    """

    family: str
    params: Dict[str, object] = field(default_factory=dict)
    m: int = 2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown cost family {self.family!r}; expected one of {FAMILIES}")
        need = _SOURCE_DIM.get(self.family)
        if need is not None and self.m != need:
            raise ConfigurationError(f"cost {self.family} needs a {need}-dimensional source, got m={self.m}")
        if self.family == "pseudo_index":
            w = np.atleast_1d(np.asarray(self.params.get("w", [1.0] + [0.0] * (self.m - 1)), dtype=float))
            if w.shape != (self.m,) or not np.any(w):
                raise ConfigurationError("pseudo_index needs a nonzero weight vector w of length m")

    @property
    def n(self) -> int:
        return 1

    # -- family coefficients -------------------------------------------------
    def _direction(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[0] = 1.0
        e = np.asarray(self.params.get("direction", e), dtype=float)
        return e / np.linalg.norm(e)

    def affine_dy(self, y: float) -> Tuple[Tuple[float, ...], float]:
        """Coefficients ``(a, b)`` with ``D_y c(x, y) = a.x + b``."""
        f = self.family
        if f == "bilinear_arc":
            return (math.sin(y), -math.cos(y)), 0.0
        if f == "quadratic":
            return tuple(-self._direction()), float(y)
        if f == "pseudo_index":
            w = np.atleast_1d(np.asarray(self.params.get("w", [1.0] + [0.0] * (self.m - 1)), dtype=float))
            return tuple(-w), float(self.params.get("q", 0.0)) * y - float(self.params.get("w0", 0.0))
        if f == "hedonic_buyer":
            return (float(y), -1.0), 0.0
        return (-1.0,), float(y)

    def affine_dyy(self, y: float) -> Tuple[Tuple[float, ...], float]:
        """Coefficients ``(a', b')`` with ``D_yy c(x, y) = a'.x + b'``."""
        f = self.family
        if f == "bilinear_arc":
            return (math.cos(y), math.sin(y)), 0.0
        if f == "quadratic":
            return (0.0,) * self.m, 1.0
        if f == "pseudo_index":
            return (0.0,) * self.m, float(self.params.get("q", 0.0))
        if f == "hedonic_buyer":
            return (1.0, 0.0), 0.0
        return (0.0,), 1.0

    def cross_norm(self, y: float) -> float:
        """``|D_xy c(x, y)|``, independent of ``x`` for every family."""
        a, _ = self.affine_dy(y)
        return math.sqrt(sum(ai * ai for ai in a))

    # -- vectorised evaluation ----------------------------------------------
    def __call__(self, x, y):
        """Evaluate ``c(x, y)``; ``x`` has shape ``(..., m)`` and broadcasts with ``y``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f = self.family
        if f == "bilinear_arc":
            return -(x[..., 0] * np.cos(y) + x[..., 1] * np.sin(y))
        if f == "quadratic":
            e = self._direction()
            diff = x - y[..., None] * e
            return 0.5 * np.sum(diff * diff, axis=-1)
        if f == "pseudo_index":
            w = np.asarray(self.params.get("w", [1.0] + [0.0] * (self.m - 1)), dtype=float)
            index = x @ w + float(self.params.get("w0", 0.0))
            return -index * y + 0.5 * float(self.params.get("q", 0.0)) * y**2
        if f == "hedonic_buyer":
            return x[..., 0] * y**2 / 2 - x[..., 1] * y
        return -x[..., 0] * y + y**2 / 2

    def dy(self, x, y):
        """``D_y c(x, y)``, vectorised."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f = self.family
        if f == "bilinear_arc":
            return x[..., 0] * np.sin(y) - x[..., 1] * np.cos(y)
        if f == "quadratic":
            return y - x @ self._direction()
        if f == "pseudo_index":
            w = np.asarray(self.params.get("w", [1.0] + [0.0] * (self.m - 1)), dtype=float)
            return -(x @ w) - float(self.params.get("w0", 0.0)) + float(self.params.get("q", 0.0)) * y
        if f == "hedonic_buyer":
            return x[..., 0] * y - x[..., 1]
        return y - x[..., 0]

    def dyy(self, x, y):
        """``D_yy c(x, y)``, vectorised."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f = self.family
        if f == "bilinear_arc":
            return x[..., 0] * np.cos(y) + x[..., 1] * np.sin(y)
        if f == "hedonic_buyer":
            return x[..., 0] + 0.0 * y
        if f == "pseudo_index":
            return np.full(np.broadcast(x[..., 0], y).shape, float(self.params.get("q", 0.0)))
        return np.ones(np.broadcast(x[..., 0], y).shape)

    def dyx(self, x, y):
        """``D_xy c(x, y)`` as an array of shape ``(..., m)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x[..., 0], y).shape
        f = self.family
        if f == "bilinear_arc":
            return np.stack([np.broadcast_to(np.sin(y), shape), np.broadcast_to(-np.cos(y), shape)], axis=-1)
        if f == "hedonic_buyer":
            return np.stack([np.broadcast_to(y, shape), -np.ones(shape)], axis=-1)
        a, _ = self.affine_dy(0.0)
        return np.broadcast_to(np.asarray(a), shape + (self.m,))

    def dx(self, x, y):
        """``D_x c(x, y)``, shape ``(..., m)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f = self.family
        if f == "bilinear_arc":
            return -np.stack(np.broadcast_arrays(np.cos(y) + 0 * x[..., 0], np.sin(y) + 0 * x[..., 0]), axis=-1)
        if f == "quadratic":
            e = self._direction()
            return x - y[..., None] * e
        if f == "pseudo_index":
            w = np.asarray(self.params.get("w", [1.0] + [0.0] * (self.m - 1)), dtype=float)
            return -(y[..., None] + 0 * x) * w
        if f == "hedonic_buyer":
            yy = y + 0 * x[..., 0]
            return np.stack([yy**2 / 2, -yy], axis=-1)
        return -(y[..., None] + 0 * x)

    def lipschitz_y(self, mu, interval, n_y: int = 257) -> float:
        """``M_c = sup |D_y c|`` over the closed product domain."""
        best = 0.0
        for y in np.linspace(interval[0], interval[1], n_y):
            a, b = self.affine_dy(float(y))
            lo, hi = mu.extremes(a)
            best = max(best, abs(lo + b), abs(hi + b))
        return best

    def lipschitz_x(self, mu, interval, n_y: int = 257) -> float:
        """``sup |D_x c|`` over the closed product domain, sampled in ``y``."""
        pts = mu.sample_grid(41)
        ys = np.linspace(interval[0], interval[1], n_y)
        g = self.dx(pts[:, None, :], ys[None, :])
        return float(np.max(np.linalg.norm(g, axis=-1)))

    def check_twist(self, mu, interval, n_y: int = 65) -> bool:
        """Sampled twist: ``y -> D_x c(x, y)`` injective for each sampled ``x``."""
        pts = mu.sample_grid(9)
        ys = np.linspace(interval[0], interval[1], n_y)
        g = self.dx(pts[:, None, :], ys[None, :])
        gaps = np.linalg.norm(g[:, 1:, :] - g[:, :-1, :], axis=-1)
        return bool(np.all(gaps > 0.0))

    def check_nondegenerate(self, interval, n_y: int = 65) -> bool:
        return all(self.cross_norm(float(y)) > 0.0 for y in np.linspace(interval[0], interval[1], n_y))


def bilinear_arc() -> CostModel:
    return CostModel("bilinear_arc", m=2)


def hedonic_buyer() -> CostModel:
    return CostModel("hedonic_buyer", m=2)


def hedonic_seller() -> CostModel:
    return CostModel("hedonic_seller", m=1)
