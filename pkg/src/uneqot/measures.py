"""Source measures on planar or interval domains, 1-D target densities and particle clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from . import geometry as geo
from .exceptions import ConfigurationError

DOMAINS = ("quarter_disk", "rectangle", "unit_interval")


@dataclass
class SourceMeasure:
    """Absolutely continuous probability measure on a bounded convex domain.

    Parameters
    ----------
    domain : {'quarter_disk', 'rectangle', 'unit_interval'}
        ``quarter_disk`` is ``{x1, x2 > 0, |x| < 1}``; ``rectangle`` takes
        ``bounds=(x0, x1, y0, y1)``; ``unit_interval`` is ``(0, 1)``.
    density : {'uniform', 'gridded'}
        ``gridded`` densities are piecewise constant on a regular grid over
        the bounding box; ``values`` has shape ``(ny, nx)`` (or ``(n,)`` on an
        interval) and is renormalised to unit mass on the domain.
    """

    domain: str = "quarter_disk"
    bounds: Optional[Tuple[float, ...]] = None
    density: str = "uniform"
    values: Optional[np.ndarray] = None
    grid_resolution: int = 64
    _pieces: list = field(init=False, repr=False, default=None)
    _cells: list = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigurationError(f"unknown domain {self.domain!r}; expected one of {DOMAINS}")
        if self.domain == "quarter_disk":
            self.bounds = (0.0, 1.0, 0.0, 1.0)
            self._pieces = geo.quarter_disk_boundary()
            self._area = math.pi / 4
        elif self.domain == "rectangle":
            if self.bounds is None:
                self.bounds = (0.0, 1.0, 0.0, 1.0)
            x0, x1, y0, y1 = map(float, self.bounds)
            if not (x1 > x0 and y1 > y0):
                raise ConfigurationError(f"degenerate rectangle {self.bounds}")
            self.bounds = (x0, x1, y0, y1)
            self._pieces = geo.rectangle_boundary(x0, x1, y0, y1)
            self._area = (x1 - x0) * (y1 - y0)
        else:
            self.bounds = (0.0, 1.0)
            self._area = 1.0
        if self.density == "uniform":
            self.values = None
        elif self.density == "gridded":
            self._setup_grid()
        else:
            raise ConfigurationError(f"unknown density kind {self.density!r}")

    # -- basic properties ----------------------------------------------------
    @property
    def dim(self) -> int:
        return 1 if self.domain == "unit_interval" else 2

    @property
    def area(self) -> float:
        """Lebesgue volume of the domain."""
        return self._area

    @property
    def bbox_volume(self) -> float:
        if self.dim == 1:
            return self.bounds[1] - self.bounds[0]
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    def _setup_grid(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ConfigurationError("gridded density must be finite and nonnegative")
        if self.dim == 1:
            vals = vals.reshape(-1)
            lo, hi = self.bounds
            self._edges = np.linspace(lo, hi, vals.size + 1)
            total = float(np.sum(vals * np.diff(self._edges)))
            self._cells = None
        else:
            if vals.ndim != 2:
                raise ConfigurationError("gridded density on a planar domain needs a 2-D array (ny, nx)")
            x0, x1, y0, y1 = self.bounds
            ny, nx = vals.shape
            self._xe = np.linspace(x0, x1, nx + 1)
            self._ye = np.linspace(y0, y1, ny + 1)
            cells = []
            total = 0.0
            for j in range(ny):
                for i in range(nx):
                    if vals[j, i] == 0.0:
                        continue
                    box = (self._xe[i], self._xe[i + 1], self._ye[j], self._ye[j + 1])
                    pieces = geo.clip_many(self._pieces, _box_halfplanes(box))
                    a = geo.area(pieces)
                    if a > 0.0:
                        cells.append((box, vals[j, i], pieces, a))
                        total += vals[j, i] * a
            self._cells = [(box, v / total, pieces, a) for box, v, pieces, a in cells] if total > 0.0 else cells
        if total <= 0.0:
            raise ConfigurationError("gridded density has zero mass on the domain")
        self.values = vals / total

    # -- densities -----------------------------------------------------------
    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        """Membership in the closed domain, up to ``tol``."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            t = x[..., 0]
            return (t >= self.bounds[0] - tol) & (t <= self.bounds[1] + tol)
        if self.domain == "quarter_disk":
            return (x[..., 0] >= -tol) & (x[..., 1] >= -tol) & (x[..., 0] ** 2 + x[..., 1] ** 2 <= 1.0 + tol)
        x0, x1, y0, y1 = self.bounds
        return (x[..., 0] >= x0 - tol) & (x[..., 0] <= x1 + tol) & (x[..., 1] >= y0 - tol) & (x[..., 1] <= y1 + tol)

    def density_at(self, x) -> np.ndarray:
        """``mu_bar(x)``; zero outside the closed domain."""
        x = np.asarray(x, dtype=float)
        inside = self.contains(x)
        if self.values is None:
            return np.where(inside, 1.0 / self.area, 0.0)
        if self.dim == 1:
            idx = np.clip(np.searchsorted(self._edges, x[..., 0], side="right") - 1, 0, self.values.size - 1)
            return np.where(inside, self.values[idx], 0.0)
        ny, nx = self.values.shape
        i = np.clip(np.searchsorted(self._xe, x[..., 0], side="right") - 1, 0, nx - 1)
        j = np.clip(np.searchsorted(self._ye, x[..., 1], side="right") - 1, 0, ny - 1)
        return np.where(inside, self.values[j, i], 0.0)

    def sup_density(self) -> float:
        return 1.0 / self.area if self.values is None else float(np.max(self.values))

    # -- exact set functionals ---------------------------------------------
    def mass(self, halfplanes: Sequence[geo.HalfPlane] = ()) -> float:
        """``mu(X ∩ {a_i.x >= b_i for all i})``, exact for both density kinds."""
        if self.dim == 1:
            return self._mass_1d(halfplanes)
        if self.values is None:
            return geo.area(geo.clip_many(self._pieces, halfplanes)) / self.area
        total = 0.0
        for box, val, pieces, a_cell in self._cells:
            state = _box_state(box, halfplanes)
            if state < 0:
                continue
            if state > 0:
                total += val * a_cell
            else:
                total += val * geo.area(geo.clip_many(pieces, halfplanes))
        return min(max(total, 0.0), 1.0)

    def _interval_after(self, halfplanes) -> Tuple[float, float]:
        lo, hi = self.bounds
        for a, b in halfplanes:
            a0 = a[0]
            if a0 > 0:
                lo = max(lo, b / a0)
            elif a0 < 0:
                hi = min(hi, b / a0)
            elif b > 0:
                return 0.0, 0.0
        return lo, hi

    def _mass_1d(self, halfplanes) -> float:
        lo, hi = self._interval_after(halfplanes)
        if hi <= lo:
            return 0.0
        if self.values is None:
            return (hi - lo) / (self.bounds[1] - self.bounds[0])
        cum = np.concatenate([[0.0], np.cumsum(self.values * np.diff(self._edges))])
        return float(np.interp(hi, self._edges, cum) - np.interp(lo, self._edges, cum))

    def extremes(self, a: Sequence[float], halfplanes: Sequence[geo.HalfPlane] = ()) -> Tuple[float, float]:
        """Min and max of ``x -> a.x`` over the closed domain cut by ``halfplanes``."""
        if self.dim == 1:
            lo, hi = self._interval_after(halfplanes)
            if hi < lo:
                return math.inf, -math.inf
            v = (a[0] * lo, a[0] * hi)
            return min(v), max(v)
        return geo.linear_extremes(geo.clip_many(self._pieces, halfplanes), a)

    def level_set(self, a: Sequence[float], t: float):
        """Points of the closed domain with ``a.x = t``.

        Returns a chord ``(p, q)`` on planar domains, a one-element tuple on
        intervals, or ``None`` when empty.
        """
        if self.dim == 1:
            if a[0] == 0.0:
                return None
            x = t / a[0]
            lo, hi = self.bounds
            if lo - 1e-14 <= x <= hi + 1e-14:
                return ((min(max(x, lo), hi),),)
            return None
        return geo.line_chord(self._pieces, a, t)

    def split_chord(self, p, q):
        """Split a chord at grid-cell crossings so piecewise-constant densities integrate exactly."""
        if self.values is None or self.dim == 1:
            return [(p, q)]
        ts = {0.0, 1.0}
        for edges, k in ((self._xe, 0), (self._ye, 1)):
            d = q[k] - p[k]
            if d != 0.0:
                for e in edges:
                    t = (e - p[k]) / d
                    if 0.0 < t < 1.0:
                        ts.add(t)
        ts = sorted(ts)
        pts = [(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])) for t in ts]
        return list(zip(pts[:-1], pts[1:]))

    # -- sampling and integration -------------------------------------------
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` i.i.d. points from ``mu`` by rejection from the bounding box."""
        out = []
        got = 0
        bound = self.sup_density()
        while got < n:
            batch = max(2 * (n - got), 1024)
            u = self._uniform_box(batch, rng)
            keep = rng.random(batch) * bound <= self.density_at(u)
            u = u[keep]
            out.append(u)
            got += len(u)
        return np.concatenate(out)[:n]

    def _uniform_box(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.dim == 1:
            lo, hi = self.bounds
            return (lo + (hi - lo) * rng.random(n))[:, None]
        x0, x1, y0, y1 = self.bounds
        u = rng.random((n, 2))
        return np.column_stack([x0 + (x1 - x0) * u[:, 0], y0 + (y1 - y0) * u[:, 1]])

    def sample_grid(self, n: int) -> np.ndarray:
        """Deterministic grid of points in the closed domain (``n`` per axis)."""
        if self.dim == 1:
            lo, hi = self.bounds
            return np.linspace(lo, hi, n)[:, None]
        x0, x1, y0, y1 = self.bounds
        g = np.stack(np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n)), axis=-1).reshape(-1, 2)
        return g[self.contains(g)]

    def cell_discretization(self, n: int):
        """Exact cell masses and barycentres on an ``n``-per-axis grid.

        Returns ``(points, weights)`` with weights summing to one.
        """
        if self.dim == 1:
            lo, hi = self.bounds
            edges = np.linspace(lo, hi, n + 1)
            w = np.array([self.mass([((1.0,), edges[i]), ((-1.0,), -edges[i + 1])]) for i in range(n)])
            pts = 0.5 * (edges[:-1] + edges[1:])
            keep = w > 0
            return pts[keep][:, None], w[keep] / w[keep].sum()
        x0, x1, y0, y1 = self.bounds
        xe = np.linspace(x0, x1, n + 1)
        ye = np.linspace(y0, y1, n + 1)
        pts, ws = [], []
        for j in range(n):
            for i in range(n):
                box = (xe[i], xe[i + 1], ye[j], ye[j + 1])
                pieces = geo.clip_many(self._pieces, _box_halfplanes(box))
                a = geo.area(pieces)
                if a <= 0.0:
                    continue
                cx, cy = _centroid(pieces, a)
                w = self.mass(_box_halfplanes(box)) if self.values is not None else a / self.area
                if w > 0:
                    pts.append((cx, cy))
                    ws.append(w)
        ws = np.asarray(ws)
        return np.asarray(pts), ws / ws.sum()

    def integrate_lebesgue(self, func: Callable[[np.ndarray], np.ndarray], epsabs: float = 1e-12) -> float:
        """``∫_X func(x) dx`` by adaptive quadrature over the domain."""
        if self.dim == 1:
            lo, hi = self.bounds
            return integrate.quad(lambda t: float(func(np.array([t]))), lo, hi, epsabs=epsabs)[0]
        if self.domain == "quarter_disk":
            val = integrate.dblquad(
                lambda x2, x1: float(func(np.array([x1, x2]))),
                0.0, 1.0, 0.0, lambda x1: math.sqrt(max(1.0 - x1 * x1, 0.0)), epsabs=epsabs,
            )[0]
            return val
        x0, x1, y0, y1 = self.bounds
        return integrate.dblquad(lambda b, a: float(func(np.array([a, b]))), x0, x1, y0, y1, epsabs=epsabs)[0]


def _box_halfplanes(box):
    x0, x1, y0, y1 = box
    return [((1.0, 0.0), x0), ((-1.0, 0.0), -x1), ((0.0, 1.0), y0), ((0.0, -1.0), -y1)]


def _box_state(box, halfplanes) -> int:
    """-1 if some half-plane misses the box, +1 if all contain it, 0 otherwise."""
    x0, x1, y0, y1 = box
    inside_all = True
    for a, b in halfplanes:
        c = (a[0] * x0 + a[1] * y0, a[0] * x1 + a[1] * y0, a[0] * x0 + a[1] * y1, a[0] * x1 + a[1] * y1)
        if max(c) < b:
            return -1
        if min(c) < b:
            inside_all = False
    return 1 if inside_all else 0


def _centroid(pieces, area):
    # first moments by Green: ∫x dA = 1/2 ∮ x^2 dy, ∫y dA = -1/2 ∮ y^2 dx
    mx = my = 0.0
    for p in pieces:
        if isinstance(p, geo.Segment):
            (xa, ya), (xb, yb) = p.p0, p.p1
            mx += (yb - ya) * (xa * xa + xa * xb + xb * xb) / 6.0
            my -= (xb - xa) * (ya * ya + ya * yb + yb * yb) / 6.0
        else:
            r, t0, t1 = p.radius, p.theta0, p.theta1
            # x = r cos t, dy = r cos t dt ; y = r sin t, dx = -r sin t dt
            mx += 0.5 * r**3 * ((math.sin(t1) - math.sin(t1) ** 3 / 3) - (math.sin(t0) - math.sin(t0) ** 3 / 3))
            my += 0.5 * r**3 * ((-math.cos(t1) + math.cos(t1) ** 3 / 3) - (-math.cos(t0) + math.cos(t0) ** 3 / 3))
    return mx / area, my / area


@dataclass
class TargetDensity:
    """Density on an interval, sampled on a uniform grid, with its trapezoidal CDF.

    The stored ``values`` are normalised so that the trapezoidal running
    integral ``cdf`` ends at exactly one.
    """

    interval: Tuple[float, float]
    values: np.ndarray
    normalize: bool = True
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lo, hi = map(float, self.interval)
        if not hi > lo:
            raise ConfigurationError(f"empty target interval {self.interval}")
        self.interval = (lo, hi)
        v = np.asarray(self.values, dtype=float).copy()
        if v.ndim != 1 or v.size < 2:
            raise ConfigurationError("target density needs at least two grid values")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ConfigurationError("target density must be finite and nonnegative")
        self.grid = np.linspace(lo, hi, v.size)
        cdf = integrate.cumulative_trapezoid(v, self.grid, initial=0.0)
        if self.normalize:
            if cdf[-1] <= 0:
                raise ConfigurationError("target density has zero mass")
            v /= cdf[-1]
            cdf /= cdf[-1]
        self.values = v
        self.cdf = cdf

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], interval, size: int = 512) -> "TargetDensity":
        grid = np.linspace(interval[0], interval[1], size)
        return cls(interval, np.broadcast_to(np.asarray(func(grid), dtype=float), grid.shape).copy())

    @classmethod
    def uniform(cls, interval, size: int = 512) -> "TargetDensity":
        return cls(interval, np.ones(size))

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return self.grid[1] - self.grid[0]

    def pdf(self, y) -> np.ndarray:
        return np.interp(y, self.grid, self.values, left=0.0, right=0.0)

    def cdf_at(self, y) -> np.ndarray:
        """Exact integral of the piecewise-linear density up to ``y``."""
        y = np.clip(np.asarray(y, dtype=float), self.grid[0], self.grid[-1])
        i = np.clip(np.searchsorted(self.grid, y, side="right") - 1, 0, self.size - 2)
        t = y - self.grid[i]
        slope = (self.values[i + 1] - self.values[i]) / self.h
        return self.cdf[i] + self.values[i] * t + 0.5 * slope * t * t

    def interval_mass(self, y0, y1) -> np.ndarray:
        return self.cdf_at(y1) - self.cdf_at(y0)


@dataclass
class DiscreteMeasure:
    """Weighted particle cloud; ``points`` has shape ``(N, d)``."""

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        if self.weights is None:
            self.weights = np.full(len(pts), 1.0 / len(pts))
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(pts),) or np.any(w < 0):
            raise ConfigurationError("weights must be nonnegative with one entry per point")
        if abs(w.sum() - 1.0) > 1e-12:
            w = w / w.sum()
        self.weights = w

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)))
