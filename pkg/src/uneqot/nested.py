"""Multi-to-one-dimensional transport by mass splitting, and nestedness diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate, stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import core
from ._validation import as_points
from .costs import CostModel
from .exceptions import ConfigurationError, NumericalError
from .measures import SourceMeasure, TargetDensity

NESTED_MARGIN_TOL = 1e-9


@dataclass
class KProfile:
    """Mass-splitting levels ``k(y)`` on a uniform grid.

    Attributes
    ----------
    grid : ndarray of shape (G,)
    k : ndarray of shape (G,)
        ``k(y_i)`` with ``mu(X_>=(y_i, k(y_i))) = nu((-inf, y_i])``.
    kprime : ndarray of shape (G,)
        Second-order finite differences (one-sided at the ends).
    v : ndarray of shape (G,)
        Trapezoidal running integral of ``k`` with ``v(y_lo) = 0``.
    mass : ndarray of shape (G,)
        Target CDF values the levels were matched to.
    """

    grid: np.ndarray
    k: np.ndarray
    kprime: np.ndarray = None
    v: np.ndarray = None
    mass: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.k = np.asarray(self.k, dtype=float)
        if self.grid.shape != self.k.shape or self.grid.ndim != 1 or self.grid.size < 3:
            raise ConfigurationError("KProfile needs matching 1-D grid and k arrays with at least 3 nodes")
        if self.kprime is None:
            self.kprime = np.gradient(self.k, self.grid, edge_order=2)
        if self.v is None:
            self.v = integrate.cumulative_trapezoid(self.k, self.grid, initial=0.0)

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def __call__(self, y):
        return np.interp(y, self.grid, self.k)

    def intercept(self) -> np.ndarray:
        """``-k(y)/cos(y)``: where the bilinear-arc level line meets the ``x2`` axis."""
        return -self.k / np.cos(self.grid)


def solve_k_profile(cost: CostModel, mu: SourceMeasure, nu: TargetDensity) -> KProfile:
    """Mass-splitting levels on ``nu.grid``.

    Parameters
    ----------
    cost : CostModel
    mu : SourceMeasure
    nu : TargetDensity

    Returns
    -------
    KProfile
    """
    core.check_compatible(cost, mu)
    ks = np.empty(nu.size)
    cdf = np.clip(nu.cdf, 0.0, 1.0)
    for i, (y, m) in enumerate(zip(nu.grid, cdf)):
        try:
            ks[i] = core.mass_to_k(cost, mu, float(y), float(m))
        except NumericalError as exc:
            raise NumericalError(f"level search failed at y={y}: {exc}") from exc
    return KProfile(nu.grid.copy(), ks, mass=cdf.copy())


@dataclass
class MapResult:
    y: np.ndarray
    ambiguous: int = 0
    outside: int = 0


def transport_map(cost: CostModel, mu: SourceMeasure, kp: KProfile, x, chunk: int = 2048, strict: bool = True):
    """``T(x)``: the ``y`` with ``D_y c(x, y) = k(y)``.

    ``k`` is interpolated linearly between grid nodes.  The first upward
    sign change of ``y -> D_y c(x, y) - k(y)`` is located on the grid and
    refined by bisection.  Points with several sign changes (possible only
    for non-nested profiles) are counted as ambiguous and resolved to the
    smallest root.

    Parameters
    ----------
    x : array-like of shape (m,) or (N, m)
    strict : bool
        Raise when a point has no crossing; otherwise return NaN for it.

    Returns
    -------
    float or MapResult
        A float for a single point, else a :class:`MapResult`.
    """
    single = np.ndim(x) == 1 and mu.dim > 1 or np.ndim(x) == 0
    X = as_points(x, mu.dim)
    grid, kv = kp.grid, kp.k
    out = np.empty(len(X))
    ambiguous = outside = 0
    for s in range(0, len(X), chunk):
        xs = X[s : s + chunk]
        D = cost.dy(xs[:, None, :], grid[None, :]) - kv[None, :]
        pos = D >= 0.0
        n_changes = np.count_nonzero(pos[:, 1:] != pos[:, :-1], axis=1)
        ambiguous += int(np.count_nonzero(n_changes > 1))
        has = pos.any(axis=1)
        j = np.argmax(pos, axis=1)
        # within roundoff of the top level: send to the upper end
        near_top = ~has & (D[:, -1] >= -1e-10)
        j = np.where(near_top, len(grid) - 1, j)
        miss = ~has & ~near_top
        outside += int(np.count_nonzero(miss))
        lo = grid[np.maximum(j - 1, 0)]
        hi = grid[j]
        k_lo = kv[np.maximum(j - 1, 0)]
        slope = np.where(j > 0, (kv[j] - k_lo) / kp.h, 0.0)
        refine = (j > 0) & ~near_top
        if np.any(refine):
            a, b = lo[refine].copy(), hi[refine].copy()
            xr, y0, k0, sl = xs[refine], lo[refine], k_lo[refine], slope[refine]
            for _ in range(60):
                mid = 0.5 * (a + b)
                g = cost.dy(xr, mid) - (k0 + (mid - y0) * sl)
                up = g >= 0.0
                b = np.where(up, mid, b)
                a = np.where(up, a, mid)
            res = hi.copy()
            res[refine] = b
        else:
            res = hi.copy()
        res[miss] = np.nan
        out[s : s + chunk] = res
    if outside and strict:
        raise NumericalError(f"{outside} point(s) have no level crossing; outside the transported region")
    if ambiguous:
        warnings.warn(f"{ambiguous} point(s) met several level crossings; smallest root used", RuntimeWarning)
    if single:
        return float(out[0])
    return MapResult(out, ambiguous, outside)


def transport_cost(cost: CostModel, mu: SourceMeasure, kp: KProfile, n_cells: int = 128) -> float:
    """``∫ c(x, T(x)) dmu(x)`` by the midpoint rule on exact domain cells.

    Each cell of an ``n_cells``-per-axis grid contributes its exact
    ``mu``-mass times the cost at its barycentre.
    """
    pts, w = mu.cell_discretization(n_cells)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ys = transport_map(cost, mu, kp, pts, strict=False).y
    ok = np.isfinite(ys)
    if not ok.all():
        raise NumericalError(f"{int((~ok).sum())} cell(s) have no level crossing")
    return float(np.sum(w * cost(pts, ys)))


def density_from_k(cost: CostModel, mu: SourceMeasure, kp: KProfile, interval=None) -> TargetDensity:
    """Target density implied by a level profile through the co-area formula.

    ``nu_bar(y) = ∫ (D_yy c - k'(y)) / |D_xy c| mu_bar dH^{m-1}`` over
    ``X_=(y, k(y))``.  Negative values are clipped to zero and counted;
    nodes where ``|k'| > 10 M_c`` are flagged as suspect.  Both reports live
    in ``info`` of the returned density, which is not renormalised.
    """
    vals = np.empty(kp.grid.size)
    for i, (y, k, kp_i) in enumerate(zip(kp.grid, kp.k, kp.kprime)):
        curve = core.level_curve(cost, mu, float(y), float(k))
        if curve.weights.size == 0:
            vals[i] = 0.0
            continue
        dens = mu.density_at(curve.nodes) * curve.weights
        cyy = cost.dyy(curve.nodes, float(y))
        vals[i] = float(np.sum(dens * (cyy - kp_i)) / cost.cross_norm(float(y)))
    negative = np.flatnonzero(vals < 0.0)
    span = interval if interval is not None else (kp.grid[0], kp.grid[-1])
    Mc = cost.lipschitz_y(mu, span)
    suspect = np.flatnonzero(np.abs(kp.kprime) > 10.0 * Mc)
    out = TargetDensity(span, np.clip(vals, 0.0, None), normalize=False)
    out.info = {
        "negative_nodes": negative.tolist(),
        "min_raw_value": float(vals.min()),
        "suspect_nodes": suspect.tolist(),
        "lipschitz_y": Mc,
    }
    return out


@dataclass
class NestednessResult:
    """Outcome of a nestedness scan; unpacks as ``(nested, witness)``."""

    nested: bool
    witness: Optional[Tuple[float, float]]
    min_margin: float
    margins: np.ndarray = field(default=None, repr=False)

    def __iter__(self):
        yield self.nested
        yield self.witness


def _containment_margin(cost, mu, y0, k0, y1, k1) -> float:
    """``min`` of ``(D_y c(x, y1) - k1)/|a(y1)|`` over the closed ``X_>=(y0, k0)``.

    Positive means ``X_>=(y0, k0)`` sits strictly inside ``X_>(y1, k1)``;
    the value is a signed distance to the ``y1`` level line.
    """
    a1, b1 = cost.affine_dy(y1)
    lo, _ = mu.extremes(a1, [core.superlevel_halfplane(cost, y0, k0)])
    if not math.isfinite(lo):
        return math.inf
    return (lo + b1 - k1) / cost.cross_norm(y1)


def check_nestedness(cost: CostModel, mu: SourceMeasure, kp: KProfile, nu: Optional[TargetDensity] = None,
                     tol: float = NESTED_MARGIN_TOL) -> NestednessResult:
    """Grid test of ``X_>=(y0, k(y0)) ⊆ X_>(y1, k(y1))`` for ``y0 < y1``.

    Containment is checked between successive grid nodes (charged by
    ``nu``), which implies it for every pair.  The margin is the signed
    distance from the earlier super-level set to the later level line, so
    level sets meeting only on the boundary give margin zero and count as
    nested.  On failure the witness is the lexicographically smallest
    violating grid pair.
    """
    if kp.grid.size < 64:
        raise ConfigurationError("nestedness scan needs at least 64 grid nodes")
    grid, kv = kp.grid, kp.k
    if nu is not None:
        charge = nu.cdf_at(grid)
    else:
        charge = np.arange(grid.size, dtype=float)
    margins = np.full(grid.size - 1, np.inf)
    anchor = 0
    first_bad = None
    for j in range(1, grid.size):
        if charge[j] - charge[anchor] <= 0.0:
            continue
        m = _containment_margin(cost, mu, grid[anchor], kv[anchor], grid[j], kv[j])
        margins[j - 1] = m
        if m < -tol and first_bad is None:
            first_bad = anchor
        anchor = j
    finite = margins[np.isfinite(margins)]
    min_margin = float(finite.min()) if finite.size else math.inf
    if first_bad is None:
        return NestednessResult(True, None, min_margin, margins)
    for i in range(first_bad + 1):
        for j in range(i + 1, grid.size):
            if charge[j] - charge[i] <= 0.0:
                continue
            if _containment_margin(cost, mu, grid[i], kv[i], grid[j], kv[j]) < -tol:
                return NestednessResult(False, (float(grid[i]), float(grid[j])), min_margin, margins)
    return NestednessResult(False, (float(grid[first_bad]), float(grid[first_bad + 1])), min_margin, margins)


def containment_level(cost: CostModel, mu: SourceMeasure, y0: float, y1: float, k0: float) -> float:
    """``k_max(y0, y1, k0) = sup{k : X_>=(y0, k0) ⊆ X_>=(y1, k)}``.

    Equal to the minimum of ``D_y c(., y1)`` over the closed
    ``X_>=(y0, k0)``; ``+inf`` when that set is empty.
    """
    a1, b1 = cost.affine_dy(y1)
    lo, _ = mu.extremes(a1, [core.superlevel_halfplane(cost, y0, k0)])
    return lo + b1


def minimal_mass_difference(cost: CostModel, mu: SourceMeasure, y0: float, y1: float, k0: float,
                            volume: bool = False) -> float:
    """Minimal mass difference ``mu(X_>=(y1, k_max) \\ X_>=(y0, k0))``.

    Parameters
    ----------
    volume : bool
        Measure the set difference by Lebesgue volume instead of ``mu``.
    """
    if not y0 < y1:
        raise ConfigurationError(f"need y0 < y1, got {y0}, {y1}")
    kmax = containment_level(cost, mu, y0, y1, k0)
    if not math.isfinite(kmax):
        return 0.0
    ref = SourceMeasure(mu.domain, mu.bounds) if volume else mu
    d = core.superlevel_mass(cost, ref, y1, kmax) - core.superlevel_mass(cost, ref, y0, k0)
    d = max(d, 0.0)
    return d * ref.area if volume else d


def _dmin_sup(cost, mu, y0, y1, k0s, volume=False) -> float:
    return max(minimal_mass_difference(cost, mu, y0, y1, float(k0), volume=volume) for k0 in k0s)


def nestedness_by_bounds(cost: CostModel, mu: SourceMeasure, nu_lower: Callable, interval,
                         kp: Optional[KProfile] = None, n_y: int = 33, n_k: int = 17,
                         dmin_tol: float = 1e-13) -> bool:
    """Sufficient test from a lower bound on the target density.

    Checks ``D^min(y0, y1, k0)/(y1 - y0) < min_{[y0, y1]} nu_lower`` on a
    grid of pairs.  ``k0 = k(y0)`` when a profile is given, else the sup is
    taken over sampled ``k0`` in the range of ``D_y c(., y0)``.  Pairs whose
    minimal mass difference vanishes are accepted outright, which is the
    pseudo-index situation.
    """
    ys = np.linspace(interval[0], interval[1], n_y)
    lower = np.asarray([float(nu_lower(y)) for y in ys])
    for i in range(n_y - 1):
        y0 = float(ys[i])
        if kp is not None:
            k0s = [float(kp(y0))]
        else:
            kmin, kmax = core.k_range(cost, mu, y0)
            k0s = np.linspace(kmin, kmax, n_k)
        for j in range(i + 1, n_y):
            y1 = float(ys[j])
            d = _dmin_sup(cost, mu, y0, y1, k0s)
            if d <= dmin_tol:
                continue
            if not d / (y1 - y0) - lower[i : j + 1].min() < 0.0:
                return False
    return True


def nestedness_by_source_bounds(cost: CostModel, mu: SourceMeasure, mu_upper: Callable, nu: TargetDensity,
                                kp: KProfile, n_y: int = 33, n_probe: int = 41, dmin_tol: float = 1e-13) -> bool:
    """Sufficient test from an upper bound on the source density.

    Uses ``||mu_upper||_inf`` over the set difference times the volume form
    of the minimal mass difference, against ``nu_bar`` on ``[y0, y1]``.
    """
    ys = np.linspace(nu.grid[0], nu.grid[-1], n_y)
    probe = mu.sample_grid(n_probe)
    up = np.asarray(mu_upper(probe), dtype=float)
    nubar = nu.pdf(ys)
    for i in range(n_y - 1):
        y0 = float(ys[i])
        k0 = float(kp(y0))
        for j in range(i + 1, n_y):
            y1 = float(ys[j])
            dvol = minimal_mass_difference(cost, mu, y0, y1, k0, volume=True)
            if dvol <= dmin_tol:
                continue
            kmax = containment_level(cost, mu, y0, y1, k0)
            in_diff = (cost.dy(probe, y1) >= kmax) & (cost.dy(probe, y0) < k0)
            sup_mu = float(up[in_diff].max()) if np.any(in_diff) else float(up.max())
            if not sup_mu * dvol / (y1 - y0) - nubar[i : j + 1].min() < 0.0:
                return False
    return True


@dataclass
class NestedSolution:
    """Solved transport problem with diagnostics."""

    kprofile: KProfile
    map_samples: Tuple[np.ndarray, np.ndarray]
    nu_density: TargetDensity
    nested: bool
    witness: Optional[Tuple[float, float]]
    min_margin: float
    ks_statistic: float
    ambiguous: int = 0


def ks_statistic(samples: np.ndarray, nu: TargetDensity) -> float:
    """Kolmogorov-Smirnov distance between an empirical sample and ``nu``."""
    return float(stats.kstest(np.asarray(samples, dtype=float), nu.cdf_at).statistic)


def solve_nested(cost: CostModel, mu: SourceMeasure, nu: TargetDensity, n_samples: int = 100_000,
                 seed: int = 0) -> NestedSolution:
    """Full solve: levels, map on ``mu``-samples, reconstructed density and diagnostics."""
    kp = solve_k_profile(cost, mu, nu)
    nest = check_nestedness(cost, mu, kp, nu)
    rng = np.random.Generator(np.random.Philox(seed))
    xs = mu.sample(n_samples, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = transport_map(cost, mu, kp, xs, strict=False)
    ok = np.isfinite(res.y)
    ks = ks_statistic(res.y[ok], nu)
    recon = density_from_k(cost, mu, kp, nu.interval)
    return NestedSolution(kp, (xs, res.y), recon, nest.nested, nest.witness, nest.min_margin, ks, res.ambiguous)


class NestedTransport(TransformerMixin, BaseEstimator):
    """Estimator wrapper around the mass-splitting construction.

    Parameters
    ----------
    cost : CostModel or str, default='bilinear_arc'
    source : SourceMeasure or None
        Defaults to the uniform quarter disk.
    interval : tuple of float
        Target interval used when ``fit`` receives raw density values.

    Attributes
    ----------
    k_profile_ : KProfile
    nested_ : bool
    witness_ : tuple or None
    """

    def __init__(self, cost="bilinear_arc", source=None, interval=(0.0, 0.5 * math.pi)):
        self.cost = cost
        self.source = source
        self.interval = interval

    def _resolve(self):
        cost = CostModel(self.cost) if isinstance(self.cost, str) else self.cost
        mu = SourceMeasure() if self.source is None else self.source
        core.check_compatible(cost, mu)
        return cost, mu

    def fit(self, X, y=None):
        """Fit to a target density.

        Parameters
        ----------
        X : TargetDensity or array-like of shape (G,)
            Density values on a uniform grid of ``interval``.
        """
        cost, mu = self._resolve()
        nu = X if isinstance(X, TargetDensity) else TargetDensity(self.interval, np.asarray(X, dtype=float))
        self.cost_, self.source_, self.target_ = cost, mu, nu
        self.k_profile_ = solve_k_profile(cost, mu, nu)
        res = check_nestedness(cost, mu, self.k_profile_, nu)
        self.nested_, self.witness_, self.min_margin_ = res.nested, res.witness, res.min_margin
        return self

    def transform(self, X):
        """Map source points to targets, shape ``(N,)``."""
        check_is_fitted(self, "k_profile_")
        X = as_points(X, self.source_.dim)
        return transport_map(self.cost_, self.source_, self.k_profile_, X).y

    def predict(self, X):
        return self.transform(X)

    def reconstructed_density(self) -> TargetDensity:
        check_is_fitted(self, "k_profile_")
        return density_from_k(self.cost_, self.source_, self.k_profile_, self.target_.interval)
