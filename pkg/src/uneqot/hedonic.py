"""Two-marginal hedonic matching through a shared mass profile ``M(y)``.

Buyers ``mu_1`` and sellers ``mu_2`` meet at qualities ``y``.  At each ``y``
the mass profile ``M(y)`` solves ``k_1(y, M) + k_2(y, M) = 0``, where
``k_i(y, M)`` is the level of ``D_y c_i`` whose super-level set has
``mu_i``-mass ``M``.  When the super-level sets are nested on both sides,
``M`` is the CDF of the equilibrium distribution of qualities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import core
from .costs import CostModel
from .exceptions import ConfigurationError, HypothesisViolation
from .measures import SourceMeasure, TargetDensity
from ._validation import check_interval
from .nested import KProfile, check_nestedness

RANGE_TOL = 1e-12


@dataclass
class HedonicInstance:
    """Buyer and seller sides sharing a quality interval.

    Parameters
    ----------
    buyer, seller : tuple of (CostModel, SourceMeasure)
    interval : tuple of float
        Candidate qualities ``(y_lo, y_hi)``.
    """

    buyer: Tuple[CostModel, SourceMeasure]
    seller: Tuple[CostModel, SourceMeasure]
    interval: Tuple[float, float]

    def __post_init__(self):
        self.interval = check_interval(self.interval)
        for cost, mu in (self.buyer, self.seller):
            core.check_compatible(cost, mu)

    @property
    def sides(self):
        return (self.buyer, self.seller)

    @classmethod
    def example(cls, interval=(-3.0, 3.0)) -> "HedonicInstance":
        """Uniform buyers on the unit square, uniform sellers on the unit interval.

        Costs are ``c_1 = x1 y^2/2 - x2 y`` and ``c_2 = -x y + y^2/2``; the
        equilibrium has ``M = 3y/4`` on ``[0, 4/5]`` and
        ``M = sqrt(4y - y^2) - 1`` on ``[4/5, 2]``.
        """
        return cls(
            buyer=(CostModel("hedonic_buyer"), SourceMeasure("rectangle")),
            seller=(CostModel("hedonic_seller", m=1), SourceMeasure("unit_interval")),
            interval=interval,
        )


@dataclass
class HedonicSolution:
    """Mass profile and levels on a uniform grid.

    Attributes
    ----------
    grid : ndarray of shape (G,)
        Uniform grid over the instance interval.
    M : ndarray of shape (G,)
        Mass profile; ``0`` below the support and ``1`` above it.
    in_support : ndarray of bool
        Grid nodes where the range condition holds.
    support : tuple of float
        Support endpoints refined between grid nodes.
    k1, k2 : KProfile
        Levels on the support nodes.
    nu : TargetDensity
        ``dM/dy`` on ``grid`` (zero off the support).
    nested : bool
    transition_points : list of float
        Qualities where the buyer level line changes the pair of domain
        edges it crosses, so ``M`` has a kink.
    residual : float
        ``max |k_1 + k_2|`` over the support nodes.
    """

    grid: np.ndarray
    M: np.ndarray
    in_support: np.ndarray
    support: Tuple[float, float]
    k1: KProfile
    k2: KProfile
    nu: TargetDensity
    nested: bool = False
    transition_points: List[float] = field(default_factory=list)
    residual: float = 0.0
    witness: Optional[Tuple[float, float]] = None

    @property
    def support_grid(self) -> np.ndarray:
        return self.grid[self.in_support]

    def potential_deviation(self) -> float:
        """Sup-deviation of ``v_1 + v_2`` from its mean on the support."""
        s = self.k1.v + self.k2.v
        return float(np.max(np.abs(s - s.mean())))


def _range_sums(instance: HedonicInstance, y: float) -> Tuple[float, float]:
    """``(k_1(y,1) + k_2(y,1), k_1(y,0) + k_2(y,0))``, the range of ``M -> k_1 + k_2``."""
    lo = hi = 0.0
    for cost, mu in instance.sides:
        kmin, kmax = core.k_range(cost, mu, y)
        lo += kmin
        hi += kmax
    return lo, hi


def _level_sum(instance: HedonicInstance, y: float, M: float) -> float:
    return sum(core.mass_to_k(cost, mu, y, M) for cost, mu in instance.sides)


def solve_M_at(instance: HedonicInstance, y: float, xtol: float = 1e-15) -> Tuple[float, float, float]:
    """``(M(y), k_1, k_2)`` at one quality.

    Raises
    ------
    HypothesisViolation
        If ``0`` is outside the range of ``M -> k_1(y, M) + k_2(y, M)``.
    """
    s1, s0 = _range_sums(instance, y)
    if s1 > RANGE_TOL or s0 < -RANGE_TOL:
        raise HypothesisViolation(f"y={y} is outside the support: k1+k2 ranges over [{s1}, {s0}]")
    if s0 <= 0.0:
        M = 0.0
    elif s1 >= 0.0:
        M = 1.0
    else:
        M = optimize.brentq(lambda m: _level_sum(instance, y, m), 0.0, 1.0, xtol=xtol,
                            rtol=4 * np.finfo(float).eps, maxiter=200)
    (c1, m1), (c2, m2) = instance.sides
    return M, core.mass_to_k(c1, m1, y, M), core.mass_to_k(c2, m2, y, M)


def _edge_tags(mu: SourceMeasure, cost: CostModel, y: float, k: float):
    """Sorted labels of the domain edges the level line ``X_=(y, k)`` ends on."""
    if mu.dim == 1:
        return ()
    a, b = cost.affine_dy(y)
    chord = mu.level_set(a, k - b)
    if chord is None:
        return ("empty",)
    if math.hypot(chord[0][0] - chord[1][0], chord[0][1] - chord[1][1]) < 1e-9:
        return None
    tags = []
    for p in chord:
        x1, x2 = p
        if mu.domain == "quarter_disk":
            d = (abs(x1), abs(x2), abs(math.hypot(x1, x2) - 1.0))
        else:
            lo1, hi1, lo2, hi2 = mu.bounds
            d = (abs(x1 - lo1), abs(x1 - hi1), abs(x2 - lo2), abs(x2 - hi2))
        tags.append(int(np.argmin(d)))
    return tuple(sorted(tags))


def _tags_at(instance: HedonicInstance, y: float):
    """Edge labels per side, or ``None`` when a level line degenerates to a corner point."""
    M, k1, k2 = solve_M_at(instance, y)
    tags = tuple(_edge_tags(mu, cost, y, k) for (cost, mu), k in zip(instance.sides, (k1, k2)))
    return None if any(t is None for t in tags) else tags


def _refine(fn, a: float, b: float, n_iter: int = 60) -> float:
    """Bisection for the switch of a boolean ``fn`` with ``fn(a) != fn(b)``."""
    fa = fn(a)
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        if fn(mid) == fa:
            a = mid
        else:
            b = mid
        if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(a)):
            break
    return 0.5 * (a + b)


def _segment_gradient(values: np.ndarray, grid: np.ndarray, breaks: np.ndarray) -> np.ndarray:
    """``np.gradient`` applied separately on runs split before each index in ``breaks``."""
    out = np.empty_like(values)
    bounds = [0, *sorted(int(b) for b in breaks), values.size]
    for s, e in zip(bounds[:-1], bounds[1:]):
        if e - s >= 3:
            out[s:e] = np.gradient(values[s:e], grid[s:e], edge_order=2)
        elif e - s == 2:
            out[s:e] = (values[s + 1] - values[s]) / (grid[s + 1] - grid[s])
        elif e - s == 1:
            out[s] = np.nan
    if np.any(np.isnan(out)):
        good = ~np.isnan(out)
        out[~good] = np.interp(grid[~good], grid[good], out[good])
    return out


def solve_M(instance: HedonicInstance, grid: int = 1024, check: bool = True) -> HedonicSolution:
    """Mass profile ``M(y)`` and levels ``k_i(y, M(y))`` on a uniform grid.

    At each node where ``0`` lies in the range of ``M -> k_1 + k_2`` the
    strictly decreasing map is solved by a bracketed root search; other
    nodes are excluded and the support is the maximal run of included
    nodes.  The density is the derivative of ``M`` by central differences,
    taken one-sided on each side of a kink.

    Parameters
    ----------
    instance : HedonicInstance
    grid : int
        Number of uniform nodes over ``instance.interval``.
    check : bool
        Run :func:`hedonic_nestedness_check` and record the flag.

    Raises
    ------
    HypothesisViolation
        If no node satisfies the range condition.
    """
    if grid < 8:
        raise ConfigurationError("grid needs at least 8 nodes")
    ys = np.linspace(*instance.interval, grid)
    sums = np.array([_range_sums(instance, y) for y in ys])
    ok = (sums[:, 0] <= RANGE_TOL) & (sums[:, 1] >= -RANGE_TOL)
    if not ok.any():
        raise HypothesisViolation("empty support: 0 is outside the range of k1+k2 at every grid node")
    idx = np.flatnonzero(ok)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    run = max(runs, key=len)
    in_support = np.zeros(grid, dtype=bool)
    in_support[run] = True
    if run.size < 3:
        raise HypothesisViolation(f"support covers only {run.size} grid nodes; refine the grid")

    M = np.zeros(grid)
    k1 = np.empty(run.size)
    k2 = np.empty(run.size)
    for j, i in enumerate(run):
        M[i], k1[j], k2[j] = solve_M_at(instance, ys[i])
    M[run[-1] + 1:] = 1.0

    def included(y):
        s1, s0 = _range_sums(instance, y)
        return s1 <= 0.0 <= s0

    s_lo = ys[run[0]] if run[0] == 0 else _refine(included, ys[run[0] - 1], ys[run[0]])
    s_hi = ys[run[-1]] if run[-1] == grid - 1 else _refine(included, ys[run[-1]], ys[run[-1] + 1])

    sg = ys[run]
    tags = [_tags_at(instance, y) for y in sg]
    breaks = [j + 1 for j in range(run.size - 1)
              if tags[j] is not None and tags[j + 1] is not None and tags[j] != tags[j + 1]]
    transitions = []
    for b in breaks:
        t0 = tags[b - 1]
        transitions.append(float(_refine(lambda y: _tags_at(instance, y) == t0, sg[b - 1], sg[b])))

    Ms = M[run]
    dM = _segment_gradient(Ms, sg, np.array(breaks, dtype=int))
    kp1 = KProfile(sg, k1, kprime=_segment_gradient(k1, sg, np.array(breaks, dtype=int)), mass=Ms)
    kp2 = KProfile(sg, k2, kprime=_segment_gradient(k2, sg, np.array(breaks, dtype=int)), mass=Ms)
    nu_vals = np.zeros(grid)
    nu_vals[run] = np.maximum(dM, 0.0)
    nu = TargetDensity(instance.interval, nu_vals, normalize=False)
    nu.info["negative_nodes"] = int(np.sum(dM < 0))
    nu.info["min_raw_value"] = float(dM.min())

    sol = HedonicSolution(
        grid=ys, M=M, in_support=in_support, support=(float(s_lo), float(s_hi)), k1=kp1, k2=kp2, nu=nu,
        transition_points=transitions, residual=float(np.max(np.abs(k1 + k2))),
    )
    if check:
        res = hedonic_nestedness_check(instance, sol)
        sol.nested, sol.witness = res.nested, res.witness
    return sol


@dataclass
class HedonicNestednessResult:
    """Outcome of the two-sided nestedness scan; unpacks as ``(nested, witness)``.

    Attributes
    ----------
    nested : bool
    witness : tuple or None
        ``(side, y, ybar)`` for the first violating pair.
    side_nested : tuple of bool
    min_margins : tuple of float
    monotone : bool
        Whether ``M`` is nondecreasing on the support.
    intercept_increasing : bool or None
        For the ``hedonic_buyer`` family, whether the level-line intercept
        ``-k_1`` increases with ``y``.
    """

    nested: bool
    witness: Optional[Tuple[int, float, float]]
    side_nested: Tuple[bool, bool]
    min_margins: Tuple[float, float]
    monotone: bool
    intercept_increasing: Optional[bool] = None

    def __iter__(self):
        yield self.nested
        yield self.witness


def hedonic_nestedness_check(instance: HedonicInstance, sol: HedonicSolution,
                             tol: float = 1e-9) -> HedonicNestednessResult:
    """Check ``X^i_>=(y, k_i(y)) ⊆ X^i_>(ybar, k_i(ybar))`` for ``y < ybar`` and ``i = 1, 2``.

    Each side is scanned with :func:`uneqot.nested.check_nestedness` over
    the support nodes.  A decrease of ``M`` also breaks nestedness.
    """
    Ms = sol.M[sol.in_support]
    monotone = bool(np.all(np.diff(Ms) >= -tol))
    flags, margins, witness = [], [], None
    for side, ((cost, mu), kp) in enumerate(zip(instance.sides, (sol.k1, sol.k2)), start=1):
        if kp.grid.size >= 64:
            res = check_nestedness(cost, mu, kp, tol=tol)
        else:
            res = check_nestedness(cost, mu, _upsample(instance, kp, side), tol=tol)
        flags.append(res.nested)
        margins.append(res.min_margin)
        if not res.nested and witness is None:
            witness = (side, *res.witness)
    if not monotone and witness is None:
        j = int(np.argmax(np.diff(Ms) < -tol))
        g = sol.support_grid
        witness = (0, float(g[j]), float(g[j + 1]))
    intercept = None
    if instance.buyer[0].family == "hedonic_buyer":
        intercept = bool(np.all(np.diff(-sol.k1.k) >= -tol))
    return HedonicNestednessResult(all(flags) and monotone, witness, tuple(flags), tuple(margins), monotone,
                                   intercept)


def _upsample(instance, kp, side):
    g = np.linspace(kp.grid[0], kp.grid[-1], 64)
    k = np.array([solve_M_at(instance, y)[side] for y in g])
    return KProfile(g, k)


@dataclass
class BoundaryReport:
    """Endpoint behaviour of the equilibrium density; unpacks as ``(lo, hi)``.

    Attributes
    ----------
    lo, hi : bool
        Whether the density vanishes at ``y_lo`` / ``y_hi``; true when the
        endpoint lies outside the support.
    nu_lo, nu_hi : float
        Density extrapolated to the support endpoints.
    vanishes_lo, vanishes_hi : bool
        Whether the extrapolated density at the support endpoints is below
        the threshold.
    precondition_lo, precondition_hi : bool
        Whether some side has level sets whose ``H^{m-1}`` measure tends to
        zero at the extreme level of the support endpoint.
    level_lengths : dict
        ``{(endpoint, side): length}`` at the probe level.
    """

    lo: bool
    hi: bool
    nu_lo: float
    nu_hi: float
    vanishes_lo: bool
    vanishes_hi: bool
    precondition_lo: bool
    precondition_hi: bool
    level_lengths: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.lo
        yield self.hi


def _extreme_level_length(cost: CostModel, mu: SourceMeasure, y: float, upper: bool, rel: float) -> float:
    """``H^{m-1}(X_=(y, k))`` at ``k`` a relative distance ``rel`` inside the extreme level."""
    kmin, kmax = core.k_range(cost, mu, y)
    span = kmax - kmin
    k = kmax - rel * span if upper else kmin + rel * span
    return core.level_curve(cost, mu, y, k).length


def boundary_vanishing_check(instance: HedonicInstance, sol: HedonicSolution, n_fit: int = 5,
                             factor: float = 10.0) -> BoundaryReport:
    """Whether the equilibrium density vanishes at the ends of the quality interval.

    The density is extrapolated linearly from the ``n_fit`` nodes next to
    each support endpoint and called vanishing when below ``factor`` times
    the grid spacing.  The level-set precondition is probed on each side
    at a level ``1e-9`` (relative) inside ``max D_y c`` at the lower end
    and ``min D_y c`` at the upper end; lengths below ``1e-6`` count as
    tending to zero.
    """
    g = sol.support_grid
    vals = sol.nu.values[sol.in_support]
    h = float(sol.grid[1] - sol.grid[0])
    n = min(n_fit, g.size)
    s_lo, s_hi = sol.support
    p_lo = np.polyfit(g[:n], vals[:n], 1)
    p_hi = np.polyfit(g[-n:], vals[-n:], 1)
    nu_lo, nu_hi = float(np.polyval(p_lo, s_lo)), float(np.polyval(p_hi, s_hi))
    van_lo, van_hi = abs(nu_lo) <= factor * h, abs(nu_hi) <= factor * h
    lengths = {}
    pre = {"lo": False, "hi": False}
    for end, y, upper in (("lo", s_lo, True), ("hi", s_hi, False)):
        for side, (cost, mu) in enumerate(instance.sides, start=1):
            L = _extreme_level_length(cost, mu, y, upper, 1e-9)
            lengths[(end, side)] = L
            if mu.dim > 1 and L < 1e-6:
                pre[end] = True
    y_lo, y_hi = instance.interval
    lo = True if s_lo > y_lo + h else van_lo
    hi = True if s_hi < y_hi - h else van_hi
    return BoundaryReport(lo, hi, nu_lo, nu_hi, van_lo, van_hi, pre["lo"], pre["hi"], lengths)


@dataclass
class DifferentialCondition:
    """Sufficient condition for nestedness at one ``(y, x1bar, x2bar)``; unpacks as ``(value, holds)``.

    Attributes
    ----------
    value : float
        ``A_i - A_j - D_yy c_i(xbar_i, y) (B_1 + B_2)`` for the tested side ``i``.
    holds : bool
        ``value < 0``.
    k1prime : float
        ``(A_1 - A_2)/(B_1 + B_2)``, the slope of ``y -> k_1(y, M(y))``.
    A1, A2, B1, B2 : float
        Level-set integrals of ``D_yy c_i / |D_xy c_i|`` and ``1 / |D_xy c_i|``.
    """

    value: float
    holds: bool
    k1prime: float
    A1: float
    A2: float
    B1: float
    B2: float

    def __iter__(self):
        yield self.value
        yield self.holds


def differential_condition(instance: HedonicInstance, y: float, x1bar, x2bar, side: int = 1,
                           tol: float = 1e-6) -> DifferentialCondition:
    """Evaluate the differential sufficient condition for hedonic nestedness.

    Parameters
    ----------
    instance : HedonicInstance
    y : float
    x1bar, x2bar : array-like
        Points of the buyer and seller domains with ``k_1 + k_2 = 0`` and
        equal sub-level masses, where ``k_i = D_y c_i(xbar_i, y)``.
    side : {1, 2}
        Which side's containment the condition certifies.

    Raises
    ------
    HypothesisViolation
        If the balance conditions fail by more than ``tol``.
    ConfigurationError
        If a level set is empty.
    """
    if side not in (1, 2):
        raise ConfigurationError("side must be 1 or 2")
    (c1, m1), (c2, m2) = instance.sides
    x1 = np.asarray(x1bar, dtype=float).reshape(m1.dim)
    x2 = np.asarray(x2bar, dtype=float).reshape(m2.dim)
    k1 = float(c1.dy(x1, y))
    k2 = float(c2.dy(x2, y))
    if abs(k1 + k2) > tol:
        raise HypothesisViolation(f"k1 + k2 = {k1 + k2} at y={y}; the points are not matched")
    mass1 = 1.0 - core.superlevel_mass(c1, m1, y, k1)
    mass2 = 1.0 - core.superlevel_mass(c2, m2, y, k2)
    if abs(mass1 - mass2) > tol:
        raise HypothesisViolation(f"sub-level masses differ at y={y}: {mass1} vs {mass2}")
    A1 = core.level_integral(c1, m1, y, k1, "cyy_over_cross")
    B1 = core.level_integral(c1, m1, y, k1, "one_over_cross")
    A2 = core.level_integral(c2, m2, y, k2, "cyy_over_cross")
    B2 = core.level_integral(c2, m2, y, k2, "one_over_cross")
    if B1 <= 0.0 or B2 <= 0.0:
        raise ConfigurationError(f"empty level set at y={y} (B1={B1}, B2={B2})")
    if side == 1:
        value = A1 - A2 - float(c1.dyy(x1, y)) * (B1 + B2)
    else:
        value = A2 - A1 - float(c2.dyy(x2, y)) * (B1 + B2)
    return DifferentialCondition(float(value), bool(value < 0.0), (A1 - A2) / (B1 + B2), A1, A2, B1, B2)


def condition_margins(instance: HedonicInstance, sol: HedonicSolution, side: int = 1) -> np.ndarray:
    """Worst value of the differential condition over each support node's level set.

    ``D_yy c_i`` is affine in ``x``, so the worst point of a level chord is
    one of its endpoints.  Nodes where a level set is empty give ``nan``.
    """
    out = np.full(sol.support_grid.size, np.nan)
    (c1, m1), (c2, m2) = instance.sides
    for j, y in enumerate(sol.support_grid):
        k = (sol.k1.k[j], sol.k2.k[j])
        ends = []
        for (cost, mu), kk in zip(instance.sides, k):
            a, b = cost.affine_dy(y)
            chord = mu.level_set(a, kk - b)
            ends.append(None if chord is None else [np.asarray(p, dtype=float) for p in chord])
        if ends[0] is None or ends[1] is None:
            continue
        vals = []
        pts = ends[side - 1]
        for p in pts:
            x1 = p if side == 1 else ends[0][0]
            x2 = p if side == 2 else ends[1][0]
            try:
                vals.append(differential_condition(instance, y, x1, x2, side=side, tol=1e-5).value)
            except (HypothesisViolation, ConfigurationError):
                pass
        if vals:
            out[j] = max(vals)
    return out


def hedonic_objective(instance: HedonicInstance, y_points, y_weights, n_cells: int = 20) -> float:
    """``T_{c_1}(mu_1, nu) + T_{c_2}(mu_2, nu)`` for a discrete ``nu`` via the LP oracle."""
    from .oracle import DiscreteOTProblem, solve_discrete_ot

    yp = np.asarray(y_points, dtype=float).ravel()
    yw = np.asarray(y_weights, dtype=float).ravel()
    total = 0.0
    for cost, mu in instance.sides:
        n = n_cells if mu.dim > 1 else n_cells * n_cells
        pts, w = mu.cell_discretization(n)
        C = cost(pts[:, None, :], yp[None, :])
        total += solve_discrete_ot(DiscreteOTProblem(pts, w, yp[:, None], yw / yw.sum(), C)).cost
    return float(total)


def discretize_solution(sol: HedonicSolution, n_targets: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """Cell midpoints and ``M``-increments over ``n_targets`` cells of the support."""
    s_lo, s_hi = sol.support
    edges = np.linspace(s_lo, s_hi, n_targets + 1)
    Me = np.interp(edges, sol.grid, sol.M)
    Me[0], Me[-1] = 0.0, 1.0
    w = np.maximum(np.diff(Me), 0.0)
    return 0.5 * (edges[:-1] + edges[1:]), w / w.sum()


class HedonicEquilibrium(BaseEstimator):
    """Estimator wrapper around :func:`solve_M`.

    Parameters
    ----------
    instance : HedonicInstance or None
        ``None`` uses :meth:`HedonicInstance.example`.
    grid : int

    Attributes
    ----------
    solution_ : HedonicSolution
    support_ : tuple of float
    nested_ : bool
    """

    def __init__(self, instance=None, grid=1024):
        self.instance = instance
        self.grid = grid

    def fit(self, X=None, y=None):
        inst = self.instance if self.instance is not None else HedonicInstance.example()
        self.instance_ = inst
        self.solution_ = solve_M(inst, grid=self.grid)
        self.support_ = self.solution_.support
        self.nested_ = self.solution_.nested
        return self

    def predict(self, X):
        """Mass profile ``M`` at the qualities ``X``."""
        check_is_fitted(self, "solution_")
        y = np.asarray(X, dtype=float).ravel()
        return np.interp(y, self.solution_.grid, self.solution_.M)

    def density(self, X):
        check_is_fitted(self, "solution_")
        return self.solution_.nu.pdf(np.asarray(X, dtype=float).ravel())
