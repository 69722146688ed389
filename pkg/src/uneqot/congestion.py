"""Transport plus congestion: density bounds, the boundary value problem for ``k``,
and sufficient nestedness thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate, optimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import core, nested
from ._validation import check_interval, check_positive
from .costs import CostModel
from .exceptions import ConfigurationError, NumericalError
from .measures import SourceMeasure, TargetDensity

F_FAMILIES = ("entropy", "power")


@dataclass(frozen=True)
class CongestionSpec:
    """Congestion integrand ``f``.

    ``entropy`` is ``f(t) = t ln t - t`` so that ``f'(t) = ln t``; the linear
    term only shifts the multiplier of the mass constraint.  ``power`` is
    ``f(t) = t^p/(p-1)``; it has ``f'(0) = 0`` and must be enabled with
    ``allow_nonconforming`` since the density bounds then lose their
    guarantee.
    """

    f_family: str = "entropy"
    p: float = 2.0
    side: str = "target"
    allow_nonconforming: bool = False

    def __post_init__(self):
        if self.f_family not in F_FAMILIES:
            raise ConfigurationError(f"unknown congestion family {self.f_family!r}; expected one of {F_FAMILIES}")
        if self.side not in ("target", "source"):
            raise ConfigurationError(f"side must be 'target' or 'source', got {self.side!r}")
        if self.f_family == "power":
            if not self.p > 1.0:
                raise ConfigurationError(f"power family needs p > 1, got {self.p}")
            if not self.allow_nonconforming:
                raise ConfigurationError("power congestion has f'(0) finite; pass allow_nonconforming=True to use it")

    def f(self, t):
        t = np.asarray(t, dtype=float)
        if self.f_family == "entropy":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)) - t, 0.0)
        return t**self.p / (self.p - 1.0)

    def fprime(self, t):
        t = np.asarray(t, dtype=float)
        if self.f_family == "entropy":
            with np.errstate(divide="ignore"):
                return np.log(t)
        return self.p / (self.p - 1.0) * t ** (self.p - 1.0)

    def fsecond(self, t):
        t = np.asarray(t, dtype=float)
        if self.f_family == "entropy":
            return 1.0 / t
        return self.p * t ** (self.p - 2.0)

    def fprime_inv(self, z):
        """``(f')^{-1}``; the power branch returns 0 below ``f'(0) = 0``."""
        z = np.asarray(z, dtype=float)
        if self.f_family == "entropy":
            return np.exp(z)
        return np.maximum(z * (self.p - 1.0) / self.p, 0.0) ** (1.0 / (self.p - 1.0))


def _as_spec(f_family) -> CongestionSpec:
    if isinstance(f_family, CongestionSpec):
        return f_family
    return CongestionSpec(str(f_family))


def kv_invert(f_family, v, interval, target_mass: float = 1.0, xtol: float = 1e-13) -> float:
    """``K_v(target_mass)``: the ``C`` with ``∫ (f')^{-1}(C - v(y)) dy = target_mass``.

    Parameters
    ----------
    f_family : str or CongestionSpec
    v : callable or ndarray
        A bounded function of ``y``, or its values on a uniform grid of
        ``interval`` (integrated by the trapezoid rule).
    interval : tuple of float

    Returns
    -------
    float
    """
    spec = _as_spec(f_family)
    lo, hi = check_interval(interval)
    check_positive("target_mass", target_mass)
    if callable(v):
        def total(z):
            return integrate.quad(lambda y: float(spec.fprime_inv(z - v(y))), lo, hi, epsabs=1e-14, epsrel=1e-13,
                                  limit=200)[0]
        vs = np.asarray([v(y) for y in np.linspace(lo, hi, 65)], dtype=float)
    else:
        vs = np.asarray(v, dtype=float)
        ys = np.linspace(lo, hi, vs.size)

        def total(z):
            return float(integrate.trapezoid(spec.fprime_inv(z - vs), ys))
    if spec.f_family == "entropy":
        # (f')^{-1} = exp factorises: exp(C) ∫ exp(-v) = target
        return float(math.log(target_mass) - math.log(total(0.0)))
    # bracket around the value for a constant v
    z0 = float(spec.fprime(target_mass / (hi - lo)))
    a, b = z0 + vs.min() - 1.0, z0 + vs.max() + 1.0
    for _ in range(200):
        if total(a) < target_mass:
            break
        a -= 2.0 * (b - a)
    for _ in range(200):
        if total(b) > target_mass:
            break
        b += 2.0 * (b - a)
    fa, fb = total(a) - target_mass, total(b) - target_mass
    if not (fa < 0.0 < fb):
        raise NumericalError(f"could not bracket K_v: total({a})={fa + target_mass}, total({b})={fb + target_mass}")
    return float(optimize.brentq(lambda z: total(z) - target_mass, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps))


@dataclass
class DensityBounds:
    """Pointwise bounds ``lower(y) <= nu_bar(y) <= upper(y)`` for congested minimizers."""

    lower: Callable
    upper: Callable
    C_low: float
    C_high: float
    lipschitz: float


def density_bounds(cost: CostModel, f_family, interval, mu: Optional[SourceMeasure] = None,
                   lipschitz: Optional[float] = None) -> DensityBounds:
    """Bounds from the Lipschitz constant ``M_c`` of ``y -> c(x, y)``.

    ``lower(y) = (f')^{-1}(K_{-M|y|}(1) - M|y|)`` and
    ``upper(y) = (f')^{-1}(K_{M|y|}(1) + M|y|)``.
    """
    spec = _as_spec(f_family)
    lo, hi = check_interval(interval)
    if lipschitz is None:
        if mu is None:
            mu = SourceMeasure() if cost.m == 2 else SourceMeasure("unit_interval")
        lipschitz = cost.lipschitz_y(mu, (lo, hi))
    M = float(lipschitz)
    if spec.f_family == "entropy":
        # closed forms of the two normalising integrals of exp(+-M|y|)
        c_low = -math.log(_int_exp_abs(M, lo, hi))
        c_high = -math.log(_int_exp_abs(-M, lo, hi))
    else:
        c_low = kv_invert(spec, lambda y: -M * abs(y), (lo, hi))
        c_high = kv_invert(spec, lambda y: M * abs(y), (lo, hi))

    def lower(y):
        return spec.fprime_inv(c_low - M * np.abs(y))

    def upper(y):
        return spec.fprime_inv(c_high + M * np.abs(y))

    return DensityBounds(lower, upper, c_low, c_high, M)


def _int_exp_abs(s: float, lo: float, hi: float) -> float:
    """``∫_lo^hi exp(s |y|) dy``."""
    def prim(t):
        # antiderivative of exp(s|t|) continuous through 0
        if s == 0.0:
            return t
        return math.copysign(math.expm1(s * abs(t)) / s, t)
    return prim(hi) - prim(lo)


def entropy_threshold_closed_form() -> float:
    """Root of ``e^{-y}/(e^{y} - 1) = 2/pi``: ``ln((1 + sqrt(1 + 2 pi))/2)``."""
    return math.log((1.0 + math.sqrt(1.0 + 2.0 * math.pi)) / 2.0)


def congestion_nestedness_threshold(cost: CostModel, mu: SourceMeasure, f_family="entropy", method: str = "auto",
                                    y_lo: float = 0.0, y_max: float = 0.5 * math.pi,
                                    lower_bound: Optional[Callable] = None, n_y: int = 17, n_k: int = 9,
                                    xtol: float = 1e-12) -> float:
    """Largest ``ybar`` for which the lower density bound beats the minimal mass difference ratio.

    Parameters
    ----------
    method : {'auto', 'closed_form', 'numeric'}
        ``closed_form`` is available for the uniform quarter disk with the
        bilinear arc cost and entropy.  ``numeric`` computes
        ``sup D^min/(y1 - y0)`` over sampled ``(y0, y1, k0)`` on
        ``[y_lo, y_max]`` and bisects on ``ybar`` using :func:`density_bounds`.
    lower_bound : callable, optional
        ``lower_bound(ybar, y)`` overriding the congestion lower bound.

    Returns
    -------
    float
        ``y_max`` when the condition holds on the whole range.
    """
    spec = _as_spec(f_family)
    quarter = cost.family == "bilinear_arc" and mu.domain == "quarter_disk" and mu.values is None
    if method == "auto":
        method = "closed_form" if quarter and spec.f_family == "entropy" and lower_bound is None and y_lo == 0.0 else "numeric"
    if method == "closed_form":
        if not (quarter and spec.f_family == "entropy" and y_lo == 0.0):
            raise ConfigurationError("closed-form threshold exists only for the quarter disk with entropy")
        return min(entropy_threshold_closed_form(), y_max)
    if method != "numeric":
        raise ConfigurationError(f"unknown method {method!r}")

    ys = np.linspace(y_lo, y_max, n_y)
    ratio = 0.0
    for i in range(n_y - 1):
        kmin, kmax = core.k_range(cost, mu, float(ys[i]))
        k0s = np.unique(np.append(np.linspace(kmin, kmax, n_k), 0.0 if kmin <= 0.0 <= kmax else kmin))
        for j in range(i + 1, n_y):
            d = nested._dmin_sup(cost, mu, float(ys[i]), float(ys[j]), k0s)
            ratio = max(ratio, d / (ys[j] - ys[i]))

    Mc = cost.lipschitz_y(mu, (y_lo, y_max))

    def margin(ybar):
        if lower_bound is not None:
            grid = np.linspace(y_lo, ybar, 257)
            low = np.min([lower_bound(ybar, y) for y in grid])
        else:
            b = density_bounds(cost, spec, (y_lo, ybar), lipschitz=Mc)
            grid = np.linspace(y_lo, ybar, 257)
            low = float(np.min(b.lower(grid)))
        return low - ratio

    eps = 1e-9
    if margin(y_max) > 0.0:
        return float(y_max)
    if not margin(y_lo + eps) > 0.0:
        return float(y_lo)
    return float(optimize.brentq(margin, y_lo + eps, y_max, xtol=xtol, rtol=4 * np.finfo(float).eps))


@dataclass
class CongestionResult:
    """Output of the congestion boundary value problem."""

    kprofile: nested.KProfile
    density: TargetDensity
    C: float
    residual: float
    coarea_residual: float
    mass: float
    nested: bool
    witness: Optional[Tuple[float, float]]
    min_margin: float
    clipped: int
    verified_threshold: bool
    info: dict = field(default_factory=dict)


def _march(cost, mu, spec, grid, C, kranges, clip_floor=1e-12):
    """One shot: trapezoid march of ``v``, ``nu_bar`` and the mass for a trial ``C``."""
    G = grid.size
    h = grid[1] - grid[0]
    k = np.empty(G)
    v = np.zeros(G)
    nub = np.empty(G)
    m = np.zeros(G)
    k[0] = kranges[0][1]
    nub[0] = spec.fprime_inv(C - v[0])
    clipped = 0
    for i in range(G - 1):
        y1 = float(grid[i + 1])
        kmin, kmax = kranges[i + 1]

        def state(kn):
            vn = v[i] + 0.5 * h * (k[i] + kn)
            nn = float(spec.fprime_inv(C - vn))
            return vn, nn, m[i] + 0.5 * h * (nub[i] + nn)

        def resid(kn):
            return core.superlevel_mass(cost, mu, y1, kn) - state(kn)[2]

        r_lo, r_hi = resid(kmin), resid(kmax)
        if r_lo <= 0.0:
            kn = kmin  # target mass at or beyond 1: saturate
        elif r_hi >= 0.0:
            kn = kmax
        else:
            kn = optimize.brentq(resid, kmin, kmax, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
        vn, nn, mn = state(kn)
        if nn < clip_floor:
            nn = clip_floor
            clipped += 1
        k[i + 1], v[i + 1], nub[i + 1], m[i + 1] = kn, vn, nn, mn
    return k, v, nub, m, clipped


def solve_congestion_bvp(cost: CostModel, mu: SourceMeasure, f_family="entropy", interval=(0.0, 0.5 * math.pi),
                         grid: int = 512, tol: float = 1e-13) -> CongestionResult:
    """Minimiser of ``T_c(mu, nu) + ∫ f(nu_bar)`` over ``nu`` on ``interval``.

    Shoots on the multiplier ``C`` of ``nu_bar = (f')^{-1}(C - v)``, where
    ``v' = k`` and ``k(y)`` matches ``mu(X_>=(y, k)) = nu([y_lo, y])``.  Both
    integrals use the trapezoid rule on a uniform grid, so ``v`` is the
    discrete running integral of ``k`` and the mass is that of ``nu_bar``.
    ``C`` is tuned until the total mass is one; the boundary levels are the
    extremes of ``D_y c`` at the two ends.

    Returns
    -------
    CongestionResult
    """
    spec = _as_spec(f_family)
    core.check_compatible(cost, mu)
    lo, hi = check_interval(interval)
    if grid < 64:
        raise ConfigurationError("grid must have at least 64 nodes")
    ys = np.linspace(lo, hi, grid)
    kranges = [core.k_range(cost, mu, float(y)) for y in ys]
    bounds = density_bounds(cost, spec, (lo, hi), mu=mu)
    a, b = bounds.C_low - 1e-3, bounds.C_high + 1e-3

    def shoot(C):
        return _march(cost, mu, spec, ys, C, kranges)[3][-1] - 1.0

    fa, fb = shoot(a), shoot(b)
    for _ in range(60):
        if fa < 0.0:
            break
        a -= 1.0
        fa = shoot(a)
    for _ in range(60):
        if fb > 0.0:
            break
        b += 1.0
        fb = shoot(b)
    if not (fa < 0.0 < fb):
        raise NumericalError(f"shooting bracket failed: mass-1 = {fa} at C={a}, {fb} at C={b}")
    C = optimize.brentq(shoot, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    k, v, nub, m, clipped = _march(cost, mu, spec, ys, C, kranges)
    info = {"terminal_mass_gap": float(m[-1] - 1.0)}
    if abs(m[-1] - 1.0) <= 1e-9:
        # the top level is the minimum of D_y c; pin it to the exact extreme
        k[-1] = core.mass_to_k(cost, mu, hi, 1.0)
    k[0] = core.mass_to_k(cost, mu, lo, 0.0)
    kp = nested.KProfile(ys, k, v=v, mass=np.minimum(m, 1.0))
    dens = TargetDensity((lo, hi), nub, normalize=False)
    residual = float(np.max(np.abs(v + spec.fprime(nub) - C)))
    recon = nested.density_from_k(cost, mu, kp, (lo, hi))
    interior = slice(1, grid - 1)
    with np.errstate(divide="ignore"):
        co = np.abs(v + spec.fprime(np.maximum(recon.values, 1e-300)) - C)[interior]
    info["coarea_sup_error"] = float(np.max(np.abs(recon.values - nub)[interior]))
    info["suspect_nodes"] = recon.info["suspect_nodes"]
    check = nested.check_nestedness(cost, mu, kp, dens)
    thr_ok = True
    if cost.family == "bilinear_arc" and mu.domain == "quarter_disk" and mu.values is None and spec.f_family == "entropy":
        thr_ok = hi - lo <= entropy_threshold_closed_form() or abs(hi - lo - 0.5 * math.pi) < 1e-12
    info["lower_bound_slack"] = float(np.min(nub - bounds.lower(ys)))
    info["upper_bound_slack"] = float(np.min(bounds.upper(ys) - nub))
    return CongestionResult(
        kprofile=kp, density=dens, C=float(C), residual=residual, coarea_residual=float(np.max(co)),
        mass=float(m[-1]), nested=check.nested, witness=check.witness, min_margin=check.min_margin,
        clipped=clipped, verified_threshold=thr_ok, info=info,
    )


# -- refined threshold for the quarter disk -----------------------------------------

def level_length(y, k):
    """Length of the quarter-disk level segment, ``sqrt(1 - k^2) + k tan y``."""
    return core.level_length(y, k)


def wedge_triangle_mass(y, k):
    """``k -> -k L(y, k) + y - arcsin k``: ``pi/2`` times the super-level mass."""
    return -k * level_length(y, k) + y - np.arcsin(k)


def Z_inverse(y: float, m: float) -> float:
    """Inverse of the decreasing map ``k -> -k L(y, k) + y - arcsin k`` on ``[-cos y, 0]``.

    Values of ``m`` outside ``[y, pi/2]`` are clipped to the end levels.
    """
    top, bottom = -math.cos(y), 0.0
    if m >= 0.5 * math.pi:
        return top
    if m <= y:
        return bottom
    return float(optimize.brentq(lambda k: wedge_triangle_mass(y, k) - m, top, bottom, xtol=1e-15,
                                 rtol=4 * np.finfo(float).eps, maxiter=200))


def _refined_margin(ybar: float, n_y: int) -> float:
    scale = 1.0 / math.expm1(ybar)
    rhs = 0.5 * math.pi * scale
    worst = -math.inf
    for y in np.linspace(0.0, ybar, n_y)[1:]:
        k = Z_inverse(float(y), 0.5 * math.pi * (-math.expm1(-y)) * scale)
        worst = max(worst, math.exp(y) * level_length(y, k) ** 2)
    return rhs - worst


def appendix_refined_threshold(n_y: int = 2001, xtol: float = 1e-10) -> float:
    """Refined nestedness threshold for the quarter disk with entropy congestion.

    Uses the local information ``k(y) <= Z(y; (pi/2)(1 - e^{-y})/(e^{ybar} - 1))``
    from mass balance against the lower density bound, and returns the
    largest ``ybar`` with ``e^y L(y, k)^2 <= pi/(2(e^{ybar} - 1))`` for all
    sampled ``y`` in ``(0, ybar]``.
    """
    a, b = 0.3, 1.2
    if not (_refined_margin(a, n_y) > 0.0 > _refined_margin(b, n_y)):
        raise NumericalError("refined threshold bracket failed")
    return float(optimize.brentq(lambda t: _refined_margin(t, n_y), a, b, xtol=xtol))


def highdim_congestion_check(cost: CostModel, mu: SourceMeasure, nu: TargetDensity, g_family="entropy",
                             kp: Optional[nested.KProfile] = None, n_y: int = 9, n_k: int = 7,
                             n_probe: int = 41, return_margin: bool = False):
    """Sufficient condition for nestedness when the source density is the unknown.

    Tests ``(g')^{-1}(K_{M|x|}(1) + M|x|) < nu_bar(y)(y1 - y0)/D^min_vol(y0, y1, k0)``
    for sampled ``y0 < y < y1``, ``k0`` (``k(y0)`` when ``kp`` is given) and
    ``x`` in the set difference.  Pairs with vanishing volume difference are
    vacuous.
    """
    spec = _as_spec(g_family)
    ys = np.linspace(nu.grid[0], nu.grid[-1], n_y)
    Mc = cost.lipschitz_y(mu, nu.interval)
    # K_{M|x|}(1) over the source domain by Lebesgue quadrature
    if spec.f_family == "entropy":
        z = mu.integrate_lebesgue(lambda x: math.exp(-Mc * float(np.linalg.norm(x))))
        K = -math.log(z)
    else:
        def total(c):
            return mu.integrate_lebesgue(lambda x: float(spec.fprime_inv(c - Mc * float(np.linalg.norm(x)))))
        K = optimize.brentq(lambda c: total(c) - 1.0, -50.0, 50.0)
    probe = mu.sample_grid(n_probe)
    bound = spec.fprime_inv(K + Mc * np.linalg.norm(probe, axis=1))
    nubar = nu.pdf(ys)
    worst = math.inf
    for i in range(n_y - 1):
        y0 = float(ys[i])
        if kp is not None:
            k0s = [float(kp(y0))]
        else:
            kmin, kmax = core.k_range(cost, mu, y0)
            k0s = np.linspace(kmin, kmax, n_k)
        for j in range(i + 1, n_y):
            y1 = float(ys[j])
            for k0 in k0s:
                dvol = nested.minimal_mass_difference(cost, mu, y0, y1, float(k0), volume=True)
                if dvol <= 1e-13:
                    continue
                kmax_ = nested.containment_level(cost, mu, y0, y1, float(k0))
                inside = (cost.dy(probe, y1) >= kmax_) & (cost.dy(probe, y0) < k0)
                lhs = float(bound[inside].max()) if np.any(inside) else float(bound.max())
                rhs = float(nubar[i : j + 1].min()) * (y1 - y0) / dvol
                worst = min(worst, rhs - lhs)
    ok = worst > 0.0
    return (ok, worst) if return_margin else ok


def congestion_objective(cost: CostModel, mu: SourceMeasure, nu: TargetDensity, f_family="entropy",
                         n_cells: int = 30, n_targets: int = 120) -> float:
    """``T_c(mu, nu) + ∫ f(nu_bar)`` with the transport term from the LP oracle."""
    from .oracle import DiscreteOTProblem, solve_discrete_ot

    spec = _as_spec(f_family)
    pts, w = mu.cell_discretization(n_cells)
    edges = np.linspace(nu.grid[0], nu.grid[-1], n_targets + 1)
    yc = 0.5 * (edges[:-1] + edges[1:])
    wy = np.diff(nu.cdf_at(edges))
    keep = wy > 0
    C = cost(pts[:, None, :], yc[None, keep])
    ot = solve_discrete_ot(DiscreteOTProblem(pts, w, yc[keep][:, None], wy[keep] / wy[keep].sum(), C))
    return float(ot.cost + integrate.trapezoid(spec.f(nu.values), nu.grid))


class CongestionSolver(BaseEstimator):
    """Estimator wrapper for :func:`solve_congestion_bvp`.

    Parameters
    ----------
    cost : CostModel or str
    source : SourceMeasure or None
    f_family : str
    interval : tuple of float
    grid : int
    tol : float
        Tolerance on the shooting multiplier.

    Attributes
    ----------
    k_profile_, density_, C_, nested_, result_
    """

    def __init__(self, cost="bilinear_arc", source=None, f_family="entropy", interval=(0.0, 0.5),
                 grid=512, tol=1e-13):
        self.cost = cost
        self.source = source
        self.f_family = f_family
        self.interval = interval
        self.grid = grid
        self.tol = tol

    def fit(self, X=None, y=None):
        cost = CostModel(self.cost) if isinstance(self.cost, str) else self.cost
        mu = SourceMeasure() if self.source is None else self.source
        res = solve_congestion_bvp(cost, mu, self.f_family, self.interval, self.grid, self.tol)
        self.result_ = res
        self.k_profile_, self.density_, self.C_, self.nested_ = res.kprofile, res.density, res.C, res.nested
        return self

    def predict(self, X):
        """Optimal density at the query points."""
        check_is_fitted(self, "density_")
        return self.density_.pdf(np.asarray(X, dtype=float))
