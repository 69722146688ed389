"""Potential plus interaction energies: best-reply map, its pushforward iteration,
W1 contraction diagnostics and generalized nestedness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import core
from ._validation import as_points
from .costs import CostModel
from .exceptions import ConfigurationError, DivergenceError, HypothesisViolation, NumericalError
from .measures import DiscreteMeasure, SourceMeasure

V_KINDS = ("quadratic", "polynomial", "none")
W_KINDS = ("quadratic_interaction", "none")


@dataclass(frozen=True)
class InteractionSpec:
    """Potential ``V`` and symmetric interaction ``W`` on ``Y ⊂ R^n``.

    Parameters
    ----------
    V : {'quadratic', 'polynomial', 'none'}
        ``quadratic`` is ``alpha |y - y0|^2 / 2``; ``polynomial`` (``n = 1``)
        takes ascending coefficients in ``coeffs``.
    W : {'quadratic_interaction', 'none'}
        ``beta |y - z|^2 / 2`` or nothing.
    n : int
        Target dimension.
    """

    V: str = "quadratic"
    alpha: float = 1.0
    y0: Tuple[float, ...] = (0.0,)
    coeffs: Tuple[float, ...] = ()
    W: str = "quadratic_interaction"
    beta: float = 1.0
    n: int = 1

    def __post_init__(self):
        if self.V not in V_KINDS:
            raise ConfigurationError(f"unknown potential {self.V!r}; expected one of {V_KINDS}")
        if self.W not in W_KINDS:
            raise ConfigurationError(f"unknown interaction {self.W!r}; expected one of {W_KINDS}")
        if self.n < 1:
            raise ConfigurationError("target dimension must be at least 1")
        if self.V == "polynomial" and self.n != 1:
            raise ConfigurationError("polynomial potentials are one-dimensional")
        if self.V == "quadratic" and len(self.y0) not in (1, self.n):
            raise ConfigurationError("y0 must have length 1 or n")

    @property
    def _center(self) -> np.ndarray:
        c = np.asarray(self.y0, dtype=float)
        return np.full(self.n, c[0]) if c.size == 1 else c

    def potential(self, y):
        """``(V, DV, D^2V)`` at points ``y`` of shape ``(N, n)``."""
        y = np.asarray(y, dtype=float)
        N = y.shape[0]
        eye = np.broadcast_to(np.eye(self.n), (N, self.n, self.n))
        if self.V == "quadratic":
            d = y - self._center
            return 0.5 * self.alpha * np.sum(d * d, axis=1), self.alpha * d, self.alpha * eye
        if self.V == "polynomial":
            p = np.polynomial.Polynomial(self.coeffs or (0.0,))
            t = y[:, 0]
            return p(t), p.deriv(1)(t)[:, None], p.deriv(2)(t)[:, None, None]
        return np.zeros(N), np.zeros((N, self.n)), np.zeros((N, self.n, self.n))

    def interaction(self, y, z):
        """``W(y, z)`` for broadcastable point arrays."""
        y, z = np.asarray(y, dtype=float), np.asarray(z, dtype=float)
        if self.W == "none":
            return np.zeros(np.broadcast_shapes(y.shape[:-1], z.shape[:-1]))
        d = y - z
        return 0.5 * self.beta * np.sum(d * d, axis=-1)

    def interaction_hessian_min(self) -> float:
        return self.beta if self.W == "quadratic_interaction" else 0.0


def first_variation(spec: InteractionSpec, nu: DiscreteMeasure, y):
    """``F[nu](y) = V(y) + ∫ W(y, z) dnu(z)`` with gradient and Hessian.

    Parameters
    ----------
    y : array-like of shape (n,) or (N, n)

    Returns
    -------
    value : ndarray of shape (N,)
    grad : ndarray of shape (N, n)
    hess : ndarray of shape (N, n, n)
        Squeezed to a single point when ``y`` is one point.
    """
    Y = np.asarray(y, dtype=float)
    single = Y.ndim == 0 or (Y.ndim == 1 and (spec.n > 1 or Y.size == 1))
    Y = Y.reshape(-1, spec.n) if Y.ndim <= 1 else Y
    if Y.shape[1] != spec.n:
        raise ConfigurationError(f"points of dimension {Y.shape[1]} for a target of dimension {spec.n}")
    val, grad, hess = spec.potential(Y)
    if spec.W == "quadratic_interaction":
        if nu.dim != spec.n:
            raise ConfigurationError(f"measure dimension {nu.dim} does not match target dimension {spec.n}")
        w, Z = nu.weights, nu.points
        mean = w @ Z
        second = float(w @ np.sum(Z * Z, axis=1))
        b = spec.beta
        val = val + 0.5 * b * (np.sum(Y * Y, axis=1) - 2.0 * Y @ mean + second)
        grad = grad + b * (Y - mean)
        hess = hess + b * np.eye(spec.n)
    if single and len(Y) == 1:
        return float(val[0]), grad[0], hess[0]
    return val, grad, hess


# -- target domain -------------------------------------------------------------

def _box(Y, n) -> np.ndarray:
    b = np.asarray(Y, dtype=float)
    if b.ndim == 1:
        b = np.tile(b, (n, 1))
    if b.shape != (n, 2) or np.any(b[:, 1] <= b[:, 0]):
        raise ConfigurationError(f"target box must be {n} pairs (lo, hi) with lo < hi, got {Y!r}")
    return b


def _check_cost(cost: CostModel, spec: InteractionSpec):
    if spec.n > 1 and not (cost.family == "quadratic" and cost.m == spec.n):
        raise ConfigurationError("targets with n >= 2 need the quadratic cost with m = n")


def _cost_grad(cost: CostModel, spec: InteractionSpec, x, y):
    """``D_y c`` and ``D^2_yy c`` at matched rows of ``x`` (N, m) and ``y`` (N, n)."""
    if spec.n == 1:
        t = y[:, 0]
        return cost.dy(x, t)[:, None], cost.dyy(x, t)[:, None, None]
    return y - x, np.broadcast_to(np.eye(spec.n), (len(x), spec.n, spec.n))


def _cost_value(cost: CostModel, spec: InteractionSpec, x, y):
    if spec.n == 1:
        return cost(x, y[..., 0])
    d = x - y
    return 0.5 * np.sum(d * d, axis=-1)


# -- best reply ------------------------------------------------------------------

def best_response(cost: CostModel, spec: InteractionSpec, nu: DiscreteMeasure, x, Y=(-1.0, 2.0),
                  gtol: float = 1e-12, max_iter: int = 200, boundary_tol: float = 1e-10):
    """Minimiser ``B_nu(x)`` of ``y -> c(x, y) + F[nu](y)`` over the closed box ``Y``.

    One-dimensional targets use Newton safeguarded by a bisection bracket.
    Higher dimensions use damped Newton on the strictly convex objective.
    A minimiser on the boundary is accepted only when the gradient vanishes
    there; a strictly inward gradient breaks the outward-gradient
    assumption and raises :class:`HypothesisViolation`.

    Returns
    -------
    float or ndarray
        One value per point; scalar for a single 1-D point.
    """
    _check_cost(cost, spec)
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and cost.m > 1)
    X = as_points(x, cost.m)
    box = _box(Y, spec.n)
    if spec.n == 1:
        y = _best_response_1d(cost, spec, nu, X, box[0], gtol, max_iter, boundary_tol)
        return float(y[0]) if single else y
    y = _best_response_nd(cost, spec, nu, X, box, gtol, max_iter)
    return y[0] if single else y


def _phi_prime(cost, spec, nu, X, y):
    _, dF, d2F = first_variation(spec, nu, y[:, None])
    return cost.dy(X, y) + dF[:, 0], cost.dyy(X, y) + d2F[:, 0, 0]


def _best_response_1d(cost, spec, nu, X, bounds, gtol, max_iter, boundary_tol):
    lo, hi = float(bounds[0]), float(bounds[1])
    N = len(X)
    a = np.full(N, lo)
    b = np.full(N, hi)
    ga, _ = _phi_prime(cost, spec, nu, X, a)
    gb, _ = _phi_prime(cost, spec, nu, X, b)
    if np.any(ga > boundary_tol) or np.any(gb < -boundary_tol):
        bad = np.flatnonzero((ga > boundary_tol) | (gb < -boundary_tol))[0]
        raise HypothesisViolation(
            f"best reply for x={X[bad].tolist()} sits on the boundary of Y with an inward gradient "
            f"(phi'(lo)={ga[bad]:.3e}, phi'(hi)={gb[bad]:.3e})"
        )
    y = 0.5 * (a + b)
    out = np.where(np.abs(ga) <= boundary_tol, lo, np.where(np.abs(gb) <= boundary_tol, hi, np.nan))
    active = np.isnan(out)
    for _ in range(max_iter):
        if not np.any(active):
            break
        g, h = _phi_prime(cost, spec, nu, X[active], y[active])
        done = np.abs(g) <= gtol
        idx = np.flatnonzero(active)
        out[idx[done]] = y[idx[done]]
        # shrink the bracket, then Newton with bisection fallback
        a[idx] = np.where(g < 0.0, y[idx], a[idx])
        b[idx] = np.where(g > 0.0, y[idx], b[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = y[idx] - g / h
        ok = np.isfinite(step) & (step > a[idx]) & (step < b[idx])
        y[idx] = np.where(ok, step, 0.5 * (a[idx] + b[idx]))
        narrow = (b[idx] - a[idx]) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(y[idx]))
        out[idx[narrow & ~done]] = y[idx[narrow & ~done]]
        active[idx[done | narrow]] = False
    if np.any(np.isnan(out)):
        raise NumericalError("best-reply Newton iteration did not converge")
    return out


def _best_response_nd(cost, spec, nu, X, box, gtol, max_iter):
    N, n = X.shape
    y = np.clip(X.copy(), box[:, 0], box[:, 1])

    def obj(yy):
        val, _, _ = first_variation(spec, nu, yy)
        return _cost_value(cost, spec, X, yy) + val

    for _ in range(max_iter):
        _, dF, d2F = first_variation(spec, nu, y)
        gc, hc = _cost_grad(cost, spec, X, y)
        g = gc + dF
        if np.max(np.linalg.norm(g, axis=1)) <= gtol:
            break
        step = np.linalg.solve(hc + d2F, g[..., None])[..., 0]
        t = np.ones(N)
        f0 = obj(y)
        for _ in range(40):
            trial = y - t[:, None] * step
            worse = obj(trial) > f0 - 1e-4 * t * np.sum(g * step, axis=1)
            if not np.any(worse):
                break
            t = np.where(worse, 0.5 * t, t)
        y = y - t[:, None] * step
    else:
        raise NumericalError("damped Newton did not reach the gradient tolerance")
    outside = np.any((y < box[:, 0] - 1e-12) | (y > box[:, 1] + 1e-12), axis=1)
    if np.any(outside):
        raise HypothesisViolation(
            f"{int(outside.sum())} best replies lie outside Y; the outward-gradient assumption fails"
        )
    return np.clip(y, box[:, 0], box[:, 1])


def iterate(cost: CostModel, spec: InteractionSpec, mu_samples: DiscreteMeasure, nu: DiscreteMeasure,
            Y=(-1.0, 2.0)) -> DiscreteMeasure:
    """One application of ``nu -> (B_nu)_# mu`` on particles."""
    y = best_response(cost, spec, nu, mu_samples.points, Y)
    pts = np.asarray(y, dtype=float).reshape(len(mu_samples), spec.n)
    return DiscreteMeasure(pts, mu_samples.weights.copy())


def w1(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """1-Wasserstein distance; quantile formula on the line, exact LP above."""
    if a.dim != b.dim:
        raise ConfigurationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.dim == 1:
        xa, xb = a.points[:, 0], b.points[:, 0]
        allx = np.concatenate([xa, xb])
        order = np.argsort(allx, kind="mergesort")
        signed = np.concatenate([a.weights, -b.weights])[order]
        cdf_gap = np.cumsum(signed)[:-1]
        return float(np.sum(np.abs(cdf_gap) * np.diff(allx[order])))
    from .oracle import DiscreteOTProblem, solve_discrete_ot

    if len(a) > 2000 or len(b) > 2000:
        raise ConfigurationError("W1 in dimension >= 2 is limited to 2000 particles per measure")
    return solve_discrete_ot(DiscreteOTProblem(a.points, a.weights, b.points, b.weights)).cost


# -- hypotheses ------------------------------------------------------------------

@dataclass
class HypothesisEstimates:
    """Sampled constants of the contraction estimate.

    ``rho`` is ``||mu_bar||_inf M C / (k (eta + lambda))``; the scheme is a
    guaranteed contraction when it is below one.
    """

    eta: float
    lam: float
    convexity_margin: float
    M: float
    k: float
    C: float
    C_empirical: float
    mu_sup: float
    rho: float
    boundary_ok: bool
    boundary_margin: float
    symmetric: bool

    def as_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in self.__dict__.items()}


def estimate_hypotheses(cost: CostModel, spec: InteractionSpec, mu_samples: DiscreteMeasure, Y=(-1.0, 2.0),
                        source: Optional[SourceMeasure] = None, nu: Optional[DiscreteMeasure] = None,
                        n_grid: int = 10_000, n_pairs: int = 50, seed: int = 0) -> HypothesisEstimates:
    """Estimate the constants of the best-reply contraction by sampling.

    ``eta`` and ``lambda`` are minimal eigenvalues of ``D^2_yy c`` and
    ``D^2 F`` on sample grids; ``M`` bounds the Hausdorff measure of the
    preimages of ``B_nu`` by the longest level set; ``k`` is the smallest
    Jacobian ``|D_xy c| / (D^2_yy c + D^2 F)`` over the particles; ``C`` is
    the larger of the analytic bound (quadratic interaction) and the
    empirical ratio over random measure pairs.
    """
    _check_cost(cost, spec)
    rng = np.random.Generator(np.random.Philox(seed))
    box = _box(Y, spec.n)
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    X = mu_samples.points
    xs = X[rng.choice(len(X), size=min(len(X), 400), replace=False)]
    n_side = max(int(round(n_grid ** (1.0 / spec.n))), 3)
    axes = [np.linspace(lo, hi, n_side) for lo, hi in box]
    ygrid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.n)
    nu = nu if nu is not None else DiscreteMeasure(ygrid[rng.choice(len(ygrid), size=min(64, len(ygrid)))])

    # eta: D^2_yy c over (x, y) samples
    yy = ygrid[rng.choice(len(ygrid), size=min(len(ygrid), 200), replace=False)]
    xi = np.repeat(xs, len(yy), axis=0)
    yi = np.tile(yy, (len(xs), 1))
    _, hc = _cost_grad(cost, spec, xi, yi)
    eta = float(np.min(np.linalg.eigvalsh(hc)))
    _, _, d2V = spec.potential(ygrid)
    lam = float(np.min(np.linalg.eigvalsh(d2V))) + spec.interaction_hessian_min()
    convexity_margin = eta + lam

    # M: preimage size; counting measure when m = n
    if cost.m == spec.n:
        M = 1.0
    elif source is not None and spec.n == 1:
        M = 0.0
        for y in np.linspace(box[0, 0], box[0, 1], 33):
            kmin, kmax = core.k_range(cost, source, float(y))
            for kk in np.linspace(kmin, kmax, 33):
                M = max(M, core.level_curve(cost, source, float(y), float(kk)).length)
    else:
        M = float(np.max(np.linalg.norm(X[:, None, :] - X[None, :64, :], axis=-1)))

    # k: Jacobian of the best reply over the particles
    yb = np.asarray(best_response(cost, spec, nu, X, Y), dtype=float).reshape(len(X), spec.n)
    _, hc = _cost_grad(cost, spec, X, yb)
    _, _, d2F = first_variation(spec, nu, yb)
    Hmax = np.linalg.eigvalsh(hc + d2F)[:, -1]
    if spec.n == 1:
        cross = np.asarray([cost.cross_norm(float(t)) for t in yb[:, 0]])
    else:
        cross = np.ones(len(X))
    k = float(np.min(cross / Hmax))

    # C: analytic for quadratic interaction, plus an empirical ratio
    C_an = spec.beta * vol if spec.W == "quadratic_interaction" else 0.0
    C_emp = 0.0
    if spec.W != "none":
        for _ in range(n_pairs):
            p = DiscreteMeasure(ygrid[rng.choice(len(ygrid), size=16)])
            q = DiscreteMeasure(ygrid[rng.choice(len(ygrid), size=16)])
            d = w1(p, q)
            if d <= 0.0:
                continue
            diff = np.linalg.norm(first_variation(spec, p, ygrid)[1] - first_variation(spec, q, ygrid)[1], axis=1)
            C_emp = max(C_emp, float(diff.mean() * vol / d))
    C = max(C_an, C_emp)

    mu_sup = source.sup_density() if source is not None else _empirical_sup(X)
    rho = mu_sup * M * C / (k * (eta + lam)) if k > 0 and eta + lam > 0 else math.inf

    # boundary: [D_y c + DV + D_y W(y, z)] . n >= 0 on the faces of Y
    margin = math.inf
    zs = ygrid[rng.choice(len(ygrid), size=min(len(ygrid), 50), replace=False)]
    for dim in range(spec.n):
        for side, sign in ((0, -1.0), (1, 1.0)):
            face = ygrid[np.isclose(ygrid[:, dim], box[dim, side])]
            face = face[rng.choice(len(face), size=min(len(face), 50), replace=False)]
            for z in zs:
                fy = np.repeat(face, len(xs), axis=0)
                fx = np.tile(xs, (len(face), 1))
                gc, _ = _cost_grad(cost, spec, fx, fy)
                _, dV, _ = spec.potential(fy)
                dW = spec.beta * (fy - z) if spec.W == "quadratic_interaction" else 0.0
                margin = min(margin, float(np.min(sign * (gc + dV + dW)[:, dim])))
    pts = ygrid[:50]
    sym = bool(np.allclose(spec.interaction(pts[:, None], pts[None]), spec.interaction(pts[None], pts[:, None]),
                           atol=1e-12))
    return HypothesisEstimates(eta, lam, convexity_margin, M, k, C, C_emp, mu_sup, rho, margin >= 0.0, margin, sym)


def _empirical_sup(X: np.ndarray) -> float:
    if X.shape[1] != 1:
        return math.nan
    xs = np.sort(X[:, 0])
    n = len(xs)
    width = (xs[-1] - xs[0]) / max(int(math.sqrt(n)), 1)
    counts, _ = np.histogram(xs, bins=max(int(math.sqrt(n)), 1))
    return float(counts.max() / (n * width))


# -- fixed point -----------------------------------------------------------------

@dataclass
class IterationLog:
    w1: List[float] = field(default_factory=list)
    ratios: List[float] = field(default_factory=list)
    means: List[List[float]] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    steps_to_fixed_point: int = 0
    hypotheses: Optional[dict] = None

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "steps_to_fixed_point": self.steps_to_fixed_point,
            "w1": self.w1,
            "ratios": self.ratios,
            "means": self.means,
            "hypotheses": self.hypotheses,
        }


def solve_fixed_point(cost: CostModel, spec: InteractionSpec, mu_samples: DiscreteMeasure,
                      nu0: Optional[DiscreteMeasure] = None, tol: float = 1e-8, max_iter: int = 200,
                      Y=(-1.0, 2.0), source: Optional[SourceMeasure] = None, patience: int = 5,
                      estimate: bool = True) -> Tuple[DiscreteMeasure, IterationLog]:
    """Iterate ``nu <- (B_nu)_# mu`` until successive iterates are ``tol``-close in W1.

    ``log.steps_to_fixed_point`` counts map applications until the iterate
    stopped moving; ``log.iterations`` also counts the confirming step.

    Raises
    ------
    DivergenceError
        When W1 fails to decrease for ``patience`` consecutive steps; the
        partial log is attached.
    """
    log = IterationLog()
    if estimate:
        log.hypotheses = estimate_hypotheses(cost, spec, mu_samples, Y, source=source, nu=nu0).as_dict()
    box = _box(Y, spec.n)
    nu = nu0 if nu0 is not None else DiscreteMeasure.dirac(box.mean(axis=1))
    stall = 0
    for t in range(1, max_iter + 1):
        nxt = iterate(cost, spec, mu_samples, nu, Y)
        d = w1(nxt, nu)
        if log.w1:
            prev = log.w1[-1]
            log.ratios.append(d / prev if prev > 0 else 0.0)
            stall = stall + 1 if d >= prev else 0
        log.w1.append(d)
        log.means.append(nxt.mean().tolist())
        log.iterations = t
        nu = nxt
        if d <= tol:
            log.converged = True
            log.steps_to_fixed_point = t - 1
            return nu, log
        if stall >= patience:
            raise DivergenceError(f"W1 did not decrease for {patience} consecutive steps", log=log)
    log.steps_to_fixed_point = log.iterations
    return nu, log


def interaction_objective(cost: CostModel, spec: InteractionSpec, mu_samples: DiscreteMeasure,
                          nu: DiscreteMeasure) -> float:
    """``T_c(mu, nu) + ∫V dnu + 1/2 ∬W dnu dnu`` with ``T_c`` from the LP oracle."""
    from .oracle import DiscreteOTProblem, solve_discrete_ot

    C = _cost_value(cost, spec, mu_samples.points[:, None, :], nu.points[None, :, :])
    ot = solve_discrete_ot(DiscreteOTProblem(mu_samples.points, mu_samples.weights, nu.points, nu.weights, C))
    V, _, _ = spec.potential(nu.points)
    Wm = spec.interaction(nu.points[:, None, :], nu.points[None, :, :])
    return float(ot.cost + nu.weights @ V + 0.5 * nu.weights @ Wm @ nu.weights)


# -- generalized nestedness ---------------------------------------------------------

@dataclass
class GeneralizedNestednessReport:
    nested: bool
    max_deviation: float
    n_checked: int
    n_support: int
    hypotheses: Optional[dict] = None

    def __iter__(self):
        yield self.nested
        yield self


def _ctransform(cost, spec, nu, x, box, n_grid=2001):
    """``u(x) = min_y c(x, y) - v(y)`` with ``v = -F[nu]``, refined by a local solve."""
    if spec.n == 1:
        ys = np.linspace(box[0, 0], box[0, 1], n_grid)
        vals = cost(x[None, :], ys) + first_variation(spec, nu, ys[:, None])[0]
        i = int(np.argmin(vals))
        a, b = ys[max(i - 1, 0)], ys[min(i + 1, n_grid - 1)]

        def f(t):
            return float(cost(x, t) + first_variation(spec, nu, np.array([[t]]))[0][0])

        res = optimize.minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
        return min(float(res.fun), float(vals[i]))

    def f(yv):
        return float(_cost_value(cost, spec, x, yv) + first_variation(spec, nu, yv[None, :])[0][0])

    res = optimize.minimize(f, np.clip(x, box[:, 0], box[:, 1]), method="L-BFGS-B", bounds=box,
                            options={"ftol": 1e-15, "gtol": 1e-12})
    return float(res.fun)


def generalized_nestedness_check(cost: CostModel, spec: InteractionSpec, solution: DiscreteMeasure,
                                 mu_samples: DiscreteMeasure, Y=(-1.0, 2.0), source: Optional[SourceMeasure] = None,
                                 n_support: int = 64, n_per_level: int = 5, tol: float = 1e-6
                                 ) -> GeneralizedNestednessReport:
    """Check ``X_=(y, Dv(y))`` lies in the c-superdifferential of ``v = -F[nu]``.

    For up to ``n_support`` support points ``y`` and sampled ``x`` with
    ``D_y c(x, y) = Dv(y)`` inside the source domain, verify
    ``u(x) + v(y) = c(x, y)`` within ``tol`` where ``u = v^c``.
    """
    _check_cost(cost, spec)
    box = _box(Y, spec.n)
    pts = solution.points
    order = np.lexsort(pts.T[::-1])
    pick = order[np.unique(np.linspace(0, len(pts) - 1, min(n_support, len(pts))).astype(int))]
    worst = 0.0
    checked = 0
    hyp = None
    try:
        hyp = estimate_hypotheses(cost, spec, mu_samples, Y, source=source, nu=solution, n_pairs=10).as_dict()
    except (HypothesisViolation, NumericalError) as exc:
        hyp = {"error": str(exc)}
    for yb in pts[pick]:
        val, dF, _ = first_variation(spec, solution, yb)
        v_y = -val
        Dv = -np.atleast_1d(dF)
        xs = _level_points(cost, spec, source, mu_samples, yb, Dv, n_per_level)
        for x in xs:
            u = _ctransform(cost, spec, solution, x, box)
            c = float(cost(x, float(yb[0]))) if spec.n == 1 else float(_cost_value(cost, spec, x, yb))
            worst = max(worst, abs(u + v_y - c))
            checked += 1
    ok = checked > 0 and worst <= tol
    if isinstance(hyp, dict) and hyp.get("boundary_ok") is False:
        ok = False
    return GeneralizedNestednessReport(bool(ok), float(worst), checked, len(pick), hyp)


def _level_points(cost, spec, source, mu_samples, yb, Dv, n_per_level):
    """Source points with ``D_y c(x, y) = Dv`` inside the domain."""
    if spec.n > 1:
        x = yb + (-Dv)  # y - x = Dv
        return [x] if source is None or bool(source.contains(x)) else []
    y = float(yb[0])
    if source is not None:
        a, b = cost.affine_dy(y)
        ch = source.level_set(a, float(Dv[0]) - b)
        if ch is None:
            return []
        if source.dim == 1:
            return [np.asarray(ch[0], dtype=float)]
        p, q = np.asarray(ch[0]), np.asarray(ch[1])
        return [p + t * (q - p) for t in np.linspace(0.0, 1.0, n_per_level)]
    if cost.m == 1:
        a, b = cost.affine_dy(y)
        x = (float(Dv[0]) - b) / a[0]
        lo, hi = mu_samples.points.min(), mu_samples.points.max()
        return [np.array([x])] if lo - 1e-9 <= x <= hi + 1e-9 else []
    raise ConfigurationError("planar sources need the SourceMeasure to sample level sets")


# -- estimator -------------------------------------------------------------------

def quantile_particles(source: SourceMeasure, n: int) -> DiscreteMeasure:
    """Deterministic particle approximation of ``mu``: midpoints on an interval, cells in the plane."""
    if source.dim == 1:
        pts, w = source.cell_discretization(n)
        return DiscreteMeasure(pts, w)
    side = max(int(round(math.sqrt(n * 4.0 / math.pi))) if source.domain == "quarter_disk" else int(round(math.sqrt(n))), 2)
    pts, w = source.cell_discretization(side)
    return DiscreteMeasure(pts, w)


class BestReplySolver(BaseEstimator):
    """Best-reply fixed point as an estimator.

    Parameters
    ----------
    cost : CostModel or str
    spec : InteractionSpec or None
    Y : tuple
        Target box.
    source : SourceMeasure or None
        Used to build particles when ``fit`` gets no samples.
    n_particles, tol, max_iter, seed

    Attributes
    ----------
    fixed_point_ : DiscreteMeasure
    log_ : IterationLog
    """

    def __init__(self, cost="quadratic", spec=None, Y=(-1.0, 2.0), source=None, n_particles=1000, tol=1e-8,
                 max_iter=200, seed=0):
        self.cost = cost
        self.spec = spec
        self.Y = Y
        self.source = source
        self.n_particles = n_particles
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed

    def _resolve(self):
        spec = self.spec if self.spec is not None else InteractionSpec()
        if isinstance(self.cost, str):
            m = spec.n if self.cost == "quadratic" else None
            cost = CostModel(self.cost, m=m) if m is not None else CostModel(self.cost)
        else:
            cost = self.cost
        src = self.source
        if src is None:
            src = SourceMeasure("unit_interval") if cost.m == 1 else SourceMeasure()
        return cost, spec, src

    def fit(self, X=None, y=None):
        """Run the iteration from ``mu`` particles ``X`` (or ``n_particles`` built from ``source``)."""
        cost, spec, src = self._resolve()
        if X is None:
            mu = quantile_particles(src, self.n_particles)
        elif isinstance(X, DiscreteMeasure):
            mu = X
        else:
            mu = DiscreteMeasure(as_points(X, cost.m))
        nu, log = solve_fixed_point(cost, spec, mu, None, self.tol, self.max_iter, self.Y, source=src)
        self.cost_, self.spec_, self.source_, self.mu_ = cost, spec, src, mu
        self.fixed_point_, self.log_ = nu, log
        return self

    def predict(self, X):
        """Best replies ``B_nu(x)`` against the fitted fixed point."""
        check_is_fitted(self, "fixed_point_")
        return best_response(self.cost_, self.spec_, self.fixed_point_, as_points(X, self.cost_.m), self.Y)
