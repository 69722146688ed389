"""Ground-truth engines: exact discrete optimal transport and Monte-Carlo set masses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize, sparse
from scipy.stats import qmc

from .exceptions import ConfigurationError, NumericalError
from .measures import SourceMeasure

MAX_ENTRIES = 4_000_000


@dataclass
class DiscreteOTProblem:
    """Transport between two weighted point clouds.

    ``cost`` may be given directly or built from ``cost_fn(x, y)`` which
    must broadcast over ``(N, 1, d)`` and ``(1, M, n)`` arrays.
    """

    source_points: np.ndarray
    source_weights: np.ndarray
    target_points: np.ndarray
    target_weights: np.ndarray
    cost: Optional[np.ndarray] = None
    cost_fn: Optional[Callable] = None

    def __post_init__(self):
        xs = np.asarray(self.source_points, dtype=float)
        ys = np.asarray(self.target_points, dtype=float)
        self.source_points = xs[:, None] if xs.ndim == 1 else xs
        self.target_points = ys[:, None] if ys.ndim == 1 else ys
        a = np.asarray(self.source_weights, dtype=float)
        b = np.asarray(self.target_weights, dtype=float)
        for name, w, n in (("source", a, len(self.source_points)), ("target", b, len(self.target_points))):
            if w.shape != (n,) or np.any(w < 0):
                raise ConfigurationError(f"{name} weights must be nonnegative with one entry per point")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ConfigurationError(f"{name} weights sum to {w.sum()!r}, expected 1")
        self.source_weights, self.target_weights = a, b
        if len(a) * len(b) > MAX_ENTRIES:
            raise ConfigurationError(f"problem size {len(a)}x{len(b)} exceeds the cap of {MAX_ENTRIES} entries")
        if self.cost is None:
            if self.cost_fn is None:
                diff = self.source_points[:, None, :] - self.target_points[None, :, :]
                self.cost = np.sqrt(np.sum(diff * diff, axis=-1))
            else:
                self.cost = np.asarray(self.cost_fn(self.source_points[:, None, :], self.target_points[None, :, :]),
                                       dtype=float)
        self.cost = np.asarray(self.cost, dtype=float)
        if self.cost.shape != (len(a), len(b)) or not np.all(np.isfinite(self.cost)):
            raise ConfigurationError("cost matrix must be finite with shape (n_source, n_target)")


@dataclass
class OTResult:
    cost: float
    plan: np.ndarray
    dual_u: np.ndarray
    dual_v: np.ndarray
    gap: float
    marginal_error: float


def solve_discrete_ot(p: DiscreteOTProblem, method: Optional[str] = None) -> OTResult:
    """Exact transport plan and Kantorovich potentials by linear programming.

    The LP is solved with HiGHS (dual simplex on small instances, interior
    point with crossover on large ones).  The source potential is then
    replaced by the c-transform ``u_i = min_j (c_ij - v_j)`` so that the
    returned pair is exactly dual feasible; the reported gap is primal minus
    dual objective.

    Returns
    -------
    OTResult
    """
    a, b, C = p.source_weights, p.target_weights, p.cost
    n, m = C.shape
    if method is None:
        method = "highs-ds" if n * m <= 2_000 else "highs-ipm"
    rows_src = np.repeat(np.arange(n), m)
    rows_tgt = n + np.tile(np.arange(m), n)
    cols = np.arange(n * m)
    A = sparse.csr_matrix(
        (np.ones(2 * n * m), (np.concatenate([rows_src, rows_tgt]), np.concatenate([cols, cols]))),
        shape=(n + m, n * m),
    )
    rhs = np.concatenate([a, b])
    res = optimize.linprog(C.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method=method)
    if res.status != 0:
        raise NumericalError(f"LP solver failed: {res.message}")
    plan = np.maximum(res.x.reshape(n, m), 0.0)
    duals = res.eqlin.marginals
    v = duals[n:]
    u = np.min(C - v[None, :], axis=1)
    primal = float(np.sum(plan * C))
    dual = float(a @ u + b @ v)
    marg = max(float(np.max(np.abs(plan.sum(1) - a))), float(np.max(np.abs(plan.sum(0) - b))))
    return OTResult(primal, plan, u, v, primal - dual, marg)


@dataclass
class MassEstimate:
    estimate: float
    stderr: float
    n_samples: int


def mc_mass(mu: SourceMeasure, predicate: Callable[[np.ndarray], np.ndarray], n_samples: int = 1_000_000,
            seed: int = 0, method: str = "mc", n_replicates: int = 16, chunk: int = 1_000_000) -> MassEstimate:
    """Unbiased estimate of ``mu({x : predicate(x)})``.

    Points are drawn uniformly in the bounding box and weighted by
    ``mu_bar(x) |box|``.

    Parameters
    ----------
    method : {'mc', 'rqmc'}
        ``mc`` uses a counter-based Philox stream keyed by ``seed``; the
        standard error is the sample standard deviation over ``sqrt(n)``.
        ``rqmc`` averages ``n_replicates`` independently scrambled Sobol
        point sets and reports the standard error across replicates.
    """
    if n_samples < 2:
        raise ConfigurationError("need at least two samples")
    vol = mu.bbox_volume
    lo = np.asarray(mu.bounds[0::2], dtype=float)
    width = np.asarray(mu.bounds[1::2], dtype=float) - lo

    def weights(u):
        x = lo + u * width
        return mu.density_at(x) * vol * np.asarray(predicate(x), dtype=bool)

    if method == "mc":
        rng = np.random.Generator(np.random.Philox(seed))
        s = s2 = 0.0
        done = 0
        while done < n_samples:
            k = min(chunk, n_samples - done)
            w = weights(rng.random((k, mu.dim)))
            s += float(w.sum())
            s2 += float(np.dot(w, w))
            done += k
        mean = s / n_samples
        var = max(s2 / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
        return MassEstimate(mean, math.sqrt(var / n_samples), n_samples)
    if method == "rqmc":
        per = max(2 ** int(round(math.log2(max(n_samples // n_replicates, 2)))), 2)
        seeds = np.random.Generator(np.random.Philox(seed)).integers(0, 2**63 - 1, size=n_replicates)
        means = []
        for sd in seeds:
            eng = qmc.Sobol(d=mu.dim, scramble=True, seed=np.random.Generator(np.random.Philox(int(sd))))
            total = 0.0
            left = per
            while left > 0:
                k = min(chunk, left)
                total += float(weights(eng.random(k)).sum())
                left -= k
            means.append(total / per)
        means = np.asarray(means)
        return MassEstimate(float(means.mean()), float(means.std(ddof=1) / math.sqrt(n_replicates)), per * n_replicates)
    raise ConfigurationError(f"unknown method {method!r}")
