"""Random-intercept Poisson model and the median incidence rate ratio.

Model: ``y_ij ~ Poisson(exp(b0 + offset_ij + u_j))`` with ``u_j ~ N(0, s2)``
for observation ``i`` in cluster ``j``. The marginal likelihood integrates
each ``u_j`` by adaptive Gauss-Hermite quadrature centred on the conditional
mode, and is maximized over ``(b0, log s2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln, logsumexp

from ..errors import DegenerateClusters, NegativeVariance, NotConverged
from .normal import Z75

LOG_S2_BOUNDS = (-20.0, math.log(1e3))


@dataclass(frozen=True)
class MixedFit:
    intercept: float
    sigma2: float
    median_irr: float
    loglik: float
    quadrature_points: int
    converged: bool
    n_clusters: int
    n_obs: int
    gradient_norm: float = 0.0
    starts: tuple = ()


def median_irr(sigma2: float) -> float:
    """Median rate ratio between two randomly drawn clusters, ``exp(sqrt(2 s2) z_.75)``."""
    if sigma2 < 0:
        raise NegativeVariance(f"sigma2 must be >= 0 (got {sigma2})")
    return math.exp(math.sqrt(2.0 * sigma2) * Z75)


class ClusterData:
    """Per-cluster sufficient statistics for the intercept-only model."""

    def __init__(self, y, cluster_ids, offset=None):
        y = np.asarray(y, float)
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("outcomes must be non-negative integers")
        offset = np.zeros(len(y)) if offset is None else np.asarray(offset, float)
        if len(offset) != len(y) or len(cluster_ids) != len(y):
            raise ValueError("y, cluster_ids and offset must have equal length")
        _, inverse, sizes = np.unique(np.asarray(cluster_ids, dtype=object).astype(str), return_inverse=True,
                                      return_counts=True)
        k = len(sizes)
        self.n_obs = len(y)
        self.n_clusters = k
        self.sizes = sizes
        self.Y = np.bincount(inverse, weights=y, minlength=k)
        self.S = np.bincount(inverse, weights=np.exp(offset), minlength=k)
        self.const = float(np.sum(y * offset - gammaln(y + 1.0)))


def _modes(Y, A, s2, max_iter=100):
    """Conditional modes of ``Y u - A e^u - u^2 / (2 s2)``, one per cluster.

    Newton's method started right of the root; the score is concave and
    decreasing, so iterates approach the root monotonically.
    """
    u = np.maximum(0.0, np.log((Y + 1.0) / A))
    for _ in range(max_iter):
        eu = A * np.exp(u)
        g = Y - eu - u / s2
        h = eu + 1.0 / s2
        step = g / h
        u = u + step
        if np.max(np.abs(step)) < 1e-12 * (1.0 + np.max(np.abs(u))):
            break
    return u


def marginal_loglik(params, data: ClusterData, nodes, weights, gradient=False):
    """Adaptive Gauss-Hermite marginal log-likelihood at ``(b0, log s2)``.

    With ``gradient=True`` also returns the exact derivative of the
    quadrature approximation, including the movement of each cluster's
    abscissae with the parameters.
    """
    b0, log_s2 = params
    s2 = math.exp(log_s2)
    A = math.exp(b0) * data.S
    Y = data.Y
    u_hat = _modes(Y, A, s2)
    curv = A * np.exp(u_hat) + 1.0 / s2  # negative second derivative at the mode
    scale = 1.0 / np.sqrt(curv)
    u = u_hat[:, None] + math.sqrt(2.0) * scale[:, None] * nodes[None, :]
    eu = A[:, None] * np.exp(u)
    log_g = Y[:, None] * (b0 + u) - eu - u * u / (2.0 * s2) - 0.5 * math.log(2.0 * math.pi * s2)
    log_terms = log_g + (np.log(weights) + nodes**2)[None, :] + np.log(math.sqrt(2.0) * scale)[:, None]
    per_cluster = logsumexp(log_terms, axis=1)
    ll = float(per_cluster.sum() + data.const)
    if not gradient:
        return ll
    pi = np.exp(log_terms - per_cluster[:, None])
    a_mode = curv - 1.0 / s2  # A e^u_hat
    # implicit derivatives of the mode and of log(scale)
    du_db0 = -a_mode / curv
    du_dls2 = (u_hat / s2) / curv
    dlogscale_db0 = -0.5 * a_mode * (1.0 + du_db0) / curv
    dlogscale_dls2 = -0.5 * (a_mode * du_dls2 - 1.0 / s2) / curv
    score_u = Y[:, None] - eu - u / s2
    spread = math.sqrt(2.0) * scale[:, None] * nodes[None, :]
    dT_db0 = (Y[:, None] - eu) + score_u * (du_db0[:, None] + spread * dlogscale_db0[:, None]) + dlogscale_db0[:, None]
    dT_dls2 = (u * u / (2.0 * s2) - 0.5) + score_u * (du_dls2[:, None] + spread * dlogscale_dls2[:, None]) \
        + dlogscale_dls2[:, None]
    return ll, np.array([float(np.sum(pi * dT_db0)), float(np.sum(pi * dT_dls2))])


def fit_random_intercept_poisson(
    outcomes, cluster_ids, quadrature_points: int = 15, offset=None, starts=(0.1, 1.0, 4.0), gtol=1e-6, max_iter=500
) -> MixedFit:
    """Maximum-likelihood random-intercept Poisson fit.

    Quasi-Newton (L-BFGS-B) from each starting variance in ``starts``; the
    best converged optimum is returned. ``log s2`` is bounded below at -20,
    which represents a variance of effectively zero.
    """
    data = ClusterData(outcomes, cluster_ids, offset)
    if data.n_clusters < 2:
        raise ValueError("need at least two clusters")
    if np.all(data.sizes == 1):
        raise DegenerateClusters("every cluster has one observation; the variance is not identified")
    if data.Y.sum() == 0:
        raise NotConverged("no events: the intercept diverges", {"n_obs": data.n_obs})
    nodes, weights = np.polynomial.hermite.hermgauss(quadrature_points)

    def objective(theta):
        ll, g = marginal_loglik(theta, data, nodes, weights, gradient=True)
        return -ll, -g

    b0_start = math.log(data.Y.sum() / data.S.sum())
    best = None
    tried = []
    for s2 in starts:
        res = optimize.minimize(
            objective,
            np.array([b0_start, math.log(s2)]),
            jac=True,
            method="L-BFGS-B",
            bounds=[(None, None), LOG_S2_BOUNDS],
            options={"gtol": gtol, "ftol": 0.0, "maxiter": max_iter, "maxls": 50},
        )
        ll, g = marginal_loglik(res.x, data, nodes, weights, gradient=True)
        # projected gradient: a component pinned at a bound only counts if it points inward
        pg = g.copy()
        if res.x[1] <= LOG_S2_BOUNDS[0] + 1e-9 and g[1] < 0:
            pg[1] = 0.0
        if res.x[1] >= LOG_S2_BOUNDS[1] - 1e-9 and g[1] > 0:
            pg[1] = 0.0
        gnorm = float(np.max(np.abs(pg)))
        tried.append((s2, ll, gnorm))
        cand = (gnorm < gtol, ll, res.x, gnorm)
        if best is None or (cand[0], cand[1]) > (best[0], best[1]):
            best = cand
    ok, ll, x, gnorm = best
    if not ok:
        raise NotConverged(
            f"random-intercept fit did not reach gradient tolerance {gtol} (best {gnorm:.3g})",
            {"starts": tried, "params": x, "loglik": ll},
        )
    s2 = math.exp(x[1])
    return MixedFit(float(x[0]), s2, median_irr(s2), ll, quadrature_points, True, data.n_clusters, data.n_obs,
                    gnorm, tuple(tried))
