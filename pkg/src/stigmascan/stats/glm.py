"""Poisson regression with a log-chart-count offset, fit by IRLS.

Each model has the form ``log(mu_i) = b0 + X_i b + log(chart_total_i)`` where
``X_i`` holds reference-coded indicators for one or more categorical
predictor blocks. Rate ratios are ``exp(b_j)`` with Wald intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import AllZeroOutcome, NotConverged, RankDeficientDesign
from ..ingest import AGE_CATEGORIES, CONDITIONS, ETHNICITIES, GENDERS, INSURANCES, PROVIDER_TYPES
from .normal import Z975, two_sided_p

DEFAULT_REFERENCES = {
    "gender": "Female",
    "ethnicity": "White",
    "insurance": "Private",
    "age_category": "MiddleAged",
    "provider_type": "Physicians",
    **{c: "0" for c in CONDITIONS},
}

LEVEL_ORDER = {
    "gender": GENDERS,
    "ethnicity": ETHNICITIES,
    "insurance": INSURANCES,
    "age_category": AGE_CATEGORIES,
    "provider_type": PROVIDER_TYPES,
    **{c: ("0", "1") for c in CONDITIONS},
}

INTERCEPT = "(Intercept)"


@dataclass(frozen=True)
class ModelSpec:
    """Outcome column plus one or more categorical predictor blocks.

    ``predictors`` with a single block is the per-predictor model; several
    blocks give a mutually adjusted (joint) model.
    """

    outcome: str
    predictors: tuple[str, ...]
    references: dict = field(default_factory=dict)
    exclude_levels: dict = field(default_factory=dict)

    def reference(self, block: str) -> str:
        return self.references.get(block, DEFAULT_REFERENCES.get(block, ""))

    @property
    def label(self) -> str:
        return "+".join(self.predictors)


@dataclass
class GlmFit:
    beta: np.ndarray
    cov: np.ndarray
    deviance: float
    iterations: int
    converged: bool
    columns: list  # (block, level); the intercept is (INTERCEPT, "")
    n_obs: int = 0
    deviance_history: list = field(default_factory=list)
    level_counts: dict = field(default_factory=dict)  # (block, level) -> (entities, events)
    zero_event_levels: list = field(default_factory=list)
    dropped_levels: list = field(default_factory=list)
    rows_dropped_missing: int = 0
    spec: ModelSpec | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def coef(self, block, level="") -> float:
        return float(self.beta[self.columns.index((block, level))])


@dataclass(frozen=True)
class RateRatio:
    block: str
    level: str
    rr: float
    ci_low: float
    ci_high: float
    p_value: float
    stars: str
    n_entities: int
    converged: bool
    flag: str = ""


def significance_stars(p: float) -> str:
    if p is None or math.isnan(p):
        return ""
    if p < 1e-4:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def rate_ratio_interval(beta: float, se: float, z: float = Z975) -> tuple[float, float, float]:
    return math.exp(beta), math.exp(beta - z * se), math.exp(beta + z * se)


# -- core solver -------------------------------------------------------------------


def poisson_deviance(y, mu) -> float:
    y = np.asarray(y, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def poisson_irls(X, y, offset=None, tol=1e-8, max_iter=50):
    """Iteratively reweighted least squares for a log-link Poisson GLM.

    Iterates until the deviance changes by less than ``tol`` between
    iterations. Returns ``(beta, cov, deviance, iterations, converged,
    deviance_history)`` with ``cov`` the inverse Fisher information at the
    final estimate.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    offset = np.zeros(n) if offset is None else np.asarray(offset, float)
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficientDesign(f"design matrix has rank {np.linalg.matrix_rank(X)} < {p} columns")

    mu = (y + y.mean()) / 2.0 + 1e-3
    eta = np.log(mu)
    beta = np.zeros(p)
    dev = poisson_deviance(y, mu)
    history = [dev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = eta - offset + (y - mu) / mu
        XtW = X.T * mu
        beta_new = np.linalg.solve(XtW @ X, XtW @ z)
        eta_new = X @ beta_new + offset
        mu_new = np.exp(eta_new)
        dev_new = poisson_deviance(y, mu_new)
        if it > 1:
            # step halving keeps the deviance from increasing
            halvings = 0
            while not np.isfinite(dev_new) or dev_new > dev + 1e-12 * abs(dev):
                if halvings == 30:
                    break
                beta_new = 0.5 * (beta_new + beta)
                eta_new = X @ beta_new + offset
                mu_new = np.exp(eta_new)
                dev_new = poisson_deviance(y, mu_new)
                halvings += 1
        change = abs(dev_new - dev)
        beta, eta, mu, dev = beta_new, eta_new, mu_new, dev_new
        history.append(dev)
        if change < tol:
            converged = True
            break
    cov = np.linalg.inv((X.T * mu) @ X)
    return beta, cov, dev, it, converged, history


# -- design construction -------------------------------------------------------------


def _levels(block, values):
    order = LEVEL_ORDER.get(block, ())
    present = set(values)
    return [lv for lv in order if lv in present] + sorted(lv for lv in present if lv not in order)


def build_design(outcomes, spec: ModelSpec):
    """Design matrix, response, offset and column labels for ``spec``.

    Entities with a blank value in any predictor block, or with a level in
    ``spec.exclude_levels``, are left out.
    """
    rows = []
    dropped_missing = 0
    for e in outcomes:
        vals = [str(e.covariates.get(b, "") or "") for b in spec.predictors]
        if any(v == "" for v in vals):
            dropped_missing += 1
            continue
        if any(v in spec.exclude_levels.get(b, ()) for b, v in zip(spec.predictors, vals)):
            continue
        rows.append((e, vals))
    columns = [(INTERCEPT, "")]
    level_counts = {}
    dropped_levels = []
    for k, block in enumerate(spec.predictors):
        ref = spec.reference(block)
        levels = _levels(block, [v[k] for _, v in rows])
        for lv in levels:
            members = [e for e, v in rows if v[k] == lv]
            level_counts[(block, lv)] = (len(members), sum(e.outcome(spec.outcome) for e in members))
        if ref not in levels:
            raise RankDeficientDesign(f"reference level {ref!r} of {block} has no entities")
        for lv in LEVEL_ORDER.get(block, ()):
            if lv not in levels and lv != ref and lv not in spec.exclude_levels.get(block, ()):
                dropped_levels.append((block, lv))
        columns += [(block, lv) for lv in levels if lv != ref]
    X = np.zeros((len(rows), len(columns)))
    X[:, 0] = 1.0
    index = {c: j for j, c in enumerate(columns)}
    for i, (_, vals) in enumerate(rows):
        for block, v in zip(spec.predictors, vals):
            j = index.get((block, v))
            if j is not None:
                X[i, j] = 1.0
    y = np.array([e.outcome(spec.outcome) for e, _ in rows], float)
    charts = np.array([e.chart_total for e, _ in rows], float)
    if np.any(charts < 1):
        raise ValueError("every entity needs chart_total >= 1")
    return X, y, np.log(charts), columns, level_counts, dropped_levels, dropped_missing


def fit_poisson_glm(outcomes, spec: ModelSpec, tol=1e-8, max_iter=50) -> GlmFit:
    """Fit the offset Poisson model described by ``spec``.

    A non-reference level with no events has an MLE at minus infinity; its
    column and rows are removed (the exact limit of the likelihood) and the
    level is listed in ``zero_event_levels``.
    """
    outcomes = list(outcomes)
    X, y, offset, columns, level_counts, dropped_levels, dropped_missing = build_design(outcomes, spec)
    if len(y) == 0 or y.sum() == 0:
        raise AllZeroOutcome(f"{spec.outcome}: no events among {len(y)} entities")
    for block in spec.predictors:
        ref = spec.reference(block)
        if level_counts[(block, ref)][1] == 0:
            raise AllZeroOutcome(f"{spec.outcome}: reference level {ref!r} of {block} has no events")
    zero_levels = [c for c in columns[1:] if level_counts[c][1] == 0]
    keep_cols = [j for j, c in enumerate(columns) if c not in zero_levels]
    keep_rows = np.ones(len(y), bool)
    for c in zero_levels:
        keep_rows &= X[:, columns.index(c)] == 0
    Xk = X[np.ix_(keep_rows, keep_cols)]
    beta, cov, dev, it, converged, history = poisson_irls(Xk, y[keep_rows], offset[keep_rows], tol, max_iter)
    fit = GlmFit(
        beta,
        cov,
        dev,
        it,
        converged,
        [columns[j] for j in keep_cols],
        int(keep_rows.sum()),
        history,
        level_counts,
        zero_levels,
        dropped_levels,
        dropped_missing,
        spec,
    )
    if not converged:
        raise NotConverged(
            f"IRLS did not converge in {max_iter} iterations for {spec.outcome} ~ {spec.label}",
            {"fit": fit, "deviance_history": history},
        )
    return fit


def rate_ratios(fit: GlmFit, spec: ModelSpec | None = None) -> list[RateRatio]:
    """Rate ratio, Wald 95% CI, p-value and stars for every non-reference level."""
    spec = spec or fit.spec
    se = fit.se
    out = []
    for block in spec.predictors:
        ref = spec.reference(block)
        for (b, lv), (n_ent, _) in fit.level_counts.items():
            if b != block or lv == ref:
                continue
            if (b, lv) in fit.zero_event_levels:
                out.append(RateRatio(b, lv, 0.0, 0.0, math.inf, math.nan, "", n_ent, fit.converged, "zero_events"))
                continue
            j = fit.columns.index((b, lv))
            rr, lo, hi = rate_ratio_interval(fit.beta[j], se[j])
            p = two_sided_p(fit.beta[j] / se[j])
            out.append(RateRatio(b, lv, rr, lo, hi, p, significance_stars(p), n_ent, fit.converged))
    return out
