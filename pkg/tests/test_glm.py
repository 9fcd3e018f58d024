import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stigmascan.errors import AllZeroOutcome, RankDeficientDesign
from stigmascan.stats import ModelSpec, fit_poisson_glm, poisson_irls, rate_ratio_interval, rate_ratios
from stigmascan.stats.glm import INTERCEPT, significance_stars

from conftest import outcome


def newton_oracle(X, y, offset, iters=100):
    """Plain Newton-Raphson on the Poisson log-likelihood, row by row."""
    n, p = X.shape
    beta = np.zeros(p)
    beta[0] = math.log(y.sum() / np.exp(offset).sum())

    def loglik(b):
        return sum(y[i] * (X[i] @ b + offset[i]) - math.exp(X[i] @ b + offset[i]) for i in range(n))

    for _ in range(iters):
        grad = np.zeros(p)
        hess = np.zeros((p, p))
        for i in range(n):
            mu = math.exp(X[i] @ beta + offset[i])
            grad += (y[i] - mu) * X[i]
            hess -= mu * np.outer(X[i], X[i])
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while loglik(beta - t * step) < loglik(beta) - 1e-12 and t > 1e-8:
            t /= 2
        beta = beta - t * step
        if np.max(np.abs(grad)) < 1e-11:
            break
    mu = np.exp(X @ beta + offset)
    cov = np.linalg.inv((X.T * mu) @ X)
    return beta, np.sqrt(np.diag(cov))


def test_binary_closed_form():
    ents = [outcome(1, 1, 10, g="a"), outcome(2, 2, 10, g="a"), outcome(3, 3, 15, g="b"), outcome(4, 6, 15, g="b")]
    spec = ModelSpec("stigma_count", ("g",), references={"g": "a"})
    fit = fit_poisson_glm(ents, spec)
    (rr,) = rate_ratios(fit, spec)
    assert rr.rr == pytest.approx(2.0, abs=1e-9)
    # closed-form Wald SE of a log rate ratio: sqrt(1/9 + 1/3)
    assert fit.se[1] == pytest.approx(math.sqrt(1 / 9 + 1 / 3), rel=1e-8)
    assert rr.ci_low < rr.rr < rr.ci_high


def test_intercept_only():
    ents = [outcome(1, 2, 1, g="a"), outcome(2, 4, 1, g="a")]
    fit = fit_poisson_glm(ents, ModelSpec("stigma_count", ("g",), references={"g": "a"}))
    assert fit.coef(INTERCEPT) == pytest.approx(math.log(3), abs=1e-10)
    assert fit.converged
    # deviance never increases
    assert all(b <= a + 1e-9 for a, b in zip(fit.deviance_history[1:], fit.deviance_history[2:]))


def test_all_zero():
    ents = [outcome(1, 0, 3, g="a"), outcome(2, 0, 4, g="b")]
    with pytest.raises(AllZeroOutcome):
        fit_poisson_glm(ents, ModelSpec("stigma_count", ("g",), references={"g": "a"}))


def test_zero_event_level_flagged():
    ents = [outcome(1, 3, 10, g="a"), outcome(2, 5, 10, g="a"), outcome(3, 0, 10, g="b"), outcome(4, 2, 5, g="c")]
    spec = ModelSpec("stigma_count", ("g",), references={"g": "a"})
    rows = {r.level: r for r in rate_ratios(fit_poisson_glm(ents, spec), spec)}
    assert rows["b"].flag == "zero_events" and rows["b"].ci_high == math.inf and rows["b"].rr == 0.0
    # dropping the zero level leaves the others exactly as in a fit without it
    alone = fit_poisson_glm([e for e in ents if e.covariates["g"] != "b"], spec)
    assert rows["c"].rr == pytest.approx(rate_ratios(alone, spec)[0].rr, rel=1e-12)


def test_rank_deficient():
    X = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(RankDeficientDesign):
        poisson_irls(X, np.array([1.0, 2.0, 3.0]))


def test_missing_reference():
    ents = [outcome(1, 3, 10, g="b"), outcome(2, 5, 10, g="c")]
    with pytest.raises(RankDeficientDesign):
        fit_poisson_glm(ents, ModelSpec("stigma_count", ("g",), references={"g": "a"}))


def test_interval_examples():
    rr, lo, hi = rate_ratio_interval(0.0, 0.1)
    assert rr == 1.0 and lo == pytest.approx(0.822, abs=1e-3) and hi == pytest.approx(1.216, abs=1e-3)
    assert lo == pytest.approx(math.exp(-0.196), rel=1e-15) and hi == pytest.approx(math.exp(0.196), rel=1e-15)
    rr, lo, hi = rate_ratio_interval(math.log(2), 1e-12)
    assert rr == pytest.approx(2.0) and hi - lo < 1e-10
    assert significance_stars(0.03) == "*" and significance_stars(5e-6) == "**" and significance_stars(0.2) == ""
    assert significance_stars(0.05) == "" and significance_stars(1e-4) == "*"


def random_problem(rng, n_levels=None, rows=None):
    k = n_levels or int(rng.integers(2, 6))
    n = rows or int(rng.integers(k * 3, 201))
    levels = [f"L{j}" for j in range(k)]
    g = [levels[j % k] for j in range(n)]
    rng.shuffle(g)
    charts = rng.integers(1, 30, n)
    eff = {lv: rng.normal(0, 0.5) for lv in levels}
    lam = np.array([0.2 * math.exp(eff[v]) for v in g]) * charts
    y = rng.poisson(lam)
    for lv in levels:  # keep every level estimable
        idx = [i for i in range(n) if g[i] == lv]
        if y[idx].sum() == 0:
            y[idx[0]] = 1
    ents = [outcome(i, int(y[i]), int(charts[i]), g=g[i]) for i in range(n)]
    return ents, levels


def test_newton_oracle_small():
    rng = np.random.default_rng(1)
    for _ in range(10):
        ents, levels = random_problem(rng)
        spec = ModelSpec("stigma_count", ("g",), references={"g": levels[0]})
        fit = fit_poisson_glm(ents, spec)
        X = np.array([[1.0] + [float(e.covariates["g"] == lv) for lv in levels[1:]] for e in ents])
        y = np.array([e.stigma_count for e in ents], float)
        off = np.log([e.chart_total for e in ents])
        beta, se = newton_oracle(X, y, off)
        assert np.max(np.abs(fit.beta - beta)) < 1e-6
        assert np.max(np.abs(fit.se - se)) < 1e-6


def test_score_equation_and_offset_invariance():
    rng = np.random.default_rng(2)
    ents, levels = random_problem(rng, 4, 150)
    spec = ModelSpec("stigma_count", ("g",), references={"g": levels[0]})
    fit = fit_poisson_glm(ents, spec)
    X = np.array([[1.0] + [float(e.covariates["g"] == lv) for lv in levels[1:]] for e in ents])
    mu = np.exp(X @ fit.beta + np.log([e.chart_total for e in ents]))
    assert mu.sum() == pytest.approx(sum(e.stigma_count for e in ents), rel=1e-6)
    scaled = [outcome(e.entity_id, e.stigma_count, e.chart_total * 7, **e.covariates) for e in ents]
    fit7 = fit_poisson_glm(scaled, spec)
    assert np.max(np.abs(fit7.beta[1:] - fit.beta[1:])) < 1e-8
    assert fit7.beta[0] == pytest.approx(fit.beta[0] - math.log(7), abs=1e-8)


def test_reference_relabeling():
    rng = np.random.default_rng(3)
    ents, levels = random_problem(rng, 3, 120)
    a = {r.level: r.rr for r in rate_ratios(fit_poisson_glm(ents, ModelSpec("stigma_count", ("g",),
                                                                                references={"g": "L0"})))}
    b = {r.level: r.rr for r in rate_ratios(fit_poisson_glm(ents, ModelSpec("stigma_count", ("g",),
                                                                                references={"g": "L1"})))}
    assert b["L0"] == pytest.approx(1 / a["L1"], rel=1e-8)
    assert b["L2"] == pytest.approx(a["L2"] / a["L1"], rel=1e-8)


def test_joint_model_matches_oracle():
    rng = np.random.default_rng(4)
    n = 180
    ents = []
    for i in range(n):
        g, h = ("a", "b")[i % 2], ("x", "y", "z")[i % 3]
        charts = int(rng.integers(1, 20))
        lam = charts * 0.3 * (1.5 if g == "b" else 1.0) * (0.7 if h == "z" else 1.0)
        ents.append(outcome(i, int(rng.poisson(lam)), charts, g=g, h=h))
    spec = ModelSpec("stigma_count", ("g", "h"), references={"g": "a", "h": "x"})
    fit = fit_poisson_glm(ents, spec)
    X = np.array([[1.0, e.covariates["g"] == "b", e.covariates["h"] == "y", e.covariates["h"] == "z"]
                  for e in ents], float)
    beta, se = newton_oracle(X, np.array([e.stigma_count for e in ents], float),
                             np.log([e.chart_total for e in ents]))
    assert np.max(np.abs(fit.beta - beta)) < 1e-6 and np.max(np.abs(fit.se - se)) < 1e-6


def test_statsmodels_cross_check():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(6)
    ents, levels = random_problem(rng, 5, 200)
    fit = fit_poisson_glm(ents, ModelSpec("stigma_count", ("g",), references={"g": levels[0]}))
    X = np.array([[1.0] + [float(e.covariates["g"] == lv) for lv in levels[1:]] for e in ents])
    ref = sm.GLM([e.stigma_count for e in ents], X, family=sm.families.Poisson(),
                 offset=np.log([e.chart_total for e in ents])).fit(tol=1e-12)
    assert np.max(np.abs(fit.beta - ref.params)) < 1e-6
    assert np.max(np.abs(fit.se - ref.bse)) < 1e-6


def test_excluded_levels_and_missing():
    ents = [outcome(1, 3, 10, g="a"), outcome(2, 5, 10, g="b"), outcome(3, 9, 1, g="skip"), outcome(4, 2, 4, g="")]
    spec = ModelSpec("stigma_count", ("g",), references={"g": "a"}, exclude_levels={"g": ("skip",)})
    fit = fit_poisson_glm(ents, spec)
    assert fit.n_obs == 2 and fit.rows_dropped_missing == 1
    assert [r.level for r in rate_ratios(fit, spec)] == ["b"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 30), st.sampled_from("ab")), min_size=4, max_size=40))
def test_rr_between_ci(rows):
    ents = [outcome(i, y, c, g=g) for i, (y, c, g) in enumerate(rows)]
    tot = {g: sum(y for y, _, gg in rows if gg == g) for g in "ab"}
    if tot["a"] == 0 or tot["b"] == 0 or {g for *_, g in rows} != {"a", "b"}:
        return
    spec = ModelSpec("stigma_count", ("g",), references={"g": "a"})
    (rr,) = rate_ratios(fit_poisson_glm(ents, spec), spec)
    crude = (tot["b"] / sum(c for _, c, g in rows if g == "b")) / (tot["a"] / sum(c for _, c, g in rows if g == "a"))
    assert rr.rr == pytest.approx(crude, rel=1e-7)
    assert 0 < rr.ci_low < rr.rr < rr.ci_high
