"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines go straight to the
terminal) or ``python tests/test_acceptance.py`` for the bare summary.
Each check computes its verdict first and asserts afterwards, so a failing
criterion still prints its measured values.
"""

import csv
import math
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import sparse

sys.path.insert(0, str(Path(__file__).parent))

from conftest import outcome, simulate_clusters  # noqa: E402
from test_glm import newton_oracle, random_problem  # noqa: E402
from test_lexicon import naive_matches  # noqa: E402
from test_rank import brute_ranks, pearson  # noqa: E402

from stigmascan.classifier import (  # noqa: E402
    Hyperparams,
    evaluate,
    logistic_objective,
    metrics_from_labels,
    split_annotations,
    train,
)
from stigmascan.cli import main  # noqa: E402
from stigmascan.lexicon import DOUBT, STIGMA, build_matcher, default_lexicons  # noqa: E402
from stigmascan.report import format_cell  # noqa: E402
from stigmascan.scan import scan_texts  # noqa: E402
from stigmascan.stats import ModelSpec, fit_poisson_glm, fit_random_intercept_poisson, median_irr, rate_ratios  # noqa: E402
from stigmascan.stats import spearman  # noqa: E402
from stigmascan.stats.glm import INTERCEPT  # noqa: E402
from stigmascan.stats.mixed import ClusterData, marginal_loglik  # noqa: E402
from stigmascan.synth import synth_annotations  # noqa: E402

# fixed before any run; never tuned to make a criterion pass
SEED = 2024
INJECTED = ("ethnicity", "BlackAfricanAmerican")


def verdict(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok, line


def timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


# -- criteria ------------------------------------------------------------------------


def c1():
    def work():
        lx = {x.name: x for x in default_lexicons()}
        return lx

    lx, secs = timed(work)
    d, s = lx[DOUBT], lx[STIGMA]
    counts_ok = (d.n_entries, s.n_entries) == (58, 127)
    stems_ok = len(d.stem_terms) == 6 and len(s.stem_terms) == 18
    ok = counts_ok and stems_ok and secs < 1.0
    missing = ", ".join(s.missing_stems + d.missing_stems) or "none"
    return verdict(1, ok, f"entries doubt={d.n_entries} stigma={s.n_entries}; stems doubt={len(d.stem_terms)}/6 "
                          f"stigma={len(s.stem_terms)}/18 (missing: {missing}); {secs:.3f}s")


def c2():
    lexicons = default_lexicons()
    matcher = build_matcher(lexicons)
    rng = random.Random(SEED)
    vocab = sorted({tok for lx in lexicons for t in lx.terms for tok in t}) + ["pt", "pain", "was", "the", "and"]

    def work():
        bad = 0
        for _ in range(10_000):
            norms = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
            bad += matcher.match_norms(norms) != naive_matches(lexicons, norms)
        return bad

    bad, secs = timed(work)
    return verdict(2, bad == 0 and secs < 30, f"{bad} mismatches in 10000 sentences; {secs:.1f}s")


def c3():
    from stigmascan.text import segment_sentences

    matcher = build_matcher(default_lexicons())
    found = [(m.term, m.lexicon_name) for s in segment_sentences("patient claimed their pain was 10/10")
             for m in matcher.match_sentence(s)]
    return verdict(3, found == [("claimed", DOUBT)], f"matches {found}")


def c4():
    ents = [outcome(1, 1, 10, g="a"), outcome(2, 2, 10, g="a"), outcome(3, 3, 15, g="b"), outcome(4, 6, 15, g="b")]
    spec = ModelSpec("stigma_count", ("g",), references={"g": "a"})
    (rr,) = rate_ratios(fit_poisson_glm(ents, spec), spec)
    fit0 = fit_poisson_glm([outcome(1, 2, 1, g="a"), outcome(2, 4, 1, g="a")],
                           ModelSpec("stigma_count", ("g",), references={"g": "a"}))
    b0 = fit0.coef(INTERCEPT)
    ok = abs(rr.rr - 2.0) <= 1e-6 and abs(b0 - math.log(3)) <= 1e-8
    return verdict(4, ok, f"RR={rr.rr:.9f}; b0-ln3={b0 - math.log(3):.2e}")


def c5():
    rng = np.random.default_rng(SEED)

    def work():
        worst_b = worst_se = 0.0
        for _ in range(50):
            ents, levels = random_problem(rng)
            spec = ModelSpec("stigma_count", ("g",), references={"g": levels[0]})
            fit = fit_poisson_glm(ents, spec)
            X = np.array([[1.0] + [float(e.covariates["g"] == lv) for lv in levels[1:]] for e in ents])
            y = np.array([e.stigma_count for e in ents], float)
            beta, se = newton_oracle(X, y, np.log([e.chart_total for e in ents]))
            worst_b = max(worst_b, float(np.max(np.abs(fit.beta - beta))))
            worst_se = max(worst_se, float(np.max(np.abs(fit.se - se))))
        return worst_b, worst_se

    (wb, ws), secs = timed(work)
    ok = wb < 1e-6 and ws < 1e-6 and secs < 60
    return verdict(5, ok, f"max |dbeta|={wb:.1e}, max |dse|={ws:.1e} over 50 problems; {secs:.1f}s")


def c6():
    rng = np.random.default_rng(SEED)
    ents, levels = random_problem(rng, 5, 200)
    spec = ModelSpec("stigma_count", ("g",), references={"g": levels[0]})
    a = fit_poisson_glm(ents, spec)
    b = fit_poisson_glm([outcome(e.entity_id, e.stigma_count, 7 * e.chart_total, **e.covariates) for e in ents], spec)
    diff = float(np.max(np.abs(a.beta[1:] - b.beta[1:])))
    return verdict(6, diff <= 1e-8, f"max non-intercept change {diff:.1e}")


def c7():
    v0, v1, v4 = median_irr(0.0), median_irr(1.0), median_irr(4.2106)
    ok = v0 == 1.0 and abs(v1 - 2.5959) <= 1e-3 and abs(v4 - 7.08) <= 0.01
    return verdict(7, ok, f"mirr(0)={v0}, mirr(1)={v1:.6f}, mirr(4.2106)={v4:.4f}")


def c8():
    def work():
        out = {}
        for s2 in (1.0, 0.0):
            y, ids = simulate_clusters(500, 20, s2, seed=SEED)
            fit = fit_random_intercept_poisson(y, ids, 15)
            data = ClusterData(y, ids)
            theta = (fit.intercept, math.log(fit.sigma2))
            ll15 = marginal_loglik(theta, data, *np.polynomial.hermite.hermgauss(15))
            ll31 = marginal_loglik(theta, data, *np.polynomial.hermite.hermgauss(31))
            out[s2] = (fit.sigma2, abs(ll15 - ll31))
        return out

    res, secs = timed(work)
    (s_true, q1), (s_null, q0) = res[1.0], res[0.0]
    ok = 0.7 <= s_true <= 1.3 and s_null < 0.05 and max(q0, q1) < 1e-4 and secs < 300
    return verdict(8, ok, f"sigma2 fit {s_true:.3f} (true 1.0), {s_null:.2e} (null); "
                          f"|ll15-ll31| {max(q0, q1):.1e}; {secs:.1f}s")


def c9(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(f"n_patients = 2000\nrate_ratios.{INJECTED[0]}:{INJECTED[1]} = 2.0\n", encoding="utf-8")
    inp, out = tmp_path / "in", tmp_path / "out"

    def work():
        assert main(["synth", "--config", str(cfg), "--seed", str(SEED), "--out-dir", str(inp)]) == 0
        tables = []
        for t in ("notes", "patients", "admissions", "caregivers", "diagnoses"):
            tables += [f"--{t}", str(inp / f"{t}.csv")]
        assert main(["all", *tables, "--out-dir", str(out), "--classifier", "off"]) == 0

    _, secs = timed(work)
    with open(out / "fits.csv", newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r["entity_level"] == "patient" and r["outcome"] == "stigma_count"]
    target = next(r for r in rows if (r["predictor_block"], r["level"]) == INJECTED)
    rr, lo, hi = float(target["rr"]), float(target["ci_low"]), float(target["ci_high"])
    nulls = [r for r in rows if (r["predictor_block"], r["level"]) != INJECTED and r["flag"] == ""]
    missed = [f"{r['predictor_block']}:{r['level']} {float(r['rr']):.2f} ({float(r['ci_low']):.2f}, "
              f"{float(r['ci_high']):.2f})" for r in nulls if not float(r["ci_low"]) <= 1.0 <= float(r["ci_high"])]
    ok = 1.7 <= rr <= 2.3 and lo > 1.0 and not missed and secs < 300
    detail = (f"RR {rr:.3f} ({lo:.3f}, {hi:.3f}); {len(nulls) - len(missed)}/{len(nulls)} null CIs cover 1"
              + (f" (missed: {'; '.join(missed)})" if missed else "") + f"; {secs:.1f}s")
    return verdict(9, ok, detail)


def c10():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        n, d = int(rng.integers(5, 40)), int(rng.integers(1, 12))
        X = sparse.csr_matrix(rng.normal(size=(n, d)) * (rng.random((n, d)) < 0.5))
        y = (rng.random(n) < 0.5).astype(float)
        l2 = float(rng.choice([0.0, 0.01, 1.0]))
        params = rng.normal(size=d + 1)
        _, g = logistic_objective(params, X, y, l2)
        h = 1e-6
        num = np.array([(logistic_objective(params + h * e, X, y, l2)[0]
                         - logistic_objective(params - h * e, X, y, l2)[0]) / (2 * h) for e in np.eye(d + 1)])
        worst = max(worst, float(np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)))
    f1s = []
    for name in (STIGMA, DOUBT):
        tr, te = split_annotations(synth_annotations(400, name, seed=SEED), 0.25, SEED)
        f1s.append(evaluate(train(tr, name, Hyperparams()), te).macro_f1)
    recount_ok = True
    prng = random.Random(SEED)
    for _ in range(500):
        gold = [prng.random() < 0.5 for _ in range(prng.randint(1, 50))]
        pred = [prng.random() < 0.5 for _ in gold]
        m = metrics_from_labels(gold, pred)
        tp = sum(g and p for g, p in zip(gold, pred))
        fp = sum(p and not g for g, p in zip(gold, pred))
        tn = sum(not g and not p for g, p in zip(gold, pred))
        fn = sum(g and not p for g, p in zip(gold, pred))
        recount_ok &= (m.tp, m.fp, m.tn, m.fn) == (tp, fp, tn, fn) and m.accuracy == (tp + tn) / len(gold)
    ok = worst < 1e-4 and min(f1s) >= 0.95 and recount_ok
    return verdict(10, ok, f"grad rel err {worst:.1e}; held-out macro-F1 {min(f1s):.3f} (min of 2); "
                           f"recounts {'exact' if recount_ok else 'differ'}")


def c11():
    up, down = spearman([1, 2, 3, 4], [10, 20, 30, 40]).rho, spearman([1, 2, 3, 4], [4, 3, 2, 1]).rho
    x, y = [1, 2, 2, 4, 4, 4], [3, 1, 2, 2, 6, 5]
    err = abs(spearman(x, y).rho - pearson(brute_ranks(x), brute_ranks(y)))
    return verdict(11, up == 1.0 and down == -1.0 and err < 1e-12, f"rho {up}, {down}; tied error {err:.1e}")


def c12(tmp_path):
    cell = format_cell(1.164, 1.081, 1.252, 5e-5)
    # provider exclusion through the whole pipeline
    cfg = tmp_path / "p.cfg"
    cfg.write_text("n_patients = 300\nn_providers = 80\nbase_rate = 0.1\n", encoding="utf-8")
    inp, out = tmp_path / "in", tmp_path / "out"
    main(["synth", "--config", str(cfg), "--seed", str(SEED), "--out-dir", str(inp)])
    tables = []
    for t in ("notes", "patients", "admissions", "caregivers", "diagnoses"):
        tables += [f"--{t}", str(inp / f"{t}.csv")]
    main(["all", *tables, "--out-dir", str(out)])
    with open(out / "report_cells.csv", newline="", encoding="utf-8") as fh:
        provider_levels = {r["level"] for r in csv.DictReader(fh) if r["table"] == "Table 3"}
    table3 = (out / "report.md").read_text(encoding="utf-8").split("## Table 3")[1].split("\n## ")[0]
    leaked = {"Pharmacist", "Unknown"} & provider_levels
    ok = cell == "1.16 (1.08, 1.25)**" and provider_levels and not leaked and "Pharmacist" not in table3
    return verdict(12, ok, f"cell {cell!r}; provider levels {sorted(provider_levels)}")


def c13():
    lexicons = default_lexicons()
    terms = [" ".join(t) for lx in lexicons for t in lx.terms]
    rng = random.Random(SEED)
    filler = ("patient was seen today and reports pain in the left arm no fever vitals stable plan to continue "
              "current meds overnight labs reviewed with family at bedside").split()

    def note():
        sents = []
        for _ in range(16):
            w = [rng.choice(filler) for _ in range(12)]
            if rng.random() < 0.1:
                w[6] = rng.choice(terms)
            sents.append(" ".join(w).capitalize() + ".")
        return " ".join(sents)

    items = [(str(i), note()) for i in range(100_000)]
    tokens = sum(len(t.split()) for _, t in items[:1000]) / 1000
    matcher = build_matcher(lexicons)
    labels, secs = timed(lambda: scan_texts(items, matcher, None, threads=4))
    return verdict(13, secs < 60, f"100000 notes (~{tokens:.0f} tokens), {len(labels)} matches, 4 workers: {secs:.1f}s")


# -- pytest wiring -------------------------------------------------------------------


def _report(request, result):
    ok, line = result
    capman = request.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_01_lexicon_fidelity(request):
    _report(request, c1())


def test_criterion_02_matcher_oracle(request):
    _report(request, c2())


def test_criterion_03_intro_sentence(request):
    _report(request, c3())


def test_criterion_04_glm_closed_form(request):
    _report(request, c4())


def test_criterion_05_glm_oracle(request):
    _report(request, c5())


def test_criterion_06_offset_invariance(request):
    _report(request, c6())


def test_criterion_07_median_irr(request):
    _report(request, c7())


@pytest.mark.slow
def test_criterion_08_mixed_recovery(request):
    _report(request, c8())


@pytest.mark.slow
def test_criterion_09_end_to_end(request, tmp_path):
    _report(request, c9(tmp_path))


def test_criterion_10_classifier(request):
    _report(request, c10())


def test_criterion_11_spearman(request):
    _report(request, c11())


def test_criterion_12_report_format(request, tmp_path):
    _report(request, c12(tmp_path))


@pytest.mark.slow
def test_criterion_13_throughput(request):
    _report(request, c13())


if __name__ == "__main__":
    import tempfile

    failed = 0
    with tempfile.TemporaryDirectory() as d:
        for fn in (c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12, c13):
            arg = (Path(d) / fn.__name__,) if fn in (c9, c12) else ()
            for a in arg:
                a.mkdir()
            ok, line = fn(*arg)
            failed += not ok
            print(line, flush=True)
    sys.exit(1 if failed else 0)
