import hashlib
import math

import pytest

from stigmascan.aggregate import aggregate_notes, build_entity_outcomes
from stigmascan.errors import ConfigError, InvalidRates
from stigmascan.ingest import load_corpus
from stigmascan.lexicon import build_matcher, default_lexicons
from stigmascan.scan import scan_corpus
from stigmascan.synth import SynthConfig, filler_vocabulary, generate, read_ground_truth

TABLES = ("notes", "patients", "admissions", "caregivers", "diagnoses")


def digest(paths):
    return {k: hashlib.sha256(p.read_bytes()).hexdigest() for k, p in paths.items()}


def test_deterministic(tmp_path):
    cfg = SynthConfig(n_patients=60, seed=5, sigma2=0.5)
    a = generate(cfg, tmp_path / "a")
    b = generate(SynthConfig(n_patients=60, seed=5, sigma2=0.5), tmp_path / "b")
    assert digest(a) == digest(b)
    c = generate(SynthConfig(n_patients=60, seed=6, sigma2=0.5), tmp_path / "c")
    assert digest(a)["notes"] != digest(c)["notes"]


def test_invalid_rates(tmp_path):
    with pytest.raises(InvalidRates):
        generate(SynthConfig(base_rate=0.0), tmp_path)
    with pytest.raises(InvalidRates):
        generate(SynthConfig(base_rate=0.4, rate_ratios={"gender:Male": 3.0}), tmp_path)
    with pytest.raises(InvalidRates):
        generate(SynthConfig(rate_ratios={"gender:Male": -1.0}), tmp_path)


def test_config_file(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("# comment\nseed = 7\nn_patients = 12\nbase_rate = 0.1\nrate_ratios.gender:Male = 2\n"
                 "ethnicity_prevalence.White = 0.5\n", encoding="utf-8")
    cfg = SynthConfig.from_file(p)
    assert (cfg.seed, cfg.n_patients, cfg.base_rate) == (7, 12, 0.1)
    assert cfg.rate_ratios == {"gender:Male": 2.0} and cfg.ethnicity_prevalence["White"] == 0.5
    p.write_text("bogus = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        SynthConfig.from_file(p)


def test_filler_never_hits_lexicon():
    forbidden = {tok for lx in default_lexicons() for t in lx.terms for tok in t}
    vocab = filler_vocabulary(2000, forbidden)
    assert len(set(vocab)) == 2000 and not set(vocab) & forbidden


def test_ground_truth_recovered_exactly(tmp_path):
    cfg = SynthConfig(n_patients=300, seed=11, base_rate=0.2, doubt_base_rate=0.1, sigma2=0.3,
                      rate_ratios={"insurance:SelfPay": 1.5})
    paths = generate(cfg, tmp_path)
    corpus = load_corpus(*(paths[t] for t in TABLES))
    labels = scan_corpus(corpus, build_matcher(default_lexicons()), None, 1)
    # one injected sentence per flagged note, never more than one match per lexicon
    per_note = {}
    for lb in labels:
        per_note.setdefault((lb.note_id, lb.lexicon_name), []).append(lb)
    assert all(len(v) == 1 for v in per_note.values())
    outcomes, _ = build_entity_outcomes(corpus, aggregate_notes(corpus, labels), "patient")
    _, truth = read_ground_truth(paths["ground_truth"])
    truth = {r["entity"]: r for r in truth if r["level"] == "patient"}
    assert len(outcomes) == cfg.n_patients
    for e in outcomes:
        t = truth[e.entity_id]
        assert (e.stigma_count, e.doubt_count, e.chart_total) == (
            t["stigma_flagged_charts"], t["doubt_flagged_charts"], t["charts"])
        for k, v in t["covariates"].items():
            assert e.covariates[k] == v


def test_null_flag_rate(tmp_path):
    cfg = SynthConfig(n_patients=800, seed=2, base_rate=0.1, radiology_fraction=0.0, duplicate_fraction=0.0)
    _, truth = read_ground_truth(generate(cfg, tmp_path)["ground_truth"])
    rows = [r for r in truth if r["level"] == "patient"]
    n = sum(r["charts"] for r in rows)
    k = sum(r["stigma_flagged_charts"] for r in rows)
    se = math.sqrt(cfg.base_rate * (1 - cfg.base_rate) / n)
    assert abs(k / n - cfg.base_rate) < 3 * se
