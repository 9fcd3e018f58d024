"""Run every model the report needs: per-block Poisson fits, clustering, correlations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .ingest import CONDITIONS
from .stats import ModelSpec, fit_poisson_glm, fit_random_intercept_poisson, rate_ratios, spearman

OUTCOMES = ("stigma_count", "doubt_count")
PATIENT_BLOCKS = ("gender", "ethnicity", "insurance") + CONDITIONS + ("age_category",)
PROVIDER_BLOCKS = ("provider_type",)
# excluded from provider regressions, as in the published analysis
PROVIDER_EXCLUDED = {"provider_type": ("Pharmacist", "Unknown")}
MODEL_MODES = ("per_predictor", "joint")

FIT_COLUMNS = (
    "outcome",
    "predictor_block",
    "level",
    "rr",
    "ci_low",
    "ci_high",
    "p",
    "stars",
    "n_entities",
    "converged",
    "entity_level",
    "model_mode",
    "flag",
)
MIXED_COLUMNS = ("entity_level", "outcome", "sigma2", "median_irr", "intercept", "loglik", "n_clusters", "n_obs",
                 "quadrature_points", "converged", "flag")
CORRELATION_COLUMNS = ("entity_level", "rho", "p", "n", "flag")


@dataclass(frozen=True)
class FitRow:
    outcome: str
    predictor_block: str
    level: str
    rr: float
    ci_low: float
    ci_high: float
    p: float
    stars: str
    n_entities: int
    converged: bool
    entity_level: str = "patient"
    model_mode: str = "per_predictor"
    flag: str = ""


@dataclass(frozen=True)
class MixedRow:
    entity_level: str
    outcome: str
    sigma2: float
    median_irr: float
    intercept: float
    loglik: float
    n_clusters: int
    n_obs: int
    quadrature_points: int
    converged: bool
    flag: str = ""


@dataclass(frozen=True)
class CorrelationRow:
    entity_level: str
    rho: float
    p: float
    n: int
    flag: str = ""


@dataclass
class ModelResults:
    fits: list[FitRow] = field(default_factory=list)
    mixed: list[MixedRow] = field(default_factory=list)
    correlations: list[CorrelationRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    manifest: str | None = None


_NAN = math.nan


def _failed_rows(outcomes, spec, entity_level, mode, code):
    rows = []
    for block in spec.predictors:
        ref = spec.reference(block)
        levels = sorted({str(e.covariates.get(block, "")) for e in outcomes} - {"", ref}
                        - set(spec.exclude_levels.get(block, ())))
        for lv in levels:
            n = sum(str(e.covariates.get(block, "")) == lv for e in outcomes)
            rows.append(FitRow(spec.outcome, block, lv, _NAN, _NAN, _NAN, _NAN, "", n, False, entity_level, mode,
                               code))
    return rows


def _fit_block(outcomes, spec, entity_level, mode, notes):
    try:
        fit = fit_poisson_glm(outcomes, spec)
    except (errors.AllZeroOutcome, errors.RankDeficientDesign, errors.NotConverged) as exc:
        notes.append(f"{entity_level} {spec.outcome} ~ {spec.label}: not estimated ({exc.code}: {exc})")
        return _failed_rows(outcomes, spec, entity_level, mode, exc.code)
    for block, lv in fit.dropped_levels:
        notes.append(f"{entity_level} {spec.outcome} ~ {block}: level {lv} dropped (no entities)")
    for block, lv in fit.zero_event_levels:
        notes.append(f"{entity_level} {spec.outcome} ~ {block}: level {lv} has no events; rate ratio diverges")
    return [
        FitRow(spec.outcome, r.block, r.level, r.rr, r.ci_low, r.ci_high, r.p_value, r.stars, r.n_entities,
               r.converged, entity_level, mode, r.flag)
        for r in rate_ratios(fit, spec)
    ]


def _usable_blocks(outcomes, blocks, exclude):
    usable = []
    for b in blocks:
        levels = {str(e.covariates.get(b, "")) for e in outcomes} - {""} - set(exclude.get(b, ()))
        if len(levels) >= 2:
            usable.append(b)
    return usable


def run_glms(outcomes, entity_level="patient", model_mode="per_predictor", blocks=None, exclude=None):
    """Rate-ratio rows for every predictor block and both outcomes."""
    if model_mode not in MODEL_MODES:
        raise ValueError(f"model_mode must be one of {MODEL_MODES}")
    outcomes = list(outcomes)
    if blocks is None:
        blocks = PATIENT_BLOCKS if entity_level == "patient" else PROVIDER_BLOCKS
    if exclude is None:
        exclude = PROVIDER_EXCLUDED if entity_level == "provider" else {}
    notes: list[str] = []
    for b, levels in exclude.items():
        for lv in levels:
            n = sum(str(e.covariates.get(b, "")) == lv for e in outcomes)
            notes.append(f"{lv} {entity_level}s removed from regression analyses (n = {n})")
    usable = _usable_blocks(outcomes, blocks, exclude)
    for b in blocks:
        if b not in usable:
            notes.append(f"{entity_level} ~ {b}: fewer than two observed levels; not modelled")
    rows: list[FitRow] = []
    for outcome in OUTCOMES:
        if model_mode == "joint":
            if usable:
                spec = ModelSpec(outcome, tuple(usable), exclude_levels=exclude)
                rows += _fit_block(outcomes, spec, entity_level, model_mode, notes)
        else:
            for b in usable:
                spec = ModelSpec(outcome, (b,), exclude_levels=exclude)
                rows += _fit_block(outcomes, spec, entity_level, model_mode, notes)
    return rows, notes


def run_mixed(note_flags, entity_level, counting_mode="flagged_charts", quadrature_points=15, cluster_filter=None):
    """Random-intercept clustering of note-level outcomes within patients or providers."""
    rows, notes = [], []
    flags = [f for f in note_flags if (f.patient_id if entity_level == "patient" else f.provider_id)]
    if cluster_filter is not None:
        flags = [f for f in flags if cluster_filter(f)]
    clusters = [f.patient_id if entity_level == "patient" else f.provider_id for f in flags]
    for outcome in OUTCOMES:
        y = np.array([f.count(outcome, counting_mode) for f in flags], float)
        try:
            fit = fit_random_intercept_poisson(y, clusters, quadrature_points)
        except (errors.NotConverged, errors.DegenerateClusters, ValueError) as exc:
            code = getattr(exc, "code", "InvalidInput")
            notes.append(f"{entity_level} {outcome} clustering not estimated ({code}: {exc})")
            rows.append(MixedRow(entity_level, outcome, _NAN, _NAN, _NAN, _NAN, len(set(clusters)), len(y),
                                 quadrature_points, False, code))
            continue
        rows.append(MixedRow(entity_level, outcome, fit.sigma2, fit.median_irr, fit.intercept, fit.loglik,
                             fit.n_clusters, fit.n_obs, quadrature_points, fit.converged))
    return rows, notes


def run_correlation(outcomes, entity_level) -> CorrelationRow:
    """Spearman correlation between stigma and doubt counts across entities."""
    outcomes = list(outcomes)
    x = [e.stigma_count for e in outcomes]
    y = [e.doubt_count for e in outcomes]
    try:
        res = spearman(x, y)
    except (errors.ConstantInput, ValueError) as exc:
        return CorrelationRow(entity_level, _NAN, _NAN, len(x), getattr(exc, "code", "TooFewEntities"))
    return CorrelationRow(entity_level, res.rho, res.p_value, res.n)


def run_all_models(patient_outcomes, provider_outcomes, note_flags, patients, providers,
                   counting_mode="flagged_charts", model_mode="per_predictor", quadrature_points=15,
                   manifest=None) -> ModelResults:
    results = ModelResults(manifest=manifest)
    for level, outcomes in (("patient", patient_outcomes), ("provider", provider_outcomes)):
        if not outcomes:
            results.notes.append(f"no {level} entities; {level} models skipped")
            continue
        rows, notes = run_glms(outcomes, level, model_mode)
        results.fits += rows
        results.notes += notes
        results.correlations.append(run_correlation(outcomes, level))
    in_patients = set(patients)
    for level, keep in (("patient", lambda f: f.patient_id in in_patients), ("provider", None)):
        rows, notes = run_mixed(note_flags, level, counting_mode, quadrature_points, keep)
        results.mixed += rows
        results.notes += notes
    return results


# -- CSV interchange ----------------------------------------------------------------


def _num(x):
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x)
    return x


def _write(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(getattr(r, c)) if not isinstance(getattr(r, c), bool) else int(getattr(r, c))
                        for c in columns])


def _float(s):
    return float(s) if s not in ("", None) else _NAN


def write_fits(path, rows):
    _write(path, FIT_COLUMNS, rows)


def read_fits(path) -> list[FitRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            FitRow(r["outcome"], r["predictor_block"], r["level"], _float(r["rr"]), _float(r["ci_low"]),
                   _float(r["ci_high"]), _float(r["p"]), r["stars"], int(r["n_entities"]), r["converged"] == "1",
                   r["entity_level"], r["model_mode"], r["flag"])
            for r in csv.DictReader(fh)
        ]


def write_mixed(path, rows):
    _write(path, MIXED_COLUMNS, rows)


def read_mixed(path) -> list[MixedRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            MixedRow(r["entity_level"], r["outcome"], _float(r["sigma2"]), _float(r["median_irr"]),
                     _float(r["intercept"]), _float(r["loglik"]), int(r["n_clusters"]), int(r["n_obs"]),
                     int(r["quadrature_points"]), r["converged"] == "1", r["flag"])
            for r in csv.DictReader(fh)
        ]


def write_correlations(path, rows):
    _write(path, CORRELATION_COLUMNS, rows)


def read_correlations(path) -> list[CorrelationRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [CorrelationRow(r["entity_level"], _float(r["rho"]), _float(r["p"]), int(r["n"]), r["flag"])
                for r in csv.DictReader(fh)]
