"""Markdown and CSV rendering of the descriptive and model tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .aggregate import descriptive_table
from .analysis import ModelResults
from .errors import EmptyTable, ManifestMismatch
from .ingest import AGE_CATEGORIES, CONDITIONS, ETHNICITIES, GENDERS, PROVIDER_TYPES
from .manifest import RunManifest
from .stats import DEFAULT_REFERENCES, significance_stars

OUTCOME_TITLES = {"stigma_count": "Stigmatizing Labels", "doubt_count": "Doubt Markers"}

LEVEL_NAMES = {
    "ethnicity": {
        "White": "White",
        "Asian": "Asian",
        "BlackAfricanAmerican": "Black/African American",
        "HispanicLatino": "Hispanic/Latino",
        "NativeAmericanAlaskanNative": "Native American/Alaskan Native",
        "Other": "Other",
        "UnknownDeclined": "Unknown/Declined",
    },
    "insurance": {"Private": "Private", "GovernmentRun": "Government-run", "SelfPay": "Self-Pay"},
    "insurance_detail": {"Private": "Private", "Government": "Government", "Medicaid": "Medicaid",
                         "Medicare": "Medicare", "Self Pay": "Self Pay"},
    "gender": {"Female": "Female", "Male": "Male"},
    "age_category": {
        "Adolescent": "Adolescent (13-18)",
        "Adult": "Adult (19-44)",
        "MiddleAged": "Middle Aged (45-64)",
        "Aged": "Aged (65-79)",
        "Aged80Plus": "Aged, 80 and over (>80)",
    },
    "provider_type": {
        "APP": "Advanced Practice Providers (NP, PA-C)",
        "Pharmacist": "Pharmacists",
        "Physicians": "Physicians",
        "RegisteredDieticians": "Registered Dieticians",
        "RegisteredNurses": "Registered Nurses",
        "RehabOTPT": "Rehab (OT/PT)",
        "RespiratoryTherapist": "Respiratory Therapists",
        "SocialWorkers": "Social Workers",
        "Unknown": "Unknown",
    },
}
CONDITION_NAMES = {
    "sickle_cell": "Sickle Cell Disease",
    "oud": "Opioid Use Disorder",
    "obesity": "Obesity",
    "hiv_symptomatic": "HIV (Symptomatic)",
    "sud": "Substance Use Disorder",
    "schizophrenia": "Schizophrenia",
    "mood_disorder": "Mood Disorder",
    "anxiety": "Anxiety",
    "ptsd": "PTSD",
    "suicide_attempt": "Suicide Attempts",
    "suicidal_ideation": "Suicidal Ideation",
}
BLOCK_TITLES = {"gender": "Gender", "ethnicity": "Ethnicity", "insurance": "Insurance", "age_category": "Age",
                "provider_type": "Provider Type"}
LEVEL_ORDER = {
    "gender": GENDERS,
    "ethnicity": ETHNICITIES,
    "insurance": ("Private", "GovernmentRun", "SelfPay"),
    "insurance_detail": ("Private", "Government", "Medicaid", "Medicare", "Self Pay"),
    "age_category": AGE_CATEGORIES,
    "provider_type": PROVIDER_TYPES,
}
CELL_COLUMNS = ("table", "outcome", "predictor_block", "level", "cell", "rr", "ci_low", "ci_high", "p", "stars",
                "n_entities", "flag")
FOOTNOTES = ("*p is significant at <.05 value", "**p is significant at <.0001 value")


def _num(x: float) -> str:
    if math.isnan(x):
        return "NA"
    if math.isinf(x):
        return "inf"
    return f"{x:.2f}"


def format_cell(rr: float, ci_low: float, ci_high: float, p: float, flag: str = "") -> str:
    """``1.16 (1.08, 1.25)**``; unestimable rows show the reason instead."""
    if flag == "zero_events":
        return "not estimable (no events)"
    if math.isnan(rr):
        return f"not estimated ({flag})" if flag else "not estimated"
    return f"{_num(rr)} ({_num(ci_low)}, {_num(ci_high)}){significance_stars(p)}"


def format_p(p: float) -> str:
    if math.isnan(p):
        return "NA"
    return "p < .001" if p < 0.001 else f"p = {p:.3f}"


def level_name(block: str, level: str) -> str:
    if block in CONDITION_NAMES:
        return CONDITION_NAMES[block]
    return LEVEL_NAMES.get(block, {}).get(level, level)


def build_descriptives(patient_outcomes, provider_outcomes, manifest_digest=None) -> dict:
    """Patient and provider descriptive tables, tagged with ``manifest_digest``."""
    out = {}
    if patient_outcomes:
        d = descriptive_table(
            patient_outcomes,
            categorical=("ethnicity", "insurance_detail", "gender") + CONDITIONS,
            continuous=("age_years", "stigma_count", "doubt_count"),
            order=LEVEL_ORDER,
        )
        d.manifest = manifest_digest
        out["patient"] = d
    if provider_outcomes:
        d = descriptive_table(provider_outcomes, categorical=("provider_type",), continuous=(), order=LEVEL_ORDER)
        d.manifest = manifest_digest
        out["provider"] = d
    return out


def _pct(count, share):
    return f"{count} ({share:.1f}%)"


def _table1(descriptives) -> list[str]:
    lines = ["## Table 1. Descriptive statistics", ""]
    pat = descriptives.get("patient")
    if pat is not None:
        lines += [f"| Characteristic | Overall (N={pat.n} Patients) |", "|---|---|"]
        cat = pat.categorical
        lines.append("| **Race/Ethnicity** | |")
        for lv, n, share in cat["ethnicity"]:
            lines.append(f"| {level_name('ethnicity', lv)} | {_pct(n, share)} |")
        age = pat.continuous.get("age_years")
        if age:
            lines.append(f"| Age: Mean (SD) [Min, Max] | {age['mean']:.1f} years ({age['sd']:.1f}) "
                         f"[{age['min']:.1f}, {age['max']:.1f}] |")
        lines.append("| **Insurance** | |")
        for lv, n, share in cat["insurance_detail"]:
            lines.append(f"| {level_name('insurance_detail', lv)} | {_pct(n, share)} |")
        lines.append("| **Gender** | |")
        for lv, n, share in cat["gender"]:
            lines.append(f"| {lv} | {_pct(n, share)} |")
        lines.append("| **Diagnoses** | |")
        for cond in CONDITIONS:
            hit = [(n, share) for lv, n, share in cat[cond] if lv == "1"]
            n, share = hit[0] if hit else (0, 0.0)
            lines.append(f"| {CONDITION_NAMES[cond]} | {_pct(n, share)} |")
        for var, title in (("stigma_count", "Stigmatizing Labels Count Per Patient"),
                           ("doubt_count", "Doubt Marker Labels Count Per Patient")):
            s = pat.continuous[var]
            lines.append(f"| **{title}** | |")
            lines.append(f"| Mean (SD) | {s['mean']:.2f} ({s['sd']:.2f}) |")
            lines.append(f"| Median [Min, Max] | {s['median']:g} [{s['min']:g}, {s['max']:g}] |")
        lines.append("")
    prov = descriptives.get("provider")
    if prov is not None:
        lines += [f"| Provider Types (N = {prov.n} Providers) | |", "|---|---|"]
        for lv, n, share in prov.categorical["provider_type"]:
            lines.append(f"| {level_name('provider_type', lv)} | {_pct(n, share)} |")
        lines.append("")
    return lines


def _block_header(block, entity_level):
    if block in CONDITION_NAMES:
        return None
    ref = DEFAULT_REFERENCES.get(block)
    title = BLOCK_TITLES.get(block, block)
    return f"{title} (Ref = {level_name(block, ref)})" if ref else title


def _model_table(title, fits, blocks, entity_level, cells):
    outcomes = list(OUTCOME_TITLES)
    lines = [title, "", "| | " + " | ".join(OUTCOME_TITLES[o] for o in outcomes) + " |", "|---|---|---|"]
    by_key = {(f.outcome, f.predictor_block, f.level): f for f in fits}
    diagnoses_header = False
    for block in blocks:
        levels = []
        for f in fits:
            if f.predictor_block == block and f.level not in levels:
                levels.append(f.level)
        if not levels:
            continue
        order = LEVEL_ORDER.get(block, ())
        levels.sort(key=lambda lv: (order.index(lv) if lv in order else len(order), lv))
        header = _block_header(block, entity_level)
        if header is None and not diagnoses_header:
            lines.append("| **Diagnoses** | | |")
            diagnoses_header = True
        elif header is not None:
            lines.append(f"| **{header}** | | |")
        for lv in levels:
            row = [level_name(block, lv)]
            for o in outcomes:
                f = by_key.get((o, block, lv))
                if f is None:
                    row.append("")
                    continue
                cell = format_cell(f.rr, f.ci_low, f.ci_high, f.p, f.flag)
                row.append(cell)
                cells.append({"table": title.split(".")[0].lstrip("# "), "outcome": o, "predictor_block": block,
                              "level": lv, "cell": cell, "rr": f.rr, "ci_low": f.ci_low, "ci_high": f.ci_high,
                              "p": f.p, "stars": f.stars, "n_entities": f.n_entities, "flag": f.flag})
            lines.append("| " + " | ".join(row) + " |")
    lines += [""] + [f + "  " for f in FOOTNOTES] + [""]
    return lines


@dataclass(frozen=True)
class Report:
    markdown: str
    cells: list

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        md = out / "report.md"
        md.write_text(self.markdown, encoding="utf-8")
        cp = out / "report_cells.csv"
        with open(cp, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=CELL_COLUMNS, lineterminator="\n")
            w.writeheader()
            for c in self.cells:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in c.items()})
        return {"report": md, "cells": cp}


def emit_report(descriptives: dict, results: ModelResults, manifest: RunManifest, headline=None) -> Report:
    """Render Tables 1 to 3 plus clustering, correlation, totals and manifest.

    Every input must carry ``manifest.digest``; anything else raises
    ManifestMismatch. Having no regression rows at all raises EmptyTable.
    """
    digest = manifest.digest
    if results.manifest != digest:
        raise ManifestMismatch(f"model results belong to manifest {results.manifest}, not {digest}")
    for level, d in descriptives.items():
        if d.manifest != digest:
            raise ManifestMismatch(f"{level} descriptives belong to manifest {d.manifest}, not {digest}")
    if not results.fits:
        raise EmptyTable("no regression rows to report")

    from .analysis import PATIENT_BLOCKS, PROVIDER_BLOCKS

    cells: list = []
    lines = ["# Stigmatizing language report", ""]
    lines += _table1(descriptives)
    pfits = [f for f in results.fits if f.entity_level == "patient"]
    vfits = [f for f in results.fits if f.entity_level == "provider"]
    lines += _model_table("## Table 2. Patient-level Poisson regression. Rate Ratios (95% CI)", pfits,
                          PATIENT_BLOCKS, "patient", cells)
    lines += ["[^] Government-run includes the insurance categories Government, Medicare and Medicaid", ""]
    lines += _model_table("## Table 3. Provider-level Poisson regression. Rate Ratios (95% CI)", vfits,
                          PROVIDER_BLOCKS, "provider", cells)
    modes = {f.model_mode for f in results.fits}
    lines.append(f"Model mode: {', '.join(sorted(modes))}")
    lines.append("")

    lines += ["## Clustering (random-intercept Poisson)", "",
              "| Level | Outcome | sigma2 | Median IRR | Clusters | Notes | Converged |", "|---|---|---|---|---|---|---|"]
    for m in results.mixed:
        sig = "NA" if math.isnan(m.sigma2) else f"{m.sigma2:.4f}"
        mirr = "NA" if math.isnan(m.median_irr) else f"{m.median_irr:.2f}"
        lines.append(f"| {m.entity_level} | {OUTCOME_TITLES[m.outcome]} | {sig} | {mirr} | {m.n_clusters} | "
                     f"{m.n_obs} | {'yes' if m.converged else 'no'} |")
    lines.append("")
    lines += ["## Spearman correlation (stigmatizing labels vs doubt markers)", ""]
    for c in results.correlations:
        rho = "NA" if math.isnan(c.rho) else f"{c.rho:.4f}"
        extra = f" ({c.flag})" if c.flag else ""
        lines.append(f"- {c.entity_level} level: Rho = {rho}, {format_p(c.p)}, n = {c.n}{extra}")
    lines.append("")
    if headline:
        lines += ["## Headline totals under both counting modes", "",
                  "| Counting mode | Stigmatizing Labels | Doubt Markers |", "|---|---|---|"]
        for mode, totals in headline.items():
            lines.append(f"| {mode} | {totals['stigma_count']} | {totals['doubt_count']} |")
        lines += ["", f"Regressions use: {manifest.counting_mode}", ""]
    if results.notes:
        lines += ["## Notes", ""] + [f"- {n}" for n in results.notes] + [""]
    lines += ["## Manifest", "", f"digest: `{digest}`", "", "```json",
              json.dumps(asdict(manifest), sort_keys=True, indent=2), "```", ""]
    return Report("\n".join(lines), cells)
