"""Roll sentence labels up to notes, then to patients and providers."""

from __future__ import annotations

import csv
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import EmptyTable, NoCharts
from .ingest import CONDITIONS, Corpus
from .lexicon import DOUBT, STIGMA

COUNTING_MODES = ("flagged_charts", "sentences")
ENTITY_COLUMNS = ("entity_id", "level", "stigma_count", "doubt_count", "chart_total")
PATIENT_COVARIATES = ("gender", "age_category", "ethnicity", "insurance") + CONDITIONS + (
    "age_years",
    "insurance_detail",
)
PROVIDER_COVARIATES = ("provider_type", "provider_label")
NOTE_FLAG_COLUMNS = ("note_id", "patient_id", "provider_id", "stigma_sentence_count", "doubt_sentence_count")


@dataclass(frozen=True)
class NoteFlags:
    note_id: str
    stigma_sentence_count: int = 0
    doubt_sentence_count: int = 0
    patient_id: str = ""
    provider_id: str | None = None

    @property
    def stigma_present(self) -> bool:
        return self.stigma_sentence_count > 0

    @property
    def doubt_present(self) -> bool:
        return self.doubt_sentence_count > 0

    def count(self, outcome: str, counting_mode: str = "flagged_charts") -> int:
        n = self.stigma_sentence_count if outcome == "stigma_count" else self.doubt_sentence_count
        return int(n > 0) if counting_mode == "flagged_charts" else n


@dataclass(frozen=True)
class EntityOutcome:
    entity_id: str
    level: str
    stigma_count: int
    doubt_count: int
    chart_total: int
    covariates: dict = field(default_factory=dict)

    def outcome(self, name: str) -> int:
        return self.stigma_count if name == "stigma_count" else self.doubt_count


@dataclass
class AggregationReport:
    level: str
    counting_mode: str
    entities: int = 0
    notes_used: int = 0
    notes_excluded: Counter = field(default_factory=Counter)

    def lines(self):
        out = [f"{self.level}: {self.entities} entities, {self.notes_used} notes ({self.counting_mode})"]
        for reason, n in sorted(self.notes_excluded.items()):
            out.append(f"{self.level}: {n} notes excluded ({reason})")
        return out


def aggregate_note(note_id, labels, patient_id="", provider_id=None) -> NoteFlags:
    """Count positively classified sentences per lexicon in one note."""
    stigma, doubt = set(), set()
    for lb in labels:
        if lb.note_id != note_id:
            raise ValueError(f"label for note {lb.note_id} passed to note {note_id}")
        if not lb.positive:
            continue
        if lb.lexicon_name == STIGMA:
            stigma.add(lb.sentence_index)
        elif lb.lexicon_name == DOUBT:
            doubt.add(lb.sentence_index)
    return NoteFlags(note_id, len(stigma), len(doubt), patient_id, provider_id)


def aggregate_notes(corpus: Corpus, labels) -> list[NoteFlags]:
    """Note flags for every retained note, in corpus order."""
    by_note = defaultdict(list)
    for lb in labels:
        by_note[lb.note_id].append(lb)
    return [aggregate_note(n.note_id, by_note.get(n.note_id, ()), n.patient_id, n.provider_id) for n in corpus.notes]


def aggregate_entity(entity_id, note_flags, level, counting_mode="flagged_charts", covariates=None) -> EntityOutcome:
    if counting_mode not in COUNTING_MODES:
        raise ValueError(f"counting_mode must be one of {COUNTING_MODES}")
    note_flags = list(note_flags)
    if not note_flags:
        raise NoCharts(f"{level} {entity_id} has no charts")
    stigma = sum(f.count("stigma_count", counting_mode) for f in note_flags)
    doubt = sum(f.count("doubt_count", counting_mode) for f in note_flags)
    return EntityOutcome(entity_id, level, stigma, doubt, len(note_flags), dict(covariates or {}))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def patient_covariates(patient) -> dict[str, str]:
    cov = {
        "gender": patient.gender,
        "age_category": patient.age_category,
        "ethnicity": patient.ethnicity,
        "insurance": patient.insurance,
    }
    cov.update(patient.diagnosis_flags.as_dict())
    cov["age_years"] = patient.age_years
    cov["insurance_detail"] = patient.insurance_raw.strip().title() if patient.insurance else None
    return {k: _fmt(v) for k, v in cov.items()}


def build_entity_outcomes(corpus: Corpus, note_flags, level: str, counting_mode="flagged_charts"):
    """Entity outcomes for ``level`` in {"patient", "provider"}.

    Patient level drops notes whose patient is absent from the patients
    table; provider level drops notes without a caregiver id. Both are
    counted in the returned report.
    """
    report = AggregationReport(level, counting_mode)
    groups: dict[str, list[NoteFlags]] = defaultdict(list)
    for f in note_flags:
        if level == "patient":
            if f.patient_id not in corpus.patients:
                report.notes_excluded["patient missing from patients table"] += 1
                continue
            groups[f.patient_id].append(f)
        elif level == "provider":
            if f.provider_id is None:
                report.notes_excluded["no caregiver id"] += 1
                continue
            groups[f.provider_id].append(f)
        else:
            raise ValueError("level must be 'patient' or 'provider'")
    out = []
    for entity_id in sorted(groups, key=_natural):
        if level == "patient":
            cov = patient_covariates(corpus.patients[entity_id])
        else:
            prov = corpus.providers.get(entity_id)
            cov = {
                "provider_type": prov.provider_type if prov else "Unknown",
                "provider_label": prov.raw_label if prov else "",
            }
        out.append(aggregate_entity(entity_id, groups[entity_id], level, counting_mode, cov))
        report.notes_used += len(groups[entity_id])
    report.entities = len(out)
    return out, report


def _natural(value: str):
    return (0, int(value), "") if value.isdigit() else (1, 0, value)


# -- descriptives ---------------------------------------------------------------


@dataclass
class DescriptiveStats:
    n: int
    categorical: dict[str, list[tuple[str, int, float]]]
    continuous: dict[str, dict[str, float]]
    manifest: str | None = None


def summarize(values) -> dict[str, float]:
    """Mean, sample SD, median, min and max."""
    values = [float(v) for v in values]
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return {
        "n": len(values),
        "mean": statistics.fmean(values),
        "sd": sd,
        "median": statistics.median(values),
        "min": min(values),
        "max": max(values),
    }


def descriptive_table(entities, categorical=(), continuous=("stigma_count", "doubt_count"), order=None) -> DescriptiveStats:
    """Table-1-style frequencies and distribution summaries.

    Blank covariate values are tallied as ``"(missing)"`` so percentages
    always cover every entity.
    """
    entities = list(entities)
    if not entities:
        raise EmptyTable("descriptive_table needs at least one entity")
    order = order or {}
    cats = {}
    for var in categorical:
        counts = Counter(e.covariates.get(var, "") or "(missing)" for e in entities)
        levels = [lv for lv in order.get(var, ()) if lv in counts]
        levels += sorted(lv for lv in counts if lv not in levels)
        cats[var] = [(lv, counts[lv], 100.0 * counts[lv] / len(entities)) for lv in levels]
    cont = {}
    for var in continuous:
        if var in ("stigma_count", "doubt_count", "chart_total"):
            vals = [getattr(e, var) for e in entities]
        else:
            vals = [float(e.covariates[var]) for e in entities if e.covariates.get(var, "") != ""]
        if vals:
            cont[var] = summarize(vals)
    return DescriptiveStats(len(entities), cats, cont)


# -- CSV interchange --------------------------------------------------------------


def write_entity_outcomes(path, outcomes) -> None:
    outcomes = list(outcomes)
    cov_cols = []
    for e in outcomes:
        for k in e.covariates:
            if k not in cov_cols:
                cov_cols.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(ENTITY_COLUMNS) + cov_cols)
        for e in outcomes:
            w.writerow([e.entity_id, e.level, e.stigma_count, e.doubt_count, e.chart_total]
                       + [e.covariates.get(c, "") for c in cov_cols])


def read_entity_outcomes(path) -> list[EntityOutcome]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            cov = {k: v for k, v in row.items() if k not in ENTITY_COLUMNS}
            out.append(
                EntityOutcome(
                    row["entity_id"],
                    row["level"],
                    int(row["stigma_count"]),
                    int(row["doubt_count"]),
                    int(row["chart_total"]),
                    cov,
                )
            )
    return out


def write_note_flags(path, note_flags) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(NOTE_FLAG_COLUMNS)
        for f in note_flags:
            w.writerow([f.note_id, f.patient_id, f.provider_id or "", f.stigma_sentence_count, f.doubt_sentence_count])


def read_note_flags(path) -> list[NoteFlags]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                NoteFlags(
                    row["note_id"],
                    int(row["stigma_sentence_count"]),
                    int(row["doubt_sentence_count"]),
                    row["patient_id"],
                    row["provider_id"] or None,
                )
            )
    return out


def headline_totals(note_flags) -> dict[str, dict[str, int]]:
    """Corpus totals under both counting modes."""
    note_flags = list(note_flags)
    return {
        mode: {
            outcome: sum(f.count(outcome, mode) for f in note_flags)
            for outcome in ("stigma_count", "doubt_count")
        }
        for mode in COUNTING_MODES
    }
