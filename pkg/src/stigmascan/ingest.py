"""Load MIMIC-III-shaped CSV tables into linked, recategorized records.

Expected tables and required columns::

    notes       ROW_ID, SUBJECT_ID, HADM_ID, CGID, CATEGORY, CHARTTIME, TEXT
    patients    SUBJECT_ID, GENDER, DOB
    admissions  SUBJECT_ID, HADM_ID, INSURANCE, ETHNICITY, ADMITTIME
    caregivers  CGID, LABEL
    diagnoses   SUBJECT_ID, ICD9_CODE

Rows that cannot be used are counted in :class:`LoadReport` rather than
dropped silently.
"""

from __future__ import annotations

import csv
import logging
import sys
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from datetime import datetime
from pathlib import Path

from .config import data_path, invert_mapping, read_key_values
from .errors import AgeBelowRange, IdCollision, MissingColumn, NoAdmissions, UnknownInsuranceLabel

log = logging.getLogger(__name__)

csv.field_size_limit(min(sys.maxsize, 2**31 - 1))

NOTE_COLUMNS = ("ROW_ID", "SUBJECT_ID", "HADM_ID", "CGID", "CATEGORY", "CHARTTIME", "TEXT")
PATIENT_COLUMNS = ("SUBJECT_ID", "GENDER", "DOB")
ADMISSION_COLUMNS = ("SUBJECT_ID", "HADM_ID", "INSURANCE", "ETHNICITY", "ADMITTIME")
CAREGIVER_COLUMNS = ("CGID", "LABEL")
DIAGNOSIS_COLUMNS = ("SUBJECT_ID", "ICD9_CODE")

GENDERS = ("Female", "Male")
AGE_CATEGORIES = ("Adolescent", "Adult", "MiddleAged", "Aged", "Aged80Plus")
ETHNICITIES = (
    "White",
    "Asian",
    "BlackAfricanAmerican",
    "HispanicLatino",
    "NativeAmericanAlaskanNative",
    "Other",
    "UnknownDeclined",
)
INSURANCES = ("Private", "GovernmentRun", "SelfPay")
PROVIDER_TYPES = (
    "Physicians",
    "APP",
    "Pharmacist",
    "RegisteredDieticians",
    "RegisteredNurses",
    "RehabOTPT",
    "RespiratoryTherapist",
    "SocialWorkers",
    "Unknown",
)
CONDITIONS = (
    "sickle_cell",
    "oud",
    "obesity",
    "hiv_symptomatic",
    "sud",
    "schizophrenia",
    "mood_disorder",
    "anxiety",
    "ptsd",
    "suicide_attempt",
    "suicidal_ideation",
)

DEFAULT_EXCLUDED_CATEGORIES = frozenset({"eeg", "radiology"})

# MIMIC-III shifts the DOB of patients older than 89 so that computed ages
# land near 300 years.
AGE_CLAMP_ABOVE = 120.0
AGE_CLAMPED_TO = 90.0


@dataclass(frozen=True)
class Note:
    note_id: str
    patient_id: str
    admission_id: str | None
    provider_id: str | None
    category: str
    text: str
    charttime: str | None = None


@dataclass(frozen=True)
class DiagnosisFlags:
    sickle_cell: bool = False
    oud: bool = False
    obesity: bool = False
    hiv_symptomatic: bool = False
    sud: bool = False
    schizophrenia: bool = False
    mood_disorder: bool = False
    anxiety: bool = False
    ptsd: bool = False
    suicide_attempt: bool = False
    suicidal_ideation: bool = False

    def as_dict(self) -> dict[str, bool]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    gender: str
    age_years: float | None
    age_category: str | None
    ethnicity: str
    insurance: str | None
    diagnosis_flags: DiagnosisFlags = DiagnosisFlags()
    insurance_raw: str = ""
    ethnicity_raw: str = ""


@dataclass(frozen=True)
class ProviderRecord:
    provider_id: str
    raw_label: str
    provider_type: str


@dataclass
class LoadReport:
    rows_read: Counter = field(default_factory=Counter)
    bad_rows: Counter = field(default_factory=Counter)
    empty_notes: int = 0
    notes_missing_patient: int = 0
    patients_without_admissions: int = 0
    unknown_insurance: Counter = field(default_factory=Counter)
    ages_below_range: int = 0
    ages_clamped: int = 0
    unknown_caregivers: int = 0
    duplicates_removed: int = 0
    category_removed: Counter = field(default_factory=Counter)

    def lines(self) -> list[str]:
        out = [f"rows read: {dict(self.rows_read)}"]
        if self.bad_rows:
            out.append(f"unparseable rows: {dict(self.bad_rows)}")
        for name in (
            "empty_notes",
            "notes_missing_patient",
            "patients_without_admissions",
            "ages_below_range",
            "ages_clamped",
            "unknown_caregivers",
            "duplicates_removed",
        ):
            value = getattr(self, name)
            if value:
                out.append(f"{name.replace('_', ' ')}: {value}")
        if self.unknown_insurance:
            out.append(f"unknown insurance labels: {dict(self.unknown_insurance)}")
        if self.category_removed:
            out.append(f"notes removed by category: {dict(self.category_removed)}")
        return out


@dataclass
class Corpus:
    notes: list[Note]
    patients: dict[str, PatientRecord]
    providers: dict[str, ProviderRecord]
    report: LoadReport = field(default_factory=LoadReport)

    def notes_by_patient(self) -> dict[str, list[Note]]:
        out = defaultdict(list)
        for note in self.notes:
            out[note.patient_id].append(note)
        return dict(out)


# -- configuration tables -----------------------------------------------------


class CodeMap:
    """Per-condition ICD-9 patterns: ``3040*`` prefix, ``30981`` exact, ``!3051*`` exclusion."""

    def __init__(self, table: dict[str, list[str]]):
        unknown = set(table) - set(CONDITIONS)
        if unknown:
            raise ValueError(f"unknown conditions in code map: {sorted(unknown)}")
        self.include: dict[str, list[str]] = {}
        self.exclude: dict[str, list[str]] = {}
        for cond in CONDITIONS:
            pats = table.get(cond, [])
            self.include[cond] = [p for p in pats if not p.startswith("!")]
            self.exclude[cond] = [p[1:] for p in pats if p.startswith("!")]

    @classmethod
    def load(cls, path=None) -> CodeMap:
        return cls(read_key_values(path or data_path("icd9_codes.txt")))

    @staticmethod
    def pattern_matches(pattern: str, code: str) -> bool:
        if pattern.endswith("*"):
            return code.startswith(pattern[:-1])
        return code == pattern

    def condition_matches(self, condition: str, code: str) -> bool:
        code = clean_icd9(code)
        if any(self.pattern_matches(p, code) for p in self.exclude[condition]):
            return False
        return any(self.pattern_matches(p, code) for p in self.include[condition])


def clean_icd9(code: str) -> str:
    return code.strip().replace(".", "").upper()


class Recategorizer:
    """Lookup tables for ethnicity, insurance and provider labels."""

    def __init__(self, ethnicity_path=None, insurance_path=None, provider_path=None):
        ethnicity_path = ethnicity_path or data_path("ethnicity_map.txt")
        insurance_path = insurance_path or data_path("insurance_map.txt")
        provider_path = provider_path or data_path("provider_map.txt")
        self.ethnicity = invert_mapping(read_key_values(ethnicity_path), ethnicity_path, fold_case=True)
        self.insurance = invert_mapping(read_key_values(insurance_path), insurance_path, fold_case=True)
        self.provider = invert_mapping(read_key_values(provider_path), provider_path)
        _check_categories(self.ethnicity.values(), ETHNICITIES, ethnicity_path)
        _check_categories(self.insurance.values(), INSURANCES, insurance_path)
        _check_categories(self.provider.values(), PROVIDER_TYPES, provider_path)

    def ethnicity_of(self, raw: str) -> str:
        return self.ethnicity.get(raw.strip().casefold(), "UnknownDeclined")

    def insurance_of(self, raw: str) -> str:
        try:
            return self.insurance[raw.strip().casefold()]
        except KeyError:
            raise UnknownInsuranceLabel(f"unrecognized insurance label {raw!r}") from None

    def provider_of(self, raw_label: str) -> str:
        return self.provider.get(raw_label.strip(), "Unknown")


def _check_categories(values, allowed, path):
    bad = set(values) - set(allowed)
    if bad:
        raise ValueError(f"{path}: unknown categories {sorted(bad)}")


_default_recategorizer: Recategorizer | None = None


def _recat() -> Recategorizer:
    global _default_recategorizer
    if _default_recategorizer is None:
        _default_recategorizer = Recategorizer()
    return _default_recategorizer


def recategorize_ethnicity(raw: str) -> str:
    return _recat().ethnicity_of(raw)


def recategorize_insurance(raw: str) -> str:
    return _recat().insurance_of(raw)


def recategorize_provider(raw_label: str) -> str:
    return _recat().provider_of(raw_label)


def derive_age_category(age_years: float) -> str:
    """Age band from age in years; ages above 120 are clamped to 90 first."""
    if age_years < 0:
        raise ValueError("age must be non-negative")
    if age_years > AGE_CLAMP_ABOVE:
        age_years = AGE_CLAMPED_TO
    years = int(age_years)  # completed years
    if years < 13:
        raise AgeBelowRange(f"age {age_years:g} is below 13")
    if years <= 18:
        return "Adolescent"
    if years <= 44:
        return "Adult"
    if years <= 64:
        return "MiddleAged"
    if years <= 79:
        return "Aged"
    return "Aged80Plus"


def derive_diagnosis_flags(icd9_codes, code_map: CodeMap | None = None) -> DiagnosisFlags:
    code_map = code_map or CodeMap.load()
    codes = [clean_icd9(c) for c in icd9_codes if c and c.strip()]
    flags = {cond: any(code_map.condition_matches(cond, c) for c in codes) for cond in CONDITIONS}
    return DiagnosisFlags(**flags)


def resolve_admission_attrs(admission_rows) -> tuple[str, str]:
    """(insurance, ethnicity) raw strings from the first row in table order."""
    rows = list(admission_rows)
    if not rows:
        raise NoAdmissions("patient has no admission rows")
    first = rows[0]
    return (first.get("INSURANCE") or "").strip(), (first.get("ETHNICITY") or "").strip()


# -- table loading ------------------------------------------------------------


def _read_table(path, required, report: LoadReport, key: str):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumn(col, path)
        rows = []
        for row in reader:
            report.rows_read[key] += 1
            if None in row or any(row.get(c) is None for c in required):
                report.bad_rows[key] += 1
                continue
            rows.append(row)
    return rows


def _blank_to_none(value):
    value = (value or "").strip()
    return value or None


def _parse_time(value):
    value = (value or "").strip()
    if not value:
        return None
    return datetime.fromisoformat(value)


def _age_years(dob, admit):
    return (admit - dob).days / 365.25


def load_tables(
    notes_path,
    patients_path,
    admissions_path,
    caregivers_path,
    diagnoses_path,
    *,
    code_map: CodeMap | None = None,
    recategorizer: Recategorizer | None = None,
) -> Corpus:
    """Read the five tables and link them into a :class:`Corpus`."""
    report = LoadReport()
    code_map = code_map or CodeMap.load()
    recat = recategorizer or _recat()

    note_rows = _read_table(notes_path, NOTE_COLUMNS, report, "notes")
    patient_rows = _read_table(patients_path, PATIENT_COLUMNS, report, "patients")
    admission_rows = _read_table(admissions_path, ADMISSION_COLUMNS, report, "admissions")
    caregiver_rows = _read_table(caregivers_path, CAREGIVER_COLUMNS, report, "caregivers")
    diagnosis_rows = _read_table(diagnoses_path, DIAGNOSIS_COLUMNS, report, "diagnoses")

    admissions = defaultdict(list)
    for row in admission_rows:
        admissions[row["SUBJECT_ID"].strip()].append(row)
    codes = defaultdict(list)
    for row in diagnosis_rows:
        codes[row["SUBJECT_ID"].strip()].append(row["ICD9_CODE"])

    patients: dict[str, PatientRecord] = {}
    for row in patient_rows:
        pid = row["SUBJECT_ID"].strip()
        if pid in patients:
            raise IdCollision(f"duplicate SUBJECT_ID {pid!r} in {patients_path}")
        gender = {"F": "Female", "M": "Male", "FEMALE": "Female", "MALE": "Male"}.get(
            row["GENDER"].strip().upper()
        )
        try:
            dob = _parse_time(row["DOB"])
        except ValueError:
            dob = None
        if gender is None or dob is None:
            report.bad_rows["patients"] += 1
            continue
        adm = admissions.get(pid, [])
        if adm:
            insurance_raw, ethnicity_raw = resolve_admission_attrs(adm)
        else:
            report.patients_without_admissions += 1
            insurance_raw, ethnicity_raw = "", ""
        try:
            insurance = recat.insurance_of(insurance_raw) if adm else None
        except UnknownInsuranceLabel:
            report.unknown_insurance[insurance_raw] += 1
            insurance = None
        age = category = None
        admit_times = []
        for a in adm:
            try:
                t = _parse_time(a["ADMITTIME"])
            except ValueError:
                t = None
            if t is not None:
                admit_times.append(t)
        if admit_times:
            age = _age_years(dob, min(admit_times))
            if age > AGE_CLAMP_ABOVE:
                report.ages_clamped += 1
                age = AGE_CLAMPED_TO
            try:
                category = derive_age_category(max(age, 0.0))
            except AgeBelowRange:
                report.ages_below_range += 1
        patients[pid] = PatientRecord(
            patient_id=pid,
            gender=gender,
            age_years=age,
            age_category=category,
            ethnicity=recat.ethnicity_of(ethnicity_raw),
            insurance=insurance,
            diagnosis_flags=derive_diagnosis_flags(codes.get(pid, []), code_map),
            insurance_raw=insurance_raw,
            ethnicity_raw=ethnicity_raw,
        )

    providers: dict[str, ProviderRecord] = {}
    for row in caregiver_rows:
        cgid = row["CGID"].strip()
        label = row["LABEL"].strip()
        providers[cgid] = ProviderRecord(cgid, label, recat.provider_of(label))

    notes = _build_notes(note_rows, report, patients, providers)
    corpus = Corpus(notes, patients, providers, report)
    for line in report.lines():
        log.info(line)
    return corpus


def _build_notes(note_rows, report: LoadReport, patients=None, providers=None) -> list[Note]:
    notes = []
    seen_ids = set()
    for row in note_rows:
        note_id = row["ROW_ID"].strip()
        pid = row["SUBJECT_ID"].strip()
        if not note_id or not pid or note_id in seen_ids:
            report.bad_rows["notes"] += 1
            continue
        text = row["TEXT"]
        if not text.strip():
            report.empty_notes += 1
            continue
        seen_ids.add(note_id)
        cgid = _blank_to_none(row["CGID"])
        if providers is not None and cgid is not None and cgid not in providers:
            report.unknown_caregivers += 1
        if patients is not None and pid not in patients:
            report.notes_missing_patient += 1
        notes.append(
            Note(
                note_id=note_id,
                patient_id=pid,
                admission_id=_blank_to_none(row["HADM_ID"]),
                provider_id=cgid,
                category=row["CATEGORY"].strip(),
                text=text,
                charttime=_blank_to_none(row["CHARTTIME"]),
            )
        )
    return notes


def load_notes(notes_path, excluded_categories=DEFAULT_EXCLUDED_CATEGORIES) -> Corpus:
    """Notes table alone, filtered and deduplicated; patients and providers stay empty."""
    report = LoadReport()
    notes = _build_notes(_read_table(notes_path, NOTE_COLUMNS, report, "notes"), report)
    return dedup_and_filter(Corpus(notes, {}, {}, report), excluded_categories)


def _id_key(value: str):
    return (0, int(value), "") if value.isdigit() else (1, 0, value)


def dedup_and_filter(corpus: Corpus, excluded_categories=DEFAULT_EXCLUDED_CATEGORIES) -> Corpus:
    """Drop notes in excluded categories and exact per-patient duplicate texts.

    Within a patient the earliest note (by chart time, then note id) is kept.
    Notes keep their original relative order.
    """
    excluded = {c.casefold() for c in excluded_categories}
    report = LoadReport(**{f.name: getattr(corpus.report, f.name) for f in fields(LoadReport)})
    report.category_removed = Counter(corpus.report.category_removed)
    kept = []
    for note in corpus.notes:
        if note.category.casefold() in excluded:
            report.category_removed[note.category] += 1
        else:
            kept.append(note)
    ranked = sorted(
        range(len(kept)),
        key=lambda i: (kept[i].charttime is None, kept[i].charttime or "", _id_key(kept[i].note_id)),
    )
    seen = set()
    drop = set()
    for i in ranked:
        key = (kept[i].patient_id, kept[i].text.rstrip())
        if key in seen:
            drop.add(i)
        else:
            seen.add(key)
    report.duplicates_removed += len(drop)
    notes = [n for i, n in enumerate(kept) if i not in drop]
    return Corpus(notes, corpus.patients, corpus.providers, report)


def load_corpus(notes_path, patients_path, admissions_path, caregivers_path, diagnoses_path, **kw) -> Corpus:
    """``load_tables`` followed by ``dedup_and_filter`` with default exclusions."""
    excluded = kw.pop("excluded_categories", DEFAULT_EXCLUDED_CATEGORIES)
    corpus = load_tables(notes_path, patients_path, admissions_path, caregivers_path, diagnoses_path, **kw)
    return dedup_and_filter(corpus, excluded)
