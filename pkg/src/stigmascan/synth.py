"""Synthetic MIMIC-III-shaped corpora with known rate ratios and clustering.

For patient ``j`` the per-note flag probability for an outcome is::

    base * prod(RR for each covariate level the patient has) * exp(u_j)

with ``u_j ~ N(0, sigma2)``, further multiplied by a provider-type rate
ratio for the note's author. Each flagged note carries exactly one filler
sentence with a lexicon term drawn uniformly from the shipped lexicon, so a
lexicon-only scan recovers the flags exactly. Probabilities above 1 (only
possible through the random intercept) are capped at 1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .config import data_path, iter_lines, read_key_values
from .errors import ConfigError, InvalidRates
from .ingest import CONDITIONS, CodeMap, derive_diagnosis_flags
from .lexicon import default_lexicons

# one representative ICD-9 code per condition; "sud" uses alcohol dependence
CONDITION_CODES = {
    "sickle_cell": "28260",
    "oud": "30400",
    "obesity": "27800",
    "hiv_symptomatic": "042",
    "sud": "30390",
    "schizophrenia": "29590",
    "mood_disorder": "29620",
    "anxiety": "30000",
    "ptsd": "30981",
    "suicide_attempt": "E9500",
    "suicidal_ideation": "V6284",
}
BACKGROUND_CODES = ("4019", "25000", "4280", "5849", "41401", "2724", "51881", "5990")

AGE_RANGES = {
    "Adolescent": (13, 18),
    "Adult": (19, 44),
    "MiddleAged": (45, 64),
    "Aged": (65, 79),
    "Aged80Plus": (80, 89),
}
INSURANCE_RAW = {"Private": ("Private",), "GovernmentRun": ("Medicare", "Medicaid", "Government"),
                 "SelfPay": ("Self Pay",)}
NOTE_CATEGORIES = {
    "Physicians": "Physician ",
    "APP": "Physician ",
    "Pharmacist": "Pharmacy",
    "RegisteredDieticians": "Nutrition",
    "RegisteredNurses": "Nursing",
    "RehabOTPT": "Rehab Services",
    "RespiratoryTherapist": "Respiratory ",
    "SocialWorkers": "Social Work",
    "Unknown": "General",
}

_SYLLABLES = ("ba", "de", "ki", "lo", "mu", "ra", "se", "ti", "vo", "ne", "pa", "gu", "fe", "zo", "hi", "ju")


@dataclass
class SynthConfig:
    seed: int = 0
    n_patients: int = 500
    notes_min: int = 5
    notes_max: int = 15
    n_providers: int = 80
    base_rate: float = 0.05
    doubt_base_rate: float = 0.02
    rate_ratios: dict = field(default_factory=dict)  # "block:level" -> RR, stigma outcome
    doubt_rate_ratios: dict = field(default_factory=dict)
    provider_rate_ratios: dict = field(default_factory=dict)  # provider type -> RR, both outcomes
    sigma2: float = 0.0
    filler_vocab_size: int = 400
    sentences_per_note: int = 6
    words_per_sentence: int = 12
    male_prevalence: float = 0.56
    ethnicity_prevalence: dict = field(default_factory=lambda: {
        "White": 0.70, "Asian": 0.04, "BlackAfricanAmerican": 0.10, "HispanicLatino": 0.05,
        "NativeAmericanAlaskanNative": 0.01, "Other": 0.04, "UnknownDeclined": 0.06})
    insurance_prevalence: dict = field(default_factory=lambda: {
        "Private": 0.40, "Medicare": 0.40, "Medicaid": 0.12, "Government": 0.04, "Self Pay": 0.04})
    age_prevalence: dict = field(default_factory=lambda: {
        "Adolescent": 0.03, "Adult": 0.22, "MiddleAged": 0.35, "Aged": 0.25, "Aged80Plus": 0.15})
    condition_prevalence: dict = field(default_factory=lambda: {
        "sickle_cell": 0.01, "oud": 0.03, "obesity": 0.06, "hiv_symptomatic": 0.02, "sud": 0.10,
        "schizophrenia": 0.01, "mood_disorder": 0.06, "anxiety": 0.05, "ptsd": 0.01, "suicide_attempt": 0.01,
        "suicidal_ideation": 0.01})
    provider_prevalence: dict = field(default_factory=lambda: {
        "Physicians": 0.30, "APP": 0.03, "Pharmacist": 0.01, "RegisteredDieticians": 0.02,
        "RegisteredNurses": 0.50, "RehabOTPT": 0.03, "RespiratoryTherapist": 0.03, "SocialWorkers": 0.03,
        "Unknown": 0.05})
    radiology_fraction: float = 0.05
    duplicate_fraction: float = 0.02
    missing_caregiver_fraction: float = 0.05
    over_89_fraction: float = 0.2  # share of Aged80Plus patients stored with MIMIC's shifted DOB

    @classmethod
    def from_file(cls, path) -> SynthConfig:
        """Read ``key = value`` lines; dict entries use ``key.subkey = value``."""
        cfg = cls()
        dict_fields = {k for k, v in asdict(cfg).items() if isinstance(v, dict)}
        for lineno, line in iter_lines(path):
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            head, _, sub = key.partition(".")
            if head in dict_fields and sub:
                getattr(cfg, head)[sub] = float(value)
            elif head in dict_fields:
                raise ConfigError(f"{path}:{lineno}: {head} entries need a key such as {head}.x")
            elif hasattr(cfg, key):
                current = getattr(cfg, key)
                setattr(cfg, key, type(current)(float(value)) if isinstance(current, int) else float(value))
            else:
                raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        return cfg

    def validate(self):
        for name in ("base_rate", "doubt_base_rate"):
            rate = getattr(self, name)
            if not 0.0 < rate < 1.0:
                raise InvalidRates(f"{name} must lie in (0, 1), got {rate}")
        for name, base, rrs in (("stigma", self.base_rate, self.rate_ratios),
                                ("doubt", self.doubt_base_rate, self.doubt_rate_ratios)):
            worst = base
            by_block: dict[str, float] = {}
            for key, rr in rrs.items():
                if rr <= 0:
                    raise InvalidRates(f"rate ratio {key} must be positive")
                block = key.split(":", 1)[0]
                by_block[block] = max(by_block.get(block, 1.0), rr)
            for v in by_block.values():
                worst *= v
            worst *= max([1.0] + [float(v) for v in self.provider_rate_ratios.values()])
            if worst >= 1.0:
                raise InvalidRates(f"{name} note rate can reach {worst:.3g} >= 1 before the random intercept")
        if self.notes_min < 1 or self.notes_max < self.notes_min:
            raise ConfigError("need 1 <= notes_min <= notes_max")


def _choice(rng, table: dict):
    keys = list(table)
    p = np.array([table[k] for k in keys], float)
    return keys[rng.choice(len(keys), p=p / p.sum())]


def filler_vocabulary(size, forbidden) -> list[str]:
    """Deterministic pseudo-words that never collide with lexicon tokens."""
    words = []
    n = len(_SYLLABLES)
    i = 0
    while len(words) < size:
        a, b, c = _SYLLABLES[i % n], _SYLLABLES[(i // n) % n], _SYLLABLES[(i // (n * n)) % n]
        w = a + b + c
        if w not in forbidden:
            words.append(w)
        i += 1
    return words


def _raw_labels(path, fold=False):
    return read_key_values(path)


def generate(config: SynthConfig, out_dir) -> dict[str, Path]:
    """Write the five CSV tables plus ``ground_truth.jsonl`` into ``out_dir``."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    lexicons = {lx.name: lx for lx in default_lexicons()}
    forbidden = {tok for lx in lexicons.values() for term in lx.terms for tok in term}
    vocab = filler_vocabulary(config.filler_vocab_size, forbidden)
    stigma_terms = lexicons["stigmatizing_labels"].term_strings
    doubt_terms = lexicons["doubt_markers"].term_strings
    ethnicity_raw = read_key_values(data_path("ethnicity_map.txt"))
    provider_raw = read_key_values(data_path("provider_map.txt"))
    code_map = CodeMap.load()
    base_time = datetime(2150, 1, 1)

    # providers
    providers = []
    for k in range(config.n_providers):
        ptype = _choice(rng, config.provider_prevalence)
        if ptype == "Unknown":
            label = f"UNK{k}"
        else:
            labels = provider_raw[ptype]
            label = labels[rng.integers(len(labels))]
        providers.append((str(10000 + k), label, ptype))

    def sentence(words=None):
        n = words or config.words_per_sentence
        return " ".join(vocab[i] for i in rng.integers(len(vocab), size=n)).capitalize() + "."

    patients_rows, admission_rows, diagnosis_rows, note_rows, truth = [], [], [], [], []
    note_id = 1
    for j in range(config.n_patients):
        pid = str(100 + j)
        gender = "M" if rng.random() < config.male_prevalence else "F"
        eth = _choice(rng, config.ethnicity_prevalence)
        eth_label = ethnicity_raw[eth][rng.integers(len(ethnicity_raw[eth]))]
        ins_label = _choice(rng, config.insurance_prevalence)
        age_cat = _choice(rng, config.age_prevalence)
        lo, hi = AGE_RANGES[age_cat]
        age = int(rng.integers(lo, hi + 1)) + 0.5
        shifted = age_cat == "Aged80Plus" and rng.random() < config.over_89_fraction
        admit = base_time + timedelta(days=int(rng.integers(0, 3650)), hours=int(rng.integers(0, 24)))
        dob = admit - timedelta(days=round((300.0 if shifted else age) * 365.25))
        patients_rows.append((pid, gender, dob.strftime("%Y-%m-%d %H:%M:%S")))

        n_adm = int(rng.integers(1, 3))
        hadms = []
        for a in range(n_adm):
            hadm = str(200000 + j * 10 + a)
            t = admit + timedelta(days=400 * a)
            # later admissions may carry a different insurance; only the first counts
            ins = ins_label if a == 0 else _choice(rng, config.insurance_prevalence)
            admission_rows.append((pid, hadm, ins, eth_label, t.strftime("%Y-%m-%d %H:%M:%S")))
            hadms.append((hadm, t))

        codes = [BACKGROUND_CODES[i] for i in rng.choice(len(BACKGROUND_CODES), size=2, replace=False)]
        for cond in CONDITIONS:
            if rng.random() < config.condition_prevalence.get(cond, 0.0):
                codes.append(CONDITION_CODES[cond])
        for c in codes:
            diagnosis_rows.append((pid, c))
        flags = derive_diagnosis_flags(codes, code_map).as_dict()

        covariates = {
            "gender": "Male" if gender == "M" else "Female",
            "ethnicity": eth,
            "insurance": "Private" if ins_label == "Private" else ("SelfPay" if ins_label == "Self Pay"
                                                                    else "GovernmentRun"),
            "age_category": age_cat,
            **{c: "1" if v else "0" for c, v in flags.items()},
        }

        def patient_rate(base, rrs):
            r = base
            for block, level in covariates.items():
                r *= rrs.get(f"{block}:{level}", 1.0)
            return r

        u_s = rng.normal(0.0, math.sqrt(config.sigma2)) if config.sigma2 > 0 else 0.0
        u_d = rng.normal(0.0, math.sqrt(config.sigma2)) if config.sigma2 > 0 else 0.0
        rate_s = patient_rate(config.base_rate, config.rate_ratios)
        rate_d = patient_rate(config.doubt_base_rate, config.doubt_rate_ratios)

        n_notes = int(rng.integers(config.notes_min, config.notes_max + 1))
        kept = flagged_s = flagged_d = 0
        texts = []
        for k in range(n_notes):
            hadm, t = hadms[int(rng.integers(len(hadms)))]
            chart = t + timedelta(hours=int(k * 6 + rng.integers(0, 6)))
            cg = None
            ptype = None
            if rng.random() >= config.missing_caregiver_fraction:
                cg, _, ptype = providers[int(rng.integers(len(providers)))]
            prov_rr = config.provider_rate_ratios.get(ptype, 1.0) if ptype else 1.0
            radiology = rng.random() < config.radiology_fraction
            parts = [sentence() for _ in range(config.sentences_per_note)]
            # the first sentence carries a note-unique number so no two notes coincide by chance
            parts[0] = f"Encounter {note_id} reviewed. " + parts[0]
            fs = rng.random() < min(1.0, rate_s * math.exp(u_s) * prov_rr)
            fd = rng.random() < min(1.0, rate_d * math.exp(u_d) * prov_rr)
            if fs:
                term = stigma_terms[int(rng.integers(len(stigma_terms)))]
                parts.insert(int(rng.integers(1, len(parts) + 1)), f"Noted {term} on {vocab[int(rng.integers(len(vocab)))]} review.")
            if fd:
                term = doubt_terms[int(rng.integers(len(doubt_terms)))]
                parts.insert(int(rng.integers(1, len(parts) + 1)), f"Patient {term} {vocab[int(rng.integers(len(vocab)))]} overnight.")
            text = " ".join(parts)
            category = "Radiology" if radiology else NOTE_CATEGORIES.get(ptype or "Unknown", "General")
            note_rows.append((str(note_id), pid, hadm, cg or "", category, chart.strftime("%Y-%m-%d %H:%M:%S"), text))
            note_id += 1
            if radiology:
                continue
            kept += 1
            flagged_s += fs
            flagged_d += fd
            texts.append((text, hadm, cg, category, chart))
        if texts and rng.random() < config.duplicate_fraction * len(texts):
            text, hadm, cg, category, chart = texts[int(rng.integers(len(texts)))]
            later = chart + timedelta(days=1)
            note_rows.append((str(note_id), pid, hadm, cg or "", category, later.strftime("%Y-%m-%d %H:%M:%S"), text))
            note_id += 1
        truth.append({
            "entity": pid,
            "level": "patient",
            "covariates": covariates,
            "stigma_rate": rate_s,
            "doubt_rate": rate_d,
            "stigma_random_intercept": u_s,
            "doubt_random_intercept": u_d,
            "charts": kept,
            "stigma_flagged_charts": flagged_s,
            "doubt_flagged_charts": flagged_d,
        })

    paths = {name: out / f"{name}.csv" for name in ("notes", "patients", "admissions", "caregivers", "diagnoses")}
    _write_csv(paths["notes"], ("ROW_ID", "SUBJECT_ID", "HADM_ID", "CGID", "CATEGORY", "CHARTTIME", "TEXT"), note_rows)
    _write_csv(paths["patients"], ("SUBJECT_ID", "GENDER", "DOB"), patients_rows)
    _write_csv(paths["admissions"], ("SUBJECT_ID", "HADM_ID", "INSURANCE", "ETHNICITY", "ADMITTIME"), admission_rows)
    _write_csv(paths["caregivers"], ("CGID", "LABEL"), [(c, lab) for c, lab, _ in providers])
    _write_csv(paths["diagnoses"], ("SUBJECT_ID", "ICD9_CODE"), diagnosis_rows)
    paths["ground_truth"] = out / "ground_truth.jsonl"
    with open(paths["ground_truth"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": asdict(config)}, sort_keys=True) + "\n")
        for p, lab, ptype in providers:
            fh.write(json.dumps({"entity": p, "level": "provider", "label": lab, "provider_type": ptype},
                                sort_keys=True) + "\n")
        for row in truth:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return paths


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_ground_truth(path):
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    return lines[0]["config"], lines[1:]


def synth_annotations(n: int, lexicon_name: str = "stigmatizing_labels", seed: int = 0, noise: float = 0.0,
                      vocab_size: int = 200):
    """Annotated sentences whose label is decided by a context cue word.

    Positive examples carry one of a few "affirming" pseudo-words next to the
    lexicon term, negatives one of a few "negating" ones; everything else is
    filler. With ``noise = 0`` the set is linearly separable. ``noise`` flips
    that share of gold labels.
    """
    from .classifier import AnnotatedSentence

    rng = np.random.default_rng(seed)
    lex = {lx.name: lx for lx in default_lexicons()}[lexicon_name]
    forbidden = {tok for lx in default_lexicons() for term in lx.terms for tok in term}
    vocab = filler_vocabulary(vocab_size + 8, forbidden)
    affirm, negate, filler = vocab[:4], vocab[4:8], vocab[8:]
    terms = lex.term_strings
    out = []
    for i in range(n):
        label = bool(i % 2)
        cue = (affirm if label else negate)[int(rng.integers(4))]
        left = [filler[k] for k in rng.integers(len(filler), size=int(rng.integers(0, 4)))]
        right = [filler[k] for k in rng.integers(len(filler), size=int(rng.integers(1, 5)))]
        term = terms[int(rng.integers(len(terms)))]
        text = " ".join(left + [cue, term] + right).capitalize() + "."
        gold = label if rng.random() >= noise else not label
        out.append(AnnotatedSentence(text, term, lexicon_name, gold, f"synth{i % 2}"))
    return out
