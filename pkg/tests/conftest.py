import csv
from pathlib import Path

import pytest

from stigmascan.aggregate import EntityOutcome


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return Path(path)


@pytest.fixture
def toy_tables(tmp_path):
    """Five-note, two-patient, two-provider corpus."""
    notes = [
        ("1", "P1", "H1", "C1", "Nursing", "2150-01-01 10:00:00", "Pt claimed pain was 10/10. Resting now."),
        ("2", "P1", "H1", "C2", "Physician ", "2150-01-02 10:00:00", "Patient is noncompliant with meds."),
        ("3", "P2", "H2", "C1", "Nursing", "2150-02-01 10:00:00", "Patient resting comfortably."),
        ("4", "P2", "H2", "", "Nursing", "2150-02-02 10:00:00", "He insists he is fine. Drug addict per family."),
        ("5", "P2", "H3", "C2", "Physician ", "2150-02-03 10:00:00", "No acute events."),
    ]
    paths = {
        "notes": write_csv(tmp_path / "notes.csv", ("ROW_ID", "SUBJECT_ID", "HADM_ID", "CGID", "CATEGORY", "CHARTTIME",
                                                   "TEXT"), notes),
        "patients": write_csv(tmp_path / "patients.csv", ("SUBJECT_ID", "GENDER", "DOB"),
                              [("P1", "F", "2100-01-01 00:00:00"), ("P2", "M", "1850-06-01 00:00:00")]),
        "admissions": write_csv(tmp_path / "admissions.csv",
                                ("SUBJECT_ID", "HADM_ID", "INSURANCE", "ETHNICITY", "ADMITTIME"),
                                [("P1", "H1", "Medicare", "BLACK/AFRICAN AMERICAN", "2150-01-01 08:00:00"),
                                 ("P2", "H2", "Private", "WHITE", "2150-02-01 08:00:00"),
                                 ("P2", "H3", "Medicaid", "ASIAN", "2151-02-01 08:00:00")]),
        "caregivers": write_csv(tmp_path / "caregivers.csv", ("CGID", "LABEL"), [("C1", "RN"), ("C2", "MD")]),
        "diagnoses": write_csv(tmp_path / "diagnoses.csv", ("SUBJECT_ID", "ICD9_CODE"),
                               [("P1", "30400"), ("P1", "4019"), ("P2", "30981")]),
    }
    return paths


def outcome(entity, stigma, charts, doubt=0, **cov):
    return EntityOutcome(str(entity), "patient", stigma, doubt, charts, {k: str(v) for k, v in cov.items()})


def simulate_clusters(n_clusters, per_cluster, sigma2, base=0.5, seed=0):
    """Poisson counts with a normal random intercept per cluster."""
    import numpy as np

    rng = np.random.default_rng(seed)
    u = rng.normal(0.0, np.sqrt(sigma2), n_clusters) if sigma2 > 0 else np.zeros(n_clusters)
    ids = np.repeat(np.arange(n_clusters), per_cluster)
    y = rng.poisson(base * np.exp(u[ids]))
    return y, [str(i) for i in ids]
