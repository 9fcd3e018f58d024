# %% [markdown]
# # End to end on a synthetic corpus
#
# The generator writes CSV tables shaped like the source EHR extract and
# plants lexicon terms at known rates. Here Black/African American patients
# get twice the base rate of stigmatizing labels; nothing else has an
# effect. The pipeline should recover the one real effect and see noise
# elsewhere.

# %%
import tempfile
from pathlib import Path

from stigmascan.aggregate import aggregate_notes, build_entity_outcomes
from stigmascan.analysis import run_glms, run_mixed
from stigmascan.ingest import load_corpus
from stigmascan.lexicon import build_matcher, default_lexicons
from stigmascan.report import format_cell
from stigmascan.scan import scan_corpus
from stigmascan.synth import SynthConfig, generate

work = Path(tempfile.mkdtemp())
cfg = SynthConfig(seed=11, n_patients=2000, rate_ratios={"ethnicity:BlackAfricanAmerican": 2.0})
paths = generate(cfg, work)
corpus = load_corpus(*(paths[t] for t in ("notes", "patients", "admissions", "caregivers", "diagnoses")))
print(len(corpus.notes), "notes kept;", "; ".join(corpus.report.lines()[:3]))

# %%
labels = scan_corpus(corpus, build_matcher(default_lexicons()))
flags = aggregate_notes(corpus, labels)
patients, _ = build_entity_outcomes(corpus, flags, "patient")
rows, notes = run_glms(patients, "patient", blocks=("ethnicity", "insurance", "gender"))
for r in rows:
    if r.outcome == "stigma_count":
        print(f"{r.predictor_block:>10} {r.level:>22}  {format_cell(r.rr, r.ci_low, r.ci_high, r.p, r.flag)}")

# %% [markdown]
# Flags in this corpus are independent given the covariates, so the true
# patient-level clustering variance is zero. Doubt flags are rare (about
# one note in fifty), which makes that estimate noisy: across seeds it is
# usually exactly zero but can land a little above it.

# %%
mixed, _ = run_mixed(flags, "patient")
for m in mixed:
    print(f"{m.outcome}: sigma2 {m.sigma2:.3g}, median IRR {m.median_irr:.3f}")
