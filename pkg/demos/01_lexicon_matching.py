# %% [markdown]
# # Finding stigmatizing language in a note
#
# Notes are split into sentences, tokens are lowercased and stripped of
# edge punctuation, and both lexicons are matched as whole-token sequences.
# A match is only a candidate: an optional classifier decides whether the
# term is used about the patient.

# %%
from stigmascan import build_matcher, default_lexicons, segment_sentences
from stigmascan.classifier import Hyperparams, evaluate, split_annotations, train
from stigmascan.lexicon import DOUBT, STIGMA
from stigmascan.scan import scan_note
from stigmascan.synth import synth_annotations

lexicons = default_lexicons()
for lx in lexicons:
    print(f"{lx.name}: {lx.n_entries} entries, {len(lx)} distinct terms")
matcher = build_matcher(lexicons)

# %%
note = ("Pt is a 45 y.o. male seen for back pain. Patient claimed their pain was 10/10. "
        "He was noncompliant with meds and described as drug-seeking by Dr. Lee. "
        "Family insists he is reliable.")
for sent in segment_sentences(note, "n1"):
    hits = matcher.match_sentence(sent)
    if hits:
        a, b = sent.char_span
        print(f"[{sent.index}] {note[a:b]!r}")
        for m in hits:
            print(f"      {m.lexicon_name:>20}: {m.term} at tokens {m.token_span}")

# %% [markdown]
# The abbreviation list keeps "Dr." and "y.o." from ending a sentence, so
# the third sentence is matched whole.
#
# ## Adding a classifier
#
# Annotated sentences train one logistic model per lexicon on bag-of-words
# features from the windows around the matched term. These annotations are
# synthetic with 5% of gold labels flipped, which caps held-out accuracy
# near 0.95.

# %%
models = {}
for name in (STIGMA, DOUBT):
    tr, te = split_annotations(synth_annotations(400, name, seed=1, noise=0.05), 0.25, seed=1)
    models[name] = train(tr, name, Hyperparams())
    m = evaluate(models[name], te)
    print(f"{name}: accuracy {m.accuracy:.2f}, macro-F1 {m.macro_f1:.2f} on {m.tp + m.fp + m.tn + m.fn} held out")

# %%
for lb in scan_note("n1", note, matcher, models):
    print(f"{lb.lexicon_name:>20} {lb.term:>14}  p={lb.probability:.2f}  positive={lb.positive}")

# %% [markdown]
# The real note shares almost no vocabulary with the synthetic training
# set, so the probabilities hover near 0.5. A model trained on annotated
# clinical sentences is needed before these labels mean anything.
