"""Context-window logistic regression over lexicon-matched sentences.

Each candidate sentence is represented by the unigrams and bigrams found
within ``window_k`` tokens of the matched span, tagged by their position
relative to the match (``left``, ``match``, ``right``), plus the identity of
the matched term. The model is an L2-penalized logistic regression whose
objective is the *mean* log-loss plus ``l2 / 2 * ||w||^2`` (intercept not
penalized), so duplicating every training row leaves the minimizer unchanged.
"""

from __future__ import annotations

import csv
import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit

from .errors import LengthMismatch, LexiconMismatch, SingleClassTraining
from .lexicon import Match, normalize_term
from .text import Sentence, normalize_tokens

FORMAT_HEADER = "stigmascan-classifier"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class AnnotatedSentence:
    sentence: str
    term: str
    lexicon_name: str
    gold_label: bool
    annotator_id: str | None = None

    def locate(self) -> tuple[list[str], tuple[int, int]]:
        """Normalized tokens and the span of the first occurrence of ``term``."""
        norms = [t.norm for t in normalize_tokens(self.sentence)]
        seq = list(normalize_term(self.term))
        k = len(seq)
        for i in range(len(norms) - k + 1):
            if norms[i : i + k] == seq:
                return norms, (i, i + k)
        raise ValueError(f"term {self.term!r} does not occur in sentence {self.sentence!r}")


@dataclass(frozen=True)
class Hyperparams:
    window_k: int = 8
    l2: float = 1e-2
    threshold: float = 0.5
    max_epochs: int = 500
    gtol: float = 1e-6
    seed: int = 0


@dataclass
class ClassifierModel:
    lexicon_name: str
    vocabulary: dict[str, int]
    weights: np.ndarray
    intercept: float
    l2: float
    window_k: int = 8
    threshold: float = 0.5
    converged: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.vocabulary),):
            raise ValueError("weight vector length must equal vocabulary size")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    def with_threshold(self, threshold: float) -> ClassifierModel:
        return ClassifierModel(
            self.lexicon_name, self.vocabulary, self.weights, self.intercept, self.l2, self.window_k, threshold
        )

    def digest(self) -> str:
        return hashlib.sha256(dumps_models([self]).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    macro_f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class KappaResult:
    observed_agreement: float
    chance_agreement: float
    kappa: float
    degenerate_marginals: bool = False


# -- features -----------------------------------------------------------------


def _bucket_features(bucket, toks, counts):
    for t in toks:
        counts[f"{bucket}:{t}"] += 1
    for a, b in zip(toks, toks[1:]):
        counts[f"{bucket}:{a} {b}"] += 1


def extract_features(norms, span, window_k: int = 8, term: str | None = None) -> dict[str, float]:
    """Sparse feature map for a match at token ``span`` of ``norms``."""
    start, end = span
    if not 0 <= start < end <= len(norms):
        raise ValueError(f"span {span} outside sentence of {len(norms)} tokens")
    counts: Counter = Counter()
    _bucket_features("left", norms[max(0, start - window_k) : start], counts)
    _bucket_features("match", norms[start:end], counts)
    _bucket_features("right", norms[end : end + window_k], counts)
    counts[f"term={term if term is not None else ' '.join(norms[start:end])}"] += 1
    return {k: float(counts[k]) for k in sorted(counts)}


def _design(feature_maps, vocabulary):
    rows, cols, vals = [], [], []
    for i, fmap in enumerate(feature_maps):
        for name, value in fmap.items():
            j = vocabulary.get(name)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(value)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(feature_maps), len(vocabulary)))


def _annotated_features(examples, window_k):
    out = []
    for ex in examples:
        norms, span = ex.locate()
        out.append(extract_features(norms, span, window_k, term=" ".join(normalize_term(ex.term))))
    return out


# -- training -----------------------------------------------------------------


def logistic_objective(params, X, y, l2):
    """Mean log-loss plus ridge penalty, and its gradient.

    ``params`` is ``[w..., b]``; the intercept ``b`` is not penalized.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    n = len(y)
    # log(1 + exp(z)) - y*z, computed stably
    loss = np.sum(np.logaddexp(0.0, z) - y * z) / n + 0.5 * l2 * float(w @ w)
    r = (expit(z) - y) / n
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + l2 * w
    grad[-1] = r.sum()
    return loss, grad


def train(annotated, lexicon_name: str, hyperparams: Hyperparams | None = None) -> ClassifierModel:
    """Fit a classifier for one lexicon from annotated sentences."""
    hp = hyperparams or Hyperparams()
    examples = [a for a in annotated if a.lexicon_name == lexicon_name]
    labels = np.array([bool(a.gold_label) for a in examples], dtype=float)
    n_pos = int(labels.sum())
    if n_pos < 2 or len(labels) - n_pos < 2:
        raise SingleClassTraining(
            f"{lexicon_name}: need at least 2 examples of each class (got {n_pos} positive, "
            f"{len(labels) - n_pos} negative)"
        )
    fmaps = _annotated_features(examples, hp.window_k)
    vocabulary = {name: i for i, name in enumerate(sorted({k for f in fmaps for k in f}))}
    X = _design(fmaps, vocabulary)
    x0 = np.zeros(len(vocabulary) + 1)
    res = optimize.minimize(
        logistic_objective,
        x0,
        args=(X, labels, hp.l2),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": hp.gtol, "maxiter": hp.max_epochs, "maxcor": 20},
    )
    converged = bool(np.max(np.abs(res.jac)) < hp.gtol * 10) or bool(res.success)
    return ClassifierModel(
        lexicon_name,
        vocabulary,
        res.x[:-1].copy(),
        float(res.x[-1]),
        hp.l2,
        hp.window_k,
        hp.threshold,
        converged,
    )


# -- prediction and evaluation ------------------------------------------------


def predict_proba_features(model: ClassifierModel, fmap: dict[str, float]) -> float:
    z = model.intercept
    vocab, w = model.vocabulary, model.weights
    for name, value in fmap.items():
        j = vocab.get(name)
        if j is not None:
            z += w[j] * value
    return float(expit(z))


def predict(model: ClassifierModel, sentence, match: Match) -> tuple[bool, float]:
    """(label, probability) for one lexicon match in a tokenized sentence.

    ``sentence`` is a :class:`Sentence` or a list of normalized tokens.
    """
    if match.lexicon_name != model.lexicon_name:
        raise LexiconMismatch(f"{model.lexicon_name} model applied to a {match.lexicon_name} match")
    norms = sentence.norms if isinstance(sentence, Sentence) else list(sentence)
    fmap = extract_features(norms, match.token_span, model.window_k, term=match.term)
    p = predict_proba_features(model, fmap)
    return p >= model.threshold, p


def predict_annotated(model: ClassifierModel, example: AnnotatedSentence) -> tuple[bool, float]:
    norms, span = example.locate()
    match = Match(" ".join(normalize_term(example.term)), example.lexicon_name, span)
    return predict(model, norms, match)


def confusion_metrics(tp: int, fp: int, tn: int, fn: int) -> EvalMetrics:
    """Accuracy, precision, recall and macro-F1 from confusion counts.

    Zero denominators yield 0 and are named in ``degenerate``.
    """
    degenerate = []

    def ratio(num, den, name):
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    total = tp + fp + tn + fn
    accuracy = ratio(tp + tn, total, "accuracy")
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    neg_precision = ratio(tn, tn + fn, "negative_precision")
    neg_recall = ratio(tn, tn + fp, "negative_recall")

    def f1(p, r):
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    macro = 0.5 * (f1(precision, recall) + f1(neg_precision, neg_recall))
    return EvalMetrics(accuracy, precision, recall, macro, tp, fp, tn, fn, tuple(degenerate))


def metrics_from_labels(gold, predicted) -> EvalMetrics:
    gold, predicted = list(gold), list(predicted)
    if len(gold) != len(predicted):
        raise LengthMismatch("gold and predicted label lists differ in length")
    pairs = Counter((bool(g), bool(p)) for g, p in zip(gold, predicted))
    return confusion_metrics(pairs[True, True], pairs[False, True], pairs[False, False], pairs[True, False])


def evaluate(model: ClassifierModel, test) -> EvalMetrics:
    test = [t for t in test if t.lexicon_name == model.lexicon_name]
    if not test:
        raise ValueError("evaluation set is empty")
    predicted = [predict_annotated(model, ex)[0] for ex in test]
    return metrics_from_labels([ex.gold_label for ex in test], predicted)


def cohen_kappa(labels_a, labels_b) -> KappaResult:
    """Chance-corrected agreement between two raters' label lists."""
    a, b = list(labels_a), list(labels_b)
    if len(a) != len(b) or not a:
        raise LengthMismatch("kappa needs two non-empty label lists of equal length")
    n = len(a)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    ca, cb = Counter(a), Counter(b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    degenerate = len(ca) == 1 or len(cb) == 1
    if p_e >= 1.0:
        # both raters used a single, identical label
        return KappaResult(p_o, p_e, 1.0, True)
    return KappaResult(p_o, p_e, (p_o - p_e) / (1.0 - p_e), degenerate)


def split_annotations(annotated, test_fraction=0.2, seed=0):
    """Deterministic stratified train/test split."""
    rng = np.random.default_rng(seed)
    train_set, test_set = [], []
    groups: dict[tuple, list] = {}
    for ex in annotated:
        groups.setdefault((ex.lexicon_name, bool(ex.gold_label)), []).append(ex)
    for key in sorted(groups):
        items = groups[key]
        order = rng.permutation(len(items))
        n_test = int(round(test_fraction * len(items)))
        test_set.extend(items[i] for i in order[:n_test])
        train_set.extend(items[i] for i in order[n_test:])
    return train_set, test_set


# -- I/O ------------------------------------------------------------------------

_POSITIVE = {"1", "true", "positive", "pos", "yes"}
_NEGATIVE = {"0", "false", "negative", "neg", "no"}


def read_annotations(path) -> list[AnnotatedSentence]:
    """Read ``sentence,term,lexicon,gold_label,annotator`` rows."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            label = row["gold_label"].strip().lower()
            if label not in _POSITIVE | _NEGATIVE:
                raise ValueError(f"{path}: unrecognized gold_label {row['gold_label']!r}")
            out.append(
                AnnotatedSentence(
                    row["sentence"],
                    row["term"],
                    row["lexicon"].strip(),
                    label in _POSITIVE,
                    (row.get("annotator") or "").strip() or None,
                )
            )
    return out


def write_annotations(path, annotated) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sentence", "term", "lexicon", "gold_label", "annotator"])
        for ex in annotated:
            w.writerow([ex.sentence, ex.term, ex.lexicon_name, "positive" if ex.gold_label else "negative",
                        ex.annotator_id or ""])


def dumps_models(models) -> str:
    """Serialize models to the line-oriented text format.

    Floats are written with ``repr`` so a round trip is exact. Feature names
    never contain tabs or newlines (tokens are whitespace-free).
    """
    lines = [f"{FORMAT_HEADER} {FORMAT_VERSION}"]
    for m in models:
        lines += [
            f"model\t{m.lexicon_name}",
            f"window_k\t{m.window_k}",
            f"l2\t{m.l2!r}",
            f"threshold\t{m.threshold!r}",
            f"intercept\t{m.intercept!r}",
            f"vocab_size\t{len(m.vocabulary)}",
        ]
        inverse = sorted(m.vocabulary.items(), key=lambda kv: kv[1])
        lines += [f"{name}\t{float(m.weights[j])!r}" for name, j in inverse]
        lines.append("end")
    return "\n".join(lines) + "\n"


def loads_models(text: str) -> dict[str, ClassifierModel]:
    lines = text.splitlines()
    if not lines or lines[0].split() != [FORMAT_HEADER, str(FORMAT_VERSION)]:
        raise ValueError("not a stigmascan classifier file (or unsupported version)")
    models = {}
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = dict(line.split("\t", 1) for line in lines[i : i + 6])
        i += 6
        n = int(head["vocab_size"])
        vocab, weights = {}, np.empty(n)
        for j in range(n):
            name, value = lines[i + j].rsplit("\t", 1)
            vocab[name] = j
            weights[j] = float(value)
        i += n
        if lines[i] != "end":
            raise ValueError("malformed classifier file: missing 'end'")
        i += 1
        models[head["model"]] = ClassifierModel(
            head["model"],
            vocab,
            weights,
            float(head["intercept"]),
            float(head["l2"]),
            int(head["window_k"]),
            float(head["threshold"]),
        )
    return models


def save_models(path, models) -> None:
    Path(path).write_text(dumps_models(models), encoding="utf-8")


def load_models(path) -> dict[str, ClassifierModel]:
    return loads_models(Path(path).read_text(encoding="utf-8"))
