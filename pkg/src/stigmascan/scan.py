"""Corpus scanning: segmentation, lexicon matching and classification per note."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .classifier import ClassifierModel, extract_features, predict_proba_features
from .lexicon import Matcher
from .text import default_abbreviations, sentence_norms

THREADS_ENV = "STIGMA_SCAN_THREADS"

LABEL_COLUMNS = ("note_id", "sentence_index", "lexicon", "term", "token_start", "token_end", "probability", "label")


@dataclass(frozen=True, slots=True)
class SentenceLabel:
    note_id: str
    sentence_index: int
    lexicon_name: str
    term: str
    token_start: int
    token_end: int
    probability: float
    positive: bool


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def scan_note(note_id, text, matcher: Matcher, models=None, abbreviations=None) -> list[SentenceLabel]:
    """Labels for every lexicon match in one note.

    With no model for a lexicon, every match of that lexicon is positive.
    """
    models = models or {}
    out = []
    for index, norms in enumerate(sentence_norms(text, abbreviations)):
        for m in matcher.match_norms(norms):
            model: ClassifierModel | None = models.get(m.lexicon_name)
            if model is None:
                p, positive = 1.0, True
            else:
                fmap = extract_features(norms, m.token_span, model.window_k, term=m.term)
                p = predict_proba_features(model, fmap)
                positive = p >= model.threshold
            out.append(SentenceLabel(note_id, index, m.lexicon_name, m.term, *m.token_span, p, positive))
    return out


_worker_state: dict = {}


def _init_worker(matcher, models, abbreviations):
    _worker_state.update(matcher=matcher, models=models, abbreviations=abbreviations)


def _scan_chunk(chunk):
    st = _worker_state
    out = []
    for note_id, text in chunk:
        out.extend(scan_note(note_id, text, st["matcher"], st["models"], st["abbreviations"]))
    return out


def scan_texts(items, matcher: Matcher, models=None, threads: int | None = None, chunk_size: int = 500):
    """Scan ``(note_id, text)`` pairs; output order follows input order.

    ``threads > 1`` fans chunks out to worker processes. Results do not
    depend on the worker count.
    """
    items = list(items)
    threads = resolve_threads(threads)
    abbreviations = default_abbreviations()
    if threads == 1 or len(items) <= chunk_size:
        _init_worker(matcher, models or {}, abbreviations)
        return _scan_chunk(items)
    chunks = [items[i : i + chunk_size] for i in range(0, len(items), chunk_size)]
    with ProcessPoolExecutor(
        max_workers=threads, initializer=_init_worker, initargs=(matcher, models or {}, abbreviations)
    ) as pool:
        out = []
        for part in pool.map(_scan_chunk, chunks):
            out.extend(part)
    return out


def scan_corpus(corpus, matcher: Matcher, models=None, threads=None) -> list[SentenceLabel]:
    return scan_texts(((n.note_id, n.text) for n in corpus.notes), matcher, models, threads)


def write_labels(path, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LABEL_COLUMNS)
        for lb in labels:
            w.writerow([lb.note_id, lb.sentence_index, lb.lexicon_name, lb.term, lb.token_start, lb.token_end,
                        repr(lb.probability), int(lb.positive)])


def read_labels(path) -> list[SentenceLabel]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                SentenceLabel(
                    row["note_id"],
                    int(row["sentence_index"]),
                    row["lexicon"],
                    row["term"],
                    int(row["token_start"]),
                    int(row["token_end"]),
                    float(row["probability"]),
                    row["label"].strip() == "1",
                )
            )
    return out
