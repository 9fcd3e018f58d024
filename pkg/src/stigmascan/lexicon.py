"""Lexicon loading and token-level multi-pattern matching.

Terms are matched as exact sequences of normalized tokens, never as
substrings of longer tokens. The shipped lexicons already enumerate the
inflected variants they care about ("refuse", "refuses", "refusing"), so no
stemming is applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import data_path
from .errors import EmptyLexicon
from .text import Sentence, normalize

log = logging.getLogger(__name__)

DOUBT = "doubt_markers"
STIGMA = "stigmatizing_labels"
LEXICON_NAMES = (STIGMA, DOUBT)

_STEM_DIRECTIVE = "#! stems:"


@dataclass(frozen=True)
class Lexicon:
    """A normalized term list.

    ``n_entries`` counts the non-comment lines in the source file, before
    duplicate collapse; ``terms`` holds the distinct normalized token
    sequences in first-seen order.
    """

    name: str
    terms: tuple[tuple[str, ...], ...]
    n_entries: int
    stem_terms: frozenset[tuple[str, ...]] = frozenset()
    missing_stems: tuple[str, ...] = ()
    collisions: tuple[tuple[str, str], ...] = ()
    source: str = ""

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        if isinstance(term, str):
            term = normalize_term(term)
        return term in set(self.terms)

    @property
    def term_strings(self) -> list[str]:
        return [" ".join(t) for t in self.terms]


@dataclass(frozen=True, slots=True)
class Match:
    term: str
    lexicon_name: str
    token_span: tuple[int, int]


def normalize_term(raw: str) -> tuple[str, ...]:
    """Token sequence of a lexicon line, normalized like note tokens."""
    return tuple(n for n in (normalize(t) for t in raw.split()) if n)


def load_lexicon(path, expected_name: str) -> Lexicon:
    """Read a one-term-per-line lexicon file.

    Lines normalizing to a term already seen are collapsed (first kept) and
    recorded in ``collisions`` as ``(raw_line, kept_term)``.
    """
    path = Path(path)
    seen: dict[tuple[str, ...], str] = {}
    collisions = []
    stems: list[str] = []
    n_entries = 0
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith(_STEM_DIRECTIVE):
                stems.extend(line[len(_STEM_DIRECTIVE):].split())
                continue
            if not line or line.startswith("#"):
                continue
            n_entries += 1
            term = normalize_term(line)
            if not term:
                collisions.append((line, ""))
                continue
            if term in seen:
                collisions.append((line, " ".join(term)))
                continue
            seen[term] = line
    if not seen:
        raise EmptyLexicon(f"{path}: no terms")
    stem_seqs = [normalize_term(s) for s in stems]
    present = frozenset(s for s in stem_seqs if s in seen)
    missing = tuple(" ".join(s) for s in stem_seqs if s not in seen)
    if collisions:
        log.info("%s: %d entries collapsed into existing terms", path.name, len(collisions))
    return Lexicon(expected_name, tuple(seen), n_entries, present, missing, tuple(collisions), str(path))


def default_lexicons() -> list[Lexicon]:
    """The two shipped lexicons, stigmatizing labels first."""
    return [
        load_lexicon(data_path("stigmatizing_labels.txt"), STIGMA),
        load_lexicon(data_path("doubt_markers.txt"), DOUBT),
    ]


@dataclass
class _Node:
    children: dict = field(default_factory=dict)
    # lexicon name -> term string, for sequences ending here
    accept: dict = field(default_factory=dict)


class Matcher:
    """Token trie over every term of every lexicon.

    Scanning walks the trie from each token position once; with terms at
    most a few tokens long this is linear in sentence length. Matches are
    leftmost-longest and non-overlapping within each lexicon; lexicons do
    not shadow one another.
    """

    def __init__(self, lexicons):
        lexicons = list(lexicons)
        if not lexicons:
            raise ValueError("build_matcher needs at least one lexicon")
        self.lexicon_names = tuple(lx.name for lx in lexicons)
        self._root = _Node()
        n = 0
        for lx in lexicons:
            for term in lx.terms:
                node = self._root
                for tok in term:
                    node = node.children.setdefault(tok, _Node())
                if lx.name not in node.accept:
                    node.accept[lx.name] = " ".join(term)
                    n += 1
        self.n_patterns = n
        self.shared_patterns = self._count_shared()
        # flat view of the first trie level for the hot loop
        self._first = self._root.children

    def _count_shared(self):
        stack, shared = [self._root], 0
        while stack:
            node = stack.pop()
            shared += len(node.accept) > 1
            stack.extend(node.children.values())
        return shared

    def match_norms(self, norms) -> list[Match]:
        """Matches over a list of normalized tokens, ordered by start token."""
        first = self._first
        out = []
        next_free: dict[str, int] = {}
        n = len(norms)
        for i in range(n):
            node = first.get(norms[i])
            if node is None:
                continue
            best: dict[str, tuple[str, int]] = {}
            j = i + 1
            while True:
                for name, term in node.accept.items():
                    best[name] = (term, j)
                if j >= n:
                    break
                node = node.children.get(norms[j])
                if node is None:
                    break
                j += 1
            for name in self.lexicon_names:
                hit = best.get(name)
                if hit is not None and next_free.get(name, 0) <= i:
                    out.append(Match(hit[0], name, (i, hit[1])))
                    next_free[name] = hit[1]
        return out

    def match_sentence(self, sentence: Sentence) -> list[Match]:
        return self.match_norms(sentence.norms)


def build_matcher(lexicons) -> Matcher:
    return Matcher(lexicons)


def match_sentence(matcher: Matcher, sentence: Sentence) -> list[Match]:
    return matcher.match_sentence(sentence)
