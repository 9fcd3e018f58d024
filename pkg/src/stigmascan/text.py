"""Rule-based sentence segmentation and token normalization for note text.

Sentences are cut at

* sentence-final ``.``, ``!`` or ``?`` (optionally followed by closing quotes
  or brackets) when whitespace follows, unless the chunk ending in the period
  is a listed abbreviation ("Dr.", "pt.", "q.d.") or a line-initial item
  number ("1.");
* blank lines;
* the start of a bulleted or numbered line item.

Single newlines inside a paragraph are treated as ordinary whitespace, since
clinical notes are hard-wrapped. Offsets are Python string (code point)
indices into the original note text.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from functools import lru_cache

from .config import data_path, iter_lines

# Characters stripped from either end of a token. Word-internal occurrences
# ("frequent-flier", "adamant/belligerent", "junkie's") survive.
PUNCT = string.punctuation + "‘’“”«»–—…•·"

_TERMINAL = re.compile(r"[.!?]+[\"')\]’”]*(?=\s)")
_BLANK_LINE = re.compile(r"\n[ \t\r\f\v]*\n")
_ITEM_START = re.compile(r"\n(?=[ \t]*(?:[-*•·]|\d{1,3}[.)])[ \t])")
_ITEM_NUMBER = re.compile(r"\d{1,3}[.)]")


@dataclass(frozen=True, slots=True)
class Token:
    surface: str
    norm: str
    char_span: tuple[int, int]


@dataclass(frozen=True, slots=True)
class Sentence:
    note_id: str
    index: int
    char_span: tuple[int, int]
    tokens: tuple[Token, ...] = field(default=())

    @property
    def norms(self) -> list[str]:
        return [t.norm for t in self.tokens]


def load_abbreviations(path=None) -> frozenset[str]:
    path = path or data_path("abbreviations.txt")
    return frozenset(line.strip().lower() for _, line in iter_lines(path))


@lru_cache(maxsize=1)
def default_abbreviations() -> frozenset[str]:
    return load_abbreviations()


def normalize(surface: str) -> str:
    """Lowercase and strip surrounding punctuation; may return ``""``."""
    return surface.lower().strip(PUNCT)


def _is_abbreviation(text, end, abbreviations):
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    chunk = text[start:end]
    if chunk.lower() in abbreviations:
        return True
    # a numbered list item such as "1." at the start of a line
    if _ITEM_NUMBER.fullmatch(chunk):
        j = start - 1
        while j >= 0 and text[j] in " \t":
            j -= 1
        return j < 0 or text[j] == "\n"
    return False


def sentence_spans(text: str, abbreviations=None) -> list[tuple[int, int]]:
    """Character spans of the sentences in ``text``, trimmed of whitespace."""
    if not text:
        return []
    if abbreviations is None:
        abbreviations = default_abbreviations()
    cuts = {0, len(text)}
    for m in _BLANK_LINE.finditer(text):
        cuts.add(m.start())
    for m in _ITEM_START.finditer(text):
        cuts.add(m.start())
    for m in _TERMINAL.finditer(text):
        # the chunk must end in the period itself, not a trailing quote
        period_end = m.start() + len(m.group().rstrip("\"')]’”"))
        if text[period_end - 1] == "." and _is_abbreviation(text, period_end, abbreviations):
            continue
        cuts.add(m.end())
    bounds = sorted(cuts)
    spans = []
    for a, b in zip(bounds, bounds[1:]):
        while a < b and text[a].isspace():
            a += 1
        while b > a and text[b - 1].isspace():
            b -= 1
        if a < b:
            spans.append((a, b))
    return spans


def normalize_tokens(sentence_text: str, offset: int = 0) -> list[Token]:
    """Whitespace tokens with normalized forms; punctuation-only tokens are dropped."""
    tokens = []
    for m in re.finditer(r"\S+", sentence_text):
        norm = normalize(m.group())
        if norm:
            tokens.append(Token(m.group(), norm, (offset + m.start(), offset + m.end())))
    return tokens


def segment_sentences(text: str, note_id: str = "", abbreviations=None) -> list[Sentence]:
    """Split a note into tokenized sentences."""
    out = []
    for a, b in sentence_spans(text, abbreviations):
        out.append(Sentence(note_id, len(out), (a, b), tuple(normalize_tokens(text[a:b], a))))
    return out


def sentence_norms(text: str, abbreviations=None) -> list[list[str]]:
    """Normalized token lists per sentence; the fast path used by corpus scans.

    Equivalent to ``[s.norms for s in segment_sentences(text)]`` without
    building ``Token`` objects.
    """
    strip = PUNCT
    out = []
    for a, b in sentence_spans(text, abbreviations):
        norms = [t.strip(strip) for t in text[a:b].lower().split()]
        out.append([t for t in norms if t])
    return out
