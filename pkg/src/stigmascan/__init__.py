"""Detect stigmatizing labels and doubt markers in clinical notes and model their rates."""

from .errors import StigmaScanError
from .lexicon import DOUBT, STIGMA, Lexicon, Match, Matcher, build_matcher, default_lexicons, load_lexicon
from .text import Sentence, Token, segment_sentences

__all__ = [
    "DOUBT",
    "STIGMA",
    "Lexicon",
    "Match",
    "Matcher",
    "Sentence",
    "StigmaScanError",
    "Token",
    "build_matcher",
    "default_lexicons",
    "load_lexicon",
    "segment_sentences",
]
