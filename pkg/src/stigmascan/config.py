"""Readers for the small line-oriented data files shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ConfigError


def data_path(name: str) -> Path:
    """Path of a data file bundled in ``stigmascan/data``."""
    return Path(str(resources.files("stigmascan") / "data" / name))


def iter_lines(path):
    """Yield ``(lineno, text)`` for non-blank, non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def read_key_values(path) -> dict[str, list[str]]:
    """Parse ``key = v1 | v2 | ...`` lines.

    A key may appear on several lines; its values accumulate in file order.
    """
    out: dict[str, list[str]] = {}
    for lineno, line in iter_lines(path):
        key, sep, rest = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value | ...'")
        values = [v.strip() for v in rest.split("|")]
        out.setdefault(key, []).extend(v for v in values if v)
    return out


def invert_mapping(table: dict[str, list[str]], path, fold_case=False) -> dict[str, str]:
    """Turn ``category -> [labels]`` into ``label -> category``.

    A label listed under two different categories is a configuration error.
    """
    lookup: dict[str, str] = {}
    for category, labels in table.items():
        for label in labels:
            key = label.casefold() if fold_case else label
            prev = lookup.get(key)
            if prev is not None and prev != category:
                raise ConfigError(f"{path}: label {label!r} listed under {prev} and {category}")
            lookup[key] = category
    return lookup
