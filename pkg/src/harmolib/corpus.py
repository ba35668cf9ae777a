"""Corpus files: one titled chord progression per record."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .chords import ChordError, ChordLabel, parse_chord_symbol


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Piece:
    title: str
    chords: tuple[ChordLabel, ...]

    def __post_init__(self):
        if not self.chords:
            raise CorpusError(f"piece {self.title!r} has no chords")

    @property
    def length(self) -> int:
        return len(self.chords)

    @property
    def baseline_size(self) -> int:
        # any CNF derivation of n chords has exactly 2n-1 nodes
        return 2 * len(self.chords) - 1


def _parse_chords(title: str, symbols: list[str]) -> tuple[ChordLabel, ...]:
    out = []
    for sym in symbols:
        try:
            out.append(parse_chord_symbol(sym))
        except ChordError as exc:
            raise CorpusError(f"piece {title!r}: {exc}") from exc
    return tuple(out)


def load_corpus(path: str | Path) -> list[Piece]:
    """Text format: `Title: C7 FM7 ...` per line, `#` comments. A JSON file
    with [{"title": ..., "chords": [...]}] records is accepted as well."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        return _from_json(path, text)
    pieces = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise CorpusError(f"{path}:{lineno}: expected 'Title: chords...'")
        title, _, rest = line.partition(":")
        title = title.strip()
        symbols = rest.split()
        if not title or not symbols:
            raise CorpusError(f"{path}:{lineno}: expected 'Title: chords...'")
        if title in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate piece title {title!r}")
        seen.add(title)
        pieces.append(Piece(title, _parse_chords(title, symbols)))
    if not pieces:
        raise CorpusError(f"{path}: no pieces found")
    return pieces


def _from_json(path: Path, text: str) -> list[Piece]:
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: bad JSON: {exc}") from exc
    if not isinstance(records, list) or not records:
        raise CorpusError(f"{path}: expected a non-empty list of records")
    pieces = []
    seen = set()
    for rec in records:
        if not isinstance(rec, dict) or "title" not in rec or "chords" not in rec:
            raise CorpusError(f"{path}: records need 'title' and 'chords'")
        title = str(rec["title"])
        if title in seen:
            raise CorpusError(f"{path}: duplicate piece title {title!r}")
        seen.add(title)
        pieces.append(Piece(title, _parse_chords(title, [str(c) for c in rec["chords"]])))
    return pieces
