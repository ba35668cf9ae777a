"""Chord labels: spelled root, core quality, opaque extension tail."""

from __future__ import annotations

from dataclasses import dataclass

from .pitch import PitchError, SpelledPitchClass


class ChordError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ThirdsStack:
    """Core seventh-chord quality as a stack of thirds, root upward.

    Entries are "M" (major third) or "m" (minor third). Qualities compare
    on the essential three thirds only; upper extensions live in the
    chord's `ext` field instead.
    """

    thirds: tuple[str, ...]

    def __post_init__(self):
        if not all(t in ("M", "m") for t in self.thirds):
            raise ChordError(f"bad thirds stack {self.thirds!r}")


@dataclass(frozen=True, order=True)
class SusQuality:
    """Suspended chord: no third, hence not a stack of thirds."""


@dataclass(frozen=True, order=True)
class OtherQuality:
    token: str


ChordQuality = ThirdsStack | SusQuality | OtherQuality

# Quality tokens, longest-match-first.
QUALITY_TOKENS: dict[str, ChordQuality] = {
    "M7": ThirdsStack(("M", "m", "M")),
    "m7": ThirdsStack(("m", "M", "m")),
    "%7": ThirdsStack(("m", "m", "M")),
    "o7": ThirdsStack(("m", "m", "m")),
    "sus": SusQuality(),
    "7": ThirdsStack(("M", "m", "m")),
}

DOMINANT_SEVENTH = QUALITY_TOKENS["7"]

_TOKEN_ORDER = sorted(QUALITY_TOKENS, key=len, reverse=True)


def quality_token(quality: ChordQuality) -> str:
    for token in _TOKEN_ORDER:
        if QUALITY_TOKENS[token] == quality:
            return token
    if isinstance(quality, OtherQuality):
        return quality.token
    raise ChordError(f"no symbol for quality {quality!r}")


@dataclass(frozen=True)
class ChordLabel:
    root: SpelledPitchClass
    quality: ChordQuality
    ext: str = ""

    def __str__(self) -> str:
        return f"{self.root}{quality_token(self.quality)}{self.ext}"


def parse_chord_symbol(text: str) -> ChordLabel:
    """Parse `<letter><accidental?><quality><ext?>`, e.g. "Bb%7" or "F#sus"."""
    if not text:
        raise ChordError("empty chord symbol")
    pos = 1
    if text[0] not in "ABCDEFG":
        raise ChordError(f"unknown root letter {text[0]!r} in {text!r}")
    while pos < len(text) and text[pos] in "#b":
        pos += 1
    try:
        root = SpelledPitchClass.parse(text[:pos])
    except PitchError as exc:
        raise ChordError(str(exc)) from exc
    rest = text[pos:]
    for token in _TOKEN_ORDER:
        if rest.startswith(token):
            return ChordLabel(root, QUALITY_TOKENS[token], rest[len(token):])
    raise ChordError(f"unknown quality token {rest!r} in {text!r}")


def render_chord_symbol(label: ChordLabel) -> str:
    return str(label)
