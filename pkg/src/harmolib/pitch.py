"""Spelled pitch classes and spelled intervals.

Roots keep their letter spelling (F# is not Gb) because the grammar's
interval constraints are enharmonically strict: a descending diminished
fifth never satisfies a perfect-fifth constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

_LETTERS = "CDEFGAB"
_LETTER_SEMIS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_PERFECT_NUMBERS = frozenset({1, 4, 5})
# Semitone span of the perfect/major interval for each generic number.
_BASE_SEMIS = {1: 0, 2: 2, 3: 4, 4: 5, 5: 7, 6: 9, 7: 11}


class PitchError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class SpelledPitchClass:
    letter: str
    accidental: int = 0  # sharps positive, flats negative

    def __post_init__(self):
        if self.letter not in _LETTERS:
            raise PitchError(f"unknown root letter {self.letter!r}")
        if not -2 <= self.accidental <= 2:
            raise PitchError(f"accidental out of range: {self.accidental:+d}")

    @classmethod
    def parse(cls, text: str) -> "SpelledPitchClass":
        if not text or text[0] not in _LETTERS:
            raise PitchError(f"unknown root letter {text[:1]!r}")
        accidental = 0
        for ch in text[1:]:
            if ch == "#":
                accidental += 1
            elif ch == "b":
                accidental -= 1
            else:
                raise PitchError(f"unknown accidental {ch!r} in {text!r}")
        return cls(text[0], accidental)

    def __str__(self) -> str:
        marks = "#" * self.accidental if self.accidental >= 0 else "b" * -self.accidental
        return self.letter + marks

    @property
    def step(self) -> int:
        return _LETTERS.index(self.letter)

    @property
    def semitones(self) -> int:
        return (_LETTER_SEMIS[self.letter] + self.accidental) % 12


@dataclass(frozen=True, order=True)
class SpelledInterval:
    """Generic size 1..7 plus a semitone offset from perfect/major."""

    number: int
    offset: int = 0

    def __post_init__(self):
        if not 1 <= self.number <= 7:
            raise PitchError(f"interval number out of range: {self.number}")

    @property
    def quality(self) -> str:
        if self.number in _PERFECT_NUMBERS:
            if self.offset == 0:
                return "P"
            return "A" * self.offset if self.offset > 0 else "d" * -self.offset
        if self.offset == 0:
            return "M"
        if self.offset == -1:
            return "m"
        return "A" * self.offset if self.offset > 0 else "d" * (-self.offset - 1)

    @classmethod
    def parse(cls, text: str) -> "SpelledInterval":
        body = text.rstrip("1234567")
        digits = text[len(body):]
        if len(digits) != 1:
            raise PitchError(f"bad interval {text!r}")
        number = int(digits)
        perfect = number in _PERFECT_NUMBERS
        if body == "P" and perfect:
            offset = 0
        elif body == "M" and not perfect:
            offset = 0
        elif body == "m" and not perfect:
            offset = -1
        elif body and set(body) == {"A"}:
            offset = len(body)
        elif body and set(body) == {"d"}:
            offset = -len(body) if perfect else -len(body) - 1
        else:
            raise PitchError(f"bad interval quality {body!r} in {text!r}")
        return cls(number, offset)

    def __str__(self) -> str:
        return f"{self.quality}{self.number}"

    @property
    def semitones(self) -> int:
        return (_BASE_SEMIS[self.number] + self.offset) % 12


def _fold(delta: int) -> int:
    return (delta + 6) % 12 - 6


def interval_down(a: SpelledPitchClass, b: SpelledPitchClass) -> SpelledInterval:
    """Descending spelled interval from `a` down to `b`."""
    steps = (a.step - b.step) % 7
    number = steps + 1
    semis = (a.semitones - b.semitones) % 12
    return SpelledInterval(number, _fold(semis - _BASE_SEMIS[number]))


def transpose_up(p: SpelledPitchClass, iv: SpelledInterval) -> SpelledPitchClass:
    letter = _LETTERS[(p.step + iv.number - 1) % 7]
    target = (p.semitones + iv.semitones) % 12
    return SpelledPitchClass(letter, _fold(target - _LETTER_SEMIS[letter]))


def transpose_down(p: SpelledPitchClass, iv: SpelledInterval) -> SpelledPitchClass:
    letter = _LETTERS[(p.step - (iv.number - 1)) % 7]
    target = (p.semitones - iv.semitones) % 12
    return SpelledPitchClass(letter, _fold(target - _LETTER_SEMIS[letter]))
