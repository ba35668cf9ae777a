"""Relational grammar over chord labels, loaded from a YAML config.

The grammar is headed and in Chomsky normal form: binary rules relate two
chord labels and reduce the pair to the label on the designated head side;
termination rules let a label produce itself as a surface chord. Rule
constraints are pure predicates over the pair (left, right) built from
spelled-interval and quality tests, so every rule is invariant under
transposition of both labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator

import yaml

from .chords import (
    ChordLabel,
    ChordQuality,
    QUALITY_TOKENS,
    SusQuality,
    ThirdsStack,
)
from .pitch import PitchError, SpelledInterval, interval_down

SIDES = ("left", "right")


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class Constraint:
    kind: str
    side: str = ""
    from_side: str = ""
    to_side: str = ""
    interval: SpelledInterval | None = None
    quality: ChordQuality | None = None

    def holds(self, left: ChordLabel, right: ChordLabel) -> bool:
        pair = {"left": left, "right": right}
        if self.kind == "interval_down":
            got = interval_down(pair[self.from_side].root, pair[self.to_side].root)
            return got == self.interval
        if self.kind == "quality_is":
            return _core_quality_equal(pair[self.side].quality, self.quality)
        if self.kind == "quality_is_not":
            return not _core_quality_equal(pair[self.side].quality, self.quality)
        if self.kind == "roots_equal":
            return left.root == right.root
        if self.kind == "qualities_equal":
            return _core_quality_equal(left.quality, right.quality)
        raise GrammarError(f"unknown constraint kind {self.kind!r}")


def _core_quality_equal(a: ChordQuality, b: ChordQuality) -> bool:
    # Stacks compare on the essential three thirds; a sus or unknown
    # quality is never equal to a stack of thirds.
    if isinstance(a, ThirdsStack) and isinstance(b, ThirdsStack):
        return a.thirds[:3] == b.thirds[:3]
    return a == b


@dataclass(frozen=True)
class GrammarRule:
    id: str
    kind: str  # "binary" | "termination"
    constraints: tuple[Constraint, ...]
    head: str = ""  # binary only: "left" | "right"
    relation: str = ""  # binary only


@dataclass(frozen=True)
class Grammar:
    rules: tuple[GrammarRule, ...]
    start_policy: str = "any-full-span"
    source: str = ""

    @property
    def binary_rules(self) -> tuple[GrammarRule, ...]:
        return tuple(r for r in self.rules if r.kind == "binary")

    @property
    def termination_rules(self) -> tuple[GrammarRule, ...]:
        return tuple(r for r in self.rules if r.kind == "termination")

    def rule(self, rule_id: str) -> GrammarRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise GrammarError(f"unknown rule id {rule_id!r}")

    def binary_matches(self, left: ChordLabel, right: ChordLabel) -> Iterator[GrammarRule]:
        for r in self.binary_rules:
            if check_rule(r, left, right):
                yield r

    def terminations(self, label: ChordLabel) -> Iterator[GrammarRule]:
        for r in self.termination_rules:
            if all(c.holds(label, label) for c in r.constraints):
                yield r


def check_rule(rule: GrammarRule, x: ChordLabel, y: ChordLabel) -> bool:
    """True iff the binary rule's constraints all hold for the pair (x, y)."""
    if rule.kind != "binary":
        raise GrammarError(f"check_rule needs a binary rule, got {rule.id!r}")
    return all(c.holds(x, y) for c in rule.constraints)


def head_label(rule: GrammarRule, left: ChordLabel, right: ChordLabel) -> ChordLabel:
    return left if rule.head == "left" else right


# --- config loading -------------------------------------------------------

_CONSTRAINT_FIELDS = {
    "interval_down": {"kind", "from", "to", "interval"},
    "quality_is": {"kind", "side", "quality"},
    "quality_is_not": {"kind", "side", "quality"},
    "roots_equal": {"kind"},
    "qualities_equal": {"kind"},
}


def _to_plain(node: yaml.Node):
    """yaml node -> (value, line) with per-item lines preserved in mappings."""
    line = node.start_mark.line + 1
    if isinstance(node, yaml.ScalarNode):
        return yaml.safe_load(node.value) if node.value != "" else None, line
    if isinstance(node, yaml.SequenceNode):
        return [_to_plain(child) for child in node.value], line
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, val_node in node.value:
            key = str(yaml.safe_load(key_node.value))
            out[key] = _to_plain(val_node)
        return out, line
    raise GrammarError(f"unsupported YAML node at line {line}")


def _fail(rule_id: str, line: int, message: str) -> None:
    raise GrammarError(f"rule {rule_id!r} (line {line}): {message}")


def _parse_quality(token, rule_id: str, line: int) -> ChordQuality:
    token = str(token)
    if token not in QUALITY_TOKENS:
        _fail(rule_id, line, f"unknown quality token {token!r}")
    return QUALITY_TOKENS[token]


def _parse_constraint(raw, rule_id: str) -> Constraint:
    value, line = raw
    if not isinstance(value, dict):
        _fail(rule_id, line, "constraint must be a mapping")
    fields = {k: v for k, (v, _) in value.items()}
    kind = fields.get("kind")
    if kind not in _CONSTRAINT_FIELDS:
        _fail(rule_id, line, f"unknown constraint kind {kind!r}")
    allowed = _CONSTRAINT_FIELDS[kind]
    for name in value:
        if name not in allowed:
            _fail(rule_id, value[name][1], f"unknown field {name!r} for constraint {kind!r}")
    missing = allowed - set(value)
    if missing:
        _fail(rule_id, line, f"constraint {kind!r} missing fields {sorted(missing)}")
    if kind == "interval_down":
        for side_field in ("from", "to"):
            if fields[side_field] not in SIDES:
                _fail(rule_id, line, f"{side_field!r} must be one of {SIDES}")
        try:
            interval = SpelledInterval.parse(str(fields["interval"]))
        except PitchError as exc:
            _fail(rule_id, line, str(exc))
        return Constraint(kind, from_side=fields["from"], to_side=fields["to"], interval=interval)
    if kind in ("quality_is", "quality_is_not"):
        if fields["side"] not in SIDES:
            _fail(rule_id, line, f"'side' must be one of {SIDES}")
        return Constraint(kind, side=fields["side"], quality=_parse_quality(fields["quality"], rule_id, line))
    return Constraint(kind)


def _parse_rule(raw) -> GrammarRule:
    value, line = raw
    if not isinstance(value, dict):
        raise GrammarError(f"rule entry at line {line} must be a mapping")
    rule_id = str(value.get("id", (None, line))[0] or "")
    if not rule_id:
        raise GrammarError(f"rule at line {line} has no id")
    kind = value.get("kind", (None, line))[0]
    known = {"id", "kind", "head", "relation", "constraints"}
    for name in value:
        if name not in known:
            _fail(rule_id, value[name][1], f"unknown field {name!r}")
    if kind not in ("binary", "termination"):
        _fail(rule_id, line, f"kind must be 'binary' or 'termination', got {kind!r}")
    raw_constraints = value.get("constraints", ([], line))[0] or []
    constraints = tuple(_parse_constraint(rc, rule_id) for rc in raw_constraints)
    if kind == "binary":
        head = value.get("head", (None, line))[0]
        if head not in SIDES:
            _fail(rule_id, line, f"binary rule needs head in {SIDES}, got {head!r}")
        relation = str(value.get("relation", ("", line))[0] or "")
        if not relation:
            _fail(rule_id, line, "binary rule needs a relation name")
        return GrammarRule(rule_id, "binary", constraints, head=head, relation=relation)
    if "head" in value or "relation" in value:
        _fail(rule_id, line, "termination rules take no head or relation")
    return GrammarRule(rule_id, "termination", constraints)


def load_grammar(path: str | Path) -> Grammar:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GrammarError(f"cannot read grammar file {path}: {exc}") from exc
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise GrammarError(f"malformed YAML in {path}: {exc}") from exc
    if root is None:
        raise GrammarError(f"empty grammar file {path}")
    value, line = _to_plain(root)
    if not isinstance(value, dict) or "rules" not in value:
        raise GrammarError(f"{path}: top level must be a mapping with a 'rules' list")
    known = {"rules", "start_policy"}
    for name in value:
        if name not in known:
            raise GrammarError(f"{path} (line {value[name][1]}): unknown field {name!r}")
    start_policy = "any-full-span"
    if "start_policy" in value:
        start_policy = str(value["start_policy"][0])
        if start_policy != "any-full-span":
            raise GrammarError(
                f"{path} (line {value['start_policy'][1]}): "
                f"unsupported start_policy {start_policy!r}"
            )
    raw_rules = value["rules"][0]
    if not isinstance(raw_rules, list) or not raw_rules:
        raise GrammarError(f"{path}: 'rules' must be a non-empty list")
    rules = tuple(_parse_rule(raw) for raw in raw_rules)
    seen: set[str] = set()
    for r in rules:
        if r.id in seen:
            raise GrammarError(f"duplicate rule id {r.id!r}")
        seen.add(r.id)
    if not any(r.kind == "termination" for r in rules):
        raise GrammarError(f"{path}: grammar needs at least one termination rule")
    return Grammar(rules, start_policy=start_policy, source=str(path))


def default_grammar_path() -> Path:
    return Path(str(resources.files("harmolib.data").joinpath("grammar_default.yaml")))


def load_default_grammar() -> Grammar:
    return load_grammar(default_grammar_path())
