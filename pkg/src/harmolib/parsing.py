"""CYK-style deductive parsing of a corpus into a shared e-graph.

Every well-formed span gets one e-class keyed by (piece, head label,
start, stop); the class collects every derivation of that span, so the
graph behaves like a shared packed parse forest. Terminal derivation nodes
carry their word position in the op, which keeps the derivation classes of
unrelated spans separate; the learning stages read nodes through a
position-free template view, so patterns stay key-invariant.

Spans are end-exclusive. Any head label spanning a whole piece counts as a
complete parse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .chords import ChordLabel
from .corpus import Piece
from .egraph import (
    Action,
    AddFact,
    Analysis,
    EClassId,
    EGraph,
    ENode,
    FactDelta,
    SaturationReport,
)
from .grammar import Grammar, check_rule, head_label
from .templates import Branch, Leaf, Template

WORD = "word"
PHRASE = "phrase"
ROOT_CONNECTED = "root_connected"


class ParseCycleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpanKey:
    piece: str
    head: ChordLabel
    start: int
    stop: int

    def sort_key(self) -> tuple:
        return (self.piece, self.start, self.stop, str(self.head))

    def text(self) -> str:
        return f"({self.piece}, {self.head}, {self.start}, {self.stop})"


def op_is_pure(op) -> bool:
    return isinstance(op, tuple) and op[0] == "pure"


def op_is_rule(op) -> bool:
    return isinstance(op, tuple) and op[0] == "rule"


def op_is_call(op) -> bool:
    return isinstance(op, tuple) and op[0] == "call"


def pure_op(rule_id: str, piece: str, position: int) -> tuple:
    return ("pure", rule_id, piece, position)


def rule_op(rule_id: str) -> tuple:
    return ("rule", rule_id)


def call_op(fn: str, routing: tuple[int, ...]) -> tuple:
    return ("call", fn, routing)


@dataclass
class ParseForest:
    graph: EGraph
    grammar: Grammar
    pieces: list[Piece]
    span_classes: dict[SpanKey, EClassId] = field(default_factory=dict)
    _inverse_version: int = -1
    _inverse: dict[EClassId, SpanKey] = field(default_factory=dict)
    _node_cache_version: int = -1
    _node_cache: dict[EClassId, tuple[ENode, ...]] = field(default_factory=dict)
    _marked_cache: list[EClassId] = field(default_factory=list)

    def piece(self, title: str) -> Piece:
        for p in self.pieces:
            if p.title == title:
                return p
        raise KeyError(title)

    def _refresh_caches(self) -> None:
        if self._node_cache_version != self.graph.version:
            self.graph.rebuild()
        if self._node_cache_version != self.graph.version:
            self._node_cache = {}
            self._marked_cache = []
            self._node_cache_version = self.graph.version

    def all_nodes(self, cid: EClassId) -> tuple[ENode, ...]:
        """Cached per graph version; node order is deterministic."""
        self._refresh_caches()
        cid = self.graph.find(cid)
        got = self._node_cache.get(cid)
        if got is None:
            got = self.graph.nodes(cid)
            self._node_cache[cid] = got
        return got

    def class_of(self, key: SpanKey) -> EClassId | None:
        cid = self.span_classes.get(key)
        return None if cid is None else self.graph.find(cid)

    def key_of(self, cid: EClassId) -> SpanKey:
        self._refresh_inverse()
        return self._inverse[self.graph.find(cid)]

    def _refresh_inverse(self) -> None:
        if self._inverse_version != self.graph.version:
            self._inverse = {
                self.graph.find(cid): key for key, cid in self.span_classes.items()
            }
            self._inverse_version = self.graph.version

    def keys_sorted(self) -> list[SpanKey]:
        return sorted(self.span_classes, key=SpanKey.sort_key)

    def full_span_keys(self, piece: Piece) -> list[SpanKey]:
        return [
            k
            for k in self.keys_sorted()
            if k.piece == piece.title and k.start == 0 and k.stop == piece.length
        ]

    def full_span_classes(self, piece: Piece) -> list[EClassId]:
        return [self.graph.find(self.span_classes[k]) for k in self.full_span_keys(piece)]

    def is_marked(self, cid: EClassId) -> bool:
        return bool(self.graph.get_analysis(ROOT_CONNECTED, cid))

    def marked_classes(self) -> list[EClassId]:
        self._refresh_caches()
        if self._marked_cache:
            return list(self._marked_cache)
        out = [
            self.graph.find(cid)
            for key, cid in sorted(self.span_classes.items(), key=lambda kv: kv[0].sort_key())
            if self.is_marked(cid)
        ]
        seen: set[int] = set()
        unique = []
        for cid in out:
            if cid not in seen:
                seen.add(cid)
                unique.append(cid)
        self._marked_cache = unique
        return list(unique)


@dataclass(frozen=True)
class AddDerivation(Action):
    forest: ParseForest
    op: tuple
    child_keys: tuple[SpanKey, ...]
    span: SpanKey

    def apply(self, graph: EGraph, delta: FactDelta) -> None:
        children = []
        for key in self.child_keys:
            cid = self.forest.class_of(key)
            if cid is None:
                raise KeyError(f"child span missing: {key.text()}")
            children.append(cid)
        node_cid = graph.add(self.op, tuple(children))
        existing = self.forest.span_classes.get(self.span)
        if existing is None:
            self.forest.span_classes[self.span] = node_cid
        else:
            graph.union(existing, node_cid)


@dataclass
class TerminationDeduction:
    """word(p, t, i) + termination rule => phrase(p, t, i, i+1) with a
    terminal derivation node in the span's class."""

    forest: ParseForest
    name: str = "cyk-termination"

    def matches(self, graph: EGraph, delta: FactDelta | None) -> Iterator[Action]:
        words = delta.facts(WORD) if delta is not None else list(graph.facts(WORD))
        grammar = self.forest.grammar
        for title, i, label in words:
            for rule in grammar.terminations(label):
                span = SpanKey(title, label, i, i + 1)
                yield AddFact(PHRASE, (title, label, i, i + 1))
                yield AddDerivation(self.forest, pure_op(rule.id, title, i), (), span)


@dataclass
class BinaryDeduction:
    """phrase(p, y, i, j) + phrase(p, z, j, k) + binary rule over (y, z)
    => phrase(p, x, i, k) and a composed derivation node in its class."""

    forest: ParseForest
    name: str = "cyk-binary"

    def matches(self, graph: EGraph, delta: FactDelta | None) -> Iterator[Action]:
        all_phrases = list(graph.facts(PHRASE))
        by_start: dict[tuple[str, int], list[tuple]] = {}
        by_stop: dict[tuple[str, int], list[tuple]] = {}
        for fact in all_phrases:
            title, _, i, j = fact
            by_start.setdefault((title, i), []).append(fact)
            by_stop.setdefault((title, j), []).append(fact)
        if delta is None:
            pairs = self._pairs_full(all_phrases, by_start)
        else:
            pairs = self._pairs_delta(delta.facts(PHRASE), by_start, by_stop)
        grammar = self.forest.grammar
        for left, right in pairs:
            title, y, i, j = left
            _, z, _, k = right
            for rule in grammar.binary_matches(y, z):
                x = head_label(rule, y, z)
                left_key = SpanKey(title, y, i, j)
                right_key = SpanKey(title, z, j, k)
                span = SpanKey(title, x, i, k)
                yield AddFact(PHRASE, (title, x, i, k))
                yield AddDerivation(
                    self.forest, rule_op(rule.id), (left_key, right_key), span
                )

    def _pairs_full(self, phrases, by_start):
        for left in phrases:
            title, _, _, j = left
            for right in by_start.get((title, j), ()):
                yield left, right

    def _pairs_delta(self, new_phrases, by_start, by_stop):
        seen: dict[tuple, None] = {}
        for fact in new_phrases:
            title, _, i, j = fact
            for right in by_start.get((title, j), ()):
                seen.setdefault((fact, right))
            for left in by_stop.get((title, i), ()):
                seen.setdefault((left, fact))
        return list(seen)


def encode_piece(graph: EGraph, piece: Piece) -> list[tuple]:
    """Insert one word fact per chord position; returns the facts."""
    facts = []
    for i, label in enumerate(piece.chords):
        fact = (piece.title, i, label)
        graph.add_fact(WORD, fact)
        facts.append(fact)
    return facts


def cyk_saturate(
    pieces: Iterable[Piece],
    grammar: Grammar,
    *,
    semi_naive: bool = True,
    iteration_cap: int = 10_000,
    reverse_rules: bool = False,
) -> tuple[ParseForest, SaturationReport]:
    graph = EGraph()
    graph.register_analysis(
        ROOT_CONNECTED, Analysis(make=lambda node: False, join=lambda a, b: a or b)
    )
    forest = ParseForest(graph, grammar, list(pieces))
    for piece in forest.pieces:
        encode_piece(graph, piece)
    rules = [TerminationDeduction(forest), BinaryDeduction(forest)]
    if reverse_rules:
        rules = rules[::-1]
    report = graph.run_to_fixpoint(
        rules, iteration_cap=iteration_cap, semi_naive=semi_naive
    )
    return forest, report


def filter_root_connected(forest: ParseForest) -> list[EClassId]:
    """Mark every class reachable from a full-span class; later stages read
    only marked classes, which drops fragments outside any complete parse."""
    graph = forest.graph
    queue: list[EClassId] = []
    for piece in forest.pieces:
        for key in forest.full_span_keys(piece):
            queue.append(forest.class_of(key))
    seen: set[EClassId] = set()
    while queue:
        cid = graph.find(queue.pop())
        if cid in seen:
            continue
        seen.add(cid)
        graph.set_analysis(ROOT_CONNECTED, cid, True)
        for node in graph.nodes(cid):
            if op_is_pure(node.op) or op_is_rule(node.op):
                queue.extend(node.children)
    return forest.marked_classes()


def plain_nodes(forest: ParseForest, cid: EClassId) -> tuple[ENode, ...]:
    return tuple(
        n for n in forest.all_nodes(cid) if op_is_pure(n.op) or op_is_rule(n.op)
    )


def count_derivations(forest: ParseForest, cid: EClassId) -> int:
    """Distinct derivation trees represented by a class (exact integers)."""
    graph = forest.graph
    memo: dict[EClassId, int] = {}
    visiting: set[EClassId] = set()

    def count(c: EClassId) -> int:
        c = graph.find(c)
        if c in memo:
            return memo[c]
        if c in visiting:
            raise ParseCycleError(
                f"derivation cycle through class {forest.key_of(c).text()}"
            )
        visiting.add(c)
        total = 0
        for node in plain_nodes(forest, c):
            prod = 1
            for child in node.children:
                prod *= count(child)
            total += prod
        visiting.discard(c)
        memo[c] = total
        return total

    return count(cid)


def piece_derivation_count(forest: ParseForest, piece: Piece) -> int:
    return sum(
        count_derivations(forest, forest.class_of(k)) for k in forest.full_span_keys(piece)
    )


def all_templates(forest: ParseForest, cid: EClassId, cap: int = 1_000_000) -> frozenset[Template]:
    """Every plain derivation tree of a class, as position-free templates."""
    graph = forest.graph
    memo: dict[EClassId, frozenset[Template]] = {}
    visiting: set[EClassId] = set()

    def expandc(c: EClassId) -> frozenset[Template]:
        c = graph.find(c)
        if c in memo:
            return memo[c]
        if c in visiting:
            raise ParseCycleError("derivation cycle during enumeration")
        visiting.add(c)
        out: set[Template] = set()
        for node in plain_nodes(forest, c):
            if op_is_pure(node.op):
                out.add(Leaf(node.op[1]))
                continue
            choices = [expandc(ch) for ch in node.children]
            stack = [()]
            for choice in choices:
                stack = [prefix + (t,) for prefix in stack for t in sorted(choice, key=str)]
            for combo in stack:
                out.add(Branch(node.op[1], combo))
            if len(out) > cap:
                raise ParseCycleError(f"more than {cap} derivations during enumeration")
        visiting.discard(c)
        result = frozenset(out)
        memo[c] = result
        return result

    return expandc(cid)


def node_template_view(node: ENode) -> tuple:
    """Position-free structural view used for anti-unification."""
    if op_is_pure(node.op):
        return ("pure", node.op[1])
    if op_is_rule(node.op):
        return ("rule", node.op[1])
    return node.op


def validate_expanded(template: Template, chords: tuple, grammar: Grammar):
    """Check a hole-free, call-free derivation against a chord sequence:
    every termination and rule constraint must hold, with leaves read left
    to right. Returns the derived head label."""

    def walk(t: Template, i: int):
        if isinstance(t, Leaf):
            if i >= len(chords):
                raise ValueError("derivation has more leaves than chords")
            label = chords[i]
            rule = grammar.rule(t.rule)
            if rule.kind != "termination":
                raise ValueError(f"leaf uses non-termination rule {t.rule!r}")
            if not all(c.holds(label, label) for c in rule.constraints):
                raise ValueError(f"termination {t.rule!r} rejects {label}")
            return label, i + 1
        if isinstance(t, Branch):
            rule = grammar.rule(t.rule)
            if rule.kind != "binary" or len(t.children) != 2:
                raise ValueError(f"bad branch rule {t.rule!r}")
            left, j = walk(t.children[0], i)
            right, k = walk(t.children[1], j)
            if not check_rule(rule, left, right):
                raise ValueError(f"rule {t.rule!r} rejects ({left}, {right})")
            return head_label(rule, left, right), k
        raise ValueError(f"expanded derivation contains {type(t).__name__}")

    head, stop = walk(template, 0)
    if stop != len(chords):
        raise ValueError(f"derivation covers {stop} of {len(chords)} chords")
    return head


def forest_to_json(forest: ParseForest) -> dict:
    graph = forest.graph
    classes = []
    for key in forest.keys_sorted():
        cid = forest.class_of(key)
        nodes = []
        for node in graph.nodes(cid):
            if op_is_pure(node.op):
                nodes.append({"kind": "pure", "rule": node.op[1], "position": node.op[3]})
            elif op_is_rule(node.op):
                nodes.append(
                    {
                        "kind": "rule",
                        "rule": node.op[1],
                        "children": [forest.key_of(c).text() for c in node.children],
                    }
                )
        classes.append(
            {
                "span": key.text(),
                "piece": key.piece,
                "head": str(key.head),
                "start": key.start,
                "stop": key.stop,
                "root_connected": forest.is_marked(cid),
                "nodes": nodes,
            }
        )
    return {"classes": classes}


def forest_to_dot(forest: ParseForest) -> str:
    lines = ["digraph forest {", "  node [shape=box];"]
    ids: dict[EClassId, str] = {}
    for idx, key in enumerate(forest.keys_sorted()):
        cid = forest.class_of(key)
        ids[cid] = f"s{idx}"
        shape = ' style="bold"' if forest.is_marked(cid) else ""
        label = key.text().replace('"', "'")
        lines.append(f'  s{idx} [label="{label}"{shape}];')
    for key in forest.keys_sorted():
        cid = forest.class_of(key)
        for node in forest.graph.nodes(cid):
            if op_is_rule(node.op):
                for child in node.children:
                    lines.append(f"  {ids[cid]} -> {ids[forest.graph.find(child)]};")
    lines.append("}")
    return "\n".join(lines) + "\n"
