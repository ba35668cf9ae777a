"""Candidate abstractions via anti-unification between derivation classes.

For every pair of root-connected classes that can jointly appear in a
complete parse, the least general generalizations of their member
derivations are computed directly on the e-graph. The computation
alternates between node-level results (which need finalized child pairs)
and class-pair finalization (once every node pair has contributed), and
runs that alternation to a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product
from typing import Callable, Iterable

from .egraph import EClassId, ENode
from .parsing import ParseForest, SpanKey, node_template_view, plain_nodes
from .templates import HOLE, Branch, Hole, Leaf, Template, hole_count, node_count, render, sort_key

Pair = tuple[EClassId, EClassId]


class AntiUnifyError(RuntimeError):
    pass


def _canonical(a: EClassId, b: EClassId) -> Pair:
    return (a, b) if a <= b else (b, a)


@dataclass
class CoOccur:
    """Which derivation-class pairs can jointly appear in a complete parse.

    Classes from different pieces always co-occur (the corpus is explained
    jointly); within a piece the relation is exact over the parse forest:
    nested spans need downward reachability, disjoint spans need a common
    root-connected ancestor node splitting towards both, and overlapping
    or equal spans of distinct classes never co-occur.
    """

    index: dict[EClassId, int]
    piece_of: dict[EClassId, str]
    span_of: dict[EClassId, tuple[int, int]]
    reach: dict[EClassId, int]
    disjoint: dict[EClassId, int]

    def holds(self, a: EClassId, b: EClassId) -> bool:
        if a not in self.index or b not in self.index:
            return False
        if a == b:
            return True
        if self.piece_of[a] != self.piece_of[b]:
            return True
        sa, sb = self.span_of[a], self.span_of[b]
        if sa == sb:
            return False
        if sb[0] <= sa[0] and sa[1] <= sb[1]:
            return bool(self.reach[b] >> self.index[a] & 1)
        if sa[0] <= sb[0] and sb[1] <= sa[1]:
            return bool(self.reach[a] >> self.index[b] & 1)
        if sa[1] <= sb[0] or sb[1] <= sa[0]:
            return bool(self.disjoint[a] >> self.index[b] & 1)
        return False  # overlapping, non-nested spans are never laminar

    def pairs(self) -> list[Pair]:
        classes = sorted(self.index)
        return [
            (a, b)
            for a, b in combinations_with_replacement(classes, 2)
            if self.holds(a, b)
        ]


def compute_cooccur(forest: ParseForest) -> CoOccur:
    marked = forest.marked_classes()
    index = {cid: i for i, cid in enumerate(sorted(marked))}
    piece_of: dict[EClassId, str] = {}
    span_of: dict[EClassId, tuple[int, int]] = {}
    for cid in marked:
        key = forest.key_of(cid)
        piece_of[cid] = key.piece
        span_of[cid] = (key.start, key.stop)

    # reach[c] = bitmask of classes reachable downward from c, including c
    reach: dict[EClassId, int] = {}

    def reach_of(cid: EClassId) -> int:
        if cid in reach:
            return reach[cid]
        mask = 1 << index[cid]
        reach[cid] = mask  # spans strictly shrink, so no true cycles
        for node in plain_nodes(forest, cid):
            for child in node.children:
                mask |= reach_of(forest.graph.find(child))
        reach[cid] = mask
        return mask

    for cid in marked:
        reach_of(cid)

    disjoint: dict[EClassId, int] = {cid: 0 for cid in marked}
    bit_to_class = {i: cid for cid, i in index.items()}
    for cid in marked:
        for node in plain_nodes(forest, cid):
            if len(node.children) != 2:
                continue
            left = reach[forest.graph.find(node.children[0])]
            right = reach[forest.graph.find(node.children[1])]
            for side_a, side_b in ((left, right), (right, left)):
                bits = side_a
                while bits:
                    low = bits & -bits
                    member = bit_to_class[low.bit_length() - 1]
                    disjoint[member] |= side_b
                    bits ^= low
    return CoOccur(index, piece_of, span_of, reach, disjoint)


def anti_unify_pair(
    node_x: ENode,
    node_y: ENode,
    finalized: Callable[[EClassId, EClassId], frozenset[Template]],
) -> frozenset[Template]:
    """Anti-unifiers contributed by one node pair, given finalized child
    class-pair results. Identical terminal rules generalize to themselves,
    mismatched heads collapse to a hole, and equal-headed compositions take
    the cross product of their children's finalized anti-unifiers."""
    vx, vy = node_template_view(node_x), node_template_view(node_y)
    if vx[0] == "pure" and vy[0] == "pure":
        if vx[1] == vy[1]:
            return frozenset({Leaf(vx[1])})
        return frozenset({HOLE})
    if vx[0] == "rule" and vy[0] == "rule" and vx[1] == vy[1]:
        child_sets = [
            finalized(cx, cy)
            for cx, cy in zip(node_x.children, node_y.children)
        ]
        combos = product(*child_sets)
        return frozenset(Branch(vx[1], combo) for combo in combos)
    return frozenset({HOLE})


@dataclass
class _PairState:
    node_pairs: list[tuple[ENode, ENode]]
    pending: list[int]
    patterns: set[Template] = field(default_factory=set)
    finalized: bool = False


@dataclass
class AuResult:
    pair_sets: dict[Pair, frozenset[Template]]
    candidates: list[Template]
    rounds: int

    def finalized_set(self, a: EClassId, b: EClassId) -> frozenset[Template]:
        return self.pair_sets[_canonical(a, b)]


def nontrivial(pattern: Template) -> bool:
    """Patterns worth keeping: at least two non-hole nodes. A lone hole or
    a bare rule never compresses anything (a call node costs one unit, the
    same as the node it replaces)."""
    return node_count(pattern) - hole_count(pattern) >= 2


def run_au_fixpoint(
    forest: ParseForest,
    cooccur: CoOccur,
    *,
    iteration_cap: int = 10_000,
    reverse_schedule: bool = False,
) -> AuResult:
    graph = forest.graph
    states: dict[Pair, _PairState] = {}
    deps: dict[Pair, list[list[Pair]]] = {}

    def ensure(pair: Pair) -> None:
        if pair in states:
            return
        a, b = pair
        if a == b:
            node_pairs = list(
                combinations_with_replacement(plain_nodes(forest, a), 2)
            )
        else:
            node_pairs = list(product(plain_nodes(forest, a), plain_nodes(forest, b)))
        states[pair] = _PairState(node_pairs, pending=list(range(len(node_pairs))))
        dep_lists: list[list[Pair]] = []
        for nx, ny in node_pairs:
            vx, vy = node_template_view(nx), node_template_view(ny)
            if vx[0] == "rule" and vy[0] == "rule" and vx[1] == vy[1]:
                children = [
                    _canonical(graph.find(cx), graph.find(cy))
                    for cx, cy in zip(nx.children, ny.children)
                ]
                dep_lists.append(children)
            else:
                dep_lists.append([])
        deps[pair] = dep_lists

    seeds = cooccur.pairs()
    for pair in seeds:
        ensure(pair)
    # close the pair universe under child-pair dependencies
    frontier = list(states)
    while frontier:
        pair = frontier.pop()
        for dep_list in deps[pair]:
            for child_pair in dep_list:
                if child_pair not in states:
                    ensure(child_pair)
                    frontier.append(child_pair)

    def finalized_lookup(cx: EClassId, cy: EClassId) -> frozenset[Template]:
        state = states[_canonical(cx, cy)]
        if not state.finalized:
            raise AntiUnifyError("read of non-finalized pair")
        return frozenset(state.patterns)

    schedule = sorted(states)
    if reverse_schedule:
        schedule = schedule[::-1]
    rounds = 0
    while True:
        if rounds >= iteration_cap:
            raise AntiUnifyError(
                "anti-unification did not settle within the iteration cap "
                "(dependency cycle in the parse forest?)"
            )
        progressed = False
        open_pairs = 0
        for pair in schedule:
            state = states[pair]
            if state.finalized:
                continue
            open_pairs += 1
            still_pending = []
            for idx in state.pending:
                if all(states[d].finalized for d in deps[pair][idx]):
                    nx, ny = state.node_pairs[idx]
                    contribution = anti_unify_pair(nx, ny, finalized_lookup)
                    assert not state.finalized, "candidate added after finalization"
                    state.patterns.update(contribution)
                    progressed = True
                else:
                    still_pending.append(idx)
            state.pending = still_pending
            if not state.pending:
                state.finalized = True
                progressed = True
        if open_pairs == 0:
            break
        if not progressed:
            raise AntiUnifyError("anti-unification stalled: circular pair dependency")
        rounds += 1

    pair_sets = {pair: frozenset(state.patterns) for pair, state in states.items()}
    collected: set[Template] = set()
    for pair in seeds:
        collected.update(p for p in pair_sets[pair] if nontrivial(p))
    candidates = sorted(collected, key=sort_key)
    return AuResult(pair_sets, candidates, rounds)


def candidates_to_json(
    candidates: Iterable[Template],
    match_sites: dict[Template, list[tuple[SpanKey, tuple]]] | None = None,
    kept: set[Template] | None = None,
) -> list[dict]:
    out = []
    for pattern in candidates:
        entry = {
            "pattern": render(pattern),
            "size": node_count(pattern),
            "holes": hole_count(pattern),
        }
        if match_sites is not None:
            sites = match_sites.get(pattern, [])
            entry["matches"] = len(sites)
            entry["matched_spans"] = sorted(key.text() for key, _ in sites)
        if kept is not None:
            entry["kept"] = pattern in kept
        out.append(entry)
    return out
