"""Hash-consed e-graph with union-find, congruence repair, relational fact
tables, mergeable per-class analyses, and monotone rule saturation.

Rebuilding is deferred: actions may batch additions and unions, and
`rebuild` restores congruence afterwards. Correctness is defined against a
naive fixed-point closure, not any particular repair schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Iterator, Protocol

EClassId = int


@dataclass(frozen=True)
class ENode:
    op: Hashable
    children: tuple[EClassId, ...] = ()


@dataclass(frozen=True)
class Term:
    """A ground term to insert wholesale (children are sub-terms)."""

    op: Hashable
    args: tuple["Term", ...] = ()


@dataclass(frozen=True)
class Analysis:
    """Per-class slot; `join` must be commutative, associative, idempotent."""

    make: Callable[[ENode], Any]
    join: Callable[[Any, Any], Any]


@dataclass
class SaturationReport:
    iterations: int
    new_facts: int
    saturated: bool


class FactDelta:
    """Facts added during one saturation iteration, for semi-naive joins."""

    def __init__(self):
        self.by_relation: dict[str, list[tuple]] = {}

    def add(self, relation: str, fact: tuple) -> None:
        self.by_relation.setdefault(relation, []).append(fact)

    def facts(self, relation: str) -> list[tuple]:
        return self.by_relation.get(relation, [])


class Action(Protocol):
    def apply(self, graph: "EGraph", delta: FactDelta) -> None: ...


@dataclass(frozen=True)
class AddFact:
    relation: str
    fact: tuple

    def apply(self, graph: "EGraph", delta: FactDelta) -> None:
        if graph.add_fact(self.relation, self.fact):
            delta.add(self.relation, self.fact)


class Rule(Protocol):
    name: str

    def matches(self, graph: "EGraph", delta: FactDelta | None) -> Iterable[Action]: ...


class EGraphCycleError(RuntimeError):
    pass


class EGraph:
    def __init__(self):
        self._parent: list[int] = []
        self._rank: list[int] = []
        self._hashcons: dict[ENode, int] = {}
        self._class_nodes: dict[int, dict[ENode, None]] = {}
        self._facts: dict[str, dict[tuple, None]] = {}
        self._analyses: dict[str, Analysis] = {}
        self._analysis_values: dict[str, dict[int, Any]] = {}
        self._dirty = False
        self.version = 0

    # --- union-find ------------------------------------------------------

    def find(self, cid: EClassId) -> EClassId:
        root = cid
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[cid] != root:
            self._parent[cid], cid = root, self._parent[cid]
        return root

    def _fresh_class(self) -> EClassId:
        cid = len(self._parent)
        self._parent.append(cid)
        self._rank.append(0)
        return cid

    @property
    def class_count(self) -> int:
        return sum(1 for cid in range(len(self._parent)) if self._parent[cid] == cid)

    @property
    def node_count(self) -> int:
        self.rebuild()
        return len(self._hashcons)

    def classes(self) -> list[EClassId]:
        self.rebuild()
        return sorted(self._class_nodes)

    def nodes(self, cid: EClassId) -> tuple[ENode, ...]:
        self.rebuild()
        found = self._class_nodes.get(self.find(cid), {})
        return tuple(sorted(found, key=_node_key))

    # --- nodes and terms -------------------------------------------------

    def canonical(self, node: ENode) -> ENode:
        return ENode(node.op, tuple(self.find(c) for c in node.children))

    def add(self, op: Hashable, children: Iterable[EClassId] = ()) -> EClassId:
        node = ENode(op, tuple(self.find(c) for c in children))
        existing = self._hashcons.get(node)
        if existing is not None:
            return self.find(existing)
        cid = self._fresh_class()
        self._hashcons[node] = cid
        self._class_nodes[cid] = {node: None}
        for name, analysis in self._analyses.items():
            self._analysis_values[name][cid] = analysis.make(node)
        self.version += 1
        return cid

    def add_term(self, term: Term) -> EClassId:
        return self.add(term.op, tuple(self.add_term(a) for a in term.args))

    def union(self, a: EClassId, b: EClassId) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if (self._rank[ra], -ra) < (self._rank[rb], -rb):
            ra, rb = rb, ra
        # ra survives
        self._parent[rb] = ra
        if self._rank[ra] == self._rank[rb]:
            self._rank[ra] += 1
        nodes_b = self._class_nodes.pop(rb, {})
        self._class_nodes.setdefault(ra, {}).update(nodes_b)
        for name, analysis in self._analyses.items():
            values = self._analysis_values[name]
            va, vb = values.pop(ra, None), values.pop(rb, None)
            if va is None:
                joined = vb
            elif vb is None:
                joined = va
            else:
                joined = analysis.join(va, vb)
            values[ra] = joined
        self._dirty = True
        self.version += 1
        return True

    def rebuild(self) -> None:
        """Restore congruence and re-canonicalize the hash-cons map."""
        while self._dirty:
            self._dirty = False
            canon: dict[ENode, int] = {}
            pending: list[tuple[int, int]] = []
            for node, cid in self._hashcons.items():
                cnode = self.canonical(node)
                ccid = self.find(cid)
                prev = canon.get(cnode)
                if prev is None:
                    canon[cnode] = ccid
                elif self.find(prev) != ccid:
                    pending.append((prev, ccid))
            if pending:
                for a, b in pending:
                    self.union(a, b)
                continue
            self._hashcons = canon
            grouped: dict[int, dict[ENode, None]] = {}
            for cnode, ccid in canon.items():
                grouped.setdefault(ccid, {})[cnode] = None
            self._class_nodes = grouped

    # --- relational facts ------------------------------------------------

    def add_fact(self, relation: str, fact: tuple) -> bool:
        table = self._facts.setdefault(relation, {})
        if fact in table:
            return False
        table[fact] = None
        self.version += 1
        return True

    def has_fact(self, relation: str, fact: tuple) -> bool:
        return fact in self._facts.get(relation, {})

    def facts(self, relation: str) -> Iterator[tuple]:
        return iter(self._facts.get(relation, {}))

    def fact_count(self) -> int:
        return sum(len(t) for t in self._facts.values())

    # --- analyses --------------------------------------------------------

    def register_analysis(self, name: str, analysis: Analysis) -> None:
        if name in self._analyses:
            raise ValueError(f"analysis {name!r} already registered")
        self._analyses[name] = analysis
        self.rebuild()
        values: dict[int, Any] = {}
        for cid, nodes in self._class_nodes.items():
            value = None
            for node in nodes:
                made = analysis.make(node)
                value = made if value is None else analysis.join(value, made)
            values[cid] = value
        self._analysis_values[name] = values

    def get_analysis(self, name: str, cid: EClassId) -> Any:
        self.rebuild()
        return self._analysis_values[name].get(self.find(cid))

    def set_analysis(self, name: str, cid: EClassId, value: Any) -> None:
        """Join `value` into the class slot (monotone update)."""
        self.rebuild()
        values = self._analysis_values[name]
        root = self.find(cid)
        old = values.get(root)
        new = value if old is None else self._analyses[name].join(old, value)
        if new != old:
            values[root] = new
            self.version += 1

    # --- saturation ------------------------------------------------------

    def run_to_fixpoint(
        self,
        rules: Iterable[Rule],
        iteration_cap: int = 10_000,
        semi_naive: bool = True,
    ) -> SaturationReport:
        rules = list(rules)
        iterations = 0
        facts_before = self.fact_count() + len(self._parent)
        delta: FactDelta | None = None
        while True:
            if iterations >= iteration_cap:
                new = self.fact_count() + len(self._parent) - facts_before
                return SaturationReport(iterations, new, saturated=False)
            version_before = self.version
            actions: list[Action] = []
            for rule in rules:
                actions.extend(rule.matches(self, delta))
            next_delta = FactDelta()
            for action in actions:
                action.apply(self, next_delta)
            self.rebuild()
            if self.version == version_before:
                new = self.fact_count() + len(self._parent) - facts_before
                return SaturationReport(iterations, new, saturated=True)
            iterations += 1
            delta = next_delta if semi_naive else None

    # --- debug dumps -----------------------------------------------------

    def to_json(self) -> dict:
        self.rebuild()
        classes = []
        for cid in sorted(self._class_nodes):
            nodes = [
                {"op": _op_text(n.op), "children": list(n.children)}
                for n in sorted(self._class_nodes[cid], key=_node_key)
            ]
            analyses = {
                name: _analysis_text(self._analysis_values[name].get(cid))
                for name in sorted(self._analyses)
            }
            classes.append({"id": cid, "nodes": nodes, "analyses": analyses})
        facts = {
            rel: sorted(" ".join(map(str, fact)) for fact in table)
            for rel, table in sorted(self._facts.items())
        }
        return {"classes": classes, "facts": facts}

    def to_dot(self) -> str:
        self.rebuild()
        lines = ["digraph egraph {", "  compound=true;", "  node [shape=record];"]
        for cid in sorted(self._class_nodes):
            lines.append(f"  subgraph cluster_{cid} {{")
            lines.append(f'    label="c{cid}";')
            for i, node in enumerate(sorted(self._class_nodes[cid], key=_node_key)):
                label = _op_text(node.op).replace('"', "'")
                lines.append(f'    n{cid}_{i} [label="{label}"];')
            lines.append("  }")
        for cid in sorted(self._class_nodes):
            for i, node in enumerate(sorted(self._class_nodes[cid], key=_node_key)):
                for child in node.children:
                    lines.append(f"  n{cid}_{i} -> n{child}_0;")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _op_text(op: Hashable) -> str:
    if isinstance(op, tuple):
        return "(" + " ".join(_op_text(o) for o in op) + ")"
    return str(op)


def _node_key(node: ENode):
    return (_op_text(node.op), node.children)


def _analysis_text(value: Any) -> Any:
    if isinstance(value, (frozenset, set)):
        return sorted(map(str, value))
    if isinstance(value, (bool, int, str, type(None))):
        return value
    return str(value)
