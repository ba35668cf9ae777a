"""Library learning over the parsed corpus.

Candidate patterns become rewrites that splice call nodes into every
derivation class they match; cost sets then propagate (library, use-cost)
pairs bottom-up through the saturated graph, kept small by dominance
reduction and beam pruning; finally the library minimizing total
description length (definition storage plus per-piece use cost) is
selected and each piece's cheapest refactored program is extracted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

from .corpus import Piece
from .egraph import Action, EClassId, EGraph, ENode, FactDelta, SaturationReport
from .parsing import (
    ParseForest,
    SpanKey,
    call_op,
    op_is_call,
    op_is_pure,
    op_is_rule,
    plain_nodes,
)
from .templates import (
    Branch,
    Call,
    Hole,
    Leaf,
    Template,
    expand,
    hole_count,
    match_tree,
    node_count,
    render,
    sort_key,
)


class LibraryLearningError(RuntimeError):
    pass


@dataclass(frozen=True)
class Abstraction:
    id: str
    body: Template          # raw pattern, holes numbered left to right
    arity: int
    stored: Template        # body re-expressed through smaller abstractions
    def_size: int           # node count of the stored form
    deps: frozenset[str]    # direct references in the stored form
    deps_star: frozenset[str]  # transitive closure of deps


def _routed(captures: Sequence) -> tuple[tuple[int, ...], tuple]:
    """Dedup captured arguments; routing maps hole index -> argument index."""
    args: list = []
    routing: list[int] = []
    for cap in captures:
        if cap in args:
            routing.append(args.index(cap))
        else:
            routing.append(len(args))
            args.append(cap)
    return tuple(routing), tuple(args)


def _cheapest_encoding(body: Template, available: list[Abstraction]) -> Template:
    memo: dict[Template, tuple[int, str, Template]] = {}

    def enc(t: Template) -> tuple[int, str, Template]:
        got = memo.get(t)
        if got is not None:
            return got
        if isinstance(t, (Hole, Leaf)):
            best = (1, render(t), t)
        else:
            assert isinstance(t, Branch)
            cost = 1
            kids = []
            for c in t.children:
                cc, _, kt = enc(c)
                cost += cc
                kids.append(kt)
            plain = Branch(t.rule, tuple(kids))
            best = (cost, render(plain), plain)
            for ab in available:
                caps = match_tree(ab.body, t)
                if caps is None:
                    continue
                routing, args = _routed(caps)
                total = 1
                enc_args = []
                for arg in args:
                    ac, _, at = enc(arg)
                    total += ac
                    enc_args.append(at)
                cand = Call(ab.id, routing, tuple(enc_args))
                key = (total, render(cand), cand)
                if key[:2] < best[:2]:
                    best = key
        memo[t] = best
        return best

    return enc(body)[2]


def _referenced(t: Template) -> set[str]:
    out: set[str] = set()
    if isinstance(t, Branch):
        for c in t.children:
            out |= _referenced(c)
    elif isinstance(t, Call):
        out.add(t.fn)
        for a in t.args:
            out |= _referenced(a)
    return out


def build_abstractions(patterns: Iterable[Template]) -> list[Abstraction]:
    """Name patterns f0, f1, ... in canonical order and store each body
    re-expressed through strictly smaller abstractions, so shared
    sub-structure is charged once and the library forms a DAG."""
    ordered = sorted(set(patterns), key=sort_key)
    out: list[Abstraction] = []
    star: dict[str, frozenset[str]] = {}
    bodies: dict[str, Template] = {}
    for i, body in enumerate(ordered):
        smaller = [ab for ab in out if node_count(ab.body) < node_count(body)]
        stored = _cheapest_encoding(body, smaller)
        assert expand(stored, bodies) == body, "stored form must expand to the body"
        deps = frozenset(_referenced(stored))
        deps_star = frozenset(set(deps).union(*(star[d] for d in deps)) if deps else set())
        ab = Abstraction(
            id=f"f{i}",
            body=body,
            arity=hole_count(body),
            stored=stored,
            def_size=node_count(stored),
            deps=deps,
            deps_star=deps_star,
        )
        out.append(ab)
        star[ab.id] = ab.deps_star
        bodies[ab.id] = ab.body
    return out


# --- pattern matching on the forest ---------------------------------------


def match_class(
    forest: ParseForest,
    pattern: Template,
    cid: EClassId,
    memo: dict | None = None,
) -> list[tuple[EClassId, ...]]:
    """Capture tuples (one class per hole, left-to-right) for every way the
    pattern's structure is present in the class."""
    graph = forest.graph
    if memo is None:
        memo = {}

    def matches(pat: Template, c: EClassId) -> list[tuple[EClassId, ...]]:
        c = graph.find(c)
        key = (pat, c)
        got = memo.get(key)
        if got is not None:
            return got
        out: list[tuple[EClassId, ...]] = []
        if isinstance(pat, Hole):
            out = [(c,)]
        elif isinstance(pat, Leaf):
            if any(op_is_pure(n.op) and n.op[1] == pat.rule for n in forest.all_nodes(c)):
                out = [()]
        else:
            assert isinstance(pat, Branch)
            for node in plain_nodes(forest, c):
                if not op_is_rule(node.op) or node.op[1] != pat.rule:
                    continue
                if len(node.children) != len(pat.children):
                    continue
                per_child = [
                    matches(p, ch) for p, ch in zip(pat.children, node.children)
                ]
                for combo in product(*per_child):
                    caps: tuple[EClassId, ...] = ()
                    for part in combo:
                        caps += part
                    out.append(caps)
        out = sorted(set(out))
        memo[key] = out
        return out

    return matches(pattern, cid)


def collect_match_sites(
    forest: ParseForest, patterns: Sequence[Template]
) -> dict[Template, list[tuple[SpanKey, tuple[EClassId, ...]]]]:
    sites: dict[Template, list[tuple[SpanKey, tuple[EClassId, ...]]]] = {}
    marked = forest.marked_classes()
    for pattern in patterns:
        memo: dict = {}
        found = []
        for cid in marked:
            for caps in match_class(forest, pattern, cid, memo):
                found.append((forest.key_of(cid), caps))
        sites[pattern] = found
    return sites


def keep_reusable(
    patterns: Sequence[Template],
    sites: dict[Template, list[tuple[SpanKey, tuple[EClassId, ...]]]],
) -> list[Template]:
    """A pattern earns a rewrite only when it matches at least two distinct
    sub-derivations; single-site patterns can never pay for themselves."""
    return [p for p in patterns if len(sites.get(p, [])) >= 2]


@dataclass(frozen=True)
class AddCall(Action):
    forest: ParseForest
    fn: str
    routing: tuple[int, ...]
    args: tuple[EClassId, ...]
    target: EClassId

    def apply(self, graph: EGraph, delta: FactDelta) -> None:
        node_cid = graph.add(call_op(self.fn, self.routing), self.args)
        graph.union(self.target, node_cid)


@dataclass
class PatternRewrite:
    forest: ParseForest
    abstraction: Abstraction

    @property
    def name(self) -> str:
        return f"rewrite-{self.abstraction.id}"

    def matches(self, graph: EGraph, delta: FactDelta | None):
        memo: dict = {}
        for cid in self.forest.marked_classes():
            for caps in match_class(self.forest, self.abstraction.body, cid, memo):
                routing, args = _routed(caps)
                yield AddCall(self.forest, self.abstraction.id, routing, args, cid)


def generate_rewrites(
    forest: ParseForest, abstractions: Sequence[Abstraction]
) -> list[PatternRewrite]:
    return [PatternRewrite(forest, ab) for ab in abstractions]


def saturate_with_patterns(
    forest: ParseForest,
    rewrites: Sequence[PatternRewrite],
    iteration_cap: int = 10_000,
) -> SaturationReport:
    return forest.graph.run_to_fixpoint(rewrites, iteration_cap=iteration_cap)


# --- cost sets -------------------------------------------------------------


@dataclass(frozen=True)
class CostPair:
    lib: frozenset[str]
    cost: int

    def order_key(self) -> tuple:
        return (self.cost, len(self.lib), tuple(sorted(self.lib)))


def reduce_pairs(pairs: Iterable[CostPair]) -> list[CostPair]:
    """Dominance antichain: drop any pair whose library contains another
    pair's library at equal or higher cost."""
    ordered = sorted(set(pairs), key=CostPair.order_key)
    kept: list[CostPair] = []
    for cand in ordered:
        if not any(p.lib <= cand.lib for p in kept):
            kept.append(cand)
    return kept


def prune_pairs(pairs: Iterable[CostPair], beam: int | None) -> list[CostPair]:
    ordered = sorted(set(pairs), key=CostPair.order_key)
    if beam is None:
        return ordered
    return ordered[:beam]


@dataclass
class CostOptions:
    max_lib: int = 15
    beam: int | None = 5
    use_reduce: bool = True


def _node_pairs(
    node: ENode,
    finalized: dict[EClassId, list[CostPair]],
    graph: EGraph,
    base_lib: frozenset[str],
    max_lib: int,
) -> list[CostPair]:
    child_sets = [finalized[graph.find(c)] for c in node.children]
    out = []
    for combo in product(*child_sets):
        lib = base_lib
        cost = 1
        for pair in combo:
            lib |= pair.lib
            cost += pair.cost
        if len(lib) <= max_lib:
            out.append(CostPair(lib, cost))
    return out


def cost_set_analysis(
    forest: ParseForest,
    abstractions: Sequence[Abstraction],
    options: CostOptions = CostOptions(),
) -> dict[EClassId, list[CostPair]]:
    """Bottom-up (library, use-cost) sets per root-connected class.

    Terminal rules and holes cost one with no library; composed nodes take
    the cross product of their children's finalized pairs plus one; call
    nodes additionally charge the abstraction and its definition's own
    library needs. A class is finalized, via Prune(Reduce(...)), only after
    every one of its nodes has contributed."""
    graph = forest.graph
    by_id = {ab.id: ab for ab in abstractions}
    marked = forest.marked_classes()
    finalized: dict[EClassId, list[CostPair]] = {}
    accum: dict[EClassId, set[CostPair]] = {cid: set() for cid in marked}
    node_lists = {cid: list(forest.all_nodes(cid)) for cid in marked}
    needed = {cid: len(node_lists[cid]) for cid in marked}
    processed = {cid: 0 for cid in marked}
    pending: dict[EClassId, list[ENode]] = {cid: list(node_lists[cid]) for cid in marked}

    while True:
        progressed = False
        open_classes = 0
        for cid in marked:
            if cid in finalized:
                continue
            open_classes += 1
            still: list[ENode] = []
            for node in pending[cid]:
                deps = [graph.find(c) for c in node.children]
                if not all(d in finalized for d in deps):
                    still.append(node)
                    continue
                if op_is_pure(node.op):
                    pairs = [CostPair(frozenset(), 1)]
                elif op_is_rule(node.op):
                    pairs = _node_pairs(node, finalized, graph, frozenset(), options.max_lib)
                elif op_is_call(node.op):
                    fn = node.op[1]
                    ab = by_id.get(fn)
                    if ab is None:
                        pairs = []  # stale call from a wider candidate set
                    else:
                        base = frozenset({fn}) | ab.deps_star
                        pairs = _node_pairs(node, finalized, graph, base, options.max_lib)
                else:
                    pairs = []
                accum[cid].update(pairs)
                processed[cid] += 1
                progressed = True
            pending[cid] = still
            if processed[cid] == needed[cid]:
                pairs = list(accum[cid])
                if options.use_reduce:
                    pairs = reduce_pairs(pairs)
                finalized[cid] = prune_pairs(pairs, options.beam)
                progressed = True
        if open_classes == 0:
            return finalized
        if not progressed:
            stuck = [forest.key_of(cid).text() for cid in marked if cid not in finalized]
            raise LibraryLearningError(
                f"cost analysis stalled on a class cycle: {stuck[:3]}"
            )


def piece_root_costs(
    forest: ParseForest,
    cost_sets: dict[EClassId, list[CostPair]],
    piece: Piece,
    options: CostOptions = CostOptions(),
) -> list[CostPair]:
    """Costs over all full-span heads of one piece, always including the
    library-free pair so the empty library survives any pruning."""
    classes = forest.full_span_classes(piece)
    if not classes:
        raise LibraryLearningError(f"piece {piece.title!r} has no complete parse")
    pairs: set[CostPair] = set()
    for cid in classes:
        pairs.update(cost_sets[graph_find(forest, cid)])
    out = list(pairs)
    if options.use_reduce:
        out = reduce_pairs(out)
    out = prune_pairs(out, options.beam)
    seed = CostPair(frozenset(), piece.baseline_size)
    if not any(p.lib == frozenset() for p in out):
        out.append(seed)
    if options.use_reduce:
        out = reduce_pairs(out)
    return sorted(set(out), key=CostPair.order_key)


def graph_find(forest: ParseForest, cid: EClassId) -> EClassId:
    return forest.graph.find(cid)


def storage_cost(lib: Iterable[str], abstractions: Sequence[Abstraction]) -> int:
    by_id = {ab.id: ab for ab in abstractions}
    return sum(by_id[f].def_size for f in lib)


@dataclass
class Selection:
    library: list[Abstraction]
    objective: int
    use_cost_estimate: int
    survivors: list[tuple[CostPair, int]]  # (pair, objective)

    @property
    def lib_ids(self) -> frozenset[str]:
        return frozenset(ab.id for ab in self.library)


def select_library(
    root_sets: Sequence[Sequence[CostPair]],
    abstractions: Sequence[Abstraction],
    baselines: Sequence[int],
    options: CostOptions = CostOptions(),
) -> Selection:
    """Fold the per-piece root cost sets as under a virtual corpus root and
    pick the surviving pair minimizing storage(lib) + total use cost."""
    if not root_sets:
        raise LibraryLearningError("no pieces to select a library for")
    acc = list(root_sets[0])
    folded_baseline = baselines[0]
    for rs, base in zip(root_sets[1:], baselines[1:]):
        combos: set[CostPair] = set()
        for a in acc:
            for b in rs:
                lib = a.lib | b.lib
                if len(lib) <= options.max_lib:
                    combos.add(CostPair(lib, a.cost + b.cost))
        out = list(combos)
        if options.use_reduce:
            out = reduce_pairs(out)
        out = prune_pairs(out, options.beam)
        folded_baseline += base
        if not any(p.lib == frozenset() for p in out):
            out.append(CostPair(frozenset(), folded_baseline))
        acc = sorted(set(out), key=CostPair.order_key)
    by_id = {ab.id: ab for ab in abstractions}
    survivors = []
    for pair in acc:
        missing = {d for f in pair.lib for d in by_id[f].deps_star} - pair.lib
        assert not missing, f"cost pair library not closed: missing {sorted(missing)}"
        survivors.append((pair, storage_cost(pair.lib, abstractions) + pair.cost))
    best = min(
        survivors,
        key=lambda sv: (sv[1], len(sv[0].lib), tuple(sorted(sv[0].lib)), sv[0].cost),
    )
    library = sorted(
        (by_id[f] for f in best[0].lib), key=lambda ab: int(ab.id[1:])
    )
    return Selection(
        library=library,
        objective=best[1],
        use_cost_estimate=best[0].cost,
        survivors=survivors,
    )


# --- extraction ------------------------------------------------------------


def extract_refactored(
    forest: ParseForest,
    abstractions: Sequence[Abstraction],
    allowed: frozenset[str],
    piece: Piece,
) -> tuple[int, Template]:
    """Cheapest program for the piece's full span using rule nodes plus
    calls to allowed abstractions; ties break on rendered text."""
    graph = forest.graph
    memo: dict[EClassId, tuple[int, str, Template]] = {}
    visiting: set[EClassId] = set()

    def best_of(cid: EClassId) -> tuple[int, str, Template]:
        cid = graph.find(cid)
        got = memo.get(cid)
        if got is not None:
            return got
        if cid in visiting:
            raise LibraryLearningError("cycle during extraction")
        visiting.add(cid)
        best: tuple[int, str, Template] | None = None
        for node in forest.all_nodes(cid):
            if op_is_pure(node.op):
                cand_t: Template = Leaf(node.op[1])
            elif op_is_rule(node.op):
                kids = [best_of(c) for c in node.children]
                cand_t = Branch(node.op[1], tuple(k[2] for k in kids))
            elif op_is_call(node.op) and node.op[1] in allowed:
                kids = [best_of(c) for c in node.children]
                cand_t = Call(node.op[1], node.op[2], tuple(k[2] for k in kids))
            else:
                continue
            size = node_count(cand_t)
            key = (size, render(cand_t), cand_t)
            if best is None or key[:2] < best[:2]:
                best = key
        visiting.discard(cid)
        if best is None:
            raise LibraryLearningError(
                f"no extractable node in class {forest.key_of(cid).text()}"
            )
        memo[cid] = best
        return best

    classes = forest.full_span_classes(piece)
    if not classes:
        raise LibraryLearningError(f"piece {piece.title!r} has no complete parse")
    options = [best_of(cid) for cid in classes]
    size, _, template = min(options, key=lambda k: k[:2])
    return size, template


def library_bodies(abstractions: Sequence[Abstraction]) -> dict[str, Template]:
    return {ab.id: ab.body for ab in abstractions}
