"""Derivation programs over grammar rules.

A template is one of:
  Hole            -- open position in a pattern; matches any sub-derivation
  Leaf(rule)      -- a termination rule producing one surface chord
  Branch(rule, children) -- a binary rule composed over child templates
  Call(fn, routing, args) -- a library abstraction applied to arguments,
                     with `routing` mapping each hole of the abstraction's
                     body to an argument index (arguments may be reused)

Every node, including holes and calls, costs one unit, which is what makes
the Chomsky-normal-form baseline of a length-n derivation exactly 2n-1.

Templates are immutable and cache their hash and node counts; pattern sets
during anti-unification grow large enough that recursive hashing would
dominate otherwise.
"""

from __future__ import annotations

from typing import Iterator, Union


class Hole:
    __slots__ = ()

    def __repr__(self):
        return "Hole()"

    def __eq__(self, other):
        return isinstance(other, Hole)

    def __hash__(self):
        return 0x9E3779B9


class Leaf:
    __slots__ = ("rule", "_hash")

    def __init__(self, rule: str):
        object.__setattr__(self, "rule", rule)
        object.__setattr__(self, "_hash", hash(("leaf", rule)))

    def __setattr__(self, *_):
        raise AttributeError("Leaf is immutable")

    def __repr__(self):
        return f"Leaf({self.rule!r})"

    def __eq__(self, other):
        return isinstance(other, Leaf) and self.rule == other.rule

    def __hash__(self):
        return self._hash


class Branch:
    __slots__ = ("rule", "children", "_hash", "_size", "_holes")

    def __init__(self, rule: str, children: tuple):
        object.__setattr__(self, "rule", rule)
        object.__setattr__(self, "children", tuple(children))
        object.__setattr__(self, "_hash", hash(("branch", rule, self.children)))
        object.__setattr__(self, "_size", 1 + sum(node_count(c) for c in self.children))
        object.__setattr__(self, "_holes", sum(hole_count(c) for c in self.children))

    def __setattr__(self, *_):
        raise AttributeError("Branch is immutable")

    def __repr__(self):
        return f"Branch({self.rule!r}, {self.children!r})"

    def __eq__(self, other):
        return (
            self is other
            or (
                isinstance(other, Branch)
                and self._hash == other._hash
                and self.rule == other.rule
                and self.children == other.children
            )
        )

    def __hash__(self):
        return self._hash


class Call:
    __slots__ = ("fn", "routing", "args", "_hash", "_size", "_holes")

    def __init__(self, fn: str, routing: tuple, args: tuple):
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "routing", tuple(routing))
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "_hash", hash(("call", fn, self.routing, self.args)))
        object.__setattr__(self, "_size", 1 + sum(node_count(a) for a in self.args))
        object.__setattr__(self, "_holes", sum(hole_count(a) for a in self.args))

    def __setattr__(self, *_):
        raise AttributeError("Call is immutable")

    def __repr__(self):
        return f"Call({self.fn!r}, {self.routing!r}, {self.args!r})"

    def __eq__(self, other):
        return (
            self is other
            or (
                isinstance(other, Call)
                and self._hash == other._hash
                and self.fn == other.fn
                and self.routing == other.routing
                and self.args == other.args
            )
        )

    def __hash__(self):
        return self._hash


Template = Union[Hole, Leaf, Branch, Call]

HOLE = Hole()


def node_count(t: Template) -> int:
    if isinstance(t, (Hole, Leaf)):
        return 1
    return t._size


def hole_count(t: Template) -> int:
    if isinstance(t, Hole):
        return 1
    if isinstance(t, Leaf):
        return 0
    return t._holes


def is_ground(t: Template) -> bool:
    return hole_count(t) == 0


def leaf_count(t: Template) -> int:
    """Number of surface chords a hole-free, call-free template produces."""
    if isinstance(t, Leaf):
        return 1
    if isinstance(t, Branch):
        return sum(leaf_count(c) for c in t.children)
    raise ValueError(f"leaf_count needs an expanded ground template, got {t!r}")


def iter_subtrees(t: Template) -> Iterator[Template]:
    yield t
    if isinstance(t, Branch):
        for c in t.children:
            yield from iter_subtrees(c)
    elif isinstance(t, Call):
        for a in t.args:
            yield from iter_subtrees(a)


def render(t: Template) -> str:
    if isinstance(t, Hole):
        return "?"
    if isinstance(t, Leaf):
        return t.rule
    if isinstance(t, Branch):
        return "(" + " ".join([t.rule] + [render(c) for c in t.children]) + ")"
    head = t.fn
    if t.routing != tuple(range(len(t.args))):
        head += "<" + ",".join(map(str, t.routing)) + ">"
    if not t.args:
        return f"({head})"
    return "(" + " ".join([head] + [render(a) for a in t.args]) + ")"


def sort_key(t: Template) -> tuple:
    return (node_count(t), render(t))


def fill_holes(t: Template, values: list[Template]) -> Template:
    """Replace holes left-to-right with `values`; consumes the list."""
    if isinstance(t, Hole):
        return values.pop(0)
    if isinstance(t, Leaf):
        return t
    if isinstance(t, Branch):
        return Branch(t.rule, tuple(fill_holes(c, values) for c in t.children))
    return Call(t.fn, t.routing, tuple(fill_holes(a, values) for a in t.args))


def expand(t: Template, bodies: dict[str, Template]) -> Template:
    """Expand every Call through its definition body down to rule nodes."""
    if isinstance(t, (Hole, Leaf)):
        return t
    if isinstance(t, Branch):
        return Branch(t.rule, tuple(expand(c, bodies) for c in t.children))
    body = bodies[t.fn]
    args = [expand(a, bodies) for a in t.args]
    plugged = [args[i] for i in t.routing]
    return expand(fill_holes(body, plugged), bodies)


def match_tree(pattern: Template, tree: Template) -> list[Template] | None:
    """Match a pattern against a concrete tree; captures are the subtrees
    under the pattern's holes, in left-to-right hole order."""
    if isinstance(pattern, Hole):
        return [tree]
    if isinstance(pattern, Leaf):
        return [] if pattern == tree else None
    if isinstance(pattern, Branch) and isinstance(tree, Branch):
        if pattern.rule != tree.rule or len(pattern.children) != len(tree.children):
            return None
        captures: list[Template] = []
        for p, t in zip(pattern.children, tree.children):
            got = match_tree(p, t)
            if got is None:
                return None
            captures.extend(got)
        return captures
    return None
