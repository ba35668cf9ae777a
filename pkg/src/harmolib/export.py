"""Block-structured exports of refactored programs and the library DAG.

A refactored program renders as nested blocks: each library call collapses
to one labeled block showing the surface chords it consumes directly, with
its open arguments as child blocks; bare rule applications stay as plain
nodes. Every chord of the piece is covered by exactly one block leaf.
"""

from __future__ import annotations

from typing import Sequence

from .liblearn import Abstraction
from .templates import Branch, Call, Hole, Leaf, Template


class ExportError(ValueError):
    pass


def program_blocks(
    template: Template, bodies: dict[str, Template], chords: Sequence[str]
) -> dict:
    """Nested block structure with chord positions assigned left to right."""

    def walk(t: Template, i: int) -> tuple[dict, int]:
        if isinstance(t, Leaf):
            if i >= len(chords):
                raise ExportError("program consumes more chords than the piece has")
            block = {"kind": "chord", "rule": t.rule, "position": i, "chord": str(chords[i])}
            return block, i + 1
        if isinstance(t, Branch):
            children = []
            for c in t.children:
                child, i = walk(c, i)
                children.append(child)
            return {"kind": "rule", "rule": t.rule, "children": children}, i
        if isinstance(t, Call):
            body = bodies[t.fn]
            consumed: list[dict] = []
            children: list[dict] = []
            hole_index = 0

            def walk_body(b: Template, j: int) -> int:
                nonlocal hole_index
                if isinstance(b, Leaf):
                    if j >= len(chords):
                        raise ExportError("call body overruns the piece")
                    consumed.append({"position": j, "chord": str(chords[j])})
                    return j + 1
                if isinstance(b, Branch):
                    for c in b.children:
                        j = walk_body(c, j)
                    return j
                if isinstance(b, Hole):
                    arg = t.args[t.routing[hole_index]]
                    hole_index += 1
                    child, j = walk(arg, j)
                    children.append(child)
                    return j
                raise ExportError("library bodies must be plain patterns")

            i = walk_body(body, i)
            return {"kind": "call", "fn": t.fn, "chords": consumed, "children": children}, i
        raise ExportError(f"cannot export {type(t).__name__} nodes")

    block, stop = walk(template, 0)
    if stop != len(chords):
        raise ExportError(f"program covers {stop} of {len(chords)} chords")
    return block


def block_leaves(block: dict) -> list[dict]:
    """Chord-consuming leaves of the block tree, in surface order."""
    if block["kind"] == "chord":
        return [{"position": block["position"], "chord": block["chord"], "block": "rule-leaf"}]
    if block["kind"] == "rule":
        out = []
        for c in block["children"]:
            out.extend(block_leaves(c))
        return out
    out = [
        {"position": e["position"], "chord": e["chord"], "block": block["fn"]}
        for e in block["chords"]
    ]
    for c in block["children"]:
        out.extend(block_leaves(c))
    return sorted(out, key=lambda e: e["position"])


def program_dot(title: str, block: dict) -> str:
    lines = [
        "digraph program {",
        f'  label="{_quote(title)}";',
        "  node [shape=box];",
    ]
    counter = [0]

    def emit(b: dict) -> str:
        name = f"b{counter[0]}"
        counter[0] += 1
        if b["kind"] == "chord":
            lines.append(f'  {name} [label="{_quote(b["chord"])}" shape=plaintext];')
        elif b["kind"] == "rule":
            lines.append(f'  {name} [label="{_quote(b["rule"])}"];')
            for c in b["children"]:
                lines.append(f"  {name} -> {emit(c)};")
        else:
            chords = " ".join(e["chord"] for e in b["chords"])
            label = f'{b["fn"]}: {chords}' if chords else b["fn"]
            lines.append(f'  {name} [label="{_quote(label)}" shape=box3d style=filled fillcolor=lightblue];')
            for c in b["children"]:
                lines.append(f"  {name} -> {emit(c)};")
        return name

    emit(block)
    lines.append("}")
    return "\n".join(lines) + "\n"


def library_dot(library: Sequence[Abstraction]) -> str:
    ids = {ab.id for ab in library}
    lines = ["digraph library {", "  node [shape=record];"]
    for ab in sorted(library, key=lambda a: int(a.id[1:])):
        from .templates import render

        label = f"{ab.id} | arity {ab.arity} | size {ab.def_size} | {render(ab.stored)}"
        lines.append(f'  {ab.id} [label="{_quote(label)}"];')
    for ab in library:
        for dep in sorted(ab.deps):
            if dep not in ids:
                raise ExportError(f"library not closed: {ab.id} needs {dep}")
            lines.append(f"  {ab.id} -> {dep};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _quote(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
