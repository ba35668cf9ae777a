"""End-to-end driver: parse, filter, anti-unify, rewrite, cost analysis,
library selection, extraction, and report assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import antiunify, liblearn, parsing, report as report_mod
from .corpus import Piece, load_corpus
from .grammar import Grammar, default_grammar_path, load_grammar
from .liblearn import Abstraction, CostOptions, Selection
from .parsing import ParseForest, validate_expanded
from .report import CompressionReport, PieceRow, reference_diff_lines
from .templates import Template, expand, leaf_count, render


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str
    grammar_path: str | None = None
    mode: str = "joint"  # "joint" | "piecewise"
    beam: int | None = 5
    max_lib: int = 15
    out_dir: str | None = None
    dot: bool = False
    reference: str = "auto"  # "auto", "none", or a path
    candidate_cap: int | None = None
    use_reduce: bool = True
    semi_naive: bool = True
    iteration_cap: int = 10_000

    def cost_options(self) -> CostOptions:
        return CostOptions(max_lib=self.max_lib, beam=self.beam, use_reduce=self.use_reduce)


@dataclass
class PieceOutcome:
    piece: Piece
    derivation_count: int
    full_span_heads: tuple[str, ...]
    refactored_size: int
    program: Template
    expanded: Template


@dataclass
class LearnResult:
    """Everything one corpus-level learning pass produces."""

    pieces: list[PieceOutcome]
    failures: list[str]
    library: list[Abstraction]
    abstractions: list[Abstraction]  # every candidate that earned a rewrite
    selection: Selection | None
    candidates_json: list[dict]
    forest: ParseForest


@dataclass
class RunArtifacts:
    config: RunConfig
    grammar: Grammar
    mode_results: list[LearnResult]  # one for joint, one per piece for piecewise
    report: CompressionReport

    @property
    def failures(self) -> list[str]:
        seen = []
        for res in self.mode_results:
            for title in res.failures:
                if title not in seen:
                    seen.append(title)
        return seen


def demo_corpus_path() -> Path:
    return Path(str(resources.files("harmolib.data").joinpath("corpus_demo.txt")))


def reference_path() -> Path:
    return Path(str(resources.files("harmolib.data").joinpath("demo_reference.json")))


def learn_corpus(pieces: list[Piece], grammar: Grammar, config: RunConfig) -> LearnResult:
    forest, sat = parsing.cyk_saturate(
        pieces,
        grammar,
        semi_naive=config.semi_naive,
        iteration_cap=config.iteration_cap,
    )
    if not sat.saturated:
        raise PipelineError(
            f"parsing hit the iteration cap ({config.iteration_cap}); "
            "the grammar may be malformed"
        )
    ok_pieces = [p for p in pieces if forest.full_span_keys(p)]
    failures = [p.title for p in pieces if not forest.full_span_keys(p)]
    parsing.filter_root_connected(forest)

    result = LearnResult(
        pieces=[],
        failures=failures,
        library=[],
        abstractions=[],
        selection=None,
        candidates_json=[],
        forest=forest,
    )
    if not ok_pieces:
        return result

    cooccur = antiunify.compute_cooccur(forest)
    au = antiunify.run_au_fixpoint(forest, cooccur, iteration_cap=config.iteration_cap)
    candidates = au.candidates
    if config.candidate_cap is not None:
        candidates = candidates[: config.candidate_cap]
    sites = liblearn.collect_match_sites(forest, candidates)
    reusable = liblearn.keep_reusable(candidates, sites)
    abstractions = liblearn.build_abstractions(reusable)
    result.abstractions = abstractions
    result.candidates_json = antiunify.candidates_to_json(
        candidates, sites, kept=set(reusable)
    )

    rewrites = liblearn.generate_rewrites(forest, abstractions)
    sat2 = liblearn.saturate_with_patterns(forest, rewrites, config.iteration_cap)
    if not sat2.saturated:
        raise PipelineError("rewrite saturation hit the iteration cap")

    options = config.cost_options()
    cost_sets = liblearn.cost_set_analysis(forest, abstractions, options)
    root_sets = [
        liblearn.piece_root_costs(forest, cost_sets, p, options) for p in ok_pieces
    ]
    selection = liblearn.select_library(
        root_sets, abstractions, [p.baseline_size for p in ok_pieces], options
    )
    result.selection = selection
    result.library = selection.library

    bodies = liblearn.library_bodies(abstractions)
    for piece in ok_pieces:
        size, program = liblearn.extract_refactored(
            forest, abstractions, selection.lib_ids, piece
        )
        expanded = expand(program, bodies)
        validate_expanded(expanded, piece.chords, grammar)
        if leaf_count(expanded) != piece.length:
            raise PipelineError(f"extraction for {piece.title!r} lost chords")
        result.pieces.append(
            PieceOutcome(
                piece=piece,
                derivation_count=parsing.piece_derivation_count(forest, piece),
                full_span_heads=tuple(
                    str(k.head) for k in forest.full_span_keys(piece)
                ),
                refactored_size=size,
                program=program,
                expanded=expanded,
            )
        )
    return result


def _resolve_reference(config: RunConfig, corpus: Path) -> dict | None:
    if config.reference == "none":
        return None
    if config.reference == "auto":
        ref_file = reference_path()
    else:
        ref_file = Path(config.reference)
        if not ref_file.exists():
            raise PipelineError(f"reference file not found: {ref_file}")
    try:
        data = json.loads(ref_file.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PipelineError(f"cannot read reference {ref_file}: {exc}") from exc
    return data


def run(config: RunConfig) -> RunArtifacts:
    grammar_path = config.grammar_path or str(default_grammar_path())
    grammar = load_grammar(grammar_path)
    corpus_path = Path(config.corpus_path)
    pieces = load_corpus(corpus_path)

    if config.mode == "joint":
        results = [learn_corpus(pieces, grammar, config)]
    elif config.mode == "piecewise":
        results = [learn_corpus([piece], grammar, config) for piece in pieces]
    else:
        raise PipelineError(f"unknown mode {config.mode!r}")

    rows: list[PieceRow] = []
    failures: list[str] = []
    library_ids: list[str] = []
    library_storage = 0
    if config.mode == "joint":
        res = results[0]
        failures = list(res.failures)
        storage = liblearn.storage_cost(
            [ab.id for ab in res.library], res.abstractions
        )
        library_ids = [ab.id for ab in res.library]
        library_storage = storage
        share = (
            Fraction(storage, len(res.pieces)) if res.pieces else Fraction(0)
        )
        for outcome in res.pieces:
            rows.append(_row(outcome, share))
    else:
        for res in results:
            failures.extend(res.failures)
            storage = liblearn.storage_cost(
                [ab.id for ab in res.library], res.abstractions
            )
            for outcome in res.pieces:
                rows.append(_row(outcome, Fraction(storage)))
                library_ids.extend(
                    f"{outcome.piece.title}:{ab.id}" for ab in res.library
                )
                library_storage += storage

    rep = CompressionReport(
        mode=config.mode,
        beam=config.beam,
        max_lib=config.max_lib,
        grammar=str(grammar_path),
        corpus=str(corpus_path),
        rows=rows,
        library_ids=library_ids,
        library_storage=library_storage,
        failures=failures,
    )
    reference = _resolve_reference(config, corpus_path)
    if reference is not None:
        rep.reference_diff = reference_diff_lines(rep, reference)
    return RunArtifacts(config=config, grammar=grammar, mode_results=results, report=rep)


def _row(outcome: PieceOutcome, share: Fraction) -> PieceRow:
    return PieceRow(
        title=outcome.piece.title,
        length=outcome.piece.length,
        baseline=outcome.piece.baseline_size,
        derivation_count=outcome.derivation_count,
        full_span_heads=outcome.full_span_heads,
        refactored_size=outcome.refactored_size,
        storage_share=share,
    )


# --- artifact serialization -------------------------------------------------


def template_to_json(t: Template) -> dict:
    from .templates import Branch, Call, Hole, Leaf

    if isinstance(t, Hole):
        return {"kind": "hole"}
    if isinstance(t, Leaf):
        return {"kind": "leaf", "rule": t.rule}
    if isinstance(t, Branch):
        return {
            "kind": "branch",
            "rule": t.rule,
            "children": [template_to_json(c) for c in t.children],
        }
    return {
        "kind": "call",
        "fn": t.fn,
        "routing": list(t.routing),
        "args": [template_to_json(a) for a in t.args],
    }


def template_from_json(data: dict) -> Template:
    from .templates import HOLE, Branch, Call, Leaf

    kind = data["kind"]
    if kind == "hole":
        return HOLE
    if kind == "leaf":
        return Leaf(data["rule"])
    if kind == "branch":
        return Branch(
            data["rule"], tuple(template_from_json(c) for c in data["children"])
        )
    return Call(
        data["fn"],
        tuple(data["routing"]),
        tuple(template_from_json(a) for a in data["args"]),
    )


def library_to_json(result: LearnResult) -> list[dict]:
    bodies = liblearn.library_bodies(result.abstractions)
    out = []
    for ab in result.library:
        out.append(
            {
                "id": ab.id,
                "arity": ab.arity,
                "def_size": ab.def_size,
                "deps": sorted(ab.deps),
                "body": render(ab.body),
                "stored": render(ab.stored),
                "expansion": render(expand(ab.body, bodies)),
                "body_json": template_to_json(ab.body),
                "stored_json": template_to_json(ab.stored),
            }
        )
    return out


def programs_to_json(result: LearnResult) -> list[dict]:
    out = []
    for outcome in result.pieces:
        out.append(
            {
                "title": outcome.piece.title,
                "chords": [str(c) for c in outcome.piece.chords],
                "size": outcome.refactored_size,
                "program": render(outcome.program),
                "program_json": template_to_json(outcome.program),
                "expanded": render(outcome.expanded),
            }
        )
    return out


def artifacts_to_json(artifacts: RunArtifacts) -> dict:
    data = {
        "report": report_mod.report_to_json(artifacts.report),
        "mode": artifacts.config.mode,
    }
    if artifacts.config.mode == "joint":
        res = artifacts.mode_results[0]
        data["library"] = library_to_json(res)
        data["programs"] = programs_to_json(res)
        data["candidates"] = res.candidates_json
    else:
        per_piece = []
        for res in artifacts.mode_results:
            per_piece.append(
                {
                    "pieces": [o.piece.title for o in res.pieces],
                    "library": library_to_json(res),
                    "programs": programs_to_json(res),
                    "candidates": res.candidates_json,
                }
            )
        data["runs"] = per_piece
    return data
