"""Command line driver.

Subcommands: `parse` (forest statistics only), `learn` (full pipeline),
`report` (re-render a saved run), `export` (DOT files from a saved run).
All outputs are also emitted as JSON with sorted keys, so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import export as export_mod
from . import parsing, pipeline
from .antiunify import AntiUnifyError
from .corpus import CorpusError, load_corpus
from .grammar import GrammarError, default_grammar_path, load_grammar
from .liblearn import LibraryLearningError
from .pipeline import PipelineError, RunConfig, template_from_json
from .report import CompressionReport, render_report


def _dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _slug(title: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in title.lower())


def _beam(value: str) -> int | None:
    if value in ("inf", "none", "unbounded"):
        return None
    beam = int(value)
    if beam < 1:
        raise argparse.ArgumentTypeError("beam must be >= 1 (or 'inf')")
    return beam


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", required=True, help="corpus file (text or JSON)")
    parser.add_argument(
        "--grammar",
        default=None,
        help=f"grammar config (default: {default_grammar_path().name})",
    )
    parser.add_argument("--out", default=None, help="output directory")


def cmd_parse(args) -> int:
    grammar = load_grammar(args.grammar or default_grammar_path())
    pieces = load_corpus(args.corpus)
    forest, sat = parsing.cyk_saturate(pieces, grammar)
    parsing.filter_root_connected(forest)
    stats = []
    failed = []
    for piece in pieces:
        heads = [str(k.head) for k in forest.full_span_keys(piece)]
        count = parsing.piece_derivation_count(forest, piece)
        stats.append(
            {
                "title": piece.title,
                "length": piece.length,
                "baseline": piece.baseline_size,
                "full_span_heads": heads,
                "derivations": str(count),
            }
        )
        if not heads:
            failed.append(piece.title)
        print(
            f"{piece.title}: length {piece.length}, derivations {count}, "
            f"heads: {', '.join(heads) if heads else 'NO COMPLETE PARSE'}"
        )
    print(
        f"forest: {forest.graph.node_count} e-nodes, "
        f"{len(forest.span_classes)} span classes, "
        f"{sat.iterations} saturation iterations"
    )
    if args.out:
        out = Path(args.out)
        _write(out / "parse.json", _dump_json({"pieces": stats}))
        _write(out / "forest.json", _dump_json(parsing.forest_to_json(forest)))
        _write(out / "forest.dot", parsing.forest_to_dot(forest))
    if failed:
        print(f"error: no complete parse for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_learn(args) -> int:
    config = RunConfig(
        corpus_path=args.corpus,
        grammar_path=args.grammar,
        mode=args.mode,
        beam=args.beam,
        max_lib=args.max_lib,
        out_dir=args.out,
        dot=args.dot,
        reference=args.reference,
    )
    artifacts = pipeline.run(config)
    text = render_report(artifacts.report)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        data = pipeline.artifacts_to_json(artifacts)
        _write(out / "report.txt", text)
        _write(out / "report.json", _dump_json(data["report"]))
        _write(out / "artifacts.json", _dump_json(data))
        if config.mode == "joint":
            _write(out / "library.json", _dump_json(data["library"]))
            _write(out / "programs.json", _dump_json(data["programs"]))
            _write(out / "candidates.json", _dump_json(data["candidates"]))
        if args.dot:
            _write_dots(out, data)
    if artifacts.failures:
        print(
            f"error: no complete parse for: {', '.join(artifacts.failures)}",
            file=sys.stderr,
        )
        return 1
    return 0


def _write_dots(out: Path, data: dict) -> None:
    runs = [data] if data["mode"] == "joint" else data["runs"]
    for run in runs:
        bodies = {
            entry["id"]: template_from_json(entry["body_json"])
            for entry in run["library"]
        }
        for prog in run["programs"]:
            template = template_from_json(prog["program_json"])
            block = export_mod.program_blocks(template, bodies, prog["chords"])
            _write(
                out / f"program_{_slug(prog['title'])}.dot",
                export_mod.program_dot(prog["title"], block),
            )
        if run["library"]:
            from .liblearn import Abstraction
            from .templates import HOLE

            abstractions = [
                Abstraction(
                    id=e["id"],
                    body=template_from_json(e["body_json"]),
                    arity=e["arity"],
                    stored=template_from_json(e["stored_json"]),
                    def_size=e["def_size"],
                    deps=frozenset(e["deps"]),
                    deps_star=frozenset(e["deps"]),
                )
                for e in run["library"]
            ]
            suffix = "" if data["mode"] == "joint" else "_" + _slug(run["pieces"][0])
            _write(out / f"library{suffix}.dot", export_mod.library_dot(abstractions))


def cmd_report(args) -> int:
    path = Path(args.run)
    if path.is_dir():
        path = path / "report.json"
    data = json.loads(path.read_text(encoding="utf-8"))
    print(_render_saved_report(data), end="")
    return 0


def _render_saved_report(data: dict) -> str:
    from fractions import Fraction

    from .report import PieceRow

    rows = []
    for row in data["pieces"]:
        num, den = row["storage_share"]["exact"].split("/")
        rows.append(
            PieceRow(
                title=row["title"],
                length=row["length"],
                baseline=row["baseline"],
                derivation_count=int(row["derivations"]),
                full_span_heads=tuple(row["full_span_heads"]),
                refactored_size=row["refactored_size"],
                storage_share=Fraction(int(num), int(den)),
            )
        )
    report = CompressionReport(
        mode=data["mode"],
        beam=data["beam"],
        max_lib=data["max_lib"],
        grammar=data["grammar"],
        corpus=data["corpus"],
        rows=rows,
        library_ids=data["library"]["ids"],
        library_storage=data["library"]["storage"],
        failures=data["failures"],
        reference_diff=data["reference_diff"],
    )
    return render_report(report)


def cmd_export(args) -> int:
    path = Path(args.run)
    if path.is_dir():
        path = path / "artifacts.json"
    data = json.loads(path.read_text(encoding="utf-8"))
    out = Path(args.out)
    _write_dots(out, data)
    print(f"wrote DOT files to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harmolib",
        description="Parse chord progressions and learn a library of harmonic patterns",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_parse = sub.add_parser("parse", help="parse a corpus and report forest statistics")
    _add_common(p_parse)
    p_parse.set_defaults(func=cmd_parse)

    p_learn = sub.add_parser("learn", help="run the full learning pipeline")
    _add_common(p_learn)
    p_learn.add_argument("--mode", choices=("joint", "piecewise"), default="joint")
    p_learn.add_argument("--beam", type=_beam, default=5, help="beam width (or 'inf')")
    p_learn.add_argument("--max-lib", type=int, default=15, dest="max_lib")
    p_learn.add_argument("--dot", action="store_true", help="also write DOT exports")
    p_learn.add_argument(
        "--reference",
        default="auto",
        help="reference metrics to diff against: 'auto', 'none', or a JSON path",
    )
    p_learn.set_defaults(func=cmd_learn)

    p_report = sub.add_parser("report", help="render a saved report.json")
    p_report.add_argument("run", help="report.json (or a learn output directory)")
    p_report.set_defaults(func=cmd_report)

    p_export = sub.add_parser("export", help="write DOT files from saved artifacts")
    p_export.add_argument("run", help="artifacts.json (or a learn output directory)")
    p_export.add_argument("--out", required=True, help="output directory for DOT files")
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, GrammarError, PipelineError, LibraryLearningError, AntiUnifyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
