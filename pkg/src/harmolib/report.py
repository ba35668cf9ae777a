"""Compression accounting and report rendering.

Per piece: baseline description length (2n-1 for a length-n progression),
refactored derivation size under the selected library, the piece's share
of library storage, and the normalized compression rate
baseline / (refactored + share). Shares stay exact rationals internally
and render at two decimals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


@dataclass(frozen=True)
class PieceRow:
    title: str
    length: int
    baseline: int
    derivation_count: int
    full_span_heads: tuple[str, ...]
    refactored_size: int
    storage_share: Fraction

    @property
    def compression_rate(self) -> Fraction:
        return Fraction(self.baseline) / (self.refactored_size + self.storage_share)


@dataclass
class CompressionReport:
    mode: str
    beam: int | None
    max_lib: int
    grammar: str
    corpus: str
    rows: list[PieceRow]
    library_ids: list[str]
    library_storage: int
    failures: list[str] = field(default_factory=list)
    reference_diff: list[str] = field(default_factory=list)

    @property
    def total_baseline(self) -> int:
        return sum(r.baseline for r in self.rows)

    @property
    def total_refactored(self) -> int:
        return sum(r.refactored_size for r in self.rows)

    @property
    def total_storage(self) -> Fraction:
        return sum((r.storage_share for r in self.rows), Fraction(0))

    @property
    def total_cr(self) -> Fraction:
        denom = self.total_refactored + self.total_storage
        if denom == 0:
            return Fraction(1)
        return Fraction(self.total_baseline) / denom


def fmt2(value: Fraction | float | int) -> str:
    return f"{float(value):.2f}"


def render_report(report: CompressionReport) -> str:
    headers = (
        "Piece",
        "Baseline",
        "With library",
        "Storage/piece",
        "CR",
    )
    body = []
    for row in report.rows:
        body.append(
            (
                row.title,
                str(row.baseline),
                str(row.refactored_size),
                fmt2(row.storage_share),
                fmt2(row.compression_rate),
            )
        )
    body.append(
        (
            "Total",
            str(report.total_baseline),
            str(report.total_refactored),
            fmt2(report.total_storage),
            fmt2(report.total_cr),
        )
    )
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in body)) for i in range(len(headers))
    ]
    lines = []
    title = f"{report.mode} library learning on {len(report.rows)} piece(s)"
    lines.append(title)
    lines.append("=" * len(title))
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    lines.append("  ".join("-" * w for w in widths))
    for r in body[:-1]:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))))
    lines.append("  ".join("-" * w for w in widths))
    r = body[-1]
    lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))))
    lines.append("")
    lines.append(f"library: {len(report.library_ids)} abstraction(s), storage {report.library_storage}")
    if report.library_ids:
        lines.append("  " + " ".join(report.library_ids))
    for row in report.rows:
        heads = ", ".join(row.full_span_heads)
        lines.append(
            f"{row.title}: length {row.length}, {row.derivation_count} derivation(s), "
            f"full-span heads: {heads}"
        )
    if report.failures:
        lines.append("")
        for title in report.failures:
            lines.append(f"FAILED to parse: {title} (no full-span derivation)")
    if report.reference_diff:
        lines.append("")
        lines.append("reference comparison:")
        for line in report.reference_diff:
            lines.append("  " + line)
    return "\n".join(lines) + "\n"


def report_to_json(report: CompressionReport) -> dict:
    rows = []
    for row in report.rows:
        rows.append(
            {
                "title": row.title,
                "length": row.length,
                "baseline": row.baseline,
                "derivations": str(row.derivation_count),
                "full_span_heads": list(row.full_span_heads),
                "refactored_size": row.refactored_size,
                "storage_share": {
                    "exact": f"{row.storage_share.numerator}/{row.storage_share.denominator}",
                    "rounded": float(fmt2(row.storage_share)),
                },
                "compression_rate": {
                    "exact": f"{row.compression_rate.numerator}/{row.compression_rate.denominator}",
                    "rounded": float(fmt2(row.compression_rate)),
                },
            }
        )
    return {
        "mode": report.mode,
        "beam": report.beam,
        "max_lib": report.max_lib,
        "grammar": report.grammar,
        "corpus": report.corpus,
        "pieces": rows,
        "totals": {
            "baseline": report.total_baseline,
            "refactored": report.total_refactored,
            "storage": {
                "exact": f"{report.total_storage.numerator}/{report.total_storage.denominator}",
                "rounded": float(fmt2(report.total_storage)),
            },
            "compression_rate": {
                "exact": f"{report.total_cr.numerator}/{report.total_cr.denominator}",
                "rounded": float(fmt2(report.total_cr)),
            },
        },
        "library": {"ids": list(report.library_ids), "storage": report.library_storage},
        "failures": list(report.failures),
        "reference_diff": list(report.reference_diff),
    }


def reference_diff_lines(report: CompressionReport, reference: dict) -> list[str]:
    """Compare a finished run against published reference metrics; one line
    per comparable value, flagging mismatches."""
    section = reference.get(report.mode)
    if not section:
        return []
    lines: list[str] = []
    by_title = {row.title: row for row in report.rows}
    for title, expected in sorted(section.get("pieces", {}).items()):
        row = by_title.get(title)
        if row is None:
            lines.append(f"{title}: not in this run")
            continue
        checks = [
            ("baseline", row.baseline, expected.get("baseline")),
            ("derivations", row.derivation_count, expected.get("derivations")),
            ("refactored", row.refactored_size, expected.get("refactored")),
            ("storage_share", float(fmt2(row.storage_share)), expected.get("storage_share")),
            ("cr", float(fmt2(row.compression_rate)), expected.get("cr")),
        ]
        for name, got, want in checks:
            if want is None:
                continue
            mark = "ok" if got == want else f"MISMATCH (reference {want})"
            lines.append(f"{title} {name}: {got} {mark}")
    totals = section.get("totals", {})
    total_checks = [
        ("baseline", report.total_baseline, totals.get("baseline")),
        ("refactored", report.total_refactored, totals.get("refactored")),
        ("storage", float(fmt2(report.total_storage)), totals.get("storage")),
        ("cr", float(fmt2(report.total_cr)), totals.get("cr")),
    ]
    for name, got, want in total_checks:
        if want is None:
            continue
        if isinstance(want, (int, float)) and isinstance(got, float):
            want = float(want)
        mark = "ok" if got == want else f"MISMATCH (reference {want})"
        lines.append(f"total {name}: {got} {mark}")
    return lines
