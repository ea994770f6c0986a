"""Aggregate grid-cell metrics into side-by-side merge/inject tables.

Reads the ``cell.json`` and ``metrics_seed*.tsv`` files a grid run leaves
behind and renders two tables (vocabulary usage, CIDEr, and ROUGE-L in one;
the four BLEU orders in the other) as aligned plain text plus a flat CSV.
Means are over runs with the population standard deviation in parentheses;
the better mean of each merge/inject pair is starred.  METEOR is not
reported: it needs external linguistic resources.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError
from .metrics import read_metric_report

QUALITY_COLUMNS = (("vocab_usage_percent", "%Vocabulary"), ("cider", "CIDEr"),
                   ("rouge_l", "ROUGE-L"))
BLEU_COLUMNS = (("bleu1", "BLEU-1"), ("bleu2", "BLEU-2"), ("bleu3", "BLEU-3"),
                ("bleu4", "BLEU-4"))
ARCH_ORDER = ("merge", "inject")


@dataclass
class CellStats:
    arch: str
    layer: int
    min_freq: int
    vocab_size: int
    runs: int
    means: dict
    stds: dict


def collect_cells(grid_dir) -> list[CellStats]:
    grid = Path(grid_dir)
    cells = []
    for cell_file in sorted(grid.glob("*/cell.json")):
        meta = json.loads(cell_file.read_text(encoding="utf-8"))
        reports = []
        for metrics_file in sorted(cell_file.parent.glob("metrics_seed*.tsv")):
            reports.append(read_metric_report(metrics_file).as_dict())
        means: dict = {}
        stds: dict = {}
        if reports:
            for key in reports[0]:
                values = [r[key] for r in reports]
                mean = sum(values) / len(values)
                means[key] = mean
                stds[key] = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
        cells.append(CellStats(arch=meta["arch"], layer=int(meta["layer"]),
                               min_freq=int(meta["min_freq"]), vocab_size=int(meta["vocab_size"]),
                               runs=len(reports), means=means, stds=stds))
    return cells


def _fmt(cell: CellStats | None, key: str, starred: bool) -> str:
    if cell is None or not cell.means:
        return "—"
    mark = "*" if starred else ""
    return f"{mark}{cell.means[key]:.3f} ({cell.stds[key]:.2f})"


def _table(rows, columns, title) -> str:
    header_1 = f"{'Layer':>5}  {'Vocab':>6}"
    header_2 = " " * 13
    for _, label in columns:
        header_1 += f"  {label:^31}"
        header_2 += "  " + f"{'merge':^15}{'inject':^15} "
    lines = [title, header_1, header_2, "-" * len(header_1)]
    for (layer, vocab_size, min_freq), by_arch in rows:
        line = f"{layer:>5}  {vocab_size:>6}"
        for key, _ in columns:
            pair = []
            merge, inject = by_arch.get("merge"), by_arch.get("inject")
            m = merge.means.get(key) if merge and merge.means else None
            i = inject.means.get(key) if inject and inject.means else None
            pair.append(_fmt(merge, key, m is not None and (i is None or m > i)))
            pair.append(_fmt(inject, key, i is not None and (m is None or i > m)))
            line += "  " + f"{pair[0]:^15}{pair[1]:^15} "
        lines.append(line)
    return "\n".join(lines)


def render_report(grid_dir) -> tuple[str, str]:
    """Returns (plain text report, CSV text) for a grid directory."""
    cells = collect_cells(grid_dir)
    if not cells:
        raise UsageError(f"no grid cells found under {grid_dir}")
    rows: dict = {}
    for cell in cells:
        rows.setdefault((cell.layer, cell.vocab_size, cell.min_freq), {})[cell.arch] = cell
    ordered = sorted(rows.items())

    parts = [
        _table(ordered, QUALITY_COLUMNS, "Caption quality per grid cell"),
        "",
        _table(ordered, BLEU_COLUMNS, "BLEU scores per grid cell"),
        "",
        "Values are mean (population std) over runs; * marks the better mean of a pair.",
        "METEOR is omitted: it depends on external linguistic resources.",
    ]
    if any(c.runs == 1 for c in cells):
        parts.append("Note: cells with a single run report a degenerate std of 0.00.")
    incomplete = [c for c in cells if c.runs == 0]
    if incomplete:
        parts.append(f"Note: {len(incomplete)} cell(s) have no metric reports yet and show —.")
    text = "\n".join(parts) + "\n"

    csv_lines = ["arch,layer,min_freq,vocab_size,metric,mean,std,runs"]
    for cell in cells:
        for key in [k for k, _ in QUALITY_COLUMNS + BLEU_COLUMNS]:
            if cell.means:
                csv_lines.append(f"{cell.arch},{cell.layer},{cell.min_freq},{cell.vocab_size},"
                                 f"{key},{cell.means[key]:.6f},{cell.stds[key]:.6f},{cell.runs}")
            else:
                csv_lines.append(f"{cell.arch},{cell.layer},{cell.min_freq},{cell.vocab_size},"
                                 f"{key},,,0")
    return text, "\n".join(csv_lines) + "\n"


def write_report(grid_dir, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text, csv_text = render_report(grid_dir)
    text_path = out / "report.txt"
    csv_path = out / "report.csv"
    text_path.write_text(text, encoding="utf-8")
    csv_path.write_text(csv_text, encoding="utf-8")
    return {"text_path": str(text_path), "csv_path": str(csv_path), "text": text}
