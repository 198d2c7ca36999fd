"""Render an EvalReport as CSV / Markdown tables and a grouped-bar SVG.

Output is a pure function of the report: floats are printed with fixed
precision, rows follow the report's model and condition order, and no
timestamps are written, so rendering twice gives identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .. import __version__
from .harness import EvalReport

COLUMNS = (("precision", "P"), ("recall", "R"), ("f1", "F1"), ("accuracy", "Acc"), ("detection_rate", "DR"))
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _markdown(title: str, header: list[str], rows: list[list[str]]) -> str:
    lines = [f"### {title}", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def performance_table(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    """One row per model; P/R/F1/Acc/DR for each condition side by side."""
    header = ["model"] + [f"{c} {short}" for c in report.conditions for _, short in COLUMNS]
    rows = []
    for m in report.models:
        row = [m]
        for c in report.conditions:
            mean = report.cells[m][c]["mean"]
            row += [_fmt(mean[key]) for key, _ in COLUMNS]
        rows.append(row)
    return header, rows


def detection_table(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    header = ["model", *report.conditions]
    rows = [[m, *(_fmt(report.mean(m, c, "detection_rate")) for c in report.conditions)] for m in report.models]
    return header, rows


def per_class_table(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    header = ["model", "condition", "class", "precision", "recall", "f1"]
    rows = []
    for m in report.models:
        for c in report.conditions:
            for cls in ("benign", "malicious"):
                vals = [[s["per_class"][cls][k] for s in report.cells[m][c]["per_seed"]]
                        for k in ("precision", "recall", "f1")]
                rows.append([m, c, cls, *(_fmt(sum(v) / len(v)) for v in vals)])
    return header, rows


def ablation_table(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    cond = "all" if "all" in report.conditions else (report.conditions[-1] if report.conditions else "all")
    header = ["condition", *report.models]
    if not report.models:
        return header, []
    return header, [[cond, *(_fmt(report.mean(m, cond, "detection_rate")) for m in report.models)]]


def sweep_table(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    header = ["eps", "target_accuracy"]
    sw = report.fgsm_sweep
    return header, [[f"{e:g}", _fmt(a)] for e, a in zip(sw.get("eps", []), sw.get("mean", []))]


def cross_table(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    header = ["trained_on->tested_on", *(short for _, short in COLUMNS)]
    rows = [[k, *(_fmt(v["mean"][key]) for key, _ in COLUMNS)] for k, v in report.cross_test.items()]
    return header, rows


def detection_svg(report: EvalReport, title: str = "Detection rate") -> str:
    """Grouped bars: one group per model, one bar group per (model, condition)."""
    conds = report.conditions
    bar_w, gap, left, top, height = 14, 18, 50, 30, 200
    group_w = max(1, len(conds)) * bar_w + gap
    width = left + max(1, len(report.models)) * group_w + 140
    total_h = top + height + 60
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" '
        f'viewBox="0 0 {width} {total_h}" font-family="sans-serif" font-size="10">',
        f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + height}" x2="{width - 130}" y2="{top + height}" stroke="#333"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + height}" stroke="#333"/>',
    ]
    for tick in range(0, 101, 25):
        y = top + height - height * tick / 100
        out.append(f'<text x="{left - 6}" y="{y + 3:.1f}" text-anchor="end">{tick}</text>')
    for i, m in enumerate(report.models):
        x0 = left + gap / 2 + i * group_w
        out.append(f'<g class="model" data-model={quoteattr(m)}>')
        for j, c in enumerate(conds):
            v = report.mean(m, c, "detection_rate")
            h = height * v / 100
            x = x0 + j * bar_w
            out.append(
                f'<g class="bar-group" data-model={quoteattr(m)} data-condition={quoteattr(c)}>'
                f'<rect x="{x:.1f}" y="{top + height - h:.2f}" width="{bar_w - 2}" height="{h:.2f}" '
                f'fill="{PALETTE[j % len(PALETTE)]}"><title>{escape(m)} / {escape(c)}: {_fmt(v)}</title></rect></g>'
            )
        label_x = x0 + len(conds) * bar_w / 2
        out.append(f'<text x="{label_x:.1f}" y="{top + height + 14}" text-anchor="middle">{escape(m)}</text>')
        out.append("</g>")
    lx = width - 120
    for j, c in enumerate(conds):
        y = top + 12 * j
        out.append(f'<rect x="{lx}" y="{y}" width="9" height="9" fill="{PALETTE[j % len(PALETTE)]}"/>')
        out.append(f'<text x="{lx + 13}" y="{y + 8}">{escape(c)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return hashlib.sha256(data).hexdigest()


def render_report(report: EvalReport, outdir, ablation: EvalReport | None = None) -> dict:
    """Write tables, figure and manifest under ``outdir``; returns relative path -> sha256."""
    outdir = Path(outdir)
    files: dict[str, str] = {}
    ds = report.metadata.get("dataset", "dataset")

    def emit(name: str, title: str, table) -> None:
        header, rows = table
        files[f"tables/{name}.csv"] = _write(outdir / "tables" / f"{name}.csv", _csv(header, rows))
        files[f"tables/{name}.md"] = _write(outdir / "tables" / f"{name}.md", _markdown(title, header, rows))

    if report.kind == "ablation":
        emit("ablation", f"Ablation, detection rate ({ds})", ablation_table(report))
    else:
        emit("performance", f"Performance per condition ({ds})", performance_table(report))
        emit("detection_rate", f"Detection rate ({ds})", detection_table(report))
        emit("per_class", f"Per-class metrics ({ds})", per_class_table(report))
        if report.fgsm_sweep:
            emit("fgsm_sweep", f"FGSM target accuracy on malicious rows ({ds})", sweep_table(report))
        if report.cross_test:
            emit("cross_test", f"Cross-testing ({ds})", cross_table(report))
        files["figures/detection_rate.svg"] = _write(
            outdir / "figures" / "detection_rate.svg", detection_svg(report, f"Detection rate ({ds})"))
    if ablation is not None:
        emit("ablation", f"Ablation, detection rate ({ds})", ablation_table(ablation))
    manifest = {
        "config_hash": report.metadata.get("config_hash"),
        "seeds": report.metadata.get("seeds"),
        "dataset_checksums": {k: v["sha256"] for k, v in report.metadata.get("sources", {}).items()},
        "library_version": __version__,
        "files": dict(sorted(files.items())),
    }
    _write(outdir / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return files
