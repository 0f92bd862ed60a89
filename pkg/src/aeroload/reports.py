"""Deterministic report files: JSON, Markdown tables, CSV plot data and SVG charts."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .experiments import ExperimentReport, config_hash

LABELS = ("Low", "Medium", "High")


def _fmt(v, nd=3) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{nd}f}"
    return str(v)


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(_fmt(c) for c in r) + " |" for r in rows]
    return out


def render_markdown(doc: dict) -> str:
    proto = doc["protocol"]
    cfg = doc["config"]
    lines = [f"# {proto.capitalize()} experiment", "",
             f"- seed: {cfg.get('seed')}",
             f"- config hash: `{doc.get('config_hash', config_hash(cfg))}`",
             f"- model: {cfg['model']['kind']} {json.dumps(cfg['model']['hyperparams'], sort_keys=True)}",
             f"- folds: {cfg.get('n_folds')}", ""]
    agg = doc["aggregate"]
    if "balanced_accuracy" in agg:
        lines += [f"**Balanced accuracy: {_fmt(agg['balanced_accuracy'])}**", ""]
    if proto == "generalized":
        rows = [(f["fold"], len(f["participants"]), f["n_val_rows"],
                 f["metrics"]["balanced_accuracy"]) for f in doc["folds"]]
        lines += ["## Folds", ""] + _table(("fold", "participants", "rows", "balanced accuracy"), rows)
        lines += [""] + _confusion(agg.get("confusion"))
    elif proto == "individualized":
        lines += [f"Best upsampling fraction: {_fmt(agg.get('best_fraction'))}", "",
                  "## Upsampling curve", ""]
        lines += _table(("fraction", "balanced accuracy"), doc["upsampling_curve"])
        if doc.get("per_target"):
            lines += ["", "## Per target", ""]
            rows = [(t, v["best_fraction"], v["best_balanced_accuracy"])
                    for t, v in sorted(doc["per_target"].items())]
            lines += _table(("participant", "best fraction", "balanced accuracy"), rows)
    elif proto == "ablation":
        lines += ["## Ablation", ""]
        rows = [(r["modality"], r["ablated"], r["accuracy_drop"]) for r in doc["ablation_rows"]]
        lines += _table(("removed modality", "balanced accuracy", "drop"), rows)
    elif proto == "baseline":
        lines += [f"Accuracy: {_fmt(agg.get('accuracy'))}", "", "## Per task group", ""]
        rows = [(g, v["expected_difficulty"], LABELS[v["predicted"]], v["accuracy"], v["n"])
                for g, v in sorted(doc["baseline"]["per_group"].items(), key=lambda kv: int(kv[0]))]
        lines += _table(("task group", "mean difficulty", "predicted", "accuracy", "rows"), rows)
        lines += [""] + _confusion(agg.get("confusion"))
    return "\n".join(lines) + "\n"


def _confusion(conf) -> list[str]:
    if not conf:
        return []
    rows = [(LABELS[i], *conf[i]) for i in range(len(conf))]
    return ["## Confusion (rows true, columns predicted)", ""] + _table(("", *LABELS), rows)


def _svg_frame(width, height, title) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" '
            f'font-size="14">{title}</text>']


def curve_svg(curve: Sequence[Sequence[float]], title="Upsampling curve") -> str:
    W, H, L, R, T, B = 480, 320, 60, 20, 35, 45
    out = _svg_frame(W, H, title)
    pw, ph = W - L - R, H - T - B

    def xy(p, a):
        return L + p * pw, T + (1 - a) * ph

    out.append(f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>')
    out.append(f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>')
    for k in range(6):
        v = k / 5
        x, _ = xy(v, 0)
        _, y = xy(0, v)
        out.append(f'<text x="{x:.1f}" y="{T + ph + 16}" text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{v:.1f}</text>')
        out.append(f'<text x="{L - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{v:.1f}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{H - 8}" text-anchor="middle" font-size="12" '
               f'font-family="sans-serif">target fraction p</text>')
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (xy(p, a) for p, a in curve))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for p, a in curve:
        x, y = xy(p, a)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="#1f77b4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def ablation_svg(rows: Sequence[dict], title="Accuracy drop per removed modality") -> str:
    W, L, R, T, rh = 480, 130, 30, 35, 22
    H = T + rh * max(len(rows), 1) + 30
    out = _svg_frame(W, H, title)
    span = max([abs(r["accuracy_drop"]) for r in rows] + [0.05])
    pw = W - L - R
    zero = L + pw / 2
    out.append(f'<line x1="{zero:.1f}" y1="{T}" x2="{zero:.1f}" y2="{H - 25}" stroke="black"/>')
    for i, r in enumerate(rows):
        y = T + i * rh
        w = r["accuracy_drop"] / span * (pw / 2)
        x = zero if w >= 0 else zero + w
        color = "#d62728" if w >= 0 else "#2ca02c"
        out.append(f'<rect x="{x:.2f}" y="{y + 3}" width="{abs(w):.2f}" height="{rh - 6}" fill="{color}"/>')
        out.append(f'<text x="{L - 6}" y="{y + rh / 2 + 4:.1f}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{r["modality"]}</text>')
        out.append(f'<text x="{zero + (pw / 2) + 2:.1f}" y="{y + rh / 2 + 4:.1f}" font-size="10" '
                   f'font-family="sans-serif" text-anchor="end">{r["accuracy_drop"]:+.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: ExperimentReport | dict, out_dir) -> list[Path]:
    """Write ``<protocol>.json`` and its renderings; returns the written paths."""
    doc = report.to_dict() if isinstance(report, ExperimentReport) else report
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    proto = doc["protocol"]
    paths = [out / f"{proto}.json"]
    paths[0].write_text(dumps(doc), encoding="utf-8")
    return paths + render_files(doc, out)


def render_files(doc: dict, out: Path) -> list[Path]:
    proto = doc["protocol"]
    written = []
    md = out / f"{proto}.md"
    md.write_text(render_markdown(doc), encoding="utf-8")
    written.append(md)
    if doc.get("upsampling_curve"):
        csv = out / f"{proto}_curve.csv"
        csv.write_text("fraction,balanced_accuracy\n"
                       + "".join(f"{p!r},{a!r}\n" for p, a in doc["upsampling_curve"]),
                       encoding="utf-8")
        svg = out / f"{proto}_curve.svg"
        svg.write_text(curve_svg(doc["upsampling_curve"]), encoding="utf-8")
        written += [csv, svg]
    if doc.get("ablation_rows"):
        csv = out / "ablation.csv"
        csv.write_text("modality,baseline,ablated,accuracy_drop\n"
                       + "".join(f"{r['modality']},{r['baseline']!r},{r['ablated']!r},"
                                 f"{r['accuracy_drop']!r}\n" for r in doc["ablation_rows"]),
                       encoding="utf-8")
        svg = out / "ablation.svg"
        svg.write_text(ablation_svg(doc["ablation_rows"]), encoding="utf-8")
        written += [csv, svg]
    return written
