"""Rendering of the four figure families from wncc experiment CSVs.

Consumes exactly the documented harness CSV schemas:

results.csv       # wncc-results v1 spec=<hash>
                  scheme,sweep_value,seed,period_s,assoc_counts,j_ave,
                  stability_margin,wall_time_s,status

control_cost.csv  # wncc-control-cost v1 spec=<hash>
                  scheme,sweep_value,seed,sample,j_ave

Rendering is read-only and deterministic (PNG output carries no timestamps),
and each figure's caption footer records the source spec hash.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "RenderResult", "SchemaError", "render", "render_all",
           "FIGURE_KINDS"]

RESULTS_COLUMNS = {"scheme", "sweep_value", "seed", "period_s", "assoc_counts",
                   "j_ave", "stability_margin", "wall_time_s", "status"}
COST_COLUMNS = {"scheme", "sweep_value", "seed", "sample", "j_ave"}

FIGURE_KINDS = {
    "association_bars": RESULTS_COLUMNS,
    "latency_vs_power": RESULTS_COLUMNS,
    "latency_vs_freq": RESULTS_COLUMNS,
    "control_cost": COST_COLUMNS,
}

SCHEME_ORDER = ("proposed", "association_only", "resource_only", "fdma")


class SchemaError(ValueError):
    """Input CSV does not carry the columns the figure kind needs."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str
    title: str | None = None
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"choose from {sorted(FIGURE_KINDS)}")


@dataclass
class RenderResult:
    path: str
    kind: str
    n_series: int


def read_csv(path):
    """Rows of a harness CSV as dicts plus the spec hash from the header comment."""
    spec_hash = ""
    header = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                for token in line.split():
                    if token.startswith("spec="):
                        spec_hash = token[5:]
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(dict(zip(header, line.split(","))))
    if header is None:
        raise SchemaError(f"{path}: no header row")
    return header, rows, spec_hash


def _require(columns, header, path):
    missing = sorted(columns - set(header))
    if missing:
        raise SchemaError(f"{path}: missing columns: {', '.join(missing)}")


def _schemes_in(rows):
    seen = [r["scheme"] for r in rows]
    ordered = [s for s in SCHEME_ORDER if s in seen]
    return ordered + sorted(set(seen) - set(ordered))


def _new_axes(title, footer):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if title:
        ax.set_title(title)
    if footer:
        fig.text(0.99, 0.01, footer, ha="right", va="bottom", fontsize=6,
                 color="0.45")
    return fig, ax


def _optimal(rows):
    return [r for r in rows if r.get("status", "optimal") == "optimal"]


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure; returns the output path and the series count."""
    header, rows, spec_hash = read_csv(spec.csv_path)
    _require(FIGURE_KINDS[spec.kind], header, spec.csv_path)
    footer = f"spec {spec_hash}" if spec_hash else ""
    if spec.kind == "association_bars":
        result = _association_bars(spec, _optimal(rows), footer)
    elif spec.kind in ("latency_vs_power", "latency_vs_freq"):
        result = _latency_curves(spec, _optimal(rows), footer)
    else:
        result = _cost_curves(spec, rows, footer)
    return result


def _association_bars(spec, rows, footer):
    fig, ax = _new_axes(spec.title or "Plants per BS", footer)
    schemes = _schemes_in(rows)
    n_bs = 0
    for s in schemes:
        counts = [list(map(float, r["assoc_counts"].split("|")))
                  for r in rows if r["scheme"] == s and r["assoc_counts"]]
        if counts:
            n_bs = max(n_bs, len(counts[0]))
    width = 0.8 / max(len(schemes), 1)
    for i, s in enumerate(schemes):
        counts = np.array([list(map(float, r["assoc_counts"].split("|")))
                           for r in rows if r["scheme"] == s and r["assoc_counts"]])
        if counts.size == 0:
            continue
        mean = counts.mean(axis=0)
        xs = np.arange(len(mean)) + (i - (len(schemes) - 1) / 2) * width
        ax.bar(xs, mean, width=width, label=s)
    ax.set_xlabel("BS index")
    ax.set_ylabel("associated plants (mean)")
    ax.set_xticks(np.arange(max(n_bs, 1)))
    if schemes:
        ax.legend(fontsize=8)
    return _save(fig, spec, len(schemes))


def _latency_curves(spec, rows, footer):
    xlabel = ("downlink power budget (W)" if spec.kind == "latency_vs_power"
              else "edge compute rate (cycles/s)")
    fig, ax = _new_axes(spec.title or "Closed-loop latency", footer)
    schemes = _schemes_in(rows)
    plotted = 0
    for s in schemes:
        pts = {}
        for r in rows:
            if r["scheme"] != s or r["sweep_value"] == "":
                continue
            pts.setdefault(float(r["sweep_value"]), []).append(float(r["period_s"]))
        if not pts:
            continue
        xs = sorted(pts)
        ys = [1e3 * np.mean(pts[x]) for x in xs]
        ax.plot(xs, ys, marker="o", label=s)
        plotted += 1
    ax.set_xlabel(xlabel)
    ax.set_ylabel("period T (ms)")
    ax.grid(True, alpha=0.3)
    if plotted:
        ax.legend(fontsize=8)
    return _save(fig, spec, plotted)


def _cost_curves(spec, rows, footer):
    fig, ax = _new_axes(spec.title or "Average control cost", footer)
    schemes = _schemes_in(rows)
    plotted = 0
    for s in schemes:
        series = {}
        for r in rows:
            if r["scheme"] != s:
                continue
            series.setdefault(int(r["sample"]), []).append(float(r["j_ave"]))
        if not series:
            continue
        xs = sorted(series)
        ys = [np.mean(series[x]) for x in xs]
        ax.plot(xs, ys, label=s)
        plotted += 1
    ax.set_xlabel("sample index")
    ax.set_ylabel("running average cost")
    ax.grid(True, alpha=0.3)
    if plotted:
        ax.legend(fontsize=8)
    return _save(fig, spec, plotted)


def _save(fig, spec, n_series):
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    fig.savefig(spec.out_path, dpi=spec.style.get("dpi", 130))
    plt.close(fig)
    return RenderResult(path=spec.out_path, kind=spec.kind, n_series=n_series)


def render_all(in_dir, out_dir) -> list:
    """Render every figure kind that has data in ``in_dir``; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    results_csv = os.path.join(in_dir, "results.csv")
    cost_csv = os.path.join(in_dir, "control_cost.csv")
    out = []
    if os.path.exists(results_csv):
        _, rows, _ = read_csv(results_csv)
        swept = any(r["sweep_value"] != "" for r in rows)
        kinds = ["association_bars"] + (
            ["latency_vs_power", "latency_vs_freq"] if swept else [])
        for kind in kinds:
            spec = FigureSpec(kind=kind, csv_path=results_csv,
                              out_path=os.path.join(out_dir, f"{kind}.png"))
            out.append(render(spec))
    if os.path.exists(cost_csv):
        spec = FigureSpec(kind="control_cost", csv_path=cost_csv,
                          out_path=os.path.join(out_dir, "control_cost.png"))
        out.append(render(spec))
    return [r.path for r in out]
