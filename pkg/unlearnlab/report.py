# -*- coding: utf-8 -*-
"""Report emission: JSON for machines, CSV for plotting, SVG charts.

Everything is written with ``write_file_atomic``; JSON is key-sorted and
SVG output carries no timestamp, so reruns produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from unlearnlab.dataset import read_json  # noqa: E402
from unlearnlab.metrics import UtilityReport  # noqa: E402
from unlearnlab.toylab import ToyRun  # noqa: E402
from unlearnlab.toylab.sweep import SWEEP_SETS, SweepResult  # noqa: E402
from unlearnlab.util import LabError, pretty_json, write_file_atomic  # noqa: E402

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
TRACE_FILE = "trace.jsonl"
SUMMARY_FILE = "summary.json"
SWEEP_FILE = "sweep.json"
GRADIENT_SVG = "gradient_norms.svg"

_SVG_SALT = "unlearnlab"


class ReportError(LabError):
    pass


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else "{0:.4f}".format(value)


def report_to_csv(report: UtilityReport) -> str:
    """One row per set kind: record count, component means, MU and RUD."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    components = ["rouge_l_recall", "probability", "cosine_sim", "entailment"]
    writer.writerow(["set_kind", "count"] + components + ["mu", "rud"])
    for kind, summary in sorted(report.per_set.items()):
        writer.writerow(
            [kind, summary.count]
            + [_fmt(summary.components.get(c)) for c in components]
            + [_fmt(summary.mu), _fmt(report.rud.get(kind))]
        )
    return buf.getvalue()


def write_report(directory: str, report: UtilityReport) -> List[str]:
    written = [os.path.join(directory, REPORT_JSON), os.path.join(directory, REPORT_CSV)]
    write_file_atomic(written[0], pretty_json(report.to_dict()))
    write_file_atomic(written[1], report_to_csv(report))
    return written


def write_toy_run(directory: str, run: ToyRun) -> List[str]:
    written = [os.path.join(directory, TRACE_FILE), os.path.join(directory, SUMMARY_FILE)]
    write_file_atomic(written[0], run.trace.to_jsonl())
    write_file_atomic(written[1], pretty_json(run.summary))
    return written


def sweep_csv_name(regularizer: str) -> str:
    return "sweep-{0}.csv".format(regularizer.lower())


def write_sweep(directory: str, result: SweepResult) -> List[str]:
    written = []
    for reg in result.regularizers():
        path = os.path.join(directory, sweep_csv_name(reg.value))
        write_file_atomic(path, result.to_csv(reg))
        written.append(path)
    path = os.path.join(directory, SWEEP_FILE)
    write_file_atomic(path, pretty_json(result.to_dict()))
    written.append(path)
    return written


def read_trace(path: str) -> List[Dict[str, Any]]:
    steps = []
    try:
        f = open(path, encoding="utf-8")
    except OSError as e:
        raise ReportError("cannot read trace ‘{0}’: {1}".format(path, e.strerror))
    with f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                steps.append(json.loads(line))
            except ValueError as e:
                raise ReportError("{0}:{1}: {2}".format(path, n, e))
    if not steps:
        raise ReportError("trace ‘{0}’ has no steps".format(path))
    return steps


def _svg(fig: Any) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def gradient_norm_svg(steps: Sequence[Mapping[str, Any]], title: str = "") -> str:
    """Line chart of every probe set's gradient norm over the steps."""
    names = sorted({k for s in steps for k in s.get("grad_norms", {})})
    if not names:
        raise ReportError("trace carries no gradient norms")
    fig, ax = plt.subplots(figsize=(6, 4))
    x = [s["step"] for s in steps]
    for name in names:
        ax.plot(x, [s["grad_norms"].get(name) for s in steps], marker="o", label=name)
    ax.set_xlabel("unlearning step")
    ax.set_ylabel("gradient Frobenius norm")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _svg(fig)


def heatmap_svg(grid: Mapping[str, Mapping[str, float]], title: str = "") -> str:
    """Heatmap of grid[test][train] utility drops with annotated cells."""
    order = [s.value for s in SWEEP_SETS]
    data = [[grid[test][train] for train in order] for test in order]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(data, cmap="RdYlGn", aspect="auto")
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels(order, rotation=20)
    ax.set_yticks(range(len(order)))
    ax.set_yticklabels(order)
    ax.set_xlabel("regularisation set")
    ax.set_ylabel("test set")
    for (i, row) in enumerate(data):
        for (j, value) in enumerate(row):
            ax.text(j, i, "{0:.1f}".format(value), ha="center", va="center")
    fig.colorbar(im, ax=ax, label="relative utility drop (%)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _svg(fig)


def render_charts(
    directory: str, trace_path: Optional[str] = None, sweep_path: Optional[str] = None
) -> List[str]:
    """Turn a stored trace and/or sweep into SVG charts next to them."""
    if trace_path is None and sweep_path is None:
        raise ReportError("nothing to render: give a trace, a sweep, or both")
    written = []
    if trace_path is not None:
        path = os.path.join(directory, GRADIENT_SVG)
        write_file_atomic(path, gradient_norm_svg(read_trace(trace_path)))
        written.append(path)
    if sweep_path is not None:
        grids = read_json(sweep_path).get("grids")
        if not grids:
            raise ReportError("sweep ‘{0}’ has no grids".format(sweep_path))
        for reg, grid in sorted(grids.items()):
            path = os.path.join(directory, "heatmap-{0}.svg".format(reg.lower()))
            write_file_atomic(path, heatmap_svg(grid, reg))
            written.append(path)
    return written
