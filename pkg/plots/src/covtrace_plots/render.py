"""Render entropy timelines into static figures.

Input is the pair of files a covtrace run writes: `entropy_timeline.csv`
(one row per epoch and observer) and `result.json` (used here only for the
scenario label). The figure has two panels: per-observer entropy curves
over the epochs, and a strip showing each observer's separability epoch by
epoch. A segment or strip mark is dashed while the observer's entropy is
below SEPARABLE_TOL, solid once it is entangled with the system.

Rendering never alters or re-derives numbers; every plotted y value is a
float parsed from the CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

SEPARABLE_TOL = 1e-9
REQUIRED_COLUMNS = ("epoch_label", "observer_label", "entropy_bits")
NORMALIZATION_TOL = 1e-6


class TimelineFormatError(ValueError):
    """The CSV is structurally unusable (not merely empty)."""


@dataclass
class Timeline:
    epochs: list[str] = field(default_factory=list)
    observers: list[str] = field(default_factory=list)
    entropies: dict = field(default_factory=dict)
    probabilities: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.epochs

    def series(self, observer: str) -> list[float]:
        return [self.entropies[(epoch, observer)] for epoch in self.epochs]


def _ordered_add(seq: list, value):
    if value not in seq:
        seq.append(value)


def parse_timeline(path) -> Timeline:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        columns = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in columns]
        if missing:
            raise TimelineFormatError(
                f"timeline is missing required columns: {', '.join(missing)}"
            )
        prob_columns = [c for c in columns if c.startswith("p") and c[1:].isdigit()]

        timeline = Timeline()
        for line, row in enumerate(reader, start=2):
            epoch = row["epoch_label"]
            observer = row["observer_label"]
            try:
                entropy = float(row["entropy_bits"])
            except (TypeError, ValueError):
                raise TimelineFormatError(
                    f"line {line}: entropy_bits is not a number: {row['entropy_bits']!r}"
                ) from None
            if entropy < 0:
                raise TimelineFormatError(f"line {line}: negative entropy {entropy}")
            probs = []
            for c in prob_columns:
                cell = (row.get(c) or "").strip()
                if cell:
                    try:
                        probs.append(float(cell))
                    except ValueError:
                        raise TimelineFormatError(
                            f"line {line}: column {c} is not a number: {cell!r}"
                        ) from None
            if probs and abs(sum(probs) - 1.0) > NORMALIZATION_TOL:
                raise TimelineFormatError(
                    f"line {line}: probabilities sum to {sum(probs)}, not 1"
                )
            key = (epoch, observer)
            if key in timeline.entropies:
                raise TimelineFormatError(
                    f"line {line}: duplicate row for epoch {epoch!r}, observer {observer!r}"
                )
            _ordered_add(timeline.epochs, epoch)
            _ordered_add(timeline.observers, observer)
            timeline.entropies[key] = entropy
            timeline.probabilities[key] = probs
    for epoch in timeline.epochs:
        for observer in timeline.observers:
            if (epoch, observer) not in timeline.entropies:
                raise TimelineFormatError(
                    f"no row for epoch {epoch!r}, observer {observer!r}"
                )
    return timeline


def scenario_label(result_path) -> str:
    with open(result_path) as fh:
        result = json.load(fh)
    if not isinstance(result, dict):
        raise TimelineFormatError("result file must hold a JSON object")
    label = result.get("label", "scenario")
    return str(label) if label else "scenario"


def _style(entropy: float) -> str:
    return "--" if entropy < SEPARABLE_TOL else "-"


def render_figure(timeline: Timeline, label: str):
    """Build the two-panel figure; the caller saves and closes it."""
    n_epochs = len(timeline.epochs)
    fig, (ax, strip) = plt.subplots(
        2,
        1,
        sharex=True,
        figsize=(max(6.0, 1.3 * n_epochs), 6.0),
        gridspec_kw={"height_ratios": [3, 1]},
    )
    for idx, observer in enumerate(timeline.observers):
        color = f"C{idx % 10}"
        ys = timeline.series(observer)
        if n_epochs == 1:
            ax.plot(
                [0],
                ys,
                color=color,
                marker="o",
                linestyle=_style(ys[0]),
                label=observer,
                gid=f"series:{observer}:0",
            )
        for k in range(n_epochs - 1):
            ax.plot(
                [k, k + 1],
                ys[k : k + 2],
                color=color,
                marker="o",
                markersize=3.5,
                linestyle=_style(ys[k]),
                label=observer if k == 0 else None,
                gid=f"series:{observer}:{k}",
            )
        row = len(timeline.observers) - 1 - idx
        for i, entropy in enumerate(ys):
            strip.plot(
                [i - 0.33, i + 0.33],
                [row, row],
                color=color,
                linestyle=_style(entropy),
                linewidth=3.0,
                gid=f"strip:{observer}:{i}",
            )
    ax.set_title(label)
    ax.set_ylabel("observer entropy (bits)")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.25)
    strip.set_ylabel("record")
    strip.set_yticks(range(len(timeline.observers)))
    strip.set_yticklabels(list(reversed(timeline.observers)))
    strip.set_ylim(-0.6, len(timeline.observers) - 0.4)
    strip.set_xticks(range(n_epochs))
    strip.set_xticklabels(timeline.epochs, rotation=30, ha="right")
    fig.tight_layout()
    return fig


def render(timeline_path, result_path, out_dir, fmt: str = "png") -> list[Path]:
    """Parse both files and write one figure; [] if the timeline is empty."""
    timeline = parse_timeline(timeline_path)
    label = scenario_label(result_path)
    if timeline.empty:
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig = render_figure(timeline, label)
    path = out / f"{label}.{fmt}"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def extract_series(fig) -> dict[str, list[float]]:
    """Entropy series per observer, read back from the figure's lines.

    This is the golden-file hook: the y data attached to the rendered
    segments, reassembled in epoch order.
    """
    segments: dict[str, dict[int, list[float]]] = {}
    for line in fig.axes[0].lines:
        gid = line.get_gid() or ""
        if not gid.startswith("series:"):
            continue
        _, observer, index = gid.rsplit(":", 2)
        segments.setdefault(observer, {})[int(index)] = [float(y) for y in line.get_ydata()]
    out = {}
    for observer, by_index in segments.items():
        series = []
        for k in sorted(by_index):
            ys = by_index[k]
            series.extend(ys if not series else ys[1:])
        out[observer] = series
    return out


def extract_strip_styles(fig) -> dict[str, list[str]]:
    """Per-epoch dashed/solid assignment per observer, from the strip panel."""
    marks: dict[str, dict[int, str]] = {}
    for line in fig.axes[1].lines:
        gid = line.get_gid() or ""
        if not gid.startswith("strip:"):
            continue
        _, observer, index = gid.rsplit(":", 2)
        marks.setdefault(observer, {})[int(index)] = line.get_linestyle()
    return {
        observer: [by_index[k] for k in sorted(by_index)]
        for observer, by_index in marks.items()
    }
