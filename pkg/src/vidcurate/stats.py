"""Corpus-level metric distributions and multi-corpus comparison reports."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import METRICS, CurationManifest
from .errors import ConfigError, EmptyInputError

CAPTION_METRIC = "caption_length"

MISSING = "missing"


def _aesthetics_edges() -> list[float]:
    return [x / 2.0 for x in range(0, 21)]  # 0..10 step 0.5


def _temporal_edges() -> list[float]:
    return [round(-1.0 + i * 0.05, 2) for i in range(0, 41)]  # -1..1 step 0.05


def _motion_edges() -> list[float]:
    return [x / 2.0 for x in range(0, 33)]  # 0..16 step 0.5, overflow beyond


def _clarity_edges() -> list[float]:
    return [1.0, 10.0, 100.0, 1000.0, 10000.0]  # decade bins


def _caption_edges() -> list[float]:
    return [float(x) for x in range(0, 201, 10)]  # 0..200 step 10, overflow beyond


DEFAULT_EDGES: dict[str, list[float]] = {
    "aesthetics": _aesthetics_edges(),
    "temporal_consistency": _temporal_edges(),
    "motion": _motion_edges(),
    "clarity": _clarity_edges(),
    CAPTION_METRIC: _caption_edges(),
}


@dataclass(frozen=True)
class MetricHistogram:
    """Half-open binning [e_i, e_{i+1}) with explicit under/overflow bins."""

    metric: str
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    underflow: int
    overflow: int
    total: int
    mean: Optional[float]
    median: Optional[float]

    def fractions(self) -> tuple[list[float], float, float]:
        """Per-bin, underflow, and overflow fractions; sums to 1 for nonempty data."""
        if self.total == 0:
            return [0.0] * len(self.counts), 0.0, 0.0
        return (
            [c / self.total for c in self.counts],
            self.underflow / self.total,
            self.overflow / self.total,
        )

    def to_dict(self) -> dict:
        fracs, under_f, over_f = self.fractions()
        return {
            "metric": self.metric,
            "edges": list(self.edges),
            "counts": list(self.counts),
            "underflow": self.underflow,
            "overflow": self.overflow,
            "total": self.total,
            "fractions": fracs,
            "underflow_fraction": under_f,
            "overflow_fraction": over_f,
            "mean": self.mean,
            "median": self.median,
        }


def histogram(values: Sequence[float], edges: Sequence[float], metric: str = "") -> MetricHistogram:
    """Bin values into half-open bins; out-of-range values go to under/overflow."""
    edges = [float(e) for e in edges]
    if len(edges) < 2:
        raise ConfigError("histogram needs at least two edges")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError("histogram edges must be strictly increasing")
    counts = [0] * (len(edges) - 1)
    underflow = 0
    overflow = 0
    for v in values:
        if v < edges[0]:
            underflow += 1
        elif v >= edges[-1]:
            overflow += 1
        else:
            # np.searchsorted(side="right") - 1 gives the half-open bin index
            counts[int(np.searchsorted(edges, v, side="right")) - 1] += 1
    total = len(values)
    mean = float(np.mean(values)) if total else None
    median = float(np.median(values)) if total else None
    return MetricHistogram(
        metric=metric,
        edges=tuple(edges),
        counts=tuple(counts),
        underflow=underflow,
        overflow=overflow,
        total=total,
        mean=mean,
        median=median,
    )


def metric_values(manifest: CurationManifest, metric: str) -> list[float]:
    """Score (or caption word-count) values recorded in a manifest."""
    if metric == CAPTION_METRIC:
        return [
            float(e.payload["word_count"])
            for e in manifest
            if e.kind == "caption" and "word_count" in e.payload
        ]
    return [
        float(e.payload["value"])
        for e in manifest
        if e.kind == "score" and e.stage == metric and "value" in e.payload
    ]


def compare_corpora(
    manifests: Sequence[CurationManifest],
    metrics: Optional[Sequence[str]] = None,
    names: Optional[Sequence[str]] = None,
    edges: Optional[dict[str, Sequence[float]]] = None,
) -> dict:
    """Side-by-side distributions per metric across corpora on shared edges.

    A metric absent from a corpus is marked "missing"; caption-length
    distributions are included whenever any manifest has caption entries.
    """
    if len(manifests) < 2:
        raise EmptyInputError("corpus comparison needs at least two manifests")
    if names is None:
        names = [f"corpus_{i}" for i in range(len(manifests))]
    if len(names) != len(manifests):
        raise ConfigError("names must match manifests")

    if metrics is None:
        metrics = list(METRICS)
        if any(any(e.kind == "caption" for e in m) for m in manifests):
            metrics = [*metrics, CAPTION_METRIC]

    edge_map = dict(DEFAULT_EDGES)
    if edges:
        edge_map.update({k: list(v) for k, v in edges.items()})

    report: dict = {"corpora": list(names), "metrics": {}}
    for metric in metrics:
        if metric not in edge_map:
            raise ConfigError(f"no edges configured for metric {metric!r}")
        per_corpus: dict = {}
        for name, manifest in zip(names, manifests):
            values = metric_values(manifest, metric)
            if not values:
                per_corpus[name] = MISSING
            else:
                per_corpus[name] = histogram(values, edge_map[metric], metric=metric).to_dict()
        report["metrics"][metric] = per_corpus
    return report


def write_report(report: dict, out_dir: str) -> list[str]:
    """Write the JSON report plus one CSV per (metric, corpus); returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    paths.append(json_path)
    for metric, per_corpus in sorted(report["metrics"].items()):
        for name, hist in sorted(per_corpus.items()):
            if hist == MISSING:
                continue
            csv_path = os.path.join(out_dir, f"{metric}__{name}.csv")
            with open(csv_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["bin_lo", "bin_hi", "count", "fraction"])
                edges = hist["edges"]
                fracs = hist["fractions"]
                writer.writerow(
                    [-math.inf, edges[0], hist["underflow"], hist["underflow_fraction"]]
                )
                for i, count in enumerate(hist["counts"]):
                    writer.writerow([edges[i], edges[i + 1], count, fracs[i]])
                writer.writerow(
                    [edges[-1], math.inf, hist["overflow"], hist["overflow_fraction"]]
                )
            paths.append(csv_path)
    return paths
