"""Cascaded shot-boundary detection and splitting of multi-scene clips.

The cascade runs the content-distance test at temporal strides 1, 2, and 4
so gradual transitions missed at fine resolution are caught coarsely, then
snapped back to the stride-1 maximum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ClipRecord, sub_clip_id
from .errors import ConfigError, InsufficientFramesError
from .ingest import FrameBuffer
from .scorers import color_histogram, luminance


@dataclass(frozen=True)
class CutConfig:
    theta_abs: float = 0.30       # absolute floor on content distance
    k_rel: float = 4.0            # spike factor over the windowed median
    min_scene_len: int = 32       # frames
    strides: tuple[int, ...] = (1, 2, 4)
    window: int = 15              # comparisons in the centered median window

    def __post_init__(self):
        if self.min_scene_len < 1 or self.window < 1 or self.k_rel <= 0:
            raise ConfigError("invalid cut detection config")
        if not self.strides or any(s < 1 for s in self.strides):
            raise ConfigError("strides must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "CutConfig":
        allowed = {"theta_abs", "k_rel", "min_scene_len", "strides", "window"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown cut config fields: {sorted(unknown)}")
        if "strides" in raw:
            raw = dict(raw, strides=tuple(raw["strides"]))
        return cls(**raw)


@dataclass(frozen=True)
class CutList:
    """Sorted frame indices where a new scene begins; empty means pass-through."""

    clip_id: str
    cuts: tuple[int, ...]


def _content_distance(
    hist_a: np.ndarray, hist_b: np.ndarray, luma_a: np.ndarray, luma_b: np.ndarray
) -> float:
    hist_term = float(np.abs(hist_a - hist_b).sum()) / 2.0  # L1/2 is in [0, 1]
    luma_term = float(np.abs(luma_a - luma_b).mean()) / 255.0
    return 0.5 * hist_term + 0.5 * luma_term


def detect_cuts(
    frames: FrameBuffer, config: Optional[CutConfig] = None, clip_id: str = ""
) -> CutList:
    """Find shot boundaries; a cut at index c means a new scene begins at frame c."""
    cfg = config or CutConfig()
    n = frames.frame_count
    if n < 2:
        raise InsufficientFramesError("cut detection needs at least two frames")

    hists = [color_histogram(frames.raster(i)) for i in range(n)]
    lumas = [luminance(frames.raster(i)).astype(np.int64) for i in range(n)]

    # distance[s][t] compares frames t-s and t, valid for t in [s, n-1]
    distance: dict[int, np.ndarray] = {}
    for s in cfg.strides:
        d = np.zeros(n, dtype=np.float64)
        for t in range(s, n):
            d[t] = _content_distance(hists[t - s], hists[t], lumas[t - s], lumas[t])
        distance[s] = d

    half = cfg.window // 2
    d1 = distance.get(1)
    if d1 is None:
        d1 = np.zeros(n, dtype=np.float64)
        for t in range(1, n):
            d1[t] = _content_distance(hists[t - 1], hists[t], lumas[t - 1], lumas[t])

    candidates: set[int] = set()
    for s in cfg.strides:
        d = distance[s]
        for t in range(s, n):
            if d[t] <= cfg.theta_abs:
                continue
            lo = max(s, t - half)
            hi = min(n - 1, t + half)
            med = float(np.median(d[lo : hi + 1]))
            if d[t] <= cfg.k_rel * med:
                continue
            # Snap to the stride-1 maximum inside the comparison span.
            span_lo = max(1, t - s + 1)
            span = d1[span_lo : t + 1]
            candidates.add(span_lo + int(np.argmax(span)))

    # Merge candidates closer than min_scene_len, keeping the larger stride-1
    # distance (ties resolved toward the earlier frame).
    accepted: list[int] = []
    for cut in sorted(candidates, key=lambda c: (-d1[c], c)):
        if all(abs(cut - other) >= cfg.min_scene_len for other in accepted):
            accepted.append(cut)
    return CutList(clip_id=clip_id, cuts=tuple(sorted(accepted)))


def split(
    clip: ClipRecord,
    frames: FrameBuffer,
    cuts: CutList,
    min_scene_len: int = 32,
) -> tuple[list[tuple[ClipRecord, FrameBuffer]], list[ClipRecord]]:
    """Partition a clip at its cuts into sub-clips named {parent}#{scene_index}.

    Returns (kept, dropped): with cuts present, parts shorter than
    min_scene_len are dropped; an empty cut list yields a single kept
    sub-clip covering the whole range.
    """
    n = frames.frame_count
    for cut in cuts.cuts:
        if not 1 <= cut <= n - 1:
            raise ConfigError(f"cut {cut} outside frame range [1, {n - 1}]")
    boundaries = [0, *cuts.cuts, n]
    kept: list[tuple[ClipRecord, FrameBuffer]] = []
    dropped: list[ClipRecord] = []
    for k in range(len(boundaries) - 1):
        start, end = boundaries[k], boundaries[k + 1]
        record = ClipRecord(
            clip_id=sub_clip_id(clip.clip_id, k),
            source=clip.source,
            width=clip.width,
            height=clip.height,
            frame_count=end - start,
            fps=clip.fps,
            parent_id=clip.clip_id,
        )
        if cuts.cuts and (end - start) < min_scene_len:
            dropped.append(record)
        else:
            kept.append((record, FrameBuffer(frames.frames[start:end])))
    return kept, dropped
