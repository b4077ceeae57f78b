"""Reference implementations of the four per-clip quality scores.

All scorers are pure and deterministic: same frames and config give
bit-identical scores. Luminance uses fixed-point Rec.601 weights
((77*R + 150*G + 29*B) >> 8) so results do not depend on platform
floating-point quirks at the pixel level.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .core import ClipRecord
from .errors import (
    ConfigError,
    DegenerateInputError,
    InsufficientFramesError,
    ScorerError,
)
from .ingest import FrameBuffer

HIST_BINS_PER_CHANNEL = 8
HIST_SIZE = HIST_BINS_PER_CHANNEL ** 3  # 512
LUMA_GRID = 16

# Block-matching parameters: 16x16 blocks, exhaustive +/-8 px SAD search,
# on luminance downscaled so the longer side is at most 256 px.
MOTION_BLOCK = 16
MOTION_RADIUS = 8
MOTION_MAX_DIM = 256

# Aesthetics proxy normalizers (colorfulness by the Hasler-Suesstrunk scale,
# contrast by luma-std 64, sharpness by Laplacian variance 2000).
COLORFULNESS_NORM = 150.0
CONTRAST_NORM = 64.0
SHARPNESS_NORM = 2000.0

FLAG_DEGENERATE = "degenerate"
FLAG_SATURATED = "saturated"


@dataclass(frozen=True)
class ScoreResult:
    """A scorer's value plus any degenerate/saturated warning flags."""

    value: float
    flags: tuple[str, ...] = ()


def luminance(raster: np.ndarray) -> np.ndarray:
    """Integer Rec.601 luma in [0, 255], shape (h, w)."""
    r = raster[:, :, 0].astype(np.int32)
    g = raster[:, :, 1].astype(np.int32)
    b = raster[:, :, 2].astype(np.int32)
    return (77 * r + 150 * g + 29 * b) >> 8


def color_histogram(raster: np.ndarray) -> np.ndarray:
    """L1-normalized 8x8x8 RGB histogram, 512 entries summing to 1."""
    idx = (
        ((raster[:, :, 0].astype(np.uint32) >> 5) << 6)
        | ((raster[:, :, 1].astype(np.uint32) >> 5) << 3)
        | (raster[:, :, 2].astype(np.uint32) >> 5)
    )
    counts = np.bincount(idx.ravel(), minlength=HIST_SIZE).astype(np.float64)
    return counts / counts.sum()


@lru_cache(maxsize=64)
def _area_weights(n_out: int, n_in: int) -> np.ndarray:
    """Exact area-overlap resampling weights; each output row sums to 1."""
    edges = np.arange(n_out + 1, dtype=np.float64) * (n_in / n_out)
    src = np.arange(n_in, dtype=np.float64)
    lo = np.maximum(edges[:-1, None], src[None, :])
    hi = np.minimum(edges[1:, None], src[None, :] + 1.0)
    return np.clip(hi - lo, 0.0, None) * (n_out / n_in)


def luma_grid(raster: np.ndarray) -> tuple[np.ndarray, bool]:
    """L2-normalized 16x16 area-downsampled luminance, flattened to 256 entries.

    An all-zero frame maps to the zero vector; the second return value flags
    that degenerate case.
    """
    luma = luminance(raster).astype(np.float64)
    h, w = luma.shape
    wr = _area_weights(LUMA_GRID, h)
    wc = _area_weights(LUMA_GRID, w)
    grid = (wr @ luma @ wc.T).ravel()
    norm = math.sqrt(float(grid @ grid))
    if norm == 0.0:
        return grid, True
    return grid / norm, False


@dataclass(frozen=True)
class FrameFeature:
    """Reference per-frame feature: color histogram plus downsampled luma."""

    hist: np.ndarray
    luma16: np.ndarray
    degenerate: bool


def frame_feature(raster: np.ndarray) -> FrameFeature:
    grid, degenerate = luma_grid(raster)
    return FrameFeature(hist=color_histogram(raster), luma16=grid, degenerate=degenerate)


def _feature_cosine(a: FrameFeature, b: FrameFeature) -> float:
    # Cosine of the concatenated features; renormalizing the concatenation
    # to unit L2 is equivalent to dividing by the concatenation norms.
    num = float(a.hist @ b.hist) + float(a.luma16 @ b.luma16)
    sq_a = float(a.hist @ a.hist) + float(a.luma16 @ a.luma16)
    sq_b = float(b.hist @ b.hist) + float(b.luma16 @ b.luma16)
    den = math.sqrt(sq_a * sq_b)
    if den == 0.0:
        return 0.0
    return num / den


def laplacian_variance(luma: np.ndarray) -> float:
    """Population variance of the 3x3 Laplacian (center -4, cross 1) response.

    Interior pixels only; frames with no interior score 0.
    """
    if luma.shape[0] < 3 or luma.shape[1] < 3:
        return 0.0
    l = luma.astype(np.int64)
    resp = (
        l[:-2, 1:-1] + l[2:, 1:-1] + l[1:-1, :-2] + l[1:-1, 2:] - 4 * l[1:-1, 1:-1]
    )
    return float(resp.astype(np.float64).var())


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _frame_aesthetics(raster: np.ndarray) -> float:
    rg = raster[:, :, 0].astype(np.float64) - raster[:, :, 1].astype(np.float64)
    yb = (
        0.5 * (raster[:, :, 0].astype(np.float64) + raster[:, :, 1].astype(np.float64))
        - raster[:, :, 2].astype(np.float64)
    )
    colorfulness = math.sqrt(float(rg.std()) ** 2 + float(yb.std()) ** 2) + 0.3 * math.sqrt(
        float(rg.mean()) ** 2 + float(yb.mean()) ** 2
    )
    luma = luminance(raster)
    contrast = float(luma.astype(np.float64).std())
    sharpness = laplacian_variance(luma)
    return 10.0 * (
        0.4 * _clamp01(colorfulness / COLORFULNESS_NORM)
        + 0.3 * _clamp01(contrast / CONTRAST_NORM)
        + 0.3 * _clamp01(math.log1p(sharpness) / math.log1p(SHARPNESS_NORM))
    )


def score_aesthetics(frames: FrameBuffer) -> ScoreResult:
    """Visual-appeal proxy in [0, 10]: colorfulness, contrast, and sharpness."""
    if frames.frame_count < 1:
        raise InsufficientFramesError("aesthetics needs at least one frame")
    values = [_frame_aesthetics(frames.raster(i)) for i in range(frames.frame_count)]
    return ScoreResult(value=float(np.mean(values)))


def score_temporal_consistency(frames: FrameBuffer) -> ScoreResult:
    """Mean adjacent-frame cosine similarity of the reference features, in [-1, 1]."""
    if frames.frame_count < 2:
        raise InsufficientFramesError("temporal consistency needs at least two frames")
    feats = [frame_feature(frames.raster(i)) for i in range(frames.frame_count)]
    cosines = [
        _feature_cosine(feats[i], feats[i + 1]) for i in range(len(feats) - 1)
    ]
    flags = (FLAG_DEGENERATE,) if any(f.degenerate for f in feats) else ()
    return ScoreResult(value=float(np.mean(cosines)), flags=flags)


@lru_cache(maxsize=1)
def _motion_candidates() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Search offsets ordered by (magnitude, dy, dx) so argmin applies the tie-break."""
    cands = [
        (dy, dx)
        for dy in range(-MOTION_RADIUS, MOTION_RADIUS + 1)
        for dx in range(-MOTION_RADIUS, MOTION_RADIUS + 1)
    ]
    cands.sort(key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]))
    arr = np.array(cands, dtype=np.int64)
    mags = np.sqrt((arr[:, 0] ** 2 + arr[:, 1] ** 2).astype(np.float64))
    boundary = (np.abs(arr[:, 0]) == MOTION_RADIUS) | (np.abs(arr[:, 1]) == MOTION_RADIUS)
    return arr, mags, boundary


def _analysis_luma(raster: np.ndarray) -> np.ndarray:
    """Luma at analysis scale: integer-factor box decimation to <= 256 px.

    float32 is exact here: luma block sums stay far below 2**24.
    """
    luma = luminance(raster)
    h, w = luma.shape
    factor = -(-max(h, w) // MOTION_MAX_DIM)  # ceil division
    if factor <= 1:
        return luma.astype(np.float32)
    hh, ww = (h // factor) * factor, (w // factor) * factor
    pooled = (
        luma[:hh, :ww]
        .reshape(hh // factor, factor, ww // factor, factor)
        .mean(axis=(1, 3), dtype=np.float64)
    )
    return pooled.astype(np.float32)


def _pair_motion(prev: np.ndarray, curr: np.ndarray) -> Optional[tuple[float, float]]:
    """Mean displacement magnitude and boundary-hit fraction for one frame pair.

    Blocks are anchored a search-radius in from the frame edge so every
    candidate offset stays in bounds. Returns None when no block fits.
    """
    h, w = prev.shape
    nbh = (h - 2 * MOTION_RADIUS) // MOTION_BLOCK
    nbw = (w - 2 * MOTION_RADIUS) // MOTION_BLOCK
    if nbh < 1 or nbw < 1:
        return None
    cands, mags, boundary = _motion_candidates()
    r = MOTION_RADIUS
    win_h, win_w = nbh * MOTION_BLOCK, nbw * MOTION_BLOCK
    ref = prev[r : r + win_h, r : r + win_w]
    windows = np.lib.stride_tricks.sliding_window_view(curr, (win_h, win_w))
    sads = np.empty((len(cands), nbh * nbw), dtype=np.float32)
    chunk = 32  # bounds the temporary to a few MB even at the 256-px analysis cap
    for start in range(0, len(cands), chunk):
        sel = windows[
            cands[start : start + chunk, 0] + r, cands[start : start + chunk, 1] + r
        ]
        diff = np.abs(sel - ref[None, :, :])
        sads[start : start + chunk] = (
            diff.reshape(-1, nbh, MOTION_BLOCK, nbw, MOTION_BLOCK)
            .sum(axis=(2, 4), dtype=np.float32)
            .reshape(-1, nbh * nbw)
        )
    winners = sads.argmin(axis=0)  # first minimum wins; candidates are tie-break ordered
    return float(mags[winners].mean()), float(boundary[winners].mean())


def score_motion(frames: FrameBuffer) -> ScoreResult:
    """Mean block displacement magnitude (analysis-scale pixels per frame pair)."""
    if frames.frame_count < 2:
        raise InsufficientFramesError("motion needs at least two frames")
    lumas = [_analysis_luma(frames.raster(i)) for i in range(frames.frame_count)]
    pair_scores = []
    boundary_fracs = []
    for i in range(len(lumas) - 1):
        result = _pair_motion(lumas[i], lumas[i + 1])
        if result is None:
            continue
        pair_scores.append(result[0])
        boundary_fracs.append(result[1])
    if not pair_scores:
        return ScoreResult(value=0.0, flags=(FLAG_DEGENERATE,))
    flags = ()
    if float(np.mean(boundary_fracs)) >= 0.5:
        flags = (FLAG_SATURATED,)
    return ScoreResult(value=float(np.mean(pair_scores)), flags=flags)


def score_clarity(frames: FrameBuffer) -> ScoreResult:
    """Mean Laplacian variance of luminance over sampled frames."""
    if frames.frame_count < 1:
        raise InsufficientFramesError("clarity needs at least one frame")
    if frames.height < 3 or frames.width < 3:
        raise DegenerateInputError(
            f"clarity needs frames of at least 3x3, got {frames.width}x{frames.height}"
        )
    values = [
        laplacian_variance(luminance(frames.raster(i)))
        for i in range(frames.frame_count)
    ]
    return ScoreResult(value=float(np.mean(values)))


REFERENCE_SCORERS = {
    "aesthetics": score_aesthetics,
    "temporal_consistency": score_temporal_consistency,
    "motion": score_motion,
    "clarity": score_clarity,
}


@dataclass(frozen=True)
class ScorerBinding:
    """Routing for one metric: the in-process reference or a sidecar command."""

    metric: str
    provider: str = "reference"
    sidecar_command: Optional[str] = None

    def __post_init__(self):
        if self.metric not in REFERENCE_SCORERS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.provider not in ("reference", "sidecar"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.provider == "sidecar" and not self.sidecar_command:
            raise ConfigError(f"sidecar binding for {self.metric!r} needs a command")

    @property
    def provider_name(self) -> str:
        if self.provider == "reference":
            return "reference"
        return f"sidecar:{self.sidecar_command}"


class SidecarClient:
    """One connection to a sidecar scorer process speaking the wire protocol.

    Newline-delimited JSON over the child's stdin/stdout; one outstanding
    request at a time. The handshake must arrive before any request.
    """

    def __init__(self, command: str, timeout_s: float = 120.0):
        self.command = command
        self.timeout_s = timeout_s
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ScorerError(f"failed to start sidecar {command!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._next_id = 0
        self.metrics = self._read_handshake()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def _read_line(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise ScorerError(
                f"sidecar {self.command!r} timed out after {self.timeout_s}s"
            ) from None
        if line is None:
            raise ScorerError(f"sidecar {self.command!r} closed its output stream")
        return line

    def _read_handshake(self) -> list[str]:
        line = self._read_line()
        try:
            msg = json.loads(line)
            hello = msg["hello"]
            protocol = hello["protocol"]
            metrics = list(hello["metrics"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ScorerError(f"sidecar handshake malformed: {line.strip()!r}") from exc
        if protocol != 1:
            raise ScorerError(f"sidecar protocol {protocol} unsupported (want 1)")
        return metrics

    def score(self, metric: str, rfv1_path: str) -> float:
        if metric not in self.metrics:
            raise ScorerError(
                f"sidecar {self.command!r} does not advertise metric {metric!r}"
            )
        self._next_id += 1
        req_id = self._next_id
        request = json.dumps(
            {"id": req_id, "metric": metric, "rfv1_path": rfv1_path},
            separators=(",", ":"),
        )
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ScorerError(f"sidecar {self.command!r} pipe closed") from exc
        line = self._read_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScorerError(f"sidecar response malformed: {line.strip()!r}") from exc
        if msg.get("id") != req_id:
            raise ScorerError(
                f"sidecar response id {msg.get('id')!r} does not match request {req_id}"
            )
        if "error" in msg:
            raise ScorerError(f"sidecar reported failure: {msg['error']}")
        if "score" not in msg or not isinstance(msg["score"], (int, float)):
            raise ScorerError(f"sidecar response missing numeric score: {line.strip()!r}")
        return float(msg["score"])

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()

    def __enter__(self) -> "SidecarClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class SidecarPool:
    """Fixed pool of sidecar processes; each connection serves one worker at a time."""

    def __init__(self, command: str, size: int = 1, timeout_s: float = 120.0):
        self._clients: queue.Queue = queue.Queue()
        self._all = [SidecarClient(command, timeout_s=timeout_s) for _ in range(size)]
        for client in self._all:
            self._clients.put(client)
        self.metrics = self._all[0].metrics

    def score(self, metric: str, rfv1_path: str) -> float:
        client = self._clients.get()
        try:
            return client.score(metric, rfv1_path)
        finally:
            self._clients.put(client)

    def close(self) -> None:
        for client in self._all:
            client.close()


def score_via_sidecar(
    pool: SidecarPool, binding: ScorerBinding, clip: ClipRecord, frames_path: str
) -> float:
    """Request one score from a sidecar pool; the value is returned verbatim."""
    if binding.provider != "sidecar":
        raise ConfigError(f"binding for {binding.metric!r} is not a sidecar binding")
    return pool.score(binding.metric, frames_path)
