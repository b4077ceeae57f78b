"""Seeded synthetic RFV1 corpus generator with known ground truth.

Every clip is produced from a Philox stream keyed by (seed, clip index),
so adding clips to a corpus spec never perturbs existing ones. Pixel
generation is integer-valued throughout and all pans are integer shifts
on a torus, giving block matching an exact optimum.
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from .core import ClipRecord
from .errors import ConfigError
from .ingest import FrameBuffer, write_rfv1_file

DEFAULT_FPS = 8.0

KINDS = (
    "static",
    "flicker",
    "pan",
    "pan_fast",
    "good",
    "blur_pair",
    "multi_scene",
    "noise",
    "dull",
)

# Distinct scene palettes for multi-scene clips; adjacent scenes differ in
# both hue and mean luma so the cut signal clears the absolute threshold.
SCENE_PALETTES = (
    (150, 40, 40),
    (90, 140, 230),
    (60, 160, 60),
    (210, 190, 70),
    (140, 60, 180),
)


def _rng(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _circular_box_sum(channel: np.ndarray, kernel: int) -> np.ndarray:
    """Sum over a kernel x kernel neighborhood with wraparound, integer exact."""
    half = kernel // 2
    acc = np.zeros_like(channel, dtype=np.int64)
    for dy in range(-half, half + 1):
        acc += np.roll(channel, dy, axis=0)
    out = np.zeros_like(acc)
    for dx in range(-half, half + 1):
        out += np.roll(acc, dx, axis=1)
    return out


def _blur_raster(raster: np.ndarray, kernel: int) -> np.ndarray:
    out = np.empty_like(raster)
    for c in range(3):
        summed = _circular_box_sum(raster[:, :, c].astype(np.int64), kernel)
        out[:, :, c] = (summed // (kernel * kernel)).astype(np.uint8)
    return out


def box_blur(frames: FrameBuffer, kernel: int = 9) -> FrameBuffer:
    """Per-frame circular box blur; preserves each channel's mean up to rounding."""
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError("blur kernel must be odd and positive")
    return FrameBuffer(
        np.stack([_blur_raster(frames.frames[i], kernel) for i in range(frames.frame_count)])
    )


def _texture(
    rng: np.random.Generator,
    width: int,
    height: int,
    base_rgb: tuple[int, int, int],
    amp: int,
    smooth_passes: int,
) -> np.ndarray:
    """Integer noise field around a base color, optionally smoothed on the torus."""
    tex = np.empty((height, width, 3), dtype=np.int64)
    for c in range(3):
        noise = rng.integers(-amp, amp + 1, size=(height, width), dtype=np.int64)
        tex[:, :, c] = np.clip(base_rgb[c] + noise, 0, 255)
    tex = tex.astype(np.uint8)
    for _ in range(smooth_passes):
        tex = _blur_raster(tex, 5)
    return tex


def _pan_frames(texture: np.ndarray, n: int, velocity: tuple[int, int]) -> np.ndarray:
    vx, vy = velocity
    return np.stack(
        [np.roll(texture, shift=(k * vy, k * vx), axis=(0, 1)) for k in range(n)]
    )


def _jitter_color(rng: np.random.Generator, base: tuple[int, int, int], spread: int) -> tuple:
    return tuple(
        int(np.clip(b + rng.integers(-spread, spread + 1), 0, 255)) for b in base
    )


def _vivid_base(rng: np.random.Generator) -> tuple[int, int, int]:
    # High-chroma base: one dominant channel, permuted for hue variety.
    channels = [205, 70, 40]
    perm = rng.permutation(3)
    return tuple(int(np.clip(channels[p] + rng.integers(-20, 21), 0, 255)) for p in perm)


def generate(
    kind: str,
    params: Optional[dict] = None,
    seed: int = 0,
    stream: int = 0,
    clip_id: Optional[str] = None,
) -> tuple[ClipRecord, FrameBuffer, dict]:
    """Build one synthetic clip; the returned dict carries the planted facts."""
    if kind not in KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}")
    p = dict(params or {})
    width = int(p.pop("width", 64))
    height = int(p.pop("height", 64))
    n = int(p.pop("frames", 16))
    fps = float(p.pop("fps", DEFAULT_FPS))
    velocity = p.pop("velocity", None)
    lengths = p.pop("lengths", None)
    if p:
        raise ConfigError(f"unknown params for kind {kind!r}: {sorted(p)}")
    if width < 2 or height < 2 or n < 1:
        raise ConfigError("clips must be at least 2x2 with one frame")
    rng = _rng(seed, stream)
    clip_id = clip_id or f"{kind}_{stream:04d}"
    truth: dict = {"kind": kind}

    if kind == "static":
        tex = _texture(rng, width, height, _jitter_color(rng, (145, 95, 70), 20), 45, 1)
        frames = np.repeat(tex[None, :, :, :], n, axis=0)
        truth["defect"] = "static"
    elif kind == "flicker":
        tex_a = _texture(rng, width, height, _jitter_color(rng, (170, 60, 60), 15), 50, 2)
        tex_b = _texture(rng, width, height, _jitter_color(rng, (60, 60, 170), 15), 50, 2)
        frames = np.stack([tex_a if k % 2 == 0 else tex_b for k in range(n)])
        truth["defect"] = "flicker"
    elif kind in ("pan", "good", "pan_fast"):
        if kind == "good":
            vel = velocity or ((2, 0) if stream % 2 == 0 else (0, 2))
            tex = _texture(rng, width, height, _vivid_base(rng), 105, 1)
            truth["defect"] = None
        elif kind == "pan_fast":
            vel = velocity or ((8, 0) if stream % 2 == 0 else (0, 8))
            tex = _texture(rng, width, height, _jitter_color(rng, (120, 130, 90), 20), 60, 2)
            truth["defect"] = "pan_fast"
        else:
            if velocity is None:
                raise ConfigError("pan kind requires a velocity param")
            vel = velocity
            tex = _texture(rng, width, height, _jitter_color(rng, (130, 110, 80), 20), 60, 2)
        vel = (int(vel[0]), int(vel[1]))
        if abs(vel[0]) >= width or abs(vel[1]) >= height:
            raise ConfigError("pan velocity exceeds frame bounds")
        frames = _pan_frames(tex, n, vel)
        truth["displacement"] = [vel[0], vel[1]]
    elif kind == "blur_pair":
        vel = velocity or ((2, 0) if stream % 2 == 0 else (0, 2))
        vel = (int(vel[0]), int(vel[1]))
        tex = _texture(rng, width, height, _vivid_base(rng), 105, 1)
        blurred = _blur_raster(tex, 9)
        frames = _pan_frames(blurred, n, vel)
        truth["defect"] = "blur"
        truth["displacement"] = [vel[0], vel[1]]
        truth["blur_kernel"] = 9
    elif kind == "dull":
        gray = int(rng.integers(112, 145))
        tex = _texture(rng, width, height, (gray, gray, gray), 12, 3)
        frames = _pan_frames(tex, n, (1, 0))
        truth["defect"] = "dull"
    elif kind == "noise":
        frames = np.stack(
            [_texture(rng, width, height, (128, 128, 128), 127, 0) for _ in range(n)]
        )
        truth["defect"] = "noise"
    elif kind == "multi_scene":
        if lengths is None:
            lengths = [40, 40, 40]
        lengths = [int(x) for x in lengths]
        if len(lengths) < 2 or any(x < 2 for x in lengths):
            raise ConfigError("multi_scene needs at least two scenes of length >= 2")
        scenes = []
        for i, length in enumerate(lengths):
            base = _jitter_color(rng, SCENE_PALETTES[i % len(SCENE_PALETTES)], 10)
            tex = _texture(rng, width, height, base, 35, 2)
            scenes.append(np.repeat(tex[None, :, :, :], length, axis=0))
        frames = np.concatenate(scenes)
        n = frames.shape[0]
        truth["cuts"] = [int(x) for x in np.cumsum(lengths)[:-1]]
        truth["defect"] = None
    else:  # pragma: no cover - KINDS is exhaustive
        raise ConfigError(f"unhandled kind {kind!r}")

    record = ClipRecord(
        clip_id=clip_id,
        source=f"synth:{kind}",
        width=width,
        height=height,
        frame_count=int(frames.shape[0]),
        fps=fps,
    )
    return record, FrameBuffer(frames), truth


def generate_corpus(
    spec: dict[str, int | dict],
    seed: int,
    out_dir: str,
) -> tuple[list[str], str]:
    """Write a corpus of RFV1 files plus a labels manifest; bit-exact per (spec, seed).

    ``spec`` maps kind -> count, or kind -> {"count": n, ...params}. Clip ids
    embed the global index so the stream assignment is stable.
    """
    total = 0
    plan: list[tuple[str, dict]] = []
    for kind in sorted(spec):
        entry = spec[kind]
        if isinstance(entry, dict):
            count = int(entry.get("count", 0))
            params = {k: v for k, v in entry.items() if k != "count"}
        else:
            count = int(entry)
            params = {}
        if count < 0:
            raise ConfigError(f"negative count for kind {kind!r}")
        for _ in range(count):
            plan.append((kind, params))
        total += count
    if total < 1:
        raise ConfigError("corpus spec must produce at least one clip")

    os.makedirs(out_dir, exist_ok=True)
    labels_path = os.path.join(out_dir, "labels.jsonl")
    paths = []
    with open(labels_path, "w", encoding="utf-8") as labels:
        for index, (kind, params) in enumerate(plan):
            clip_id = f"clip{index:04d}_{kind}"
            record, frames, truth = generate(
                kind, params, seed=seed, stream=index, clip_id=clip_id
            )
            path = os.path.join(out_dir, f"{clip_id}.rfv1")
            write_rfv1_file(path, frames, record.fps)
            paths.append(path)
            labels.write(
                json.dumps(
                    {"clip_id": clip_id, "kind": kind, "ground_truth": truth},
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )
    return paths, labels_path


def load_labels(labels_path: str) -> dict[str, dict]:
    out = {}
    with open(labels_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["clip_id"]] = rec
    return out
