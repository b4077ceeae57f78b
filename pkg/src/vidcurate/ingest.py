"""Raw-frame (RFV1) loading, external decoding, and frame sampling.

RFV1 layout, bit-exact: bytes 0-3 magic ASCII "RFV1"; 4-7 width (u32 LE);
8-11 height; 12-15 frame_count; 16-19 fps (IEEE-754 f32 LE); then
frame_count rasters of width*height*3 bytes, interleaved RGB, row-major.
"""

from __future__ import annotations

import io
import struct
import subprocess
from dataclasses import dataclass
from typing import IO, Optional, Union

import numpy as np

from .core import ClipRecord
from .errors import ConfigError, DecoderError, FormatError, IntegrityError

RFV1_MAGIC = b"RFV1"
RFV1_HEADER = struct.Struct("<4sIIIf")

SOURCE_PLACEHOLDER = "{src}"


@dataclass(frozen=True)
class FrameBuffer:
    """Decoded frames as a (frame_count, height, width, 3) uint8 array."""

    frames: np.ndarray

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[3] != 3:
            raise ConfigError("frames must have shape (n, h, w, 3)")
        if self.frames.dtype != np.uint8:
            raise ConfigError("frames must be uint8")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def raster(self, index: int) -> np.ndarray:
        return self.frames[index]

    def tobytes(self) -> bytes:
        return np.ascontiguousarray(self.frames).tobytes()


@dataclass(frozen=True)
class SamplingPlan:
    """Strided frame sampling: indices {0, stride, 2*stride, ...} capped at max_frames."""

    stride: int
    max_frames: int

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.max_frames < 2:
            raise ConfigError("max_frames must be >= 2")

    def indices(self, frame_count: int) -> list[int]:
        return list(range(0, frame_count, self.stride))[: self.max_frames]


def default_sampling_plan(frame_count: int, max_frames: int = 64) -> SamplingPlan:
    # Bounds per-clip scoring cost while keeping adjacent-pair statistics meaningful.
    return SamplingPlan(stride=max(1, frame_count // max_frames), max_frames=max_frames)


def sample(frames: FrameBuffer, plan: SamplingPlan) -> FrameBuffer:
    """Strided subsequence of the clip; never reorders frames."""
    idx = plan.indices(frames.frame_count)
    return FrameBuffer(frames.frames[idx])


def read_rfv1(
    source: Union[bytes, IO[bytes]],
    clip_id: str = "clip",
    source_name: str = "<stream>",
) -> tuple[ClipRecord, FrameBuffer]:
    """Decode an RFV1 byte stream into a clip record and its frames."""
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    header = source.read(RFV1_HEADER.size)
    if len(header) < RFV1_HEADER.size:
        raise FormatError(f"{source_name}: truncated RFV1 header ({len(header)} bytes)")
    magic, width, height, frame_count, fps = RFV1_HEADER.unpack(header)
    if magic != RFV1_MAGIC:
        raise FormatError(f"{source_name}: bad magic {magic!r}, expected {RFV1_MAGIC!r}")
    if width < 1 or height < 1 or frame_count < 1:
        raise FormatError(
            f"{source_name}: invalid header dims {width}x{height}x{frame_count}"
        )
    if not fps > 0:
        raise FormatError(f"{source_name}: invalid fps {fps}")
    expected = width * height * 3 * frame_count
    payload = source.read(expected)
    if len(payload) != expected:
        raise IntegrityError(
            f"{source_name}: truncated payload, expected {expected} bytes, got {len(payload)}"
        )
    frames = np.frombuffer(payload, dtype=np.uint8).reshape(frame_count, height, width, 3)
    record = ClipRecord(
        clip_id=clip_id,
        source=source_name,
        width=width,
        height=height,
        frame_count=frame_count,
        fps=float(np.float32(fps)),
    )
    return record, FrameBuffer(frames.copy())


def _clip_id_for_path(path: str) -> str:
    stem = path.rsplit("/", 1)[-1]
    return stem[:-5] if stem.endswith(".rfv1") else stem


def read_rfv1_file(path: str, clip_id: Optional[str] = None) -> tuple[ClipRecord, FrameBuffer]:
    if clip_id is None:
        clip_id = _clip_id_for_path(path)
    with open(path, "rb") as fh:
        return read_rfv1(fh, clip_id=clip_id, source_name=path)


def read_rfv1_header(path: str, clip_id: Optional[str] = None) -> ClipRecord:
    """Clip record from the RFV1 header alone, without loading frames."""
    if clip_id is None:
        clip_id = _clip_id_for_path(path)
    with open(path, "rb") as fh:
        header = fh.read(RFV1_HEADER.size)
    if len(header) < RFV1_HEADER.size:
        raise FormatError(f"{path}: truncated RFV1 header ({len(header)} bytes)")
    magic, width, height, frame_count, fps = RFV1_HEADER.unpack(header)
    if magic != RFV1_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {RFV1_MAGIC!r}")
    if width < 1 or height < 1 or frame_count < 1 or not fps > 0:
        raise FormatError(f"{path}: invalid header")
    return ClipRecord(
        clip_id=clip_id,
        source=path,
        width=width,
        height=height,
        frame_count=frame_count,
        fps=float(np.float32(fps)),
    )


def write_rfv1(fh: IO[bytes], frames: FrameBuffer, fps: float) -> None:
    fh.write(
        RFV1_HEADER.pack(
            RFV1_MAGIC, frames.width, frames.height, frames.frame_count, fps
        )
    )
    fh.write(frames.tobytes())


def write_rfv1_file(path: str, frames: FrameBuffer, fps: float) -> None:
    with open(path, "wb") as fh:
        write_rfv1(fh, frames, fps)


def decode_external(
    command: str,
    source: str,
    clip_id: Optional[str] = None,
    timeout_s: float = 120.0,
) -> tuple[ClipRecord, FrameBuffer]:
    """Run an external decoder that writes RFV1 to stdout.

    ``command`` must contain the {src} placeholder for the source path;
    nonzero exit raises DecoderError carrying the captured stderr.
    """
    if SOURCE_PLACEHOLDER not in command:
        raise ConfigError(f"decoder command must contain the {SOURCE_PLACEHOLDER} placeholder")
    argv = [
        arg.replace(SOURCE_PLACEHOLDER, source) for arg in command.split()
    ]
    try:
        proc = subprocess.run(
            argv, capture_output=True, timeout=timeout_s, check=False
        )
    except subprocess.TimeoutExpired as exc:
        raise DecoderError(f"decoder timed out after {timeout_s}s: {argv}") from exc
    except OSError as exc:
        raise DecoderError(f"decoder failed to start: {exc}") from exc
    if proc.returncode != 0:
        diag = proc.stderr.decode("utf-8", errors="replace").strip()
        raise DecoderError(
            f"decoder exited {proc.returncode} for {source!r}: {diag or '<no diagnostics>'}"
        )
    if clip_id is None:
        stem = source.rsplit("/", 1)[-1]
        clip_id = stem.rsplit(".", 1)[0] if "." in stem else stem
    return read_rfv1(proc.stdout, clip_id=clip_id, source_name=source)
