import numpy as np
import pytest

from vidcurate.ingest import FrameBuffer


def solid_frame(width: int, height: int, rgb: tuple[int, int, int]) -> np.ndarray:
    frame = np.empty((height, width, 3), dtype=np.uint8)
    frame[:, :, 0] = rgb[0]
    frame[:, :, 1] = rgb[1]
    frame[:, :, 2] = rgb[2]
    return frame


def buffer_of(*frames: np.ndarray) -> FrameBuffer:
    return FrameBuffer(np.stack(frames))


def repeat_frame(frame: np.ndarray, n: int) -> FrameBuffer:
    return FrameBuffer(np.repeat(frame[None, :, :, :], n, axis=0))


@pytest.fixture
def gray_clip() -> FrameBuffer:
    return repeat_frame(solid_frame(16, 16, (128, 128, 128)), 8)
