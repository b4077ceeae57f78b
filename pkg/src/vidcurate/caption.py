"""Client for an external captioning service, plus caption-length statistics.

Captioning is an HTTP request/response exchange: frames are referenced by
RFV1 path (captioner and engine are assumed to share storage), with an
opt-in inline base64 transport for remote services.
"""

from __future__ import annotations

import base64
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import requests

from .core import CaptionRecord, ClipRecord
from .errors import CaptionError, EmptyInputError
from .stats import CAPTION_METRIC, DEFAULT_EDGES, MetricHistogram, histogram

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CaptionConfig:
    endpoint: str = ""
    prompt: Optional[str] = None
    timeout_s: float = 300.0
    retry_base_s: float = 1.0
    retry_factor: float = 2.0
    max_attempts: int = 3
    in_flight: int = 4
    inline_frames: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "CaptionConfig":
        allowed = {
            "endpoint",
            "prompt",
            "timeout_s",
            "retry_base_s",
            "retry_factor",
            "max_attempts",
            "in_flight",
            "inline_frames",
        }
        unknown = set(raw) - allowed
        if unknown:
            from .errors import ConfigError

            raise ConfigError(f"unknown caption config fields: {sorted(unknown)}")
        return cls(**raw)


def caption_clip(
    clip: ClipRecord,
    frames_path: str,
    config: CaptionConfig,
    session: Optional[requests.Session] = None,
) -> tuple[CaptionRecord, int]:
    """Request one caption; returns (record, attempts made).

    Timeouts and 5xx responses are retried with exponential backoff;
    4xx responses fail permanently. An empty caption is a protocol violation.
    """
    http = session or requests
    body: dict = {"clip_id": clip.clip_id, "rfv1_path": frames_path}
    if config.prompt is not None:
        body["prompt"] = config.prompt
    if config.inline_frames:
        with open(frames_path, "rb") as fh:
            body["rfv1_base64"] = base64.b64encode(fh.read()).decode("ascii")

    last_error = "no attempts made"
    for attempt in range(1, config.max_attempts + 1):
        try:
            resp = http.post(config.endpoint, json=body, timeout=config.timeout_s)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
        else:
            if resp.status_code >= 500:
                last_error = f"server error {resp.status_code}"
            elif resp.status_code >= 400:
                raise CaptionError(
                    f"clip {clip.clip_id!r}: permanent failure {resp.status_code}"
                )
            else:
                try:
                    text = resp.json()["caption"]
                except (ValueError, KeyError) as exc:
                    raise CaptionError(
                        f"clip {clip.clip_id!r}: malformed caption response"
                    ) from exc
                if not isinstance(text, str) or not text.strip():
                    raise CaptionError(f"clip {clip.clip_id!r}: empty caption text")
                record = CaptionRecord.from_text(
                    clip.clip_id, text, provider=config.endpoint
                )
                return record, attempt
        if attempt < config.max_attempts:
            delay = config.retry_base_s * (config.retry_factor ** (attempt - 1))
            logger.debug("caption retry %d for %s in %.1fs", attempt, clip.clip_id, delay)
            time.sleep(delay)
    raise CaptionError(
        f"clip {clip.clip_id!r}: all {config.max_attempts} attempts failed ({last_error})"
    )


def caption_clips(
    clips: Sequence[tuple[ClipRecord, str]],
    config: CaptionConfig,
) -> tuple[list[tuple[CaptionRecord, int]], list[tuple[str, str]]]:
    """Caption a batch with a bounded in-flight pool.

    Returns (successes as (record, attempts), failures as (clip_id, error)).
    Responses may complete out of order; manifest finalization restores
    canonical ordering downstream.
    """
    successes: list[tuple[CaptionRecord, int]] = []
    failures: list[tuple[str, str]] = []
    with requests.Session() as session:
        with ThreadPoolExecutor(max_workers=max(1, config.in_flight)) as pool:
            futures = {
                pool.submit(caption_clip, clip, path, config, session): clip.clip_id
                for clip, path in clips
            }
            for future, clip_id in futures.items():
                try:
                    successes.append(future.result())
                except CaptionError as exc:
                    failures.append((clip_id, str(exc)))
    return successes, failures


def caption_stats(captions: Sequence[CaptionRecord]) -> MetricHistogram:
    """Word-count distribution: width-10 bins over [0, 200) plus overflow."""
    if not captions:
        raise EmptyInputError("caption statistics need at least one caption")
    return histogram(
        [c.word_count for c in captions],
        DEFAULT_EDGES[CAPTION_METRIC],
        metric=CAPTION_METRIC,
    )
