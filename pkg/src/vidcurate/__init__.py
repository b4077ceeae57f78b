"""Deterministic, parallel video-corpus curation engine."""

from .core import (
    BandPolicy,
    CaptionRecord,
    ClipRecord,
    CurationManifest,
    ScoreRecord,
    SelectionLedger,
    replay_manifest,
)
from .ingest import FrameBuffer, SamplingPlan, read_rfv1, sample, write_rfv1
from .selection import (
    PipelinePolicy,
    RunConfig,
    full_policy,
    intersect,
    lite_policy,
    run_pipeline,
    select_band,
    select_top_fraction,
)

__version__ = "0.1.0"

__all__ = [
    "BandPolicy",
    "CaptionRecord",
    "ClipRecord",
    "CurationManifest",
    "FrameBuffer",
    "PipelinePolicy",
    "RunConfig",
    "SamplingPlan",
    "ScoreRecord",
    "SelectionLedger",
    "full_policy",
    "intersect",
    "lite_policy",
    "read_rfv1",
    "replay_manifest",
    "run_pipeline",
    "sample",
    "select_band",
    "select_top_fraction",
    "write_rfv1",
    "__version__",
]
