"""Percentile and top-fraction selection, set algebra, and pipeline orchestration.

The full policy mirrors the six-stage flow: aesthetics, temporal
consistency, and motion are scored in parallel per clip, the three kept
sets intersect to S_I, clarity is scored only inside S_I, and the clarity
selection S feeds cut extraction and captioning. The lite policy scores
aesthetics and motion only and intersects the primed pair directly.
"""

from __future__ import annotations

import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

from .caption import CaptionConfig, caption_clips
from .core import (
    BandPolicy,
    ClipRecord,
    CurationManifest,
    ManifestEntry,
    ManifestWriter,
    SelectionLedger,
    score_entry,
    verdict_entry,
)
from .cutdetect import CutConfig, detect_cuts, split
from .errors import ConfigError, EmptyInputError, PipelineError
from .ingest import (
    FrameBuffer,
    SamplingPlan,
    default_sampling_plan,
    read_rfv1_file,
    sample,
    write_rfv1_file,
)
from .scorers import (
    REFERENCE_SCORERS,
    ScoreResult,
    ScorerBinding,
    SidecarPool,
)

logger = logging.getLogger(__name__)

# Tolerance absorbing float error in fraction * N for short decimal fractions,
# so floor(0.3 * 1000) is 300 rather than 299.
_FRACTION_EPS = 1e-9

PRE_METRICS_FULL = ("aesthetics", "temporal_consistency", "motion")
PRE_METRICS_LITE = ("aesthetics", "motion")


def select_top_fraction(population: dict[str, float], fraction: float) -> list[str]:
    """Keep exactly max(1, floor(fraction * N)) highest-scoring clip ids.

    Ties break toward the lexicographically smaller clip_id; result sorted.
    """
    if not population:
        raise EmptyInputError("selection over an empty population")
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction {fraction} outside (0, 1]")
    k = max(1, math.floor(fraction * len(population) + _FRACTION_EPS))
    ordered = sorted(population.items(), key=lambda item: (-item[1], item[0]))
    return sorted(cid for cid, _ in ordered[:k])


def percentile_ranks(population: dict[str, float]) -> dict[str, float]:
    """Percentile rank 100*(rank-1)/(N-1) with tied scores sharing the mean rank."""
    n = len(population)
    if n == 1:
        return {next(iter(population)): 50.0}
    items = sorted(population.items(), key=lambda item: (item[1], item[0]))
    ranks: dict[str, float] = {}
    i = 0
    while i < n:
        j = i
        while j + 1 < n and items[j + 1][1] == items[i][1]:
            j += 1
        mean_rank = (i + 1 + j + 1) / 2.0  # 1-based ranks i+1 .. j+1
        for idx in range(i, j + 1):
            ranks[items[idx][0]] = 100.0 * (mean_rank - 1.0) / (n - 1.0)
        i = j + 1
    return ranks


def select_band(population: dict[str, float], p_lo: float, p_hi: float) -> list[str]:
    """Keep clips whose percentile rank lies in [p_lo, p_hi]; result sorted."""
    if not population:
        raise EmptyInputError("selection over an empty population")
    if not (0 <= p_lo <= p_hi <= 100):
        raise ConfigError(f"invalid percentile band ({p_lo}, {p_hi})")
    ranks = percentile_ranks(population)
    return sorted(cid for cid, r in ranks.items() if p_lo <= r <= p_hi)


def select_absolute_band(population: dict[str, float], lo: float, hi: float) -> list[str]:
    """Keep clips whose raw score lies in [lo, hi]; result sorted."""
    if not population:
        raise EmptyInputError("selection over an empty population")
    if lo > hi:
        raise ConfigError(f"invalid absolute band ({lo}, {hi})")
    return sorted(cid for cid, v in population.items() if lo <= v <= hi)


def apply_band_policy(population: dict[str, float], policy: BandPolicy) -> list[str]:
    if policy.mode == "top_fraction":
        return select_top_fraction(population, policy.fraction)
    if policy.mode == "percentile_band":
        return select_band(population, policy.p_lo, policy.p_hi)
    return select_absolute_band(population, policy.lo, policy.hi)


def intersect(sets: Sequence[Sequence[str]]) -> list[str]:
    """Exact intersection, sorted lexicographically."""
    if not sets:
        raise EmptyInputError("intersection of zero sets")
    result = set(sets[0])
    for other in sets[1:]:
        result &= set(other)
    return sorted(result)


@dataclass(frozen=True)
class PipelinePolicy:
    """Which selections run and with what band policies."""

    name: str
    aesthetics: BandPolicy
    motion: BandPolicy
    temporal: Optional[BandPolicy] = None
    clarity: Optional[BandPolicy] = None
    run_cut_extraction: bool = True
    run_captioning: bool = False

    def __post_init__(self):
        if self.name == "full":
            if self.temporal is None or self.clarity is None:
                raise ConfigError("full policy requires temporal and clarity bands")
        elif self.name == "lite":
            if self.temporal is not None or self.clarity is not None:
                raise ConfigError("lite policy has no temporal or clarity stage")
        else:
            raise ConfigError(f"unknown policy {self.name!r}")


def full_policy(**overrides) -> PipelinePolicy:
    defaults = dict(
        name="full",
        aesthetics=BandPolicy(mode="top_fraction", fraction=0.20),
        temporal=BandPolicy(mode="percentile_band", p_lo=5.0, p_hi=95.0),
        motion=BandPolicy(mode="percentile_band", p_lo=5.0, p_hi=95.0),
        clarity=BandPolicy(mode="top_fraction", fraction=0.30),
        run_cut_extraction=True,
        run_captioning=False,
    )
    defaults.update(overrides)
    return PipelinePolicy(**defaults)


def lite_policy(**overrides) -> PipelinePolicy:
    defaults = dict(
        name="lite",
        aesthetics=BandPolicy(mode="top_fraction", fraction=0.90),
        motion=BandPolicy(mode="percentile_band", p_lo=5.0, p_hi=95.0),
        run_cut_extraction=False,
        run_captioning=False,
    )
    defaults.update(overrides)
    return PipelinePolicy(**defaults)


def make_policy(name: str, **overrides) -> PipelinePolicy:
    if name == "full":
        return full_policy(**overrides)
    if name == "lite":
        return lite_policy(**overrides)
    raise ConfigError(f"unknown policy {name!r}")


@dataclass(frozen=True)
class RunConfig:
    """Engine-level run configuration; every field has a documented default."""

    policy: str = "full"
    workers: int = 4
    failure_policy: str = "skip"
    sidecars: dict = field(default_factory=dict)
    sampling: Optional[SamplingPlan] = None
    cut: CutConfig = field(default_factory=CutConfig)
    caption: CaptionConfig = field(default_factory=CaptionConfig)
    sidecar_timeout_s: float = 120.0
    subclip_dir: Optional[str] = None
    band_overrides: dict = field(default_factory=dict)
    flag_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.failure_policy not in ("skip", "abort"):
            raise ConfigError("failure_policy must be 'skip' or 'abort'")
        for metric in self.sidecars:
            if metric not in REFERENCE_SCORERS:
                raise ConfigError(f"sidecar bound to unknown metric {metric!r}")

    def make_policy(self) -> PipelinePolicy:
        overrides = dict(self.band_overrides)
        overrides.update(self.flag_overrides)
        return make_policy(self.policy, **overrides)

    def bindings(self) -> dict[str, ScorerBinding]:
        out = {}
        for metric in REFERENCE_SCORERS:
            command = self.sidecars.get(metric)
            if command:
                out[metric] = ScorerBinding(metric, "sidecar", command)
            else:
                out[metric] = ScorerBinding(metric, "reference")
        return out


_CONFIG_FIELDS = {
    "policy",
    "workers",
    "failure_policy",
    "sidecars",
    "sampling",
    "cut",
    "caption",
    "sidecar_timeout_s",
    "subclip_dir",
    "aesthetics",
    "temporal",
    "motion",
    "clarity",
    "run_cut_extraction",
    "run_captioning",
}


def config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from a parsed config document; unknown fields rejected."""
    unknown = set(raw) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    band_overrides = {}
    for metric in ("aesthetics", "temporal", "motion", "clarity"):
        if metric in raw:
            band_overrides[metric] = BandPolicy.from_dict(raw[metric])
    flag_overrides = {}
    for flag in ("run_cut_extraction", "run_captioning"):
        if flag in raw:
            flag_overrides[flag] = bool(raw[flag])
    sampling = None
    if "sampling" in raw:
        allowed = {"stride", "max_frames"}
        unknown = set(raw["sampling"]) - allowed
        if unknown:
            raise ConfigError(f"unknown sampling fields: {sorted(unknown)}")
        sampling = SamplingPlan(
            stride=int(raw["sampling"].get("stride", 1)),
            max_frames=int(raw["sampling"].get("max_frames", 64)),
        )
    return RunConfig(
        policy=raw.get("policy", "full"),
        workers=int(raw.get("workers", 4)),
        failure_policy=raw.get("failure_policy", "skip"),
        sidecars=dict(raw.get("sidecars", {})),
        sampling=sampling,
        cut=CutConfig.from_dict(raw.get("cut", {})),
        caption=CaptionConfig.from_dict(raw.get("caption", {})),
        sidecar_timeout_s=float(raw.get("sidecar_timeout_s", 120.0)),
        subclip_dir=raw.get("subclip_dir"),
        band_overrides=band_overrides,
        flag_overrides=flag_overrides,
    )


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    return config_from_dict(raw)


class _Scoring:
    """Shared scoring machinery: reference or sidecar routing per metric."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.bindings = config.bindings()
        self.pools: dict[str, SidecarPool] = {}

    def __enter__(self) -> "_Scoring":
        for metric, binding in self.bindings.items():
            if binding.provider == "sidecar":
                self.pools[metric] = SidecarPool(
                    binding.sidecar_command,
                    size=self.config.workers,
                    timeout_s=self.config.sidecar_timeout_s,
                )
        return self

    def __exit__(self, *exc) -> None:
        for pool in self.pools.values():
            pool.close()

    def plan_for(self, frames: FrameBuffer) -> SamplingPlan:
        return self.config.sampling or default_sampling_plan(frames.frame_count)

    def score(self, metric: str, record: ClipRecord, sampled: FrameBuffer) -> ScoreResult:
        binding = self.bindings[metric]
        if binding.provider == "sidecar":
            value = self.pools[metric].score(metric, record.source)
            return ScoreResult(value=value)
        return REFERENCE_SCORERS[metric](sampled)

    def provider_name(self, metric: str) -> str:
        return self.bindings[metric].provider_name


def _score_clip_task(
    scoring: _Scoring, record: ClipRecord, metrics: Sequence[str]
) -> dict[str, ScoreResult]:
    _, frames = read_rfv1_file(record.source, clip_id=record.clip_id)
    sampled = sample(frames, scoring.plan_for(frames))
    return {metric: scoring.score(metric, record, sampled) for metric in metrics}


def _score_clip_reference(
    record: ClipRecord, metrics: tuple[str, ...], sampling: Optional[SamplingPlan]
) -> dict[str, ScoreResult]:
    """Reference-only scoring task; picklable for process pools."""
    _, frames = read_rfv1_file(record.source, clip_id=record.clip_id)
    plan = sampling or default_sampling_plan(frames.frame_count)
    sampled = sample(frames, plan)
    return {metric: REFERENCE_SCORERS[metric](sampled) for metric in metrics}


def score_batch(
    records: Sequence[ClipRecord],
    metrics: Sequence[str],
    scoring: _Scoring,
    config: RunConfig,
) -> Iterator[tuple[str, object]]:
    """Score clips on a bounded pool, yielding (clip_id, results-or-exception).

    Reference-only batches run on a fork-based process pool (the scorers are
    CPU bound); batches touching sidecars stay on threads because the sidecar
    connections live in this process.
    """
    metrics = tuple(metrics)
    ref_only = all(scoring.bindings[m].provider == "reference" for m in metrics)
    if ref_only and config.workers > 1 and hasattr(os, "fork"):
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=config.workers, mp_context=ctx) as pool:
            futures = {
                pool.submit(
                    _score_clip_reference, rec, metrics, config.sampling
                ): rec.clip_id
                for rec in records
            }
            for future in as_completed(futures):
                try:
                    yield futures[future], future.result()
                except Exception as exc:  # noqa: BLE001 - routed to failure policy
                    yield futures[future], exc
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = {
                pool.submit(_score_clip_task, scoring, rec, metrics): rec.clip_id
                for rec in records
            }
            for future in as_completed(futures):
                try:
                    yield futures[future], future.result()
                except Exception as exc:  # noqa: BLE001 - routed to failure policy
                    yield futures[future], exc


def run_pipeline(
    corpus: Sequence[ClipRecord],
    policy: Optional[PipelinePolicy] = None,
    config: Optional[RunConfig] = None,
    live_writer: Optional[ManifestWriter] = None,
    timings: Optional[dict] = None,
) -> tuple[SelectionLedger, CurationManifest]:
    """Run the curation pipeline over a corpus of RFV1 clips.

    Per-clip scoring runs on a bounded worker pool; selection and
    intersection are single-threaded barriers. The returned manifest is in
    append order; finalize it for canonical output. Ledger contents are
    identical for any worker count.
    """
    if not corpus:
        raise EmptyInputError("pipeline needs a nonempty corpus")
    config = config or RunConfig()
    policy = policy or config.make_policy()
    manifest = CurationManifest()
    timings = timings if timings is not None else {}

    def emit(entry: ManifestEntry) -> None:
        manifest.append(entry)
        if live_writer is not None:
            live_writer.append(entry)

    records = {rec.clip_id: rec for rec in corpus}
    if len(records) != len(corpus):
        raise ConfigError("corpus contains duplicate clip ids")

    pre_metrics = PRE_METRICS_FULL if policy.name == "full" else PRE_METRICS_LITE
    pre_stages = (
        {"aesthetics": "S_A", "temporal_consistency": "S_T", "motion": "S_M"}
        if policy.name == "full"
        else {"aesthetics": "S_A_prime", "motion": "S_M_prime"}
    )
    pre_bands = (
        {
            "aesthetics": policy.aesthetics,
            "temporal_consistency": policy.temporal,
            "motion": policy.motion,
        }
        if policy.name == "full"
        else {"aesthetics": policy.aesthetics, "motion": policy.motion}
    )

    skipped: dict[str, str] = {}
    scores: dict[str, dict[str, ScoreResult]] = {}

    with _Scoring(config) as scoring:
        t0 = time.monotonic()
        for clip_id, result in score_batch(corpus, pre_metrics, scoring, config):
            if isinstance(result, Exception):
                if config.failure_policy == "abort":
                    raise PipelineError(clip_id, "scoring", str(result)) from result
                skipped[clip_id] = str(result)
                logger.warning("skipping clip %s: %s", clip_id, result)
                continue
            scores[clip_id] = result
            for metric in pre_metrics:
                res = result[metric]
                emit(
                    score_entry(
                        metric,
                        clip_id,
                        res.value,
                        scoring.provider_name(metric),
                        list(res.flags),
                    )
                )
        timings["scoring"] = time.monotonic() - t0

        # Selection over each metric's population, then the intersection.
        t0 = time.monotonic()
        kept_sets = []
        ledger = SelectionLedger()
        for metric in pre_metrics:
            stage = pre_stages[metric]
            population = {cid: scores[cid][metric].value for cid in scores}
            kept = set(apply_band_policy(population, pre_bands[metric]))
            kept_sets.append(kept)
            ledger.set_members(stage, kept)
            for cid in sorted(population):
                emit(verdict_entry(stage, cid, cid in kept))
            for cid, reason in sorted(skipped.items()):
                emit(verdict_entry(stage, cid, False, reason=f"skipped: {reason}"))

        inter_stage = "S_I" if policy.name == "full" else "S_prime"
        inter = intersect([sorted(s) for s in kept_sets])
        ledger.set_members(inter_stage, inter)
        for cid in sorted(scores):
            emit(verdict_entry(inter_stage, cid, cid in set(inter)))
        timings["selection"] = time.monotonic() - t0

        # Clarity is scored only inside S_I (cost discipline: select first,
        # then run the expensive stage on survivors).
        selected = inter
        if policy.name == "full":
            t0 = time.monotonic()
            clarity_scores: dict[str, float] = {}
            inter_records = [records[cid] for cid in inter]
            for cid, result in score_batch(inter_records, ("clarity",), scoring, config):
                if isinstance(result, Exception):
                    if config.failure_policy == "abort":
                        raise PipelineError(cid, "clarity", str(result)) from result
                    skipped[cid] = str(result)
                    emit(verdict_entry("S", cid, False, reason=f"skipped: {result}"))
                    continue
                res = result["clarity"]
                clarity_scores[cid] = res.value
                emit(
                    score_entry(
                        "clarity",
                        cid,
                        res.value,
                        scoring.provider_name("clarity"),
                        list(res.flags),
                    )
                )
            if clarity_scores:
                selected = apply_band_policy(clarity_scores, policy.clarity)
            else:
                selected = []
            ledger.set_members("S", selected)
            for cid in sorted(clarity_scores):
                emit(verdict_entry("S", cid, cid in set(selected)))
            timings["clarity"] = time.monotonic() - t0

    # Cut extraction over the selected set.
    sub_parents: dict[str, str] = {}
    if policy.run_cut_extraction:
        t0 = time.monotonic()
        tilde: list[str] = []
        extraction_results: dict[str, tuple] = {}

        def _cut_task(cid: str):
            rec = records[cid]
            _, frames = read_rfv1_file(rec.source, clip_id=cid)
            cuts = detect_cuts(frames, config.cut, clip_id=cid)
            if not cuts.cuts:
                return cuts, [], [], frames
            kept, dropped = split(rec, frames, cuts, config.cut.min_scene_len)
            return cuts, kept, dropped, frames

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = {pool.submit(_cut_task, cid): cid for cid in selected}
            for future in as_completed(futures):
                cid = futures[future]
                try:
                    extraction_results[cid] = future.result()
                except Exception as exc:
                    if config.failure_policy == "abort":
                        raise PipelineError(cid, "cut", str(exc)) from exc
                    skipped[cid] = str(exc)
                    emit(verdict_entry("S_tilde", cid, False, reason=f"skipped: {exc}"))

        for cid in sorted(extraction_results):
            cuts, kept, dropped, _frames = extraction_results[cid]
            sub_info = []
            if cuts.cuts:
                boundaries = [0, *cuts.cuts, records[cid].frame_count]
                parts = {rec.clip_id: (rec, buf) for rec, buf in kept}
                for k in range(len(boundaries) - 1):
                    sub_id = f"{cid}#{k}"
                    entry_info = {
                        "clip_id": sub_id,
                        "start": boundaries[k],
                        "end": boundaries[k + 1],
                        "kept": sub_id in parts,
                    }
                    sub_info.append(entry_info)
                for rec, buf in kept:
                    sub_parents[rec.clip_id] = cid
                    tilde.append(rec.clip_id)
                    if config.subclip_dir:
                        os.makedirs(config.subclip_dir, exist_ok=True)
                        path = os.path.join(config.subclip_dir, f"{rec.clip_id}.rfv1")
                        write_rfv1_file(path, buf, rec.fps)
                    emit(verdict_entry("S_tilde", rec.clip_id, True))
                for rec in dropped:
                    emit(
                        verdict_entry(
                            "S_tilde",
                            rec.clip_id,
                            False,
                            reason="shorter than min_scene_len",
                        )
                    )
            else:
                tilde.append(cid)
                emit(verdict_entry("S_tilde", cid, True))
            emit(
                ManifestEntry(
                    stage="S_tilde",
                    kind="cut",
                    clip_id=cid,
                    payload={
                        "cuts": list(cuts.cuts),
                        "sub_clips": sub_info,
                        "rescored": False,
                    },
                    ts=time.time(),
                )
            )
        ledger.set_members("S_tilde", tilde)
        timings["cut"] = time.monotonic() - t0

    # Captioning over the extracted set.
    if policy.run_captioning:
        t0 = time.monotonic()
        if not config.caption.endpoint:
            raise ConfigError("captioning enabled but no caption endpoint configured")
        tilde_ids = ledger.members("S_tilde") if policy.run_cut_extraction else selected
        targets = []
        for cid in tilde_ids:
            if cid in records:
                targets.append((records[cid], records[cid].source))
            else:
                if not config.subclip_dir:
                    raise ConfigError(
                        "captioning extracted sub-clips requires a subclip_dir"
                    )
                parent = records[sub_parents[cid]]
                path = os.path.join(config.subclip_dir, f"{cid}.rfv1")
                sub_record = replace(parent, clip_id=cid, source=path, parent_id=parent.clip_id)
                targets.append((sub_record, path))
        successes, failures = caption_clips(targets, config.caption)
        for record, attempts in successes:
            emit(
                ManifestEntry(
                    stage="caption",
                    kind="caption",
                    clip_id=record.clip_id,
                    payload={
                        "text": record.text,
                        "word_count": record.word_count,
                        "provider": record.provider,
                        "attempts": attempts,
                    },
                    ts=time.time(),
                )
            )
        for clip_id, error in failures:
            if config.failure_policy == "abort":
                raise PipelineError(clip_id, "caption", error)
            skipped[clip_id] = error
            # Extraction membership stands; the failed captioning attempt is
            # recorded so the clip can be re-captioned offline.
            emit(
                ManifestEntry(
                    stage="caption",
                    kind="caption",
                    clip_id=clip_id,
                    payload={"error": error, "attempts": config.caption.max_attempts},
                    ts=time.time(),
                )
            )
        timings["caption"] = time.monotonic() - t0

    # The subset chain must hold after every run.
    ledger.validate(parent_ids={cid: parent for cid, parent in sub_parents.items()})
    return ledger, manifest
