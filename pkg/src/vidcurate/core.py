"""Domain types and the manifest data model shared by all stages.

The manifest is an append-only stream of line-delimited JSON records.
During a run each line carries a timestamp so interrupted runs stay
inspectable; finalization sorts records by (stage, clip_id, kind) and
drops timestamps, making finalized files byte-identical across runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional

from .errors import ConfigError, IntegrityError, ManifestParseError

# Stage labels for selection verdicts, in pipeline order.
STAGE_LABELS = (
    "S_A",
    "S_T",
    "S_M",
    "S_I",
    "S",
    "S_tilde",
    "S_A_prime",
    "S_M_prime",
    "S_prime",
)

METRICS = ("aesthetics", "temporal_consistency", "motion", "clarity")

ENTRY_KINDS = ("score", "verdict", "cut", "caption")


@dataclass(frozen=True)
class ClipRecord:
    """Identity, dimensions, and source location of one video clip."""

    clip_id: str
    source: str
    width: int
    height: int
    frame_count: int
    fps: float
    parent_id: Optional[str] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"clip {self.clip_id!r}: dimensions must be >= 1")
        if self.frame_count < 1:
            raise ConfigError(f"clip {self.clip_id!r}: frame_count must be >= 1")
        if not self.fps > 0:
            raise ConfigError(f"clip {self.clip_id!r}: fps must be positive")


def sub_clip_id(parent_id: str, scene_index: int) -> str:
    """Clip id of an extracted sub-clip; keeps parentage greppable and sort-stable."""
    return f"{parent_id}#{scene_index}"


@dataclass(frozen=True)
class ScoreRecord:
    """The four per-clip quality scores with their producing scorer names.

    Scores absent at a given pipeline stage (clarity outside S_I) are None.
    ``flags`` carries degenerate/saturated markers keyed by metric.
    """

    clip_id: str
    aesthetics: Optional[float] = None
    temporal_consistency: Optional[float] = None
    motion: Optional[float] = None
    clarity: Optional[float] = None
    providers: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BandPolicy:
    """Selection rule over a score population.

    Modes:
      top_fraction    -- keep the max(1, floor(fraction * N)) highest scores
      percentile_band -- keep scores whose percentile rank is in [p_lo, p_hi]
      absolute_band   -- keep raw scores in [lo, hi]
    """

    mode: str
    fraction: Optional[float] = None
    p_lo: Optional[float] = None
    p_hi: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        if self.mode == "top_fraction":
            if self.fraction is None or not 0 < self.fraction <= 1:
                raise ConfigError("top_fraction requires fraction in (0, 1]")
        elif self.mode == "percentile_band":
            if self.p_lo is None or self.p_hi is None:
                raise ConfigError("percentile_band requires p_lo and p_hi")
            if not (0 <= self.p_lo <= self.p_hi <= 100):
                raise ConfigError("percentile_band requires 0 <= p_lo <= p_hi <= 100")
        elif self.mode == "absolute_band":
            if self.lo is None or self.hi is None or self.lo > self.hi:
                raise ConfigError("absolute_band requires lo <= hi")
        else:
            raise ConfigError(f"unknown band mode {self.mode!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "BandPolicy":
        allowed = {"mode", "fraction", "p_lo", "p_hi", "lo", "hi"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown band policy fields: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        for key in ("fraction", "p_lo", "p_hi", "lo", "hi"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


@dataclass(frozen=True)
class CaptionRecord:
    """Caption text for one clip with its locally computed word count."""

    clip_id: str
    text: str
    word_count: int
    provider: str = "none"

    @classmethod
    def from_text(cls, clip_id: str, text: str, provider: str = "none") -> "CaptionRecord":
        return cls(clip_id=clip_id, text=text, word_count=len(text.split()), provider=provider)


class SelectionLedger:
    """The named clip-id subsets of the pipeline, each kept sorted."""

    def __init__(self):
        self.sets: dict[str, list[str]] = {}

    def set_members(self, label: str, clip_ids: Iterable[str]) -> None:
        if label not in STAGE_LABELS:
            raise ConfigError(f"unknown stage label {label!r}")
        self.sets[label] = sorted(set(clip_ids))

    def members(self, label: str) -> list[str]:
        return list(self.sets.get(label, []))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SelectionLedger):
            return NotImplemented
        return self.sets == other.sets

    def to_dict(self) -> dict:
        return {label: self.sets[label] for label in STAGE_LABELS if label in self.sets}

    @classmethod
    def from_dict(cls, raw: dict) -> "SelectionLedger":
        ledger = cls()
        for label, ids in raw.items():
            ledger.set_members(label, ids)
        return ledger

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def validate(self, parent_ids: Optional[dict[str, Optional[str]]] = None) -> None:
        """Check the subset-chain invariants; raises IntegrityError on violation.

        ``parent_ids`` maps clip_id -> parent_id for extracted sub-clips and is
        needed to check S_tilde parentage.
        """
        sets = {label: set(ids) for label, ids in self.sets.items()}
        s_i = sets.get("S_I", set())
        for label in ("S_A", "S_T", "S_M"):
            if label in sets and not s_i <= sets[label]:
                raise IntegrityError(f"S_I is not a subset of {label}")
        if "S" in sets and not sets["S"] <= s_i:
            raise IntegrityError("S is not a subset of S_I")
        if "S_prime" in sets:
            for label in ("S_A_prime", "S_M_prime"):
                if label in sets and not sets["S_prime"] <= sets[label]:
                    raise IntegrityError(f"S_prime is not a subset of {label}")
        if parent_ids is not None and "S_tilde" in sets:
            base = sets.get("S", set()) or sets.get("S_prime", set())
            for cid in sets["S_tilde"]:
                parent = parent_ids.get(cid)
                if cid not in base and parent not in base:
                    raise IntegrityError(
                        f"S_tilde member {cid!r} has no parent or self in the extracted-from set"
                    )


@dataclass(frozen=True)
class ManifestEntry:
    """One stage record: a score, verdict, cut, or caption for a clip."""

    stage: str
    kind: str
    clip_id: str
    payload: dict
    ts: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ENTRY_KINDS:
            raise ConfigError(f"unknown manifest entry kind {self.kind!r}")

    def sort_key(self) -> tuple:
        return (self.stage, self.clip_id, self.kind)

    def to_line(self, with_ts: bool) -> str:
        rec = {
            "stage": self.stage,
            "kind": self.kind,
            "clip_id": self.clip_id,
            "payload": self.payload,
        }
        if with_ts and self.ts is not None:
            rec["ts"] = self.ts
        return json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def score_entry(metric: str, clip_id: str, value: float, provider: str,
                flags: Optional[list[str]] = None) -> ManifestEntry:
    payload = {"value": value, "provider": provider}
    if flags:
        payload["flags"] = sorted(flags)
    return ManifestEntry(stage=metric, kind="score", clip_id=clip_id,
                         payload=payload, ts=time.time())


def verdict_entry(stage: str, clip_id: str, keep: bool,
                  reason: Optional[str] = None) -> ManifestEntry:
    payload: dict = {"keep": keep}
    if reason:
        payload["reason"] = reason
    return ManifestEntry(stage=stage, kind="verdict", clip_id=clip_id,
                         payload=payload, ts=time.time())


class CurationManifest:
    """Ordered sequence of stage entries for one run."""

    def __init__(self, entries: Optional[list[ManifestEntry]] = None):
        self.entries: list[ManifestEntry] = list(entries or [])

    def append(self, entry: ManifestEntry) -> None:
        self.entries.append(entry)

    def extend(self, entries: Iterable[ManifestEntry]) -> None:
        self.entries.extend(entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def finalized(self) -> "CurationManifest":
        """Canonical copy: sorted by (stage, clip_id, kind), timestamps dropped."""
        ordered = sorted(self.entries, key=ManifestEntry.sort_key)
        return CurationManifest(
            [ManifestEntry(e.stage, e.kind, e.clip_id, e.payload) for e in ordered]
        )

    def write(self, fh: IO[str], with_ts: bool = False) -> None:
        for entry in self.entries:
            fh.write(entry.to_line(with_ts=with_ts))
            fh.write("\n")

    def dumps(self, with_ts: bool = False) -> str:
        return "".join(e.to_line(with_ts=with_ts) + "\n" for e in self.entries)


class ManifestWriter:
    """Single appending writer for a live manifest file.

    Workers hand entries to one writer; entries hit disk in arrival order
    and canonical ordering is applied only at finalization.
    """

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def append(self, entry: ManifestEntry) -> None:
        self._fh.write(entry.to_line(with_ts=True))
        self._fh.write("\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "ManifestWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def parse_manifest(lines: Iterable[str]) -> CurationManifest:
    """Parse manifest lines; raises ManifestParseError naming the bad line."""
    entries = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(line_no, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(raw, dict):
            raise ManifestParseError(line_no, "record is not a JSON object")
        missing = {"stage", "kind", "clip_id", "payload"} - set(raw)
        if missing:
            raise ManifestParseError(line_no, f"missing fields: {sorted(missing)}")
        if raw["kind"] not in ENTRY_KINDS:
            raise ManifestParseError(line_no, f"unknown kind {raw['kind']!r}")
        if not isinstance(raw["payload"], dict):
            raise ManifestParseError(line_no, "payload is not a JSON object")
        entries.append(
            ManifestEntry(
                stage=str(raw["stage"]),
                kind=raw["kind"],
                clip_id=str(raw["clip_id"]),
                payload=raw["payload"],
                ts=raw.get("ts"),
            )
        )
    return CurationManifest(entries)


def load_manifest(path: str) -> CurationManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_manifest(fh)


def score_records_from_manifest(manifest: CurationManifest) -> dict[str, ScoreRecord]:
    """Collect per-clip ScoreRecords from a manifest's score entries.

    Every recorded score carries the name of the scorer that produced it.
    """
    values: dict[str, dict] = {}
    providers: dict[str, dict] = {}
    flags: dict[str, dict] = {}
    for entry in manifest:
        if entry.kind != "score" or entry.stage not in METRICS:
            continue
        cid = entry.clip_id
        values.setdefault(cid, {})[entry.stage] = float(entry.payload["value"])
        providers.setdefault(cid, {})[entry.stage] = entry.payload.get("provider", "unknown")
        if entry.payload.get("flags"):
            flags.setdefault(cid, {})[entry.stage] = list(entry.payload["flags"])
    return {
        cid: ScoreRecord(
            clip_id=cid,
            aesthetics=vals.get("aesthetics"),
            temporal_consistency=vals.get("temporal_consistency"),
            motion=vals.get("motion"),
            clarity=vals.get("clarity"),
            providers=providers.get(cid, {}),
            flags=flags.get(cid, {}),
        )
        for cid, vals in values.items()
    }


def replay_manifest(manifest: CurationManifest) -> SelectionLedger:
    """Reconstruct the SelectionLedger implied by verdict entries.

    Derived sets absent from the manifest are filled in from their
    definitions: S_I from S_A/S_T/S_M and S_prime from the primed pair.
    Duplicate score entries for one (stage, clip_id) are an integrity error.
    """
    seen_scores: set[tuple[str, str]] = set()
    kept: dict[str, set[str]] = {}
    stages_with_verdicts: set[str] = set()
    for entry in manifest:
        if entry.kind == "score":
            key = (entry.stage, entry.clip_id)
            if key in seen_scores:
                raise IntegrityError(
                    f"duplicate score entry for clip {entry.clip_id!r} in stage {entry.stage!r}"
                )
            seen_scores.add(key)
        elif entry.kind == "verdict":
            stages_with_verdicts.add(entry.stage)
            if entry.payload.get("keep"):
                kept.setdefault(entry.stage, set()).add(entry.clip_id)

    ledger = SelectionLedger()
    for label in STAGE_LABELS:
        if label in stages_with_verdicts:
            ledger.set_members(label, kept.get(label, set()))

    if "S_I" not in ledger.sets and all(l in ledger.sets for l in ("S_A", "S_T", "S_M")):
        ledger.set_members(
            "S_I",
            set(ledger.members("S_A"))
            & set(ledger.members("S_T"))
            & set(ledger.members("S_M")),
        )
    if "S_prime" not in ledger.sets and all(
        l in ledger.sets for l in ("S_A_prime", "S_M_prime")
    ):
        ledger.set_members(
            "S_prime",
            set(ledger.members("S_A_prime")) & set(ledger.members("S_M_prime")),
        )
    return ledger
