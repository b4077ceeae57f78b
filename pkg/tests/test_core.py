import json

import pytest

from vidcurate.core import (
    BandPolicy,
    CaptionRecord,
    ClipRecord,
    CurationManifest,
    ManifestEntry,
    SelectionLedger,
    parse_manifest,
    replay_manifest,
    score_entry,
    sub_clip_id,
    verdict_entry,
)
from vidcurate.errors import ConfigError, IntegrityError, ManifestParseError


def test_replay_empty_manifest():
    ledger = replay_manifest(CurationManifest())
    assert ledger.sets == {}


def test_replay_derives_intersection():
    manifest = CurationManifest(
        [
            verdict_entry("S_A", "a", True),
            verdict_entry("S_A", "b", True),
            verdict_entry("S_T", "b", True),
            verdict_entry("S_T", "a", False),
            verdict_entry("S_M", "b", True),
        ]
    )
    ledger = replay_manifest(manifest)
    assert ledger.members("S_A") == ["a", "b"]
    assert ledger.members("S_I") == ["b"]


def test_replay_rejects_duplicate_scores():
    manifest = CurationManifest(
        [
            score_entry("aesthetics", "a", 1.0, "reference"),
            score_entry("aesthetics", "a", 2.0, "reference"),
        ]
    )
    with pytest.raises(IntegrityError, match="duplicate"):
        replay_manifest(manifest)


def test_parse_names_bad_line_number():
    lines = [
        '{"stage":"S_A","kind":"verdict","clip_id":"a","payload":{"keep":true}}',
        "this is not json",
    ]
    with pytest.raises(ManifestParseError, match="line 2"):
        parse_manifest(lines)


def test_parse_rejects_missing_fields():
    with pytest.raises(ManifestParseError, match="missing fields"):
        parse_manifest(['{"stage":"S_A","kind":"verdict"}'])
    with pytest.raises(ManifestParseError, match="unknown kind"):
        parse_manifest(['{"stage":"x","kind":"wat","clip_id":"a","payload":{}}'])


def test_finalized_manifest_is_canonical():
    entries = [
        score_entry("motion", "b", 1.0, "reference"),
        score_entry("aesthetics", "b", 2.0, "reference"),
        verdict_entry("S_A", "a", True),
        score_entry("aesthetics", "a", 3.0, "reference"),
    ]
    shuffled = CurationManifest(list(reversed(entries)))
    ordered = CurationManifest(entries)
    assert shuffled.finalized().dumps() == ordered.finalized().dumps()
    # timestamps never appear in finalized output
    assert '"ts"' not in shuffled.finalized().dumps()
    keys = [e.sort_key() for e in ordered.finalized()]
    assert keys == sorted(keys)


def test_manifest_roundtrip_through_text():
    manifest = CurationManifest(
        [
            score_entry("clarity", "x", 12.5, "reference", ["degenerate"]),
            verdict_entry("S", "x", False, reason="below threshold"),
        ]
    ).finalized()
    text = manifest.dumps()
    parsed = parse_manifest(text.splitlines())
    assert parsed.dumps() == text


def test_clip_record_validation():
    with pytest.raises(ConfigError):
        ClipRecord("a", "src", 0, 4, 4, 8.0)
    with pytest.raises(ConfigError):
        ClipRecord("a", "src", 4, 4, 0, 8.0)
    with pytest.raises(ConfigError):
        ClipRecord("a", "src", 4, 4, 4, 0.0)
    assert sub_clip_id("parent", 2) == "parent#2"


def test_band_policy_validation():
    with pytest.raises(ConfigError):
        BandPolicy(mode="top_fraction", fraction=0.0)
    with pytest.raises(ConfigError):
        BandPolicy(mode="percentile_band", p_lo=60.0, p_hi=40.0)
    with pytest.raises(ConfigError):
        BandPolicy.from_dict({"mode": "top_fraction", "fraction": 0.5, "bogus": 1})
    policy = BandPolicy.from_dict({"mode": "percentile_band", "p_lo": 5, "p_hi": 95})
    assert policy.to_dict() == {"mode": "percentile_band", "p_lo": 5, "p_hi": 95}


def test_caption_record_word_count():
    for text in ["a red square on white background", "  padded   text ", "one"]:
        rec = CaptionRecord.from_text("c", text)
        brute = sum(1 for token in text.split() if token)
        assert rec.word_count == brute
    assert CaptionRecord.from_text("c", "a red square on white background").word_count == 6


def test_ledger_subset_validation():
    ledger = SelectionLedger()
    ledger.set_members("S_A", ["a"])
    ledger.set_members("S_T", ["a", "b"])
    ledger.set_members("S_M", ["a", "b"])
    ledger.set_members("S_I", ["a", "b"])  # not a subset of S_A
    with pytest.raises(IntegrityError):
        ledger.validate()

    good = SelectionLedger()
    good.set_members("S_A", ["a", "b"])
    good.set_members("S_T", ["a", "b"])
    good.set_members("S_M", ["a", "b"])
    good.set_members("S_I", ["a", "b"])
    good.set_members("S", ["a"])
    good.set_members("S_tilde", ["a#0", "a#1"])
    good.validate(parent_ids={"a#0": "a", "a#1": "a"})
    with pytest.raises(IntegrityError):
        good.validate(parent_ids={"a#0": "zzz", "a#1": "a"})


def test_ledger_json_roundtrip():
    ledger = SelectionLedger()
    ledger.set_members("S_A", ["b", "a"])
    ledger.set_members("S_I", ["a"])
    parsed = SelectionLedger.from_dict(json.loads(ledger.to_json()))
    assert parsed == ledger
    assert parsed.members("S_A") == ["a", "b"]


def test_manifest_entry_kind_checked():
    with pytest.raises(ConfigError):
        ManifestEntry(stage="S_A", kind="bogus", clip_id="a", payload={})


def test_score_records_from_manifest():
    from vidcurate.core import score_records_from_manifest

    manifest = CurationManifest(
        [
            score_entry("aesthetics", "a", 4.2, "reference"),
            score_entry("motion", "a", 2.0, "sidecar:cmd", ["saturated"]),
            score_entry("clarity", "b", 100.0, "reference"),
        ]
    )
    records = score_records_from_manifest(manifest)
    assert records["a"].aesthetics == 4.2
    assert records["a"].motion == 2.0
    assert records["a"].clarity is None
    assert records["a"].providers == {"aesthetics": "reference", "motion": "sidecar:cmd"}
    assert records["a"].flags == {"motion": ["saturated"]}
    assert records["b"].clarity == 100.0
