"""Command-line surface binding config, corpora, sidecars, and manifests.

Stage subcommands exist separately from `run` so corpora can be
re-selected under new thresholds without re-scoring.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace

from . import caption as caption_mod
from . import selection, stats, synth
from .core import (
    ClipRecord,
    CurationManifest,
    ManifestEntry,
    ManifestWriter,
    SelectionLedger,
    load_manifest,
    replay_manifest,
    score_entry,
    verdict_entry,
)
from .cutdetect import detect_cuts, split
from .errors import ConfigError, VidcurateError
from .ingest import read_rfv1_file, read_rfv1_header, write_rfv1_file
from .scorers import REFERENCE_SCORERS
from .selection import RunConfig, load_config, run_pipeline

logger = logging.getLogger(__name__)

CONFIG_ENV = "VIDCURATE_CONFIG"

# CLI metric spellings; "temporal" maps to the internal metric name.
METRIC_CHOICES = ("aesthetics", "temporal", "motion", "clarity", "all")
METRIC_BY_CHOICE = {
    "aesthetics": "aesthetics",
    "temporal": "temporal_consistency",
    "motion": "motion",
    "clarity": "clarity",
}


def scan_corpus(corpus_dir: str) -> list[ClipRecord]:
    """Clip records for every .rfv1 file in a directory, sorted by clip id."""
    if not os.path.isdir(corpus_dir):
        raise ConfigError(f"corpus directory not readable: {corpus_dir}")
    records = []
    for name in sorted(os.listdir(corpus_dir)):
        if name.endswith(".rfv1"):
            records.append(read_rfv1_header(os.path.join(corpus_dir, name)))
    if not records:
        raise ConfigError(f"no .rfv1 clips found in {corpus_dir}")
    return records


def _resolve_config(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    config = load_config(path) if path else RunConfig()
    # Flags override config, config overrides built-in defaults.
    if getattr(args, "workers", None) is not None:
        config = replace(config, workers=args.workers)
    if getattr(args, "policy", None):
        config = replace(config, policy=args.policy)
    if getattr(args, "sidecar", None):
        metric = METRIC_BY_CHOICE.get(args.metric)
        if metric is None:
            raise ConfigError("--sidecar requires a single --metric, not 'all'")
        sidecars = dict(config.sidecars)
        sidecars[metric] = args.sidecar
        config = replace(config, sidecars=sidecars)
    if getattr(args, "endpoint", None):
        config = replace(config, caption=replace(config.caption, endpoint=args.endpoint))
    return config


def cmd_score(args) -> int:
    config = _resolve_config(args)
    records = scan_corpus(args.corpus)
    metrics = (
        list(REFERENCE_SCORERS)
        if args.metric == "all"
        else [METRIC_BY_CHOICE[args.metric]]
    )
    scoring = selection._Scoring(config)
    failures = 0
    with scoring, ManifestWriter(args.out) as writer:
        for clip_id, result in selection.score_batch(records, metrics, scoring, config):
            if isinstance(result, Exception):
                if config.failure_policy == "abort":
                    raise result
                failures += 1
                logger.warning("skipping clip %s: %s", clip_id, result)
                continue
            for metric in metrics:
                res = result[metric]
                writer.append(
                    score_entry(
                        metric,
                        clip_id,
                        res.value,
                        scoring.provider_name(metric),
                        list(res.flags),
                    )
                )
    print(f"scored {len(records) - failures} clips ({failures} skipped) -> {args.out}")
    return 0


def _score_populations(manifest: CurationManifest) -> dict[str, dict[str, float]]:
    populations: dict[str, dict[str, float]] = {}
    for entry in manifest:
        if entry.kind == "score":
            populations.setdefault(entry.stage, {})[entry.clip_id] = float(
                entry.payload["value"]
            )
    return populations


def cmd_select(args) -> int:
    config = _resolve_config(args)
    policy = config.make_policy()
    manifest = load_manifest(args.manifest)
    populations = _score_populations(manifest)
    ledger = SelectionLedger()
    entries: list[ManifestEntry] = []

    pre = (
        [("aesthetics", "S_A", policy.aesthetics),
         ("temporal_consistency", "S_T", policy.temporal),
         ("motion", "S_M", policy.motion)]
        if policy.name == "full"
        else [("aesthetics", "S_A_prime", policy.aesthetics),
              ("motion", "S_M_prime", policy.motion)]
    )
    kept_sets = []
    for metric, stage, band in pre:
        population = populations.get(metric)
        if not population:
            raise ConfigError(f"manifest has no {metric!r} scores; run `score` first")
        kept = set(selection.apply_band_policy(population, band))
        kept_sets.append(kept)
        ledger.set_members(stage, kept)
        for cid in sorted(population):
            entries.append(verdict_entry(stage, cid, cid in kept))

    inter_stage = "S_I" if policy.name == "full" else "S_prime"
    inter = selection.intersect([sorted(s) for s in kept_sets])
    ledger.set_members(inter_stage, inter)
    scored_ids = sorted(set().union(*(populations[m] for m, _, _ in pre)))
    for cid in scored_ids:
        entries.append(verdict_entry(inter_stage, cid, cid in set(inter)))

    if policy.name == "full":
        clarity_pop = populations.get("clarity", {})
        missing = [cid for cid in inter if cid not in clarity_pop]
        if missing:
            raise ConfigError(
                f"clarity scores missing for {len(missing)} S_I members "
                f"(first: {missing[:3]}); run `score --metric clarity`"
            )
        restricted = {cid: clarity_pop[cid] for cid in inter}
        selected = selection.apply_band_policy(restricted, policy.clarity) if restricted else []
        ledger.set_members("S", selected)
        for cid in sorted(restricted):
            entries.append(verdict_entry("S", cid, cid in set(selected)))

    with ManifestWriter(args.manifest) as writer:
        for entry in entries:
            writer.append(entry)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(ledger.to_json())
    sizes = {label: len(ids) for label, ids in ledger.to_dict().items()}
    print(f"selection complete: {sizes} -> {args.out}")
    return 0


def cmd_cut(args) -> int:
    config = _resolve_config(args)
    manifest = load_manifest(args.manifest)
    ledger = replay_manifest(manifest)
    base = ledger.members("S") or ledger.members("S_prime")
    if not base:
        raise ConfigError("manifest has no S (or S_prime) verdicts; run `select` first")
    out_entries: list[ManifestEntry] = []
    subclip_dir = os.path.join(os.path.dirname(os.path.abspath(args.out)), "subclips")
    for cid in base:
        path = os.path.join(args.corpus, f"{cid}.rfv1")
        record, frames = read_rfv1_file(path, clip_id=cid)
        cuts = detect_cuts(frames, config.cut, clip_id=cid)
        sub_info = []
        if cuts.cuts:
            kept, dropped = split(record, frames, cuts, config.cut.min_scene_len)
            boundaries = [0, *cuts.cuts, record.frame_count]
            kept_ids = {rec.clip_id for rec, _ in kept}
            for k in range(len(boundaries) - 1):
                sub_id = f"{cid}#{k}"
                sub_info.append(
                    {
                        "clip_id": sub_id,
                        "start": boundaries[k],
                        "end": boundaries[k + 1],
                        "kept": sub_id in kept_ids,
                    }
                )
            os.makedirs(subclip_dir, exist_ok=True)
            for rec, buf in kept:
                write_rfv1_file(
                    os.path.join(subclip_dir, f"{rec.clip_id}.rfv1"), buf, rec.fps
                )
                out_entries.append(verdict_entry("S_tilde", rec.clip_id, True))
            for rec in dropped:
                out_entries.append(
                    verdict_entry(
                        "S_tilde", rec.clip_id, False, reason="shorter than min_scene_len"
                    )
                )
        else:
            out_entries.append(verdict_entry("S_tilde", cid, True))
        out_entries.append(
            ManifestEntry(
                stage="S_tilde",
                kind="cut",
                clip_id=cid,
                payload={"cuts": list(cuts.cuts), "sub_clips": sub_info, "rescored": False},
                ts=time.time(),
            )
        )
    with ManifestWriter(args.out) as writer:
        for entry in out_entries:
            writer.append(entry)
    n_cuts = sum(len(e.payload["cuts"]) for e in out_entries if e.kind == "cut")
    print(f"cut extraction over {len(base)} clips: {n_cuts} cuts -> {args.out}")
    return 0


def cmd_caption(args) -> int:
    config = _resolve_config(args)
    if not config.caption.endpoint:
        raise ConfigError("caption endpoint required (--endpoint or config)")
    manifest = load_manifest(args.manifest)
    ledger = replay_manifest(manifest)
    tilde = ledger.members("S_tilde")
    if not tilde:
        raise ConfigError("manifest has no S_tilde verdicts; run `cut` first")
    subclip_dir = os.path.join(
        os.path.dirname(os.path.abspath(args.manifest)), "subclips"
    )
    targets = []
    for cid in tilde:
        if "#" in cid:
            path = os.path.join(subclip_dir, f"{cid}.rfv1")
        else:
            path = os.path.join(args.corpus, f"{cid}.rfv1")
        record = read_rfv1_header(path, clip_id=cid)
        targets.append((record, path))
    successes, failures = caption_mod.caption_clips(targets, config.caption)
    with ManifestWriter(args.out) as writer:
        for record, attempts in successes:
            writer.append(
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
            writer.append(
                ManifestEntry(
                    stage="caption",
                    kind="caption",
                    clip_id=clip_id,
                    payload={"error": error, "attempts": config.caption.max_attempts},
                    ts=time.time(),
                )
            )
    print(f"captioned {len(successes)} clips ({len(failures)} failed) -> {args.out}")
    return 0


def cmd_run(args) -> int:
    config = _resolve_config(args)
    os.makedirs(args.out, exist_ok=True)
    if config.subclip_dir is None:
        config = replace(config, subclip_dir=os.path.join(args.out, "subclips"))
    records = scan_corpus(args.corpus)
    policy = config.make_policy()

    partial_path = os.path.join(args.out, "manifest.partial.jsonl")
    timings: dict = {}
    started = time.monotonic()
    with ManifestWriter(partial_path) as live:
        ledger, manifest = run_pipeline(
            records, policy=policy, config=config, live_writer=live, timings=timings
        )
    finalized = manifest.finalized()
    manifest_path = os.path.join(args.out, "manifest.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        finalized.write(fh)
    os.unlink(partial_path)

    ledger_path = os.path.join(args.out, "ledger.json")
    with open(ledger_path, "w", encoding="utf-8") as fh:
        fh.write(ledger.to_json())

    skip_reasons: dict[str, int] = {}
    for entry in finalized:
        if entry.kind == "verdict" and entry.payload.get("reason"):
            key = entry.payload["reason"].split(":")[0]
            skip_reasons[key] = skip_reasons.get(key, 0) + 1
    summary = {
        "corpus": args.corpus,
        "policy": policy.name,
        "clips": len(records),
        "sets": {label: len(ids) for label, ids in ledger.to_dict().items()},
        "skips": sum(1 for e in finalized
                     if e.kind == "verdict"
                     and str(e.payload.get("reason", "")).startswith("skipped")),
        "drop_reasons": skip_reasons,
        "stage_wall_time_s": {k: round(v, 3) for k, v in timings.items()},
        "total_wall_time_s": round(time.monotonic() - started, 3),
    }
    summary_path = os.path.join(args.out, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary["sets"], sort_keys=True))
    return 0


def cmd_stats(args) -> int:
    paths = [p for p in args.manifests.split(",") if p]
    if len(paths) < 2 and not args.allow_single:
        print(
            "error: stats needs at least two manifests (use --allow-single to override)",
            file=sys.stderr,
        )
        return 2
    manifests = [load_manifest(p) for p in paths]
    names = [os.path.splitext(os.path.basename(p))[0] or f"corpus_{i}"
             for i, p in enumerate(paths)]
    # De-duplicate names from identical file stems.
    seen: dict[str, int] = {}
    unique_names = []
    for name in names:
        if name in seen:
            seen[name] += 1
            unique_names.append(f"{name}_{seen[name]}")
        else:
            seen[name] = 0
            unique_names.append(name)
    if args.allow_single and len(manifests) == 1:
        manifests = manifests * 2
        unique_names = [unique_names[0], f"{unique_names[0]}_copy"]
    report = stats.compare_corpora(manifests, names=unique_names)
    written = stats.write_report(report, args.out)
    print(f"wrote {len(written)} report files to {args.out}")
    return 0


def cmd_synth(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ConfigError("synth spec must be a JSON object of kind -> count")
    paths, labels = synth.generate_corpus(spec, seed=args.seed, out_dir=args.out)
    print(f"generated {len(paths)} clips -> {args.out} (labels: {labels})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidcurate",
        description="Deterministic video-corpus curation engine.",
        epilog=f"The {CONFIG_ENV} environment variable names a default config file; "
        "flags override config, config overrides built-in defaults.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="append score entries for a corpus to a manifest")
    p.add_argument("--metric", choices=METRIC_CHOICES, required=True,
                   help="metric to score (default scorers are the in-process references)")
    p.add_argument("--corpus", required=True, help="directory of .rfv1 clips")
    p.add_argument("--out", required=True, help="manifest file to append to")
    p.add_argument("--sidecar", help="sidecar command for the chosen metric")
    p.add_argument("--workers", type=int, default=None,
                   help="scoring pool size (default 4)")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="apply selection policies to scored clips")
    p.add_argument("--manifest", required=True, help="manifest with score entries")
    p.add_argument("--policy", choices=("full", "lite"), required=True,
                   help="full: aesthetics/temporal/motion/clarity; lite: aesthetics/motion")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="ledger JSON output path")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("cut", help="detect and split multi-scene clips in S")
    p.add_argument("--manifest", required=True, help="manifest with verdict entries")
    p.add_argument("--corpus", required=True, help="directory of .rfv1 clips")
    p.add_argument("--out", required=True, help="manifest file to append cut entries to")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("caption", help="caption clips in S_tilde via an HTTP service")
    p.add_argument("--manifest", required=True, help="manifest with S_tilde verdicts")
    p.add_argument("--corpus", required=True, help="directory of .rfv1 clips")
    p.add_argument("--endpoint", required=True, help="caption service URL")
    p.add_argument("--out", required=True, help="manifest file to append captions to")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("run", help="run the end-to-end curation pipeline")
    p.add_argument("--corpus", required=True, help="directory of .rfv1 clips")
    p.add_argument("--policy", choices=("full", "lite"), default=None,
                   help="pipeline policy (default full)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--workers", type=int, default=None,
                   help="scoring pool size (default 4)")
    p.add_argument("--out", required=True,
                   help="output directory for manifest.jsonl, ledger.json, summary.json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="compare metric distributions across manifests")
    p.add_argument("--manifests", required=True, help="comma-separated manifest paths")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--allow-single", action="store_true",
                   help="permit a single manifest (compared against itself)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--spec", required=True, help="JSON file of kind -> count")
    p.add_argument("--seed", type=int, required=True, help="corpus seed")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VidcurateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
