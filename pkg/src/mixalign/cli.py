"""Command-line surface: features, align, segment-eval, stats, synth.

Exit codes: 0 success (individual per-item failures are listed but do not
fail the run), 1 usage error, 2 total failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .errors import MixAlignError, SchemaViolation
from .manifest import parse_manifest
from .pipeline import RunConfig
from .stats import StatsReport
from .synthmix import make_corpus, write_corpus

log = logging.getLogger("mixalign")

_FEATURE_CHOICES = {"mfcc": "mfcc", "chroma": "chroma", "chroma+mfcc": "chroma_mfcc"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--feature", choices=sorted(_FEATURE_CHOICES), default="chroma+mfcc")
    p.add_argument("--key-invariant", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--match-threshold", type=float, default=0.4)
    p.add_argument("--run-length", type=int, default=32)
    p.add_argument("--tolerances", type=float, nargs="+", default=[15.0, 30.0, 60.0])
    p.add_argument("--sr", type=int, default=22050)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache-dir", type=Path, default=None)


def _config(args) -> RunConfig:
    return RunConfig(
        feature_mode=_FEATURE_CHOICES[args.feature],
        key_invariant=args.key_invariant,
        match_threshold=args.match_threshold,
        run_length=args.run_length,
        tolerances=tuple(args.tolerances),
        sample_rate=args.sr,
        workers=args.workers,
        cache_dir=str(args.cache_dir) if args.cache_dir else None,
    )


def cmd_features(args) -> int:
    config = _config(args)
    if config.cache_dir is None:
        print("features: --cache-dir is required", file=sys.stderr)
        return 1
    cache = config.make_cache()
    failures = []
    for path in args.paths:
        try:
            pl.compute_features(Path(path), config, cache)
            log.info("features ready for %s", path)
        except (MixAlignError, OSError) as exc:
            failures.append((path, f"{type(exc).__name__}: {exc}"))
            log.warning("failed on %s: %s", path, exc)
    for path, why in failures:
        print(f"FAILED {path}: {why}", file=sys.stderr)
    return 2 if failures and len(failures) == len(args.paths) else 0


def _run_mix(args, config: RunConfig):
    manifest = parse_manifest(args.manifest)
    cache = config.make_cache()
    return pl.align_mix(manifest, config, cache)


def cmd_align(args) -> int:
    config = _config(args)
    run = _run_mix(args, config)
    out = Path(args.out) / run.manifest.mix_id
    out.mkdir(parents=True, exist_ok=True)
    pl.write_alignment_csv(run, out / "alignment.csv")
    pl.write_cues_csv(run, out / "cues.csv")
    pl.write_json(pl.run_details(run), out / "details.json")
    if args.dump_paths:
        for r in run.rows:
            if r.result is not None:
                pl.write_path_csv(r.result, out / f"path_{r.track_id}.csv")
    for r in run.rows:
        if r.status != "ok":
            log.warning("%s/%s: %s %s", r.mix_id, r.track_id, r.status, r.detail)
    return 0


def cmd_segment_eval(args) -> int:
    config = _config(args)
    run = _run_mix(args, config)
    report = pl.segmentation_report(run, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pl.write_json(report.to_json_dict(), out / f"{run.manifest.mix_id}.segmentation.json")
    return 0


def cmd_stats(args) -> int:
    import csv as _csv
    import json

    align_dir = Path(args.align_dir)
    detail_files = sorted(align_dir.glob("*/details.json"))
    if not detail_files:
        log.warning("no alignment outputs under %s", align_dir)
    report = _stats_from_details([json.loads(p.read_text()) for p in detail_files])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pl.write_json(report.to_json_dict(), out / "stats.json")

    def write_hist(name, counts):
        with open(out / name, "w", newline="", encoding="utf-8") as f:
            w = _csv.writer(f, lineterminator="\n")
            w.writerow(("bin", "count"))
            for k in sorted(counts):
                w.writerow((k, counts[k]))

    write_hist("transposition_hist.csv", report.transposition_counts)
    write_hist("transition_length_hist.csv",
               {**report.transition_lengths.negative_bins, **report.transition_lengths.bins})
    agreement = {}
    for d in report.agreement_distances_beats:
        agreement[d] = agreement.get(d, 0) + 1
    write_hist("cue_agreement_hist.csv", agreement)
    return 0


def _stats_from_details(details: list) -> StatsReport:
    """Rebuild corpus statistics from persisted per-mix detail records."""
    from .cue import CuePoints, build_transitions
    from .features import BeatGrid
    from .stats import cue_agreement, transition_length_histogram

    report = StatsReport()
    shift_counts = {}
    cue_sets = {}
    all_transitions = []
    for mix in details:
        cued = []
        for t in mix["tracks"]:
            if not t.get("matched") or "cue_in_sec" not in t:
                continue
            if t.get("tempo_diff_pct") is not None:
                report.tempo_diffs_pct.append(t["tempo_diff_pct"])
            signed = t["transposition_signed"]
            shift_counts[signed] = shift_counts.get(signed, 0) + 1
            cues = CuePoints(
                track_id=t["track_id"],
                cue_in_mix_beat=t["cue_in_mix_beat"],
                cue_out_mix_beat=t["cue_out_mix_beat"],
                cue_in_track_beat=t["cue_in_track_beat"],
                cue_out_track_beat=t["cue_out_track_beat"],
                cue_in_sec=t["cue_in_sec"],
                cue_out_sec=t["cue_out_sec"],
            )
            cued.append(cues)
            cue_sets.setdefault(t["track_id"], []).append(cues)
        cued.sort(key=lambda c: c.cue_in_mix_beat)
        grid = BeatGrid(beat_times=_grid_times(mix), tempo_bpm=mix["mix_tempo_bpm"])
        all_transitions.extend(build_transitions(cued, grid))
    report.transposition_counts = shift_counts
    report.transition_lengths = transition_length_histogram(all_transitions)
    report.agreement_distances_beats = cue_agreement(cue_sets)
    return report


def _grid_times(mix: dict):
    # transitions only need seconds already carried by the cues; synthesize
    # a nominal grid consistent with the stored tempo for the API
    import numpy as np
    n = mix["n_mix_beats"] + 1
    return np.arange(n) * 60.0 / mix["mix_tempo_bpm"]


def cmd_synth(args) -> int:
    corpus = make_corpus(args.n_mixes, args.seed,
                         crossfade_choices=tuple(args.crossfades))
    paths = write_corpus(corpus, args.out, sample_rate=args.sr)
    log.info("wrote %d mixes under %s", len(paths), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixalign",
                     description="Mix-to-track alignment, cue extraction and DJ-mix statistics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="populate the feature cache")
    p.add_argument("paths", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("align", help="align one mix manifest")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--dump-paths", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("segment-eval", help="evaluate segmentation against annotations")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_segment_eval)

    p = sub.add_parser("stats", help="aggregate corpus statistics from align outputs")
    p.add_argument("--align-dir", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth corpus")
    p.add_argument("--n-mixes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--crossfades", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--sr", type=int, default=22050)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MixAlignError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
