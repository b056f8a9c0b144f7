"""Command-line pipeline: synth -> eval-map -> label -> pool -> train ->
predict -> metrics / monitor.

Every stage reads and writes the file formats in :mod:`detmon.io`, is
idempotent given identical inputs, and takes all randomness from --seed.
Exit codes: 0 success, 2 input error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import alert, features, io, labeling, map_eval, metrics, synth
from .errors import (
    ConflictingFlags,
    InputError,
    InvariantViolation,
    MissingActivation,
    MissingFrame,
)
from .model import FeatureVector, FrameRecord
from .metrics import RamConfig, ScoredFrame

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3

ACTIVATION_FEATURES = ("mean", "max", "std", "mean_std", "mean_max", "mean_max_std")
FEATURE_CHOICES = ACTIVATION_FEATURES + ("layer", "detection", "mean_conf_score", "n_proposals")


def _parse_iou_grid(text: str) -> tuple[float, ...]:
    try:
        start, step, stop = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise InputError(f"--iou-grid must be start:step:stop, got {text!r}") from exc
    if step <= 0 or stop < start:
        raise InputError(f"bad --iou-grid {text!r}")
    values = []
    t = start
    while t <= stop + 1e-9:
        values.append(round(t, 10))
        t += step
    return tuple(values)


def _parse_rates(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"--rates must be comma-separated numbers, got {text!r}") from exc


def _map_config(args, frames: list[FrameRecord]) -> map_eval.MapConfig:
    if args.categories:
        categories = frozenset(c.strip() for c in args.categories.split(",") if c.strip())
    else:
        categories = frozenset(c for f in frames for c in f.categories())
        if not categories:
            raise InputError("no ground truth categories found; pass --categories explicitly")
    return map_eval.MapConfig(
        categories=categories,
        iou_thresholds=_parse_iou_grid(args.iou_grid),
        recall_points=args.recall_points,
    )


# --- synth -------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(
        n_frames=args.frames,
        seed=args.seed,
        channels=args.channels,
        map_size=(args.map_height, args.map_width),
        max_gt_per_frame=args.max_gt,
        walk_step=args.walk_step,
        walk_start=args.walk_start,
        q_miss=args.q_miss,
        fp_rate=args.fp_rate,
        loc_noise_gain=args.loc_noise_gain,
    )
    condition = None
    if args.base is not None or args.segment:
        base = args.base if args.base is not None else 0.05
        condition = np.full(cfg.n_frames, float(base))
        for spec_text in args.segment or []:
            try:
                start, end, level = spec_text.split(":")
                start, end, level = int(start), int(end), float(level)
            except ValueError as exc:
                raise InputError(f"--segment must be START:END:LEVEL, got {spec_text!r}") from exc
            if not (0 <= start < end <= cfg.n_frames):
                raise InputError(f"--segment {spec_text!r} outside [0, {cfg.n_frames}]")
            condition[start:end] = level

    frames, activations, condition_values = synth.generate_stream(cfg, condition)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gt_path, det_path = out / "groundtruth.jsonl", out / "detections.jsonl"
    io.write_ground_truth(gt_path, frames)
    io.write_detections(det_path, frames)

    act_dir = out / "activations"
    entries = []
    for index, (frame, amap) in enumerate(zip(frames, activations)):
        actf = act_dir / f"{frame.frame_id}_{amap.layer_name}.actf"
        io.write_actf(actf, amap)
        entries.append(
            io.ManifestEntry(
                frame_id=frame.frame_id,
                detections_ref=det_path,
                groundtruth_ref=gt_path,
                activations={amap.layer_name: actf},
                order=index,
            )
        )
    io.write_manifest(out / "manifest.jsonl", entries)
    io.write_jsonl(
        out / "condition.jsonl",
        (
            {"frame_id": f.frame_id, "condition": c}
            for f, c in zip(frames, condition_values)
        ),
    )
    print(f"synth: wrote {len(frames)} frames to {out}")
    return EXIT_OK


# --- eval-map ----------------------------------------------------------------

def cmd_eval_map(args) -> int:
    universe = None
    if args.manifest:
        universe = [e.frame_id for e in io.read_manifest(args.manifest)]
    frames = io.read_frames(args.gt, args.det, frame_ids=universe)
    cfg = _map_config(args, frames)

    maps = [(f.frame_id, map_eval.per_frame_map(f, cfg)) for f in frames]
    io.write_maps(args.out, maps)
    undefined = sum(1 for _, m in maps if m is None)
    print(f"eval-map: {len(maps)} frames, {undefined} undefined, wrote {args.out}")
    return EXIT_OK


# --- label -------------------------------------------------------------------

def cmd_label(args) -> int:
    if args.percentile is not None and args.critical_lambda is not None:
        raise ConflictingFlags("give either --percentile or --lambda, not both")
    if args.percentile is not None:
        cfg = labeling.LabelingConfig(percentile=args.percentile)
    elif args.critical_lambda is not None:
        cfg = labeling.LabelingConfig(absolute=args.critical_lambda)
    else:
        cfg = labeling.LabelingConfig(percentile=labeling.DEFAULT_PERCENTILE)

    maps = [(fid, m) for fid, m in io.read_maps(args.maps) if m is not None]
    lam, labels = labeling.assign_labels(maps, cfg)
    io.write_labels(args.out, lam, labels)
    failures = sum(1 for l in labels if l.is_failure)
    print(f"label: lambda={lam:.6g}, {failures}/{len(labels)} failure frames, wrote {args.out}")
    return EXIT_OK


# --- pool --------------------------------------------------------------------

def cmd_pool(args) -> int:
    entries = io.read_manifest(args.manifest)
    if not entries:
        raise InputError("manifest is empty")

    out_features: list[FeatureVector] = []
    if args.feature in ACTIVATION_FEATURES or args.feature == "layer":
        for e in entries:
            if not e.activations:
                raise MissingActivation(f"frame {e.frame_id!r} has no activation refs")
            layers = list(e.activations)
            if args.feature == "layer":
                maps = [io.read_actf(e.activations[l], e.frame_id, l) for l in layers]
                out_features.append(features.layer_feature(maps))
            else:
                layer = args.layer or layers[0]
                if layer not in e.activations:
                    raise MissingActivation(f"frame {e.frame_id!r} has no layer {layer!r}")
                amap = io.read_actf(e.activations[layer], e.frame_id, layer)
                out_features.append(features.pooled_feature(amap, args.feature))
    else:
        wanted = {e.frame_id for e in entries}
        grouped = io.read_detections_grouped({e.detections_ref for e in entries}, wanted)
        extractor = {
            "detection": features.detection_feature,
            "mean_conf_score": features.mean_conf_score_feature,
            "n_proposals": features.n_proposals_feature,
        }[args.feature]
        for e in entries:
            frame = FrameRecord(e.frame_id, (), tuple(grouped[e.frame_id]))
            out_features.append(extractor(frame, args.cutoff))

    lengths = {len(f) for f in out_features}
    if len(lengths) != 1:
        raise InvariantViolation(f"inconsistent feature lengths across frames: {sorted(lengths)}")
    io.write_features(args.out, out_features)
    print(f"pool: {len(out_features)} frames x {lengths.pop()} dims ({args.feature}), wrote {args.out}")
    return EXIT_OK


# --- train / predict ----------------------------------------------------------

def _aligned_features(feats: list[FeatureVector], frame_ids: list[str]) -> list[FeatureVector]:
    by_id = {f.frame_id: f for f in feats}
    missing = [fid for fid in frame_ids if fid not in by_id]
    if missing:
        raise MissingFrame(f"no features for frames: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return [by_id[fid] for fid in frame_ids]


def cmd_train(args) -> int:
    feats = io.read_features(args.features)
    _, labels = io.read_labels(args.labels)
    aligned = _aligned_features(feats, [l.frame_id for l in labels])

    hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip()) if args.hidden else ()
    arch = alert.AlertArchitecture(
        input_dim=len(aligned[0]), hidden_dims=hidden, dropout_rate=args.dropout
    )
    cfg = alert.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        balanced_sampling=not args.no_balanced,
    )
    model, history = alert.train(aligned, labels, cfg, arch)
    io.save_model(args.out_model, model)
    if args.history_out:
        io.write_jsonl(args.history_out, ({"epoch": i, "loss": l} for i, l in enumerate(history)))
    print(
        f"train: {len(aligned)} frames, {cfg.epochs} epochs, "
        f"loss {history[0]:.4f} -> {history[-1]:.4f}, wrote {args.out_model}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    model = io.load_model(args.model)
    feats = io.read_features(args.features)
    scores = alert.predict(model, feats)
    io.write_scores(args.out, scores)
    print(f"predict: scored {len(scores)} frames, wrote {args.out}")
    return EXIT_OK


# --- metrics -------------------------------------------------------------------

def cmd_metrics(args) -> int:
    scores = dict(io.read_scores(args.scores))
    lam, labels = io.read_labels(args.labels)
    missing = [l.frame_id for l in labels if l.frame_id not in scores]
    if missing:
        raise MissingFrame(f"no scores for frames: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    frames = [
        ScoredFrame(l.frame_id, scores[l.frame_id], l.label, l.per_frame_map) for l in labels
    ]

    ram_cfg = RamConfig(warning_threshold=args.warning_threshold)
    rates = _parse_rates(args.rates)
    if args.dr_mode == "pooled":
        if not (args.gt and args.det):
            raise InputError("--dr-mode pooled needs --gt and --det")
        records_list = io.read_frames(args.gt, args.det)
        records = {f.frame_id: f for f in records_list}
        cfg = _map_config(args, records_list)
        dr_curve = metrics.map_vs_declaration_rate(frames, rates, "pooled", records, cfg)
    else:
        dr_curve = metrics.map_vs_declaration_rate(frames, rates)

    report = {
        "frames": len(frames),
        "lambda": lam,
        "warning_threshold": args.warning_threshold,
        "auprc": metrics.pr_auc(frames),
        "auroc": metrics.roc_auc(frames),
        "true_warning_rate": metrics.true_warning_rate(frames, ram_cfg),
        "ram_with_alert": metrics.risk_averse_metric(frames, ram_cfg, use_alert=True),
        "ram_without_alert": metrics.risk_averse_metric(frames, ram_cfg, use_alert=False),
        "dr_curve": [[rate, value] for rate, value in dr_curve],
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if args.csv_dir:
        csv_dir = Path(args.csv_dir)
        csv_dir.mkdir(parents=True, exist_ok=True)
        with open(csv_dir / "dr_curve.csv", "w", encoding="utf-8") as fh:
            fh.write("declaration_rate,map\n")
            for rate, value in dr_curve:
                fh.write(f"{rate},{value}\n")
    print(
        f"metrics: auprc={report['auprc']:.4f} auroc={report['auroc']:.4f} "
        f"twr={report['true_warning_rate']:.4f} ram={report['ram_with_alert']:.4f}"
        f"/{report['ram_without_alert']:.4f} (with/without alert), wrote {args.out}"
    )
    return EXIT_OK


# --- monitor --------------------------------------------------------------------

def cmd_monitor(args) -> int:
    entries = io.read_manifest(args.manifest)
    if not entries:
        raise InputError("manifest is empty")
    if any(e.order is None for e in entries):
        raise InputError("monitor mode requires an order index on every manifest entry")
    entries = sorted(entries, key=lambda e: e.order)

    if args.window > len(entries):
        raise InputError(f"--window {args.window} exceeds {len(entries)} frames")

    scores = dict(io.read_scores(args.scores))
    missing = [e.frame_id for e in entries if e.frame_id not in scores]
    if missing:
        raise MissingFrame(f"no scores for frames: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    probs = np.array([scores[e.frame_id] for e in entries])

    window_maps = None
    if all(e.groundtruth_ref is not None for e in entries):
        gt_paths = {e.groundtruth_ref for e in entries}
        det_paths = {e.detections_ref for e in entries}
        if len(gt_paths) != 1 or len(det_paths) != 1:
            raise InputError("monitor expects one shared groundtruth file and one detections file")
        frames = io.read_frames(gt_paths.pop(), det_paths.pop(), frame_ids=[e.frame_id for e in entries])
        cfg = _map_config(args, frames)
        window_maps = dict(
            map_eval.sliding_window_map(frames, args.window, cfg, per_frame_average=args.window_average)
        )

    rows = []
    n_alarms = 0
    for end in range(args.window - 1, len(entries)):
        mean_prob = float(probs[end - args.window + 1 : end + 1].mean())
        alarm = mean_prob >= args.warning_threshold
        row = {
            "end_index": end,
            "end_frame": entries[end].frame_id,
            "mean_failure_prob": mean_prob,
            "alarm": alarm,
        }
        if window_maps is not None:
            row["pooled_map"] = window_maps[end]
        rows.append(row)
        if alarm:
            n_alarms += 1
            print(f"ALARM at frame {entries[end].frame_id}: mean failure prob {mean_prob:.3f}")
    if args.out:
        io.write_jsonl(args.out, rows)
    print(f"monitor: {len(rows)} windows of {args.window}, {n_alarms} alarms")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def _add_map_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iou-grid", default="0.5:0.05:0.95", help="IoU thresholds as start:step:stop")
    p.add_argument("--recall-points", type=int, default=map_eval.DEFAULT_RECALL_POINTS)
    p.add_argument("--categories", default=None, help="comma-separated category set (default: from GT)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detmon",
        description="Ground-truth-free performance monitoring for object detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic degradation stream")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--map-height", type=int, default=12)
    p.add_argument("--map-width", type=int, default=40)
    p.add_argument("--max-gt", type=int, default=6)
    p.add_argument("--walk-step", type=float, default=0.05)
    p.add_argument("--walk-start", type=float, default=0.5)
    p.add_argument("--q-miss", type=float, default=0.8)
    p.add_argument("--fp-rate", type=float, default=2.0)
    p.add_argument("--loc-noise-gain", type=float, default=8.0)
    p.add_argument("--base", type=float, default=None, help="constant condition level instead of a random walk")
    p.add_argument("--segment", action="append", help="force condition to LEVEL on [START, END): START:END:LEVEL")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval-map", help="compute per-frame mAP")
    p.add_argument("--gt", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--manifest", default=None, help="optional frame universe and order")
    _add_map_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_map)

    p = sub.add_parser("label", help="assign failure/success labels from per-frame mAP")
    p.add_argument("--maps", required=True)
    p.add_argument("--percentile", type=float, default=None)
    p.add_argument("--lambda", dest="critical_lambda", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("pool", help="pool features from activations or detections")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature", required=True, choices=FEATURE_CHOICES)
    p.add_argument("--layer", default=None, help="layer for single-layer features (default: first in manifest)")
    p.add_argument("--cutoff", type=float, default=features.DEFAULT_SCORE_CUTOFF)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("train", help="train the alert classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--hidden", default="256,128")
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-balanced", action="store_true", help="disable class-balanced sampling")
    p.add_argument("--history-out", default=None)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score frames with a trained alert")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("metrics", help="evaluate alert quality and risk reduction")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--warning-threshold", type=float, default=metrics.DEFAULT_WARNING_THRESHOLD)
    p.add_argument("--rates", default="0.25,0.5,0.75,1.0")
    p.add_argument("--dr-mode", choices=("mean", "pooled"), default="mean")
    p.add_argument("--gt", default=None)
    p.add_argument("--det", default=None)
    _add_map_flags(p)
    p.add_argument("--csv-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("monitor", help="sliding-window monitoring with alarms")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--warning-threshold", type=float, default=metrics.DEFAULT_WARNING_THRESHOLD)
    p.add_argument("--window-average", action="store_true", help="average per-frame mAP instead of pooling")
    _add_map_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_monitor)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
