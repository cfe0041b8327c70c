"""Command-line entry point.

Subcommands: separate, features, train, predict, evaluate, pipeline.
Configuration comes from PipelineConfig defaults, optionally overridden
by a key=value config file (--config) and repeated --set KEY=VALUE
flags. Every run writes a manifest echoing the resolved config.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric divergence.
Partial artifacts are removed on failure. SVDET_LOG controls verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import evaluation, features, model, pipeline, separation, smoothing
from .audio import frame_signal, load_wav, save_wav, stft
from .errors import DataError, DivergenceError
from .pipeline import PipelineConfig

log = logging.getLogger("svdet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _coerce(value: str, target_type):
    if target_type is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected boolean, got {value!r}")
    if target_type is tuple:
        return tuple(int(v) for v in value.split(",") if v)
    return target_type(value)


def resolve_config(config_path=None, overrides=()) -> PipelineConfig:
    """Defaults <- key=value config file <- --set overrides."""
    values = {}
    field_types = {f.name: f.type for f in fields(PipelineConfig)}
    type_map = {"int": int, "float": float, "bool": bool, "str": str,
                "tuple": tuple}

    def _assign(key, raw, origin):
        if key not in field_types:
            raise UsageError(f"{origin}: unknown config key {key!r}")
        default = getattr(PipelineConfig(), key)
        values[key] = _coerce(raw, type(default))

    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            _assign(key.strip(), raw.strip(), f"{path}:{lineno}")
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, raw = item.partition("=")
        _assign(key.strip(), raw.strip(), "--set")
    return PipelineConfig(**values)


class ArtifactWriter:
    """Tracks written files so a failed run can clean up after itself."""

    def __init__(self):
        self.paths = []

    def register(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(path)
        return path

    def cleanup(self):
        for path in self.paths:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass


def write_manifest(writer, out_dir, command, cfg, inputs):
    payload = {"command": command, "config": asdict(cfg), "inputs": inputs}
    path = writer.register(Path(out_dir) / "manifest.json")
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Commands

def cmd_separate(args, cfg, writer):
    clip = load_wav(args.input, target_rate=cfg.sample_rate)
    vocal, acc = separation.separate(clip, cfg.frame_ms, cfg.hop_ms, cfg.n_fft)
    stem = Path(args.input).stem
    out_dir = Path(args.out_dir)
    save_wav(writer.register(out_dir / f"{stem}_vocal.wav"), vocal)
    save_wav(writer.register(out_dir / f"{stem}_accompaniment.wav"), acc)
    write_manifest(writer, out_dir, "separate", cfg, {"input": str(args.input)})


def cmd_features(args, cfg, writer):
    clip = load_wav(args.input, target_rate=cfg.sample_rate)
    raw = pipeline.clip_features(clip, cfg)
    normalized, _ = features.concat_normalize([raw])
    out = writer.register(args.out)
    features.features_to_csv(out, normalized)
    write_manifest(writer, Path(args.out).parent, "features", cfg,
                   {"input": str(args.input)})


def cmd_train(args, cfg, writer):
    stems, feats, labels = pipeline.load_corpus(args.audio_dir, args.label_dir,
                                                cfg)
    n_val = max(1, len(stems) // 5) if len(stems) > 1 else 0
    valid = stems[-n_val:] if n_val else []
    train = stems[:-n_val] if n_val else stems
    stats = pipeline.fit_norm_stats([feats[s] for s in train])
    x_tr, y_tr = pipeline._training_arrays(train, feats, labels, stats, cfg)
    lrcn_cfg = cfg.lrcn_config(input_dim=x_tr.shape[2])
    if valid:
        x_va, y_va = pipeline._training_arrays(valid, feats, labels, stats, cfg)
    else:
        x_va = y_va = None
    params, history = model.train_lrcn(x_tr, y_tr, lrcn_cfg, cfg.train_config(),
                                       valid_x=x_va, valid_y=y_va)
    out_dir = Path(args.out_dir)
    ckpt = writer.register(out_dir / "checkpoint.npz")
    save_bundle(ckpt, params, lrcn_cfg, stats)
    hist_path = writer.register(out_dir / "history.csv")
    with open(hist_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "valid_f1"])
        w.writeheader()
        for row in history:
            w.writerow({k: row.get(k, "") for k in w.fieldnames})
    write_manifest(writer, out_dir, "train", cfg,
                   {"audio_dir": str(args.audio_dir),
                    "label_dir": str(args.label_dir), "stems": stems})


def save_bundle(path, params, lrcn_cfg, stats):
    """Checkpoint plus the normalization statistics it was trained with."""
    arrays = dict(params)
    arrays["__norm_min__"] = stats.col_min
    arrays["__norm_max__"] = stats.col_max
    meta = {"format_version": model.CHECKPOINT_VERSION,
            "config": asdict(lrcn_cfg)}
    np.savez(path, __meta__=np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_bundle(path):
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["format_version"] != model.CHECKPOINT_VERSION:
            raise DataError("unsupported checkpoint version")
        c = meta["config"]
        c["dense_sizes"] = tuple(c["dense_sizes"])
        lrcn_cfg = model.LrcnConfig(**c)
        params = {n: data[n] for n, _ in model.param_shapes(lrcn_cfg)}
        stats = features.NormStats(col_min=data["__norm_min__"],
                                   col_max=data["__norm_max__"])
    return params, lrcn_cfg, stats


def cmd_predict(args, cfg, writer):
    params, lrcn_cfg, stats = load_bundle(args.checkpoint)
    clip = load_wav(args.input, target_rate=cfg.sample_rate)
    raw = pipeline.clip_features(clip, cfg)
    feat = pipeline.apply_norm(raw, stats)
    track = model.predict_track(feat, params, lrcn_cfg)
    smoothed = smoothing.smooth(track, cfg.smoothing_config())
    out = writer.register(args.out)
    times = feat.grid.frame_times()
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_time", "posterior", "smoothed_label"])
        for t, p, lab in zip(times, track.posteriors, smoothed.labels):
            w.writerow([f"{t:.6f}", f"{p:.9f}", int(lab)])
    if args.label_out:
        evaluation.save_labels(writer.register(args.label_out), smoothed)
    write_manifest(writer, Path(args.out).parent, "predict", cfg,
                   {"input": str(args.input), "checkpoint": str(args.checkpoint)})


def cmd_evaluate(args, cfg, writer):
    pred_segs = evaluation.parse_label_file(args.pred)
    truth_segs = evaluation.parse_label_file(args.truth)
    end = max([s.end for s in pred_segs + truth_segs], default=0.0)
    if end <= 0.0:
        raise DataError("label files contain no segments")
    sr = cfg.sample_rate
    frame_len = int(round(sr * cfg.frame_ms / 1000.0))
    hop = int(round(sr * cfg.hop_ms / 1000.0))
    n_frames = max(1, (int(round(end * sr)) - frame_len) // hop + 1)
    from .audio import FrameGrid
    grid = FrameGrid(frame_len=frame_len, hop=hop, n_frames=n_frames,
                     sample_rate=sr)
    pred = evaluation.load_labels(args.pred, grid)
    truth = evaluation.load_labels(args.truth, grid)
    report = evaluation.metrics(evaluation.confusion_counts(pred, truth))
    out = writer.register(args.out)
    out.write_text(report.to_json() + "\n")
    write_manifest(writer, Path(args.out).parent, "evaluate", cfg,
                   {"pred": str(args.pred), "truth": str(args.truth)})


def cmd_pipeline(args, cfg, writer):
    run = pipeline.run_corpus(args.audio_dir, args.label_dir, cfg)
    out_dir = Path(args.out_dir)
    report_path = writer.register(out_dir / "report.json")
    report_path.write_text(
        json.dumps(pipeline.report_payload(run, cfg), sort_keys=True, indent=2)
        + "\n")
    write_manifest(writer, out_dir, "pipeline", cfg,
                   {"audio_dir": str(args.audio_dir),
                    "label_dir": str(args.label_dir)})
    log.info("pooled F1 %.4f", run.report.f1)


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="svdet", description=__doc__)
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        dest="overrides", help="override a config value")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("separate", help="write vocal/accompaniment WAVs")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("features", help="write a per-frame feature CSV")
    p.add_argument("input")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the classifier on a corpus")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--label-dir", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("predict", help="posterior CSV + smoothed labels")
    p.add_argument("input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label-out")

    p = sub.add_parser("evaluate", help="score a prediction label file")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="k-fold end-to-end run on a corpus")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--label-dir", required=True)
    p.add_argument("--out-dir", required=True)
    return parser


COMMANDS = {
    "separate": cmd_separate,
    "features": cmd_features,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SVDET_LOG", "WARNING").upper())
    writer = ArtifactWriter()
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args.config, args.overrides)
        COMMANDS[args.command](args, cfg, writer)
        return 0
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        writer.cleanup()
        print(f"error: data: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        writer.cleanup()
        print(f"error: divergence: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        writer.cleanup()
        print(f"error: data: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
