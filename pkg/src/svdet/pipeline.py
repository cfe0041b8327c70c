"""End-to-end runs: separation -> features -> classifier -> smoothing -> scores.

The same code path backs the CLI commands and the experiment scripts;
everything is deterministic given the config seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import evaluation, features, model, separation, smoothing
from .audio import AudioClip, frame_signal, load_wav, stft
from .errors import DataError
from .features import FEATURE_SETS, FeatureMatrix, NormStats
from .tracks import LabelTrack, PredictionTrack


@dataclass
class PipelineConfig:
    # signal front end
    sample_rate: int = 16000
    frame_ms: float = 40.0
    hop_ms: float = 20.0
    n_fft: int = 1024
    # stages
    separate: bool = True
    feature_tag: str = "mfcc"
    smoothing_method: str = "median"
    median_window: int = smoothing.DEFAULT_MEDIAN_WINDOW
    hmm_components: int = smoothing.DEFAULT_N_COMPONENTS
    # classifier
    block_len: int = 29
    n_filters: int = 16
    hidden_size: int = 16
    dense_sizes: tuple = (16,)
    train_stride: int = 5
    # training
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    patience: int = 12
    # evaluation
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.feature_tag not in FEATURE_SETS:
            raise DataError(f"unknown feature set {self.feature_tag!r}")
        object.__setattr__(self, "dense_sizes", tuple(self.dense_sizes))

    def lrcn_config(self, input_dim: int) -> model.LrcnConfig:
        return model.LrcnConfig(input_dim=input_dim, block_len=self.block_len,
                                n_filters=self.n_filters,
                                hidden_size=self.hidden_size,
                                dense_sizes=self.dense_sizes)

    def train_config(self) -> model.TrainConfig:
        return model.TrainConfig(learning_rate=self.learning_rate,
                                 momentum=self.momentum, epochs=self.epochs,
                                 batch_size=self.batch_size, seed=self.seed,
                                 patience=self.patience)

    def smoothing_config(self) -> smoothing.SmoothingConfig:
        return smoothing.SmoothingConfig(method=self.smoothing_method,
                                         median_window=self.median_window,
                                         n_components=self.hmm_components)


def clip_features(clip: AudioClip, cfg: PipelineConfig) -> FeatureMatrix:
    """Optionally separate, then extract the configured raw feature set."""
    if cfg.separate:
        clip, _ = separation.separate(clip, cfg.frame_ms, cfg.hop_ms, cfg.n_fft)
    grid = frame_signal(clip, cfg.frame_ms, cfg.hop_ms)
    spec = stft(clip, grid, cfg.n_fft)
    parts = features.extract_features(spec, cfg.feature_tag)
    values = np.concatenate([p.values for p in parts], axis=1)
    return FeatureMatrix(values=values, feature_tag=cfg.feature_tag, grid=grid)


def fit_norm_stats(mats) -> NormStats:
    stacked = np.concatenate([m.values for m in mats], axis=0)
    return NormStats(col_min=stacked.min(axis=0), col_max=stacked.max(axis=0))


def apply_norm(feat: FeatureMatrix, stats: NormStats) -> FeatureMatrix:
    span = stats.col_max - stats.col_min
    scaled = np.zeros_like(feat.values)
    nz = span > 0
    scaled[:, nz] = (feat.values[:, nz] - stats.col_min[nz]) / span[nz]
    return FeatureMatrix(values=scaled, feature_tag=feat.feature_tag,
                         grid=feat.grid)


def _training_arrays(stems, feats, labels, stats, cfg: PipelineConfig):
    xs, ys = [], []
    for stem in stems:
        feat = apply_norm(feats[stem], stats)
        blocks = features.blockify(feat, labels=labels[stem].labels,
                                   block_len=cfg.block_len,
                                   stride=cfg.train_stride)
        x, y = features.blocks_to_arrays(blocks)
        xs.append(x)
        ys.append(y)
    return np.concatenate(xs), np.concatenate(ys)


@dataclass
class CorpusRun:
    """Result of a k-fold run: pooled report plus per-fold detail."""

    report: evaluation.EvalReport
    fold_reports: list
    histories: list


def load_corpus(audio_dir, label_dir, cfg: PipelineConfig):
    """Load every wav with a matching label file; returns (stems, feats, labels)."""
    audio_dir, label_dir = Path(audio_dir), Path(label_dir)
    stems = sorted(p.stem for p in audio_dir.glob("*.wav")
                   if (label_dir / f"{p.stem}.lab").exists())
    if not stems:
        raise DataError(f"no wav/label pairs under {audio_dir}")
    feats, labels = {}, {}
    for stem in stems:
        clip = load_wav(audio_dir / f"{stem}.wav", target_rate=cfg.sample_rate)
        feat = clip_features(clip, cfg)
        feats[stem] = feat
        labels[stem] = evaluation.load_labels(label_dir / f"{stem}.lab",
                                              feat.grid)
    return stems, feats, labels


def run_kfold(stems, feats, labels, cfg: PipelineConfig) -> CorpusRun:
    """K-fold train/test over whole files; pooled micro-average report."""
    folds = evaluation.kfold_split(stems, k=cfg.folds, seed=cfg.seed)
    per_file_counts = {}
    fold_reports = []
    histories = []
    for fi, test_stems in enumerate(folds):
        train_stems = [s for s in stems if s not in test_stems]
        n_val = max(1, len(train_stems) // 5)
        valid_stems = train_stems[-n_val:]
        fit_stems = train_stems[:-n_val] or train_stems
        stats = fit_norm_stats([feats[s] for s in fit_stems])
        x_tr, y_tr = _training_arrays(fit_stems, feats, labels, stats, cfg)
        x_va, y_va = _training_arrays(valid_stems, feats, labels, stats, cfg)
        lrcn_cfg = cfg.lrcn_config(input_dim=x_tr.shape[2])
        params, history = model.train_lrcn(x_tr, y_tr, lrcn_cfg,
                                           cfg.train_config(),
                                           valid_x=x_va, valid_y=y_va)
        histories.append(history)
        fold_counts = {}
        scfg = cfg.smoothing_config()
        hmm = None
        if scfg.method == "hmm":
            tr_tracks = [model.predict_track(apply_norm(feats[s], stats),
                                             params, lrcn_cfg)
                         for s in train_stems]
            hmm = smoothing.fit_hmm_gmm(tr_tracks,
                                        [labels[s] for s in train_stems],
                                        n_components=scfg.n_components,
                                        config=scfg)
        for stem in test_stems:
            track = model.predict_track(apply_norm(feats[stem], stats),
                                        params, lrcn_cfg)
            pred = smoothing.smooth(track, scfg, model=hmm)
            counts = evaluation.confusion_counts(pred, labels[stem])
            per_file_counts[stem] = counts
            fold_counts[stem] = counts
        fold_reports.append(evaluation.pooled_report(fold_counts))
    return CorpusRun(report=evaluation.pooled_report(per_file_counts),
                     fold_reports=fold_reports, histories=histories)


def run_corpus(audio_dir, label_dir, cfg: PipelineConfig) -> CorpusRun:
    stems, feats, labels = load_corpus(audio_dir, label_dir, cfg)
    return run_kfold(stems, feats, labels, cfg)


def report_payload(run: CorpusRun, cfg: PipelineConfig) -> dict:
    """JSON-serializable summary; stable key order for reproducible bytes."""
    return {
        "config": asdict(cfg),
        "pooled": json.loads(run.report.to_json()),
        "folds": [json.loads(r.to_json()) for r in run.fold_reports],
    }
