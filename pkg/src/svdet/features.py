"""Per-frame acoustic features: MFCC, LPCC, PLP, and block packing.

All extractors return a FeatureMatrix aligned to the spectrogram's
frame grid. Combinations and min-max normalization follow the feature
set tags in FEATURE_SETS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .audio import FrameGrid, Spectrogram
from .errors import DataError

LOG_FLOOR = 1e-10

# tag -> ordered list of base extractors
FEATURE_SETS = {
    "mfcc": ("mfcc",),
    "lpcc": ("lpcc",),
    "plp": ("plp",),
    "mfcc_plp": ("mfcc", "plp"),
    "lpcc_plp": ("lpcc", "plp"),
    "lpcc_mfcc": ("lpcc", "mfcc"),
    "lpcc_mfcc_plp": ("lpcc", "mfcc", "plp"),
}


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-frame feature vectors, one row per frame."""

    values: np.ndarray  # (n_frames, dim)
    feature_tag: str
    grid: FrameGrid
    degenerate_frames: tuple = ()  # frames zeroed for singular autocorrelation

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError("feature values must be a 2-D matrix")
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature values must be finite")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NormStats:
    """Per-column min/max learned on training data."""

    col_min: np.ndarray
    col_max: np.ndarray

    def __post_init__(self):
        if np.any(self.col_min > self.col_max):
            raise DataError("NormStats requires min <= max per column")


@dataclass(frozen=True)
class FrameBlock:
    """Fixed-length window of frames; one classifier input."""

    block: np.ndarray  # (block_len, dim)
    center_frame_index: int
    label: int | None = None


# ---------------------------------------------------------------------------
# MFCC

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters over the rfft bins, 0 Hz to Nyquist."""
    nyq = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(nyq), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (freqs - lo) / (ctr - lo)
        down = (hi - freqs) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def cepstra_from_log_energies(log_e: np.ndarray, n_coeffs: int) -> np.ndarray:
    """DCT-II decorrelation, dropping the 0-th (energy) coefficient."""
    cep = dct(log_e, type=2, norm="ortho", axis=1)
    return cep[:, 1 : n_coeffs + 1]


def mfcc(spec: Spectrogram, n_coeffs: int = 13, n_mels: int = 26) -> FeatureMatrix:
    """Mel filterbank energies -> log -> DCT-II, keeping coefficients 1..n_coeffs.

    The 0-th (energy) coefficient is dropped.
    """
    if spec.grid.n_frames == 0:
        raise DataError("empty spectrogram")
    if n_mels < n_coeffs + 1:
        raise DataError("n_mels must exceed n_coeffs")
    fb = mel_filterbank(n_mels, spec.n_fft, spec.grid.sample_rate)
    energies = spec.power() @ fb.T
    log_e = np.log(np.maximum(energies, LOG_FLOOR))
    return FeatureMatrix(values=cepstra_from_log_energies(log_e, n_coeffs),
                         feature_tag="mfcc", grid=spec.grid)


# ---------------------------------------------------------------------------
# LPC / LPCC

def levinson_durbin(r: np.ndarray, order: int):
    """Solve the Toeplitz normal equations for LPC coefficients.

    Returns (a, err, ok) with predictor x[n] ~ sum_k a[k-1] x[n-k].
    A degenerate (all-zero) autocorrelation yields zeros with ok=False.
    """
    r = np.asarray(r, dtype=np.float64)
    if len(r) < order + 1:
        raise DataError("autocorrelation too short for requested order")
    if r[0] <= 0.0:
        return np.zeros(order), 0.0, False
    a = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[: i - 1], r[i - 1 : 0 : -1])
        if err <= 0.0:
            return np.zeros(order), 0.0, False
        k = acc / err
        a_new = a.copy()
        a_new[i - 1] = k
        a_new[: i - 1] = a[: i - 1] - k * a[i - 2 :: -1][: i - 1]
        a = a_new
        err *= 1.0 - k * k
    return a, err, True


def lpc_to_cepstrum(a: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Cepstral recursion c_n = a_n + sum_{k<n} (k/n) c_k a_{n-k}."""
    order = len(a)
    c = np.zeros(n_coeffs)
    for n in range(1, n_coeffs + 1):
        val = a[n - 1] if n <= order else 0.0
        for k in range(1, n):
            if n - k <= order:
                val += (k / n) * c[k - 1] * a[n - k - 1]
        c[n - 1] = val
    return c


def autocorr_from_spectrogram(spec: Spectrogram, max_lag: int) -> np.ndarray:
    """Autocorrelation of each windowed frame via its power spectrum."""
    full_power = np.concatenate(
        [spec.power(), spec.power()[:, -2:0:-1]], axis=1
    )
    r = np.fft.ifft(full_power, axis=1).real
    return r[:, : max_lag + 1]


def lpcc(source, order: int = 12, n_coeffs: int = 13) -> FeatureMatrix:
    """Linear-prediction cepstra per frame.

    Accepts a Spectrogram (autocorrelation from the power spectrum) or a
    (frames, grid) pair of time-domain frames. All-zero frames produce
    all-zero coefficients rather than an error.
    """
    if isinstance(source, Spectrogram):
        grid = source.grid
        r = autocorr_from_spectrogram(source, order)
    else:
        frames, grid = source
        if frames.shape[1] <= order:
            raise DataError("frame length must exceed LPC order")
        r = np.stack([
            np.correlate(f, f, mode="full")[len(f) - 1 : len(f) + order]
            for f in frames
        ])
    out = np.zeros((r.shape[0], n_coeffs))
    degenerate = []
    for t in range(r.shape[0]):
        a, _, ok = levinson_durbin(r[t], order)
        if ok:
            out[t] = lpc_to_cepstrum(a, n_coeffs)
        else:
            degenerate.append(t)
    return FeatureMatrix(values=out, feature_tag="lpcc", grid=grid,
                         degenerate_frames=tuple(degenerate))


# ---------------------------------------------------------------------------
# PLP

def hz_to_bark(f):
    f = np.asarray(f, dtype=np.float64)
    return 6.0 * np.arcsinh(f / 600.0)


def bark_to_hz(z):
    return 600.0 * np.sinh(np.asarray(z, dtype=np.float64) / 6.0)


def bark_filterbank(n_fft: int, sample_rate: int):
    """Critical-band masking curves at ~1 Bark spacing.

    Returns (weights (n_bands, n_bins), center frequencies in Hz).
    """
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    z = hz_to_bark(freqs)
    z_max = hz_to_bark(sample_rate / 2.0)
    n_bands = int(np.ceil(z_max)) + 1
    centers_z = np.linspace(0.0, z_max, n_bands)
    # flat top one Bark wide, 25 dB/Bark lower skirt, 10 dB/Bark upper skirt
    d = z[None, :] - centers_z[:, None]
    lo = -2.5 * (d - 0.5)
    hi = d + 0.5
    w = 10.0 ** np.minimum(0.0, np.minimum(hi, lo))
    return w, bark_to_hz(centers_z)


def equal_loudness(f):
    """Hermansky's equal-loudness curve approximation."""
    f = np.asarray(f, dtype=np.float64)
    fsq = f ** 2
    return (fsq / (fsq + 1.6e5)) ** 2 * ((fsq + 1.44e6) / (fsq + 9.61e6))


def plp(spec: Spectrogram, order: int = 12, n_coeffs: int = 13) -> FeatureMatrix:
    """Perceptual linear prediction cepstra per frame.

    Bark-band integration -> equal-loudness weighting -> cube-root
    compression -> inverse DFT to autocorrelation -> LPC -> cepstra.
    """
    if spec.grid.n_frames == 0:
        raise DataError("empty spectrogram")
    fb, centers_hz = bark_filterbank(spec.n_fft, spec.grid.sample_rate)
    bands = np.maximum(spec.power() @ fb.T, LOG_FLOOR)
    bands = bands * equal_loudness(centers_hz)
    bands = bands ** (1.0 / 3.0)
    # duplicate edge bands to flatten the spectrum ends before the IDFT
    bands[:, 0] = bands[:, 1]
    bands[:, -1] = bands[:, -2]
    full = np.concatenate([bands, bands[:, -2:0:-1]], axis=1)
    r = np.fft.ifft(full, axis=1).real[:, : order + 1]
    out = np.zeros((spec.grid.n_frames, n_coeffs))
    degenerate = []
    for t in range(r.shape[0]):
        a, _, ok = levinson_durbin(r[t], order)
        if ok:
            out[t] = lpc_to_cepstrum(a, n_coeffs)
        else:
            degenerate.append(t)
    return FeatureMatrix(values=out, feature_tag="plp", grid=spec.grid,
                         degenerate_frames=tuple(degenerate))


# ---------------------------------------------------------------------------
# Combination, normalization, blocking

def extract_features(spec: Spectrogram, tag: str) -> list[FeatureMatrix]:
    """Base feature matrices for a feature set tag, in tag order."""
    if tag not in FEATURE_SETS:
        raise DataError(f"unknown feature set {tag!r}")
    extractors = {"mfcc": mfcc, "lpcc": lpcc, "plp": plp}
    return [extractors[name](spec) for name in FEATURE_SETS[tag]]


def concat_normalize(parts, stats: NormStats | None = None):
    """Concatenate feature matrices column-wise and min-max scale to [0,1].

    With stats=None the scaling statistics are fit on the input (train
    time) and returned; otherwise the given stats are applied (test
    time; values may leave [0,1] and are not clipped). Constant columns
    map to 0.
    """
    if not parts:
        raise DataError("no feature matrices to combine")
    n_frames = parts[0].n_frames
    for p in parts[1:]:
        if p.n_frames != n_frames:
            raise DataError("frame-count mismatch between feature matrices")
    values = np.concatenate([p.values for p in parts], axis=1)
    tag = "_".join(p.feature_tag for p in parts)
    if stats is None:
        stats = NormStats(col_min=values.min(axis=0), col_max=values.max(axis=0))
    span = stats.col_max - stats.col_min
    scaled = np.zeros_like(values)
    nz = span > 0
    scaled[:, nz] = (values[:, nz] - stats.col_min[nz]) / span[nz]
    return FeatureMatrix(values=scaled, feature_tag=tag, grid=parts[0].grid), stats


def blockify(feat: FeatureMatrix, labels=None, block_len: int = 29,
             stride: int = 5, pad: bool = False) -> list[FrameBlock]:
    """Cut the feature matrix into fixed-length blocks.

    Training mode (pad=False): non-padded sliding windows at the given
    stride; a block's label is the ground-truth label of its center
    frame. Inference mode (pad=True): stride is forced to 1 and the
    matrix is edge-replicated so every frame is the center of exactly
    one block.
    """
    if feat.n_frames == 0:
        raise DataError("empty feature matrix")
    half = block_len // 2
    if pad:
        values = np.concatenate([
            np.repeat(feat.values[:1], half, axis=0),
            feat.values,
            np.repeat(feat.values[-1:], block_len - 1 - half, axis=0),
        ])
        starts = range(feat.n_frames)
        offset = 0
    else:
        if feat.n_frames < block_len:
            raise DataError("fewer frames than one block")
        starts = range(0, feat.n_frames - block_len + 1, stride)
        values = feat.values
        offset = half
    blocks = []
    for s in starts:
        center = s + offset
        label = None
        if labels is not None:
            label = int(labels[center])
        blocks.append(FrameBlock(block=values[s : s + block_len],
                                 center_frame_index=center, label=label))
    return blocks


def blocks_to_arrays(blocks):
    """Stack blocks into (B, T, dim) features and (B,) labels (or None)."""
    x = np.stack([b.block for b in blocks])
    if all(b.label is not None for b in blocks):
        y = np.array([b.label for b in blocks], dtype=np.float64)
    else:
        y = None
    return x, y


def features_to_csv(path, feat: FeatureMatrix) -> None:
    """One frame per row; header carries the feature tag."""
    header = ",".join(f"{feat.feature_tag}_{i}" for i in range(feat.dim))
    np.savetxt(path, feat.values, delimiter=",", header=header, comments="")
