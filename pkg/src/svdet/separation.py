"""Repeating-pattern separation of vocal and accompaniment.

The accompaniment is modelled as the element-wise median of the
magnitude spectrogram over repetitions of its repeating period; the
residual (non-repeating) energy is routed to the vocal estimate via a
complementary soft mask applied with the mixture phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, Spectrogram, frame_signal, istft, stft
from .errors import DataError

MASK_EPS = 1e-10

DEFAULT_MIN_PERIOD_S = 0.8
DEFAULT_MAX_PERIOD_S = 8.0


@dataclass(frozen=True)
class BeatSpectrum:
    """Lag-domain self-similarity of a magnitude spectrogram."""

    values: np.ndarray  # (max_lag + 1,), values[0] is the global max

    @property
    def max_lag(self) -> int:
        return len(self.values) - 1


@dataclass(frozen=True)
class SoftMask:
    """Element-wise weights in [0, 1], same shape as the magnitude grid."""

    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if np.any(w < 0.0) or np.any(w > 1.0):
            raise DataError("mask weights must lie in [0, 1]")


def beat_spectrum(mag: np.ndarray, max_lag: int | None = None) -> BeatSpectrum:
    """Normalized per-row autocorrelation over time, averaged across rows.

    mag is (n_frames, n_bins); lags run over the frame axis. Each lag is
    normalized by the energies of the two windows it correlates, which
    keeps every value in [-1, 1] with lag 0 at the global maximum.
    """
    n_frames = mag.shape[0]
    if n_frames < 2:
        raise DataError("beat spectrum needs at least two frames")
    if max_lag is None:
        max_lag = n_frames - 1
    max_lag = min(max_lag, n_frames - 1)
    x = mag.T  # rows = frequency bins
    # FFT-based linear autocorrelation of every row
    n = 1
    while n < 2 * n_frames:
        n *= 2
    spec = np.fft.rfft(x, n=n, axis=1)
    ac = np.fft.irfft(np.abs(spec) ** 2, n=n, axis=1)[:, : max_lag + 1]
    cum = np.cumsum(x ** 2, axis=1)
    total = cum[:, -1:]
    lags = np.arange(max_lag + 1)
    e_head = cum[:, n_frames - 1 - lags]              # energy of x[0 : T-l]
    e_tail = total - np.concatenate(
        [np.zeros((x.shape[0], 1)), cum[:, lags[1:] - 1]], axis=1
    )                                                 # energy of x[l : T]
    norm = np.sqrt(e_head * e_tail)
    ac = ac / np.maximum(norm, 1e-300)
    # per row ac[l] <= ac[0] by Cauchy-Schwarz, so lag 0 stays the maximum
    values = ac.mean(axis=0)
    return BeatSpectrum(values=values)


def estimate_period(bs: BeatSpectrum, search_range: tuple[int, int]) -> int:
    """Lag whose integer multiples carry the most beat-spectrum mass.

    Scores are means over the multiples within [1, max_lag]; ties break
    toward the smaller lag.
    """
    lo, hi = search_range
    lo = max(lo, 1)
    hi = min(hi, bs.max_lag)
    if lo > hi:
        raise DataError(f"empty period search range [{search_range[0]}, "
                        f"{search_range[1]}] for max lag {bs.max_lag}")
    best_lag, best_score = lo, -np.inf
    for p in range(lo, hi + 1):
        mult = bs.values[p :: p]
        score = mult.mean()
        if score > best_score + 1e-12:
            best_lag, best_score = p, score
    return best_lag


def repet_mask(mag: np.ndarray, period: int) -> SoftMask:
    """Accompaniment soft mask from the median repeating model.

    The repeating model U is the per-bin median over all frames at the
    same offset within the period (trailing partial periods use the
    segments available). W = min(U, mag); mask = W / (mag + eps).
    """
    if period < 1:
        raise DataError("period must be >= 1")
    n_frames = mag.shape[0]
    model = np.empty_like(mag)
    for j in range(min(period, n_frames)):
        seg = mag[j::period]
        model[j::period] = np.median(seg, axis=0)
    w = np.minimum(model, mag)
    weights = w / (mag + MASK_EPS)
    return SoftMask(weights=np.clip(weights, 0.0, 1.0))


def vocal_mask(acc_mask: SoftMask) -> SoftMask:
    return SoftMask(weights=1.0 - acc_mask.weights)


def period_search_range(grid, min_s: float = DEFAULT_MIN_PERIOD_S,
                        max_s: float = DEFAULT_MAX_PERIOD_S) -> tuple[int, int]:
    frames_per_s = grid.sample_rate / grid.hop
    return (max(1, int(round(min_s * frames_per_s))),
            int(round(max_s * frames_per_s)))


def separate(clip: AudioClip, frame_ms: float = 40.0, hop_ms: float = 20.0,
             n_fft: int = 1024,
             period_range_s: tuple[float, float] = (DEFAULT_MIN_PERIOD_S,
                                                    DEFAULT_MAX_PERIOD_S)):
    """Split a mixture into (vocal, accompaniment) estimates.

    Masks are applied to the complex STFT with the mixture phase, so the
    two estimates sum to the (re-synthesized) mixture.
    """
    try:
        grid = frame_signal(clip, frame_ms, hop_ms)
    except DataError as exc:
        raise DataError(f"clip too short to separate: {exc}") from exc
    lo, hi = period_search_range(grid, *period_range_s)
    if grid.n_frames < 3 * lo:
        raise DataError(
            f"clip too short: {grid.n_frames} frames < 3 periods of {lo}"
        )
    hi = min(hi, grid.n_frames // 3)
    spec = stft(clip, grid, n_fft)
    mag = spec.magnitude()
    bs = beat_spectrum(mag)
    period = estimate_period(bs, (lo, hi))
    acc = repet_mask(mag, period)
    voc = vocal_mask(acc)
    acc_clip = istft(Spectrogram(bins=spec.bins * acc.weights, grid=grid,
                                 n_fft=n_fft))
    voc_clip = istft(Spectrogram(bins=spec.bins * voc.weights, grid=grid,
                                 n_fft=n_fft))
    n = len(clip.samples)

    def _fit(c):
        samples = c.samples
        if len(samples) < n:
            samples = np.pad(samples, (0, n - len(samples)))
        return AudioClip(samples=samples[:n], sample_rate=clip.sample_rate,
                         source_id=clip.source_id)

    return _fit(voc_clip), _fit(acc_clip)
