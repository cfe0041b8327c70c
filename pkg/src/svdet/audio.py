"""Audio loading, framing, and short-time transforms.

All operations are pure and the containers are frozen; a clip can be
shared freely between threads or worker processes.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import DataError

INT16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise DataError("sample_rate must be positive")
        if samples.ndim != 1:
            raise DataError("AudioClip samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise DataError("AudioClip samples must be finite")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameGrid:
    """Frame layout: frame i covers samples [i*hop, i*hop + frame_len)."""

    frame_len: int
    hop: int
    n_frames: int
    sample_rate: int

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len):
            raise DataError("need 0 < hop <= frame_len")

    def frame_times(self) -> np.ndarray:
        """Center time (seconds) of each frame."""
        starts = np.arange(self.n_frames) * self.hop
        return (starts + self.frame_len / 2.0) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Positive-frequency STFT bins, one row per frame."""

    bins: np.ndarray  # complex, (n_frames, n_fft // 2 + 1)
    grid: FrameGrid
    n_fft: int
    window: str = "hamming"

    def __post_init__(self):
        if self.bins.shape != (self.grid.n_frames, self.n_fft // 2 + 1):
            raise DataError("spectrogram shape inconsistent with grid/n_fft")

    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    def power(self) -> np.ndarray:
        return np.abs(self.bins) ** 2

    def bin_freqs(self) -> np.ndarray:
        return np.fft.rfftfreq(self.n_fft, d=1.0 / self.grid.sample_rate)


def load_wav(path, target_rate: int | None = None) -> AudioClip:
    """Read a RIFF/WAVE file with 16-bit PCM samples.

    Stereo is downmixed by channel mean and samples are scaled by
    1/32768. If target_rate is given and differs from the file rate,
    the signal is resampled by linear interpolation.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise DataError(f"unsupported encoding: {exc}") from exc
    if sampwidth != 2:
        raise DataError(f"unsupported encoding: {8 * sampwidth}-bit PCM (need 16-bit)")
    if n_channels not in (1, 2):
        raise DataError(f"unsupported channel count {n_channels}")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / INT16_SCALE
    if n_channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    if target_rate is not None and target_rate != rate:
        data = _resample_linear(data, rate, target_rate)
        rate = target_rate
    return AudioClip(samples=data, sample_rate=rate, source_id=str(path))


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as mono 16-bit PCM WAV."""
    pcm = np.clip(np.round(clip.samples * INT16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def _resample_linear(x: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    n_out = int(round(len(x) * rate_out / rate_in))
    t_in = np.arange(len(x)) / rate_in
    t_out = np.arange(n_out) / rate_out
    return np.interp(t_out, t_in, x)


def frame_signal(clip: AudioClip, frame_ms: float = 40.0, hop_ms: float = 20.0) -> FrameGrid:
    """Lay out overlapping frames; the trailing remainder is dropped."""
    frame_len = int(round(clip.sample_rate * frame_ms / 1000.0))
    hop = int(round(clip.sample_rate * hop_ms / 1000.0))
    if len(clip.samples) < frame_len:
        raise DataError(
            f"clip of {len(clip.samples)} samples shorter than one frame ({frame_len})"
        )
    n_frames = (len(clip.samples) - frame_len) // hop + 1
    return FrameGrid(frame_len=frame_len, hop=hop, n_frames=n_frames,
                     sample_rate=clip.sample_rate)


def frame_matrix(clip: AudioClip, grid: FrameGrid) -> np.ndarray:
    """Stack the grid's frames into an (n_frames, frame_len) array."""
    idx = np.arange(grid.n_frames)[:, None] * grid.hop + np.arange(grid.frame_len)
    return clip.samples[idx]


def _window(grid: FrameGrid) -> np.ndarray:
    # periodic Hamming: satisfies constant-overlap-add at 50% overlap
    return scipy.signal.get_window("hamming", grid.frame_len, fftbins=True)


def stft(clip: AudioClip, grid: FrameGrid, n_fft: int = 1024) -> Spectrogram:
    """Hamming-windowed FFT per frame, zero-padded to n_fft."""
    if n_fft < grid.frame_len:
        raise DataError(f"n_fft {n_fft} smaller than frame length {grid.frame_len}")
    if n_fft & (n_fft - 1):
        raise DataError(f"n_fft {n_fft} is not a power of two")
    frames = frame_matrix(clip, grid) * _window(grid)
    bins = np.fft.rfft(frames, n=n_fft, axis=1)
    return Spectrogram(bins=bins, grid=grid, n_fft=n_fft)


def istft(spec: Spectrogram) -> AudioClip:
    """Windowed overlap-add inverse, normalized by the summed squared window."""
    grid = spec.grid
    win = _window(grid)
    if not scipy.signal.check_COLA(win, grid.frame_len, grid.frame_len - grid.hop,
                                   tol=1e-6):
        raise DataError(
            f"hop {grid.hop} violates constant overlap-add for the window"
        )
    frames = np.fft.irfft(spec.bins, n=spec.n_fft, axis=1)[:, : grid.frame_len]
    frames *= win
    n_out = (grid.n_frames - 1) * grid.hop + grid.frame_len
    num = np.zeros(n_out)
    den = np.zeros(n_out)
    wsq = win ** 2
    for i in range(grid.n_frames):
        start = i * grid.hop
        num[start : start + grid.frame_len] += frames[i]
        den[start : start + grid.frame_len] += wsq
    out = np.zeros(n_out)
    nz = den > 1e-12
    out[nz] = num[nz] / den[nz]
    return AudioClip(samples=out, sample_rate=grid.sample_rate)
