"""Temporal smoothing of frame-wise voicing posteriors.

Two methods: a binary median filter over a fixed odd window, and a
two-state HMM whose per-state observation densities are 1-D Gaussian
mixtures over the classifier posterior, decoded with Viterbi.
State order is fixed: 0 = non-vocal, 1 = vocal (ties fall to 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DataError
from .tracks import LabelTrack, PredictionTrack

DEFAULT_MEDIAN_WINDOW = 87
DEFAULT_N_COMPONENTS = 45
DEFAULT_VAR_FLOOR = 1e-4
WEIGHT_FLOOR = 1e-8
LOG_EPS = 1e-300


@dataclass(frozen=True)
class Gmm1d:
    """One-dimensional Gaussian mixture."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise DataError("mixture weights must sum to 1")
        if np.any(self.variances <= 0.0):
            raise DataError("variances must be positive")

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        comp = (-0.5 * np.log(2.0 * np.pi * self.variances)[None, :]
                - 0.5 * (x[:, None] - self.means[None, :]) ** 2
                / self.variances[None, :])
        return logsumexp(comp, axis=1, b=self.weights[None, :])


@dataclass(frozen=True)
class HmmGmmModel:
    """Two-state HMM with GMM observation densities over the posterior."""

    initial: np.ndarray          # (2,)
    transition: np.ndarray       # (2, 2), rows sum to 1
    observation: tuple           # (Gmm1d non-vocal, Gmm1d vocal)
    degenerate_states: tuple = ()

    def __post_init__(self):
        if np.any(np.abs(self.transition.sum(axis=1) - 1.0) > 1e-9):
            raise DataError("transition rows must sum to 1")


@dataclass
class SmoothingConfig:
    method: str = "median"       # none | median | hmm
    median_window: int = DEFAULT_MEDIAN_WINDOW
    n_components: int = DEFAULT_N_COMPONENTS
    var_floor: float = DEFAULT_VAR_FLOOR
    em_max_iter: int = 200
    em_tol: float = 1e-6

    def __post_init__(self):
        if self.method not in ("none", "median", "hmm"):
            raise DataError(f"unknown smoothing method {self.method!r}")
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise DataError("median window must be odd and >= 1")


def median_filter(track: PredictionTrack, window: int = DEFAULT_MEDIAN_WINDOW) -> LabelTrack:
    """Threshold at 0.5, then sliding binary median with edge replication."""
    if window % 2 == 0 or window < 1:
        raise DataError("median window must be odd and >= 1")
    binary = track.binarize().labels.astype(np.float64)
    half = window // 2
    padded = np.pad(binary, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, window)
    smoothed = (windows.mean(axis=1) > 0.5).astype(np.int8)
    return LabelTrack(labels=smoothed, grid=track.grid)


# ---------------------------------------------------------------------------
# GMM fitting (EM)

def fit_gmm_1d(x: np.ndarray, n_components: int, max_iter: int = 200,
               tol: float = 1e-6, var_floor: float = DEFAULT_VAR_FLOOR):
    """EM fit of a 1-D GMM; means initialized at data quantiles.

    Returns (Gmm1d, log-likelihood history, degenerate flag). The
    variance floor acts as a constrained M-step, so the observed
    log-likelihood stays non-decreasing.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < n_components:
        raise DataError(f"{len(x)} samples < {n_components} components")
    means = np.quantile(x, (np.arange(n_components) + 0.5) / n_components)
    var0 = max(np.var(x), var_floor)
    variances = np.full(n_components, var0)
    weights = np.full(n_components, 1.0 / n_components)
    degenerate = np.var(x) < var_floor
    ll_history = []
    for _ in range(max_iter):
        log_comp = (np.log(np.maximum(weights, LOG_EPS))[None, :]
                    - 0.5 * np.log(2.0 * np.pi * variances)[None, :]
                    - 0.5 * (x[:, None] - means[None, :]) ** 2
                    / variances[None, :])
        log_norm = logsumexp(log_comp, axis=1)
        ll = float(log_norm.sum())
        resp = np.exp(log_comp - log_norm[:, None])
        nk = resp.sum(axis=0)
        alive = nk > 0.0
        weights = nk / len(x)
        means = np.where(alive, resp.T @ x / np.maximum(nk, LOG_EPS), means)
        sq = resp.T @ (x ** 2)
        variances = np.where(
            alive,
            np.maximum(sq / np.maximum(nk, LOG_EPS) - means ** 2, var_floor),
            variances,
        )
        if ll_history and ll - ll_history[-1] < tol * max(1.0, abs(ll)):
            ll_history.append(ll)
            break
        ll_history.append(ll)
    # numerical cleanup after convergence: floor tiny weights, renormalize
    weights = np.maximum(weights, WEIGHT_FLOOR)
    weights = weights / weights.sum()
    return Gmm1d(weights=weights, means=means, variances=variances), \
        ll_history, bool(degenerate)


def fit_hmm_gmm(tracks, labels, n_components: int = DEFAULT_N_COMPONENTS,
                config: SmoothingConfig | None = None) -> HmmGmmModel:
    """Transitions/initials by ML counts; per-state GMMs by EM."""
    cfg = config or SmoothingConfig(method="hmm", n_components=n_components)
    if len(tracks) != len(labels) or not tracks:
        raise DataError("need matching, non-empty track and label lists")
    counts = np.zeros((2, 2))
    init_counts = np.zeros(2)
    obs = [[], []]
    for track, lab in zip(tracks, labels):
        seq = lab.labels.astype(int)
        init_counts[seq[0]] += 1
        for a, b in zip(seq[:-1], seq[1:]):
            counts[a, b] += 1
        for s in (0, 1):
            obs[s].append(track.posteriors[seq == s])
    samples = [np.concatenate(o) if o else np.array([]) for o in obs]
    for s in (0, 1):
        if len(samples[s]) < n_components:
            raise DataError(
                f"state {s} has {len(samples[s])} samples < "
                f"{n_components} mixture components"
            )
    row_sums = counts.sum(axis=1, keepdims=True)
    transition = np.where(row_sums > 0, counts / np.maximum(row_sums, 1.0),
                          0.5)
    initial = (init_counts / init_counts.sum()) if init_counts.sum() else \
        np.array([0.5, 0.5])
    mixtures = []
    degenerate = []
    for s in (0, 1):
        gmm, _, degen = fit_gmm_1d(samples[s], n_components,
                                   max_iter=cfg.em_max_iter, tol=cfg.em_tol,
                                   var_floor=cfg.var_floor)
        mixtures.append(gmm)
        if degen:
            degenerate.append(s)
    return HmmGmmModel(initial=initial, transition=transition,
                       observation=tuple(mixtures),
                       degenerate_states=tuple(degenerate))


def viterbi_decode(model: HmmGmmModel, track: PredictionTrack) -> LabelTrack:
    """Max-probability state path in log space; ties go to non-vocal."""
    x = track.posteriors
    if len(x) == 0:
        raise DataError("empty track")
    loglik = np.stack([model.observation[s].log_pdf(x) for s in (0, 1)],
                      axis=1)  # (T, 2)
    if not np.all(np.isfinite(loglik.max(axis=1))):
        raise DataError("observation has zero likelihood under both states")
    log_init = np.log(np.maximum(model.initial, LOG_EPS))
    log_a = np.log(np.maximum(model.transition, LOG_EPS))
    T = len(x)
    delta = np.empty((T, 2))
    psi = np.zeros((T, 2), dtype=np.int8)
    delta[0] = log_init + loglik[0]
    for t in range(1, T):
        cand = delta[t - 1][:, None] + log_a  # cand[j, s]
        psi[t] = cand.argmax(axis=0)          # argmax prefers state 0 on ties
        delta[t] = cand.max(axis=0) + loglik[t]
    path = np.empty(T, dtype=np.int8)
    path[-1] = int(delta[-1].argmax())
    for t in range(T - 2, -1, -1):
        path[t] = psi[t + 1][path[t + 1]]
    return LabelTrack(labels=path, grid=track.grid)


def smooth(track: PredictionTrack, config: SmoothingConfig,
           model: HmmGmmModel | None = None) -> LabelTrack:
    """Apply the configured smoothing method to a posterior track."""
    if config.method == "none":
        return track.binarize()
    if config.method == "median":
        return median_filter(track, config.median_window)
    if model is None:
        raise DataError("hmm smoothing requires a fitted model")
    return viterbi_decode(model, track)
