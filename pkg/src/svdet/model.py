"""Convolutional-LSTM block classifier, trained from scratch with BPTT.

The cell convolves each frame's feature vector with a bank of 1-D
kernels and feeds the flattened map, together with the previous hidden
and cell states, into the four LSTM gates; the output gate sees the
freshly updated cell state. A max-pool + dense + sigmoid head turns the
final hidden state into a per-block voicing posterior.

Everything is float64 numpy; forward/backward are batched over blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DataError, DivergenceError
from .features import FeatureMatrix, blockify, blocks_to_arrays
from .tracks import PredictionTrack

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LrcnConfig:
    input_dim: int
    block_len: int = 29
    n_filters: int = 256
    kernel_width: int = 4
    hidden_size: int = 32
    pool_len: int = 2
    dense_sizes: tuple = (64,)

    def __post_init__(self):
        if self.hidden_size % self.pool_len:
            raise DataError("hidden_size must be divisible by pool_len")
        object.__setattr__(self, "dense_sizes", tuple(self.dense_sizes))

    @property
    def conv_dim(self) -> int:
        return self.n_filters * self.input_dim


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    patience: int = 10

    def __post_init__(self):
        if self.learning_rate < 0:
            raise DataError("learning rate must be >= 0")


def param_shapes(cfg: LrcnConfig):
    """Ordered (name, shape) list; the order defines the flat layout."""
    h, z = cfg.hidden_size, cfg.conv_dim
    shapes = [
        ("conv_k", (cfg.n_filters, cfg.kernel_width)),
        ("conv_b", (cfg.n_filters,)),
    ]
    for g in ("i", "f", "c", "o"):
        shapes.append((f"W{g}_z", (h, z)))
        shapes.append((f"W{g}_h", (h, h)))
        if g != "c":
            shapes.append((f"W{g}_c", (h, h)))
        shapes.append((f"b_{g}", (h,)))
    prev = h // cfg.pool_len
    for li, n in enumerate(cfg.dense_sizes):
        shapes.append((f"dense_W{li}", (n, prev)))
        shapes.append((f"dense_b{li}", (n,)))
        prev = n
    shapes.append(("out_w", (prev,)))
    shapes.append(("out_b", ()))
    return shapes


def init_params(cfg: LrcnConfig, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg):
        if name.startswith("b_") or name.endswith(("_b",)) or name == "out_b" \
                or name.startswith("dense_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[-1] if shape else 1
            s = 1.0 / np.sqrt(max(fan_in, 1))
            params[name] = rng.uniform(-s, s, size=shape)
    params["b_f"] = np.ones(cfg.hidden_size)  # bias toward remembering
    return params


def zero_params(cfg: LrcnConfig) -> dict:
    return {name: np.zeros(shape) for name, shape in param_shapes(cfg)}


def params_to_vector(params: dict, cfg: LrcnConfig) -> np.ndarray:
    return np.concatenate([np.ravel(params[n]) for n, _ in param_shapes(cfg)])


def vector_to_params(vec: np.ndarray, cfg: LrcnConfig) -> dict:
    params, pos = {}, 0
    for name, shape in param_shapes(cfg):
        size = int(np.prod(shape)) if shape else 1
        params[name] = vec[pos : pos + size].reshape(shape).copy()
        pos += size
    if pos != len(vec):
        raise DataError("parameter vector length mismatch")
    return params


# ---------------------------------------------------------------------------
# Forward

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv_features(x: np.ndarray, params: dict, cfg: LrcnConfig):
    """1-D 'same' convolution along the feature axis.

    x is (N, d); returns (z (N, n_filters * d), patches (N, d, kw)).
    """
    kw = cfg.kernel_width
    pad_l = (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (pad_l, kw - 1 - pad_l)))
    patches = np.lib.stride_tricks.sliding_window_view(xp, kw, axis=1)
    z = np.einsum("fk,njk->nfj", params["conv_k"], patches)
    z += params["conv_b"][None, :, None]
    return z.reshape(x.shape[0], cfg.conv_dim), patches


def forward_blocks(x: np.ndarray, params: dict, cfg: LrcnConfig,
                   want_cache: bool = False):
    """Posterior for each block in x (B, T, input_dim)."""
    if x.ndim != 3 or x.shape[1] != cfg.block_len or x.shape[2] != cfg.input_dim:
        raise DataError(f"expected blocks of shape (B, {cfg.block_len}, "
                        f"{cfg.input_dim}), got {x.shape}")
    B, T, d = x.shape
    z_all, patches = conv_features(x.reshape(B * T, d), params, cfg)
    z_all = z_all.reshape(B, T, cfg.conv_dim)
    h = np.zeros((B, cfg.hidden_size))
    c = np.zeros((B, cfg.hidden_size))
    steps = []
    for t in range(T):
        z = z_all[:, t]
        i = _sigmoid(z @ params["Wi_z"].T + h @ params["Wi_h"].T
                     + c @ params["Wi_c"].T + params["b_i"])
        f = _sigmoid(z @ params["Wf_z"].T + h @ params["Wf_h"].T
                     + c @ params["Wf_c"].T + params["b_f"])
        g = np.tanh(z @ params["Wc_z"].T + h @ params["Wc_h"].T + params["b_c"])
        c_new = f * c + i * g
        o = _sigmoid(z @ params["Wo_z"].T + h @ params["Wo_h"].T
                     + c_new @ params["Wo_c"].T + params["b_o"])
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        if want_cache:
            steps.append((z, h, c, i, f, g, o, c_new, tanh_c))
        h, c = h_new, c_new
    # head: max-pool pairs of hidden units, dense tanh stack, sigmoid
    L = cfg.pool_len
    hp = h.reshape(B, cfg.hidden_size // L, L)
    pool_idx = hp.argmax(axis=2)
    u = hp.max(axis=2)
    dense_us = [u]
    for li in range(len(cfg.dense_sizes)):
        u = np.tanh(u @ params[f"dense_W{li}"].T + params[f"dense_b{li}"])
        dense_us.append(u)
    logit = u @ params["out_w"] + params["out_b"]
    p = _sigmoid(logit)
    if not want_cache:
        return p
    cache = {"x": x, "patches": patches, "steps": steps, "h_T": h,
             "pool_idx": pool_idx, "dense_us": dense_us, "p": p}
    return p, cache


def lrcn_cell_step(x_vec: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                   params: dict, cfg: LrcnConfig):
    """Single cell step on one frame vector; returns (h, c, gates dict)."""
    z, _ = conv_features(x_vec[None, :], params, cfg)
    i = _sigmoid(z @ params["Wi_z"].T + h_prev[None] @ params["Wi_h"].T
                 + c_prev[None] @ params["Wi_c"].T + params["b_i"])
    f = _sigmoid(z @ params["Wf_z"].T + h_prev[None] @ params["Wf_h"].T
                 + c_prev[None] @ params["Wf_c"].T + params["b_f"])
    g = np.tanh(z @ params["Wc_z"].T + h_prev[None] @ params["Wc_h"].T
                + params["b_c"])
    c = f * c_prev[None] + i * g
    o = _sigmoid(z @ params["Wo_z"].T + h_prev[None] @ params["Wo_h"].T
                 + c @ params["Wo_c"].T + params["b_o"])
    h = o * np.tanh(c)
    gates = {"i": i[0], "f": f[0], "o": o[0]}
    return h[0], c[0], gates


def lrcn_forward_block(block: np.ndarray, params: dict, cfg: LrcnConfig) -> float:
    """Posterior for a single (block_len, input_dim) block."""
    return float(forward_blocks(block[None], params, cfg)[0])


# ---------------------------------------------------------------------------
# Backward (BPTT)

def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    pc = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(np.mean(-y * np.log(pc) - (1.0 - y) * np.log(1.0 - pc)))


def lrcn_backward(x: np.ndarray, y: np.ndarray, params: dict, cfg: LrcnConfig):
    """Mean BCE loss and gradients for a batch of labelled blocks."""
    if len(x) == 0:
        raise DataError("empty batch")
    y = np.asarray(y, dtype=np.float64)
    p, cache = forward_blocks(x, params, cfg, want_cache=True)
    B, T, d = x.shape
    loss = bce_loss(p, y)
    grads = zero_params(cfg)

    dlogit = (p - y) / B
    u_last = cache["dense_us"][-1]
    grads["out_w"] += dlogit @ u_last
    grads["out_b"] += dlogit.sum()
    du = np.outer(dlogit, params["out_w"])
    for li in reversed(range(len(cfg.dense_sizes))):
        u = cache["dense_us"][li + 1]
        da = du * (1.0 - u ** 2)
        grads[f"dense_W{li}"] += da.T @ cache["dense_us"][li]
        grads[f"dense_b{li}"] += da.sum(axis=0)
        du = da @ params[f"dense_W{li}"]
    # un-pool: route gradient to the max element of each pool group
    L = cfg.pool_len
    dh = np.zeros((B, cfg.hidden_size // L, L))
    np.put_along_axis(dh, cache["pool_idx"][:, :, None], du[:, :, None], axis=2)
    dh = dh.reshape(B, cfg.hidden_size)

    dz_all = np.zeros((B, T, cfg.conv_dim))
    dc_carry = np.zeros((B, cfg.hidden_size))
    for t in reversed(range(T)):
        z, h_prev, c_prev, i, f, g, o, c_new, tanh_c = cache["steps"][t]
        do = dh * tanh_c
        dao = do * o * (1.0 - o)
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_carry + dao @ params["Wo_c"]
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dai = di * i * (1.0 - i)
        daf = df * f * (1.0 - f)
        dag = dg * (1.0 - g ** 2)

        grads["Wi_z"] += dai.T @ z
        grads["Wi_h"] += dai.T @ h_prev
        grads["Wi_c"] += dai.T @ c_prev
        grads["b_i"] += dai.sum(axis=0)
        grads["Wf_z"] += daf.T @ z
        grads["Wf_h"] += daf.T @ h_prev
        grads["Wf_c"] += daf.T @ c_prev
        grads["b_f"] += daf.sum(axis=0)
        grads["Wc_z"] += dag.T @ z
        grads["Wc_h"] += dag.T @ h_prev
        grads["b_c"] += dag.sum(axis=0)
        grads["Wo_z"] += dao.T @ z
        grads["Wo_h"] += dao.T @ h_prev
        grads["Wo_c"] += dao.T @ c_new
        grads["b_o"] += dao.sum(axis=0)

        dz_all[:, t] = (dai @ params["Wi_z"] + daf @ params["Wf_z"]
                        + dag @ params["Wc_z"] + dao @ params["Wo_z"])
        dh = (dai @ params["Wi_h"] + daf @ params["Wf_h"]
              + dag @ params["Wc_h"] + dao @ params["Wo_h"])
        dc_carry = dc * f + dai @ params["Wi_c"] + daf @ params["Wf_c"]

    dzf = dz_all.reshape(B * T, cfg.n_filters, d)
    grads["conv_k"] += np.einsum("nfj,njk->fk", dzf, cache["patches"])
    grads["conv_b"] += dzf.sum(axis=(0, 2))
    return loss, grads


# ---------------------------------------------------------------------------
# Training / prediction

def binary_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    if 2 * tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2 * tp + fp + fn)


def train_lrcn(train_x, train_y, cfg: LrcnConfig, tcfg: TrainConfig,
               valid_x=None, valid_y=None):
    """Mini-batch gradient descent with momentum.

    Returns (best params, history). With a validation set, the params
    with the best validation F1 are kept and early stopping uses the
    configured patience; otherwise the final params are returned.
    """
    if len(train_x) == 0:
        raise DataError("empty training set")
    rng = np.random.default_rng(tcfg.seed)
    params = init_params(cfg, seed=tcfg.seed)
    theta = params_to_vector(params, cfg)
    velocity = np.zeros_like(theta)
    history = []
    best_theta = theta.copy()
    best_score = -np.inf
    stale = 0
    n = len(train_x)
    for epoch in range(tcfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            params = vector_to_params(theta, cfg)
            loss, grads = lrcn_backward(train_x[idx], train_y[idx], params, cfg)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            gvec = params_to_vector(grads, cfg)
            velocity = tcfg.momentum * velocity - tcfg.learning_rate * gvec
            theta = theta + velocity
            epoch_loss += loss
            n_batches += 1
        entry = {"epoch": epoch, "train_loss": epoch_loss / n_batches}
        if valid_x is not None and len(valid_x):
            params = vector_to_params(theta, cfg)
            vp = forward_blocks(valid_x, params, cfg)
            score = binary_f1((vp >= 0.5).astype(int), valid_y.astype(int))
            entry["valid_f1"] = score
            if score > best_score:
                best_score = score
                best_theta = theta.copy()
                stale = 0
            else:
                stale += 1
            if stale > tcfg.patience:
                history.append(entry)
                break
        else:
            best_theta = theta.copy()
        history.append(entry)
    return vector_to_params(best_theta, cfg), history


def predict_track(feat: FeatureMatrix, params: dict, cfg: LrcnConfig,
                  batch_size: int = 512) -> PredictionTrack:
    """One posterior per frame via stride-1 blocks with edge replication."""
    blocks = blockify(feat, block_len=cfg.block_len, pad=True)
    x, _ = blocks_to_arrays(blocks)
    post = np.empty(len(x))
    for start in range(0, len(x), batch_size):
        post[start : start + batch_size] = forward_blocks(
            x[start : start + batch_size], params, cfg)
    return PredictionTrack(posteriors=post, grid=feat.grid)


# ---------------------------------------------------------------------------
# Linear baseline (stand-in for a linear-kernel SVM)

@dataclass
class LinearBaseline:
    w: np.ndarray
    b: float

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(x @ self.w + self.b)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.predict_proba(x) >= 0.5).astype(np.int8)


def train_linear_baseline(x: np.ndarray, y: np.ndarray, learning_rate: float = 0.5,
                          epochs: int = 500) -> LinearBaseline:
    """Full-batch gradient descent on the logistic loss."""
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise DataError("baseline needs both classes in the training data")
    w = np.zeros(x.shape[1])
    b = 0.0
    n = len(x)
    for _ in range(epochs):
        p = _sigmoid(x @ w + b)
        err = (p - y) / n
        w -= learning_rate * (x.T @ err)
        b -= learning_rate * err.sum()
    return LinearBaseline(w=w, b=b)


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path, params: dict, cfg: LrcnConfig) -> None:
    """npz container: format version, config JSON, one array per parameter."""
    meta = {"format_version": CHECKPOINT_VERSION, "config": asdict(cfg)}
    np.savez(path, __meta__=np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **params)


def load_checkpoint(path):
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version "
                            f"{meta['format_version']}")
        c = meta["config"]
        c["dense_sizes"] = tuple(c["dense_sizes"])
        cfg = LrcnConfig(**c)
        params = {n: data[n] for n, _ in param_shapes(cfg)}
    return params, cfg
