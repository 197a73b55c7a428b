"""Purely convolutional 1-D network for binary spectrum classification.

Architecture (defaults)::

    [conv(64 filters, width 3, valid) -> softplus -> maxpool(2) -> dropout(0.25)] x 3
    -> flatten -> dense(16) -> softplus -> dense(1) -> sigmoid

Everything is plain numpy.  Activations are kept channels-last, shape
(batch, length, channels), so each convolution is a single matrix product
over an im2col view.  Training minimizes the mean binary cross-entropy with
ADAM on shuffled mini-batches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .spectra import SpectraSet

__all__ = [
    "CNNArch",
    "TrainConfig",
    "CNNModel",
    "CNN",
    "softplus",
    "softplus_grad",
    "maxpool",
    "maxpool_backward",
    "init_model",
    "forward",
    "backward",
    "bce_loss",
    "gradient",
    "input_gradient",
    "train",
]


def softplus(x):
    """log(1 + exp(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_grad(x):
    return expit(x)


def _softplus_and_grad(x):
    e = np.exp(-np.abs(x))
    return np.maximum(x, 0.0) + np.log1p(e), np.where(x >= 0, 1.0, e) / (1.0 + e)


def maxpool(a: np.ndarray, size: int = 2):
    """Non-overlapping max pooling along axis 1; a trailing remainder is dropped.

    Returns the pooled array and the within-window argmax used by
    :func:`maxpool_backward` (first maximum wins on ties).
    """
    B, L, C = a.shape
    Lp = L // size
    win = a[:, : Lp * size, :].reshape(B, Lp, size, C)
    if size == 2:
        # boolean "second element wins" mask in place of an index array
        second = win[:, :, 1, :] > win[:, :, 0, :]
        return np.maximum(win[:, :, 0, :], win[:, :, 1, :]), second
    idx = win.argmax(axis=2)
    out = np.take_along_axis(win, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, idx


def maxpool_backward(grad: np.ndarray, idx: np.ndarray, length: int, size: int = 2):
    B, Lp, C = grad.shape
    out = np.empty((B, length, C), dtype=grad.dtype)
    out[:, Lp * size :, :] = 0
    g = out[:, : Lp * size, :].reshape(B, Lp, size, C)
    if size == 2 and idx.dtype == bool:
        np.multiply(grad, idx, out=g[:, :, 1, :])
        np.subtract(grad, g[:, :, 1, :], out=g[:, :, 0, :])
    else:
        g[...] = 0
        np.put_along_axis(g, idx[:, :, None, :], grad[:, :, None, :], axis=2)
    return out


@dataclass(frozen=True)
class CNNArch:
    n_blocks: int = 3
    filters: int = 64
    kernel: int = 3
    pool: int = 2
    dropout: float = 0.25
    hidden: int = 16

    def __post_init__(self):
        if min(self.n_blocks, self.filters, self.kernel, self.pool, self.hidden) < 1:
            raise ValueError("architecture sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    def min_length(self) -> int:
        """Shortest input that survives every conv + pool block."""
        m = 1
        for _ in range(self.n_blocks):
            m = m * self.pool + self.kernel - 1
        return m

    def feature_length(self, length: int) -> int:
        for _ in range(self.n_blocks):
            length = (length - self.kernel + 1) // self.pool
        return length


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.001
    epochs: int = 100
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    val_fraction: float = 0.1
    patience: int | None = 10
    min_epochs: int = 20
    dtype: str = "float32"
    stratified_batches: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.min_epochs < 0:
            raise ValueError("min_epochs must be non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")


@dataclass
class CNNModel:
    """Trained weights plus the architecture and seed that produced them.

    ``params`` maps layer-tagged names to arrays: ``conv{i}.W`` has shape
    (kernel, in_channels, filters), ``dense.W`` (features, hidden),
    ``out.W`` (hidden,).
    """

    arch: CNNArch
    input_length: int
    params: dict
    seed: object = None
    trace: list = field(default_factory=list)
    kind = "cnn"

    def score(self, s) -> np.ndarray:
        """Output probability o (label 1) for every spectrum, evaluated in batches."""
        X = s.matrix if isinstance(s, SpectraSet) else np.atleast_2d(np.asarray(s, dtype=np.float64))
        out = np.empty(X.shape[0])
        for i in range(0, X.shape[0], 256):
            out[i : i + 256] = forward(self, X[i : i + 256])[0]
        return out

    def predict(self, s) -> np.ndarray:
        return (self.score(s) >= 0.5).astype(np.int64)

    @property
    def dtype(self):
        return self.params["out.b"].dtype

    def copy(self, dtype=None) -> "CNNModel":
        return CNNModel(self.arch, self.input_length,
                        {k: np.array(v, dtype=dtype or v.dtype) for k, v in self.params.items()},
                        self.seed, list(self.trace))

    def to_dict(self) -> dict:
        return {
            "arch": asdict(self.arch),
            "input_length": self.input_length,
            "seed": self.seed if isinstance(self.seed, (int, type(None))) else None,
            "layers": {k: {"shape": list(v.shape), "values": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CNNModel":
        params = {k: np.asarray(v["values"], dtype=np.float64).reshape(v["shape"])
                  for k, v in d["layers"].items()}
        return cls(CNNArch(**d["arch"]), int(d["input_length"]), params, d.get("seed"))

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for row in self.trace:
                w.writerow([row["epoch"], repr(row["train_loss"]),
                            "" if row["val_loss"] is None else repr(row["val_loss"])])


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def init_model(arch: CNNArch, input_length: int, seed=0, zero_output: bool = True) -> CNNModel:
    """Glorot-uniform weights and zero biases.

    With ``zero_output`` (default) the sigmoid read-out weights start at
    zero, so every spectrum initially scores 0.5.  On raw intensities a
    random read-out gives large initial logits, and the first ADAM steps
    then drive all softplus units of the dense layer into saturation.
    """
    if input_length < arch.min_length():
        raise ValueError(
            f"input length {input_length} is too short; this architecture needs at least "
            f"{arch.min_length()} points"
        )
    rng = _rng(seed)
    params = {}
    c_in = 1
    for i in range(arch.n_blocks):
        fan_in, fan_out = arch.kernel * c_in, arch.kernel * arch.filters
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        params[f"conv{i}.W"] = rng.uniform(-lim, lim, (arch.kernel, c_in, arch.filters))
        params[f"conv{i}.b"] = np.zeros(arch.filters)
        c_in = arch.filters
    flat = arch.feature_length(input_length) * arch.filters
    lim = math.sqrt(6.0 / (flat + arch.hidden))
    params["dense.W"] = rng.uniform(-lim, lim, (flat, arch.hidden))
    params["dense.b"] = np.zeros(arch.hidden)
    lim = math.sqrt(6.0 / (arch.hidden + 1))
    params["out.W"] = rng.uniform(-lim, lim, arch.hidden)
    if zero_output:
        params["out.W"][:] = 0.0
    params["out.b"] = np.zeros(1)
    return CNNModel(arch, input_length, params, seed if isinstance(seed, int) else None)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    L_out = x.shape[1] - k + 1
    return np.concatenate([x[:, j : j + L_out, :] for j in range(k)], axis=2)


def forward(model: CNNModel, X, mode: str = "eval", rng=None):
    """Propagate spectra through the network.

    Parameters
    ----------
    model : CNNModel
    X : (p,) or (B, p) array of raw intensities
    mode : {"eval", "train"}
        Dropout masks are drawn (from ``rng``) only in train mode, using
        inverted scaling so that eval mode needs no rescaling.
    rng : numpy Generator or seed, optional

    Returns
    -------
    output : (B,) array of probabilities, or a float for 1-D input
    cache : dict with everything :func:`backward` needs
    """
    if mode not in ("eval", "train"):
        raise ValueError(f"mode must be 'eval' or 'train', got {mode!r}")
    arch, P = model.arch, model.params
    X = np.asarray(X, dtype=model.dtype)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != model.input_length:
        if X2.shape[1] < arch.min_length():
            raise ValueError(
                f"input length {X2.shape[1]} is too short; this architecture needs at least "
                f"{arch.min_length()} points"
            )
        raise ValueError(f"input length {X2.shape[1]} does not match model ({model.input_length})")
    train = mode == "train" and arch.dropout > 0
    if train:
        rng = _rng(rng)
    a = X2[:, :, None]
    blocks = []
    for i in range(arch.n_blocks):
        W = P[f"conv{i}.W"]
        cols = _im2col(a, arch.kernel)
        B, L_out, kc = cols.shape
        z = (cols.reshape(B * L_out, kc) @ W.reshape(kc, -1)).reshape(B, L_out, -1)
        z += P[f"conv{i}.b"]
        # softplus is increasing, so pooling first gives the same result on half the values
        zp, idx = maxpool(z, arch.pool)
        pooled, dact = _softplus_and_grad(zp)
        mask = None
        if train:
            keep = 1.0 - arch.dropout
            mask = (rng.random(pooled.shape, dtype=np.float32) < keep).astype(pooled.dtype) / keep
            pooled = pooled * mask
        blocks.append({"cols": cols, "conv_len": z.shape[1], "idx": idx, "dact": dact,
                       "mask": mask, "in_len": a.shape[1]})
        a = pooled
    flat = a.reshape(a.shape[0], -1)
    h = flat @ P["dense.W"] + P["dense.b"]
    ha, dha = _softplus_and_grad(h)
    logit = ha @ P["out.W"] + P["out.b"][0]
    o = expit(logit)
    cache = {"blocks": blocks, "feat_shape": a.shape, "flat": flat, "dha": dha, "ha": ha,
             "logit": logit, "o": o}
    return (float(o[0]) if single else o), cache


def backward(model: CNNModel, cache: dict, dlogit: np.ndarray, need_input: bool = False):
    """Back-propagate d(objective)/d(logit) to all weights and optionally the input.

    Returns ``(grads, dX)`` with ``grads`` keyed like ``model.params`` and
    ``dX`` of shape (B, p), or None when ``need_input`` is false.
    """
    arch, P = model.arch, model.params
    dlogit = np.asarray(dlogit, dtype=model.dtype).reshape(-1)
    g = {}
    g["out.W"] = cache["ha"].T @ dlogit
    g["out.b"] = np.array([dlogit.sum()], dtype=dlogit.dtype)
    dh = np.outer(dlogit, P["out.W"]) * cache["dha"]
    g["dense.W"] = cache["flat"].T @ dh
    g["dense.b"] = dh.sum(axis=0)
    d = (dh @ P["dense.W"].T).reshape(cache["feat_shape"])
    for i in reversed(range(arch.n_blocks)):
        blk = cache["blocks"][i]
        if blk["mask"] is not None:
            d = d * blk["mask"]
        dz = maxpool_backward(d * blk["dact"], blk["idx"], blk["conv_len"], arch.pool)
        W = P[f"conv{i}.W"]
        k, c_in, f = W.shape
        cols = blk["cols"]
        g[f"conv{i}.W"] = (cols.reshape(-1, k * c_in).T @ dz.reshape(-1, f)).reshape(k, c_in, f)
        g[f"conv{i}.b"] = dz.sum(axis=(0, 1))
        if i == 0 and not need_input:
            d = None
            break
        dcols = (dz.reshape(-1, f) @ W.reshape(k * c_in, f).T).reshape(dz.shape[0], dz.shape[1], -1)
        L_out = blk["conv_len"]
        d = np.zeros((dz.shape[0], blk["in_len"], c_in), dtype=dz.dtype)
        for j in range(k):
            d[:, j : j + L_out, :] += dcols[:, :, j * c_in : (j + 1) * c_in]
    dX = d[:, :, 0] if need_input else None
    return g, dX


def bce_loss(logit, y) -> float:
    """Mean binary cross-entropy computed from logits."""
    logit = np.asarray(logit, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, logit) - y * logit))


def gradient(model: CNNModel, X, y, mode: str = "eval", rng=None):
    """Gradients of the mean BCE loss at targets ``y`` (may be soft, in [0, 1]).

    Returns ``(loss, weight_grads, input_grad)``; the input gradient has the
    shape of ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    _, cache = forward(model, X2, mode, rng)
    dlogit = (cache["o"] - y) / X2.shape[0]
    grads, dX = backward(model, cache, dlogit, need_input=True)
    return bce_loss(cache["logit"], y), grads, (dX[0] if single else dX)


def input_gradient(model: CNNModel, X) -> np.ndarray:
    """d o / d X for each spectrum (eval mode), the raw output-score derivative.

    Evaluated in float64 whatever precision the model was trained in.
    """
    if model.dtype != np.float64:
        model = model.copy(np.float64)
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    out = np.empty_like(X2)
    for i in range(0, X2.shape[0], 256):
        _, cache = forward(model, X2[i : i + 256])
        o = cache["o"]
        _, dX = backward(model, cache, o * (1 - o), need_input=True)
        out[i : i + 256] = dX
    return out[0] if single else out


def _val_split(y: np.ndarray, frac: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Stratified hold-out of roughly ``frac`` of each class."""
    if frac <= 0:
        return np.arange(y.size), np.array([], dtype=np.int64)
    val = []
    for lab in (1, 0):
        idx = rng.permutation(np.flatnonzero(y == lab))
        n_val = int(round(frac * idx.size))
        if 0 < n_val < idx.size:
            val.append(idx[:n_val])
    val = np.sort(np.concatenate(val)) if val else np.array([], dtype=np.int64)
    return np.setdiff1d(np.arange(y.size), val), val


def _epoch_order(y: np.ndarray, rng, stratified: bool) -> np.ndarray:
    """Shuffled visiting order; stratified orders keep class shares even along the epoch.

    Each class is shuffled and its members are placed at evenly spaced,
    randomly offset positions, so any run of consecutive indices (a
    mini-batch) holds the classes in nearly the overall proportion.
    """
    if not stratified:
        return rng.permutation(y.size)
    idx, pos = [], []
    for lab in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == lab))
        idx.append(members)
        pos.append((np.arange(members.size) + rng.random()) / members.size)
    idx, pos = np.concatenate(idx), np.concatenate(pos)
    return idx[np.argsort(pos, kind="stable")]


def train(arch: CNNArch, data: SpectraSet, cfg: TrainConfig = TrainConfig(), seed=None,
          init: CNNModel | None = None) -> CNNModel:
    """Fit the network with mini-batch ADAM on the mean BCE.

    A stratified ``cfg.val_fraction`` of ``data`` is held out for early
    stopping (stop after ``cfg.patience`` epochs without a lower
    validation loss, then restore the best weights).  Stopping is not
    considered before ``cfg.min_epochs``: from the zero read-out the
    validation loss can sit on the ln 2 plateau for a dozen epochs before
    the features separate.  ``seed`` overrides
    ``cfg.seed`` and may be a ``SeedSequence``; initialization, shuffling,
    validation split and dropout use independent child streams.

    Mini-batches are class-stratified by default.  On raw intensities the
    flattened softplus features share a large positive common part, and
    with ADAM's sign-like early steps a batch's class imbalance alone moves
    every dense unit by several units of pre-activation per step.

    Raises
    ------
    ValueError
        If a class is missing or the spectra are too short.
    FloatingPointError
        If the loss becomes non-finite (reports epoch, batch and layer).
    """
    X, y = data.matrix, data.labels.astype(np.float64)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("CNN training needs spectra of both classes")
    root = seed if seed is not None else cfg.seed
    ss = root if isinstance(root, np.random.SeedSequence) else np.random.SeedSequence(root)
    s_init, s_shuffle, s_split, s_drop = (np.random.default_rng(c) for c in ss.spawn(4))
    model = init if init is not None else init_model(arch, X.shape[1], s_init)
    model = model.copy(np.dtype(cfg.dtype))
    model.seed = root if isinstance(root, int) else None
    tr_idx, va_idx = _val_split(data.labels, cfg.val_fraction, s_split)
    Xtr, Xva = X[tr_idx].astype(cfg.dtype), X[va_idx].astype(cfg.dtype)
    ytr, yva = y[tr_idx], y[va_idx]

    names = list(model.params)
    m = {k: np.zeros_like(a) for k, a in model.params.items()}
    v = {k: np.zeros_like(a) for k, a in model.params.items()}
    b1, b2, lr, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.learning_rate, cfg.adam_eps
    t = 0
    best_loss, best_params, since_best = np.inf, None, 0
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = _epoch_order(ytr, s_shuffle, cfg.stratified_batches)
        total = 0.0
        for bi, start in enumerate(range(0, order.size, cfg.batch_size)):
            batch = order[start : start + cfg.batch_size]
            _, cache = forward(model, Xtr[batch], "train", s_drop)
            loss = bce_loss(cache["logit"], ytr[batch])
            if not np.isfinite(loss):
                bad = [k for k in names if not np.all(np.isfinite(model.params[k]))]
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {bi}; "
                    f"layers with non-finite weights: {bad or 'none'}"
                )
            total += loss * batch.size
            grads, _ = backward(model, cache, (cache["o"] - ytr[batch]) / batch.size)
            t += 1
            corr1, corr2 = 1 - b1**t, 1 - b2**t
            for k in names:
                gk = grads[k]
                m[k] = b1 * m[k] + (1 - b1) * gk
                v[k] = b2 * v[k] + (1 - b2) * gk * gk
                model.params[k] = model.params[k] - lr * (m[k] / corr1) / (np.sqrt(v[k] / corr2) + eps)
        row = {"epoch": epoch, "train_loss": total / order.size, "val_loss": None}
        if va_idx.size:
            val_loss = bce_loss(_logits(model, Xva), yva)
            row["val_loss"] = val_loss
            if val_loss < best_loss:
                best_loss, since_best = val_loss, 0
                best_params = {k: a.copy() for k, a in model.params.items()}
            else:
                since_best += 1
        trace.append(row)
        if (va_idx.size and cfg.patience is not None and epoch >= cfg.min_epochs
                and since_best >= cfg.patience):
            break
    if best_params is not None:
        model.params = best_params
    model.trace = trace
    return model


def _logits(model: CNNModel, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    for i in range(0, X.shape[0], 256):
        out[i : i + 256] = forward(model, X[i : i + 256])[1]["logit"]
    return out


@dataclass(frozen=True)
class CNN:
    """Cross-validation adapter: ``fit`` trains a fresh network."""

    arch: CNNArch = CNNArch()
    config: TrainConfig = TrainConfig()
    name = "cnn"

    def fit(self, train_set: SpectraSet, seed=None) -> CNNModel:
        return train(self.arch, train_set, self.config, seed=seed)
