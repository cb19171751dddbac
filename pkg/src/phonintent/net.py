"""The classifier: four dilated conv blocks, masked pooling to 4 steps, linear head.

Forward and backward passes are written out by hand on float64 NumPy arrays.
Conventions used throughout:

* Batches are (B, T, C) with a per-example valid length; frames at or beyond
  the valid length are kept exactly zero after every layer.
* Convolutions use symmetric zero padding, so time length never changes.
  Kernels must be odd.
* Batch-norm statistics in train mode are computed over valid frames of the
  whole batch only; eval mode uses running statistics so one example's output
  never depends on what it is batched with.
* The parameter registry is an ordered mapping with fixed key order:
  conv{l}.weight, conv{l}.bias, bn{l}.gamma, bn{l}.beta, bn{l}.running_mean,
  bn{l}.running_var for l in 1..4, then head.weight, head.bias, then
  optionally embed.weight. Running statistics are state, not trainable.

Checkpoint format (``.picm``): magic ``PICM``; version u32 = 1; the model
configuration as 4 kernel u32s, 4 dilation u32s, then channels, input_dim,
n_classes, pooled_steps as u32 and dropout_rate as f32 (all little-endian);
then every registry entry in order as name length u32, name bytes, rank u32,
one u32 per dimension, and the payload as little-endian float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError, TrainError
from .seeding import NS_DROPOUT, NS_INIT, derive_rng

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
POOLED_STEPS = 4

CHECKPOINT_MAGIC = b"PICM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    kernels: tuple[int, int, int, int]
    dilations: tuple[int, int, int, int]
    channels: int = 128
    dropout_rate: float = 0.3
    input_dim: int = 640
    n_classes: int = 2
    pooled_steps: int = POOLED_STEPS

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if len(self.kernels) != 4 or len(self.dilations) != 4:
            raise ShapeError("exactly 4 kernel sizes and 4 dilation rates are required")
        if any(k < 1 or k % 2 == 0 for k in self.kernels):
            raise ShapeError(f"kernels must be odd and positive, got {self.kernels}")
        if any(d < 1 for d in self.dilations):
            raise ShapeError(f"dilations must be positive, got {self.dilations}")
        if self.channels < 1:
            raise ShapeError("channels must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ShapeError("dropout_rate must lie in [0, 1)")
        if self.input_dim < 1:
            raise ShapeError("input_dim must be positive")
        if self.n_classes < 2:
            raise ShapeError("n_classes must be at least 2")
        if self.pooled_steps != POOLED_STEPS:
            raise ShapeError(f"pooled_steps is fixed at {POOLED_STEPS}")


def receptive_field(kernels, dilations) -> int:
    """Frames of input context feeding one pre-pooling output frame:
    1 + sum((k - 1) * d) for a stride-1 stack."""
    kernels = tuple(kernels)
    dilations = tuple(dilations)
    if len(kernels) != 4 or len(dilations) != 4:
        raise ShapeError("exactly 4 kernel sizes and 4 dilation rates are required")
    return 1 + sum((k - 1) * d for k, d in zip(kernels, dilations))


# ---------------------------------------------------------------------------
# Batches


@dataclass
class BatchTensor:
    """(B, T, C) values plus per-example valid lengths; padded frames are zero."""

    values: np.ndarray
    lengths: np.ndarray

    def check(self) -> None:
        b, t, _ = self.values.shape
        if self.lengths.shape != (b,):
            raise ShapeError("lengths must have one entry per example")
        if self.lengths.min() < 1 or self.lengths.max() > t:
            raise ShapeError("valid lengths must lie in [1, T]")
        if not np.isfinite(self.values).all():
            raise ShapeError("batch contains non-finite values")
        if np.any(self.values * (1.0 - valid_mask(self.lengths, t))):
            raise ShapeError("padded frames must be exactly zero")


@dataclass
class IdBatch:
    """(B, T) integer phone ids (0 = PAD beyond valid length) plus lengths."""

    ids: np.ndarray
    lengths: np.ndarray


def valid_mask(lengths: np.ndarray, t: int) -> np.ndarray:
    """(B, T, 1) float mask, 1 on valid frames."""
    return (np.arange(t)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)[:, :, None]


def collate_features(mats) -> BatchTensor:
    """Stack variable-length (T_i, D) matrices into a zero-padded batch."""
    mats = list(mats)
    lengths = np.array([m.shape[0] for m in mats], dtype=np.int64)
    t = int(lengths.max())
    out = np.zeros((len(mats), t, mats[0].shape[1]))
    for i, m in enumerate(mats):
        out[i, : m.shape[0]] = m
    return BatchTensor(out, lengths)


def collate_ids(seqs) -> IdBatch:
    seqs = list(seqs)
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    t = int(lengths.max())
    out = np.zeros((len(seqs), t), dtype=np.int64)  # PAD id 0
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return IdBatch(out, lengths)


# ---------------------------------------------------------------------------
# Parameter registry


@dataclass
class ModelParams:
    """Ordered name -> float64 array registry (see module docstring for order)."""

    arrays: dict[str, np.ndarray]

    def trainable_names(self) -> list[str]:
        return [n for n in self.arrays if not n.endswith((".running_mean", ".running_var"))]

    def copy(self) -> "ModelParams":
        return ModelParams({n: a.copy() for n, a in self.arrays.items()})


ModelGrads = dict  # name -> gradient array, trainable entries only


def decayed_param(name: str) -> bool:
    """L2 decay applies to conv and head weights only."""
    return name == "head.weight" or (name.startswith("conv") and name.endswith(".weight"))


def init_params(cfg: ModelConfig, seed: int, phone_vocab_size: int | None = None) -> ModelParams:
    """He-normal conv/head weights, zero biases, identity batch norm.

    When phone_vocab_size is given an embedding matrix is added (uniform in
    [-0.1, 0.1], PAD row zero) and cfg.input_dim must equal its width.
    """
    from .frontend import PHONE_EMBED_DIM  # local import to avoid a cycle

    if phone_vocab_size is not None and cfg.input_dim != PHONE_EMBED_DIM:
        raise ShapeError(
            f"learned phone embeddings are {PHONE_EMBED_DIM}-dimensional, "
            f"config has input_dim={cfg.input_dim}"
        )
    rng = derive_rng(seed, NS_INIT)
    arrays: dict[str, np.ndarray] = {}
    c_in = cfg.input_dim
    for layer in range(1, 5):
        k = cfg.kernels[layer - 1]
        std = np.sqrt(2.0 / (c_in * k))
        arrays[f"conv{layer}.weight"] = rng.normal(0.0, std, size=(cfg.channels, c_in, k))
        arrays[f"conv{layer}.bias"] = np.zeros(cfg.channels)
        arrays[f"bn{layer}.gamma"] = np.ones(cfg.channels)
        arrays[f"bn{layer}.beta"] = np.zeros(cfg.channels)
        arrays[f"bn{layer}.running_mean"] = np.zeros(cfg.channels)
        arrays[f"bn{layer}.running_var"] = np.ones(cfg.channels)
        c_in = cfg.channels
    head_in = POOLED_STEPS * cfg.channels
    arrays["head.weight"] = rng.normal(0.0, np.sqrt(2.0 / head_in), size=(cfg.n_classes, head_in))
    arrays["head.bias"] = np.zeros(cfg.n_classes)
    if phone_vocab_size is not None:
        emb = rng.uniform(-0.1, 0.1, size=(phone_vocab_size, PHONE_EMBED_DIM))
        emb[0] = 0.0  # PAD row stays zero forever
        arrays["embed.weight"] = emb
    return ModelParams(arrays)


# ---------------------------------------------------------------------------
# Layers


def _tap_overlap(t: int, off: int) -> tuple[int, int]:
    """[t0, t1) such that both t and t + off lie in [0, T) for t in the range."""
    return max(0, -off), t - max(0, off)


@dataclass
class Conv1dCache:
    x: np.ndarray
    mask: np.ndarray
    w: np.ndarray
    dilation: int


def conv1d_forward(x: BatchTensor, w: np.ndarray, b: np.ndarray | None, dilation: int):
    """Same-length dilated convolution; out-of-range input frames read as zero.

    Pass b=None to skip the bias term, for callers that fold it into a
    following normalization (see model_forward). Implemented as one GEMM over
    all kernel taps followed by shifted in-place accumulation.
    """
    n_b, t, c_in = x.values.shape
    c_out, c_in_w, k = w.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv input has {c_in} channels, weight expects {c_in_w}")
    if k % 2 == 0:
        raise ShapeError("conv kernels must be odd")
    half = (k - 1) // 2
    # taps[b, t, o, j] = sum_c x[b, t, c] w[o, c, j]
    taps = (x.values.reshape(n_b * t, c_in) @ w.transpose(1, 0, 2).reshape(c_in, c_out * k))
    taps = taps.reshape(n_b, t, c_out, k)
    y = np.zeros((n_b, t, c_out))
    for j in range(k):
        off = (j - half) * dilation
        t0, t1 = _tap_overlap(t, off)
        if t1 > t0:
            y[:, t0:t1] += taps[:, t0 + off : t1 + off, :, j]
    if b is not None:
        y += b
    mask = valid_mask(x.lengths, t)
    y *= mask
    return BatchTensor(y, x.lengths), Conv1dCache(x.values, mask, w, dilation)


def conv1d_backward(cache: Conv1dCache, dy: np.ndarray):
    if dy.shape[:2] != cache.x.shape[:2] or dy.shape[2] != cache.w.shape[0]:
        raise ShapeError(f"dy shape {dy.shape} does not match conv forward")
    dy = dy * cache.mask
    n_b, t, c_in = cache.x.shape
    c_out, _, k = cache.w.shape
    half = (k - 1) // 2
    db = dy.sum(axis=(0, 1))
    dw = np.empty_like(cache.w)
    dx = np.zeros_like(cache.x)
    # taps[b, t, c, j] = sum_o dy[b, t, o] w[o, c, j]
    taps = (dy.reshape(n_b * t, c_out) @ cache.w.reshape(c_out, c_in * k)).reshape(
        n_b, t, c_in, k
    )
    for j in range(k):
        off = (j - half) * cache.dilation
        t0, t1 = _tap_overlap(t, off)
        if t1 <= t0:
            dw[:, :, j] = 0.0
            continue
        dw[:, :, j] = np.tensordot(
            dy[:, t0:t1], cache.x[:, t0 + off : t1 + off], axes=((0, 1), (0, 1))
        )
        dx[:, t0 + off : t1 + off] += taps[:, t0:t1, :, j]
    dx *= cache.mask
    return dx, dw, db


@dataclass
class BatchNormCache:
    train: bool
    xhat: np.ndarray
    inv_std: np.ndarray
    mask: np.ndarray
    n_valid: float
    gamma: np.ndarray
    shifted: bool


def batchnorm_forward(
    x: BatchTensor,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str,
    update_running: bool = True,
    shift: np.ndarray | None = None,
):
    """Per-channel normalization over valid frames only.

    Train mode uses batch statistics and updates the running buffers in place;
    eval mode uses the running buffers so examples are batch-independent.

    ``shift`` is an optional per-channel constant added to the input (the
    preceding conv layer's bias). Train-mode statistics subtract any constant
    exactly, so the shift is folded into the recorded batch mean instead of
    being added frame-by-frame; its train-mode gradient is exactly zero. Eval
    mode applies it before normalizing, like a plain addition.
    """
    t = x.values.shape[1]
    mask = valid_mask(x.lengths, t)
    n_valid = float(x.lengths.sum())
    if n_valid == 0:
        raise DataError("batch norm over zero valid frames")
    if mode == "train":
        mean = (x.values * mask).sum(axis=(0, 1)) / n_valid
        centered = (x.values - mean) * mask
        var = (centered**2).sum(axis=(0, 1)) / n_valid
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = centered * inv_std
        if update_running:
            running_mean *= 1.0 - BN_MOMENTUM
            running_mean += BN_MOMENTUM * (mean if shift is None else mean + shift)
            running_var *= 1.0 - BN_MOMENTUM
            running_var += BN_MOMENTUM * var
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var + BN_EPS)
        values = x.values if shift is None else x.values + shift
        xhat = (values - running_mean) * inv_std * mask
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    y = (gamma * xhat + beta) * mask
    cache = BatchNormCache(
        mode == "train", xhat, inv_std, mask, n_valid, gamma, shift is not None
    )
    return BatchTensor(y, x.lengths), cache


def batchnorm_backward(cache: BatchNormCache, dy: np.ndarray):
    dy = dy * cache.mask
    dbeta = dy.sum(axis=(0, 1))
    dgamma = (dy * cache.xhat).sum(axis=(0, 1))
    dxhat = dy * cache.gamma
    if cache.train:
        n = cache.n_valid
        dx = (cache.inv_std / n) * (
            n * dxhat - dxhat.sum(axis=(0, 1)) - cache.xhat * (dxhat * cache.xhat).sum(axis=(0, 1))
        )
        dx *= cache.mask
    else:
        dx = dxhat * cache.inv_std * cache.mask
    return dx, dgamma, dbeta


def batchnorm_shift_grad(cache: BatchNormCache, dy: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the folded-in shift (see batchnorm_forward).

    Exactly zero in train mode because the batch mean absorbs any per-channel
    constant; in eval mode the shift acts as a plain addition before scaling.
    """
    if cache.train:
        return np.zeros_like(cache.gamma)
    dy = dy * cache.mask
    return (dy * cache.gamma * cache.inv_std).sum(axis=(0, 1))


def relu_forward(values: np.ndarray):
    positive = values > 0
    return values * positive, positive


def relu_backward(positive: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is defined as 0
    return dy * positive


def dropout_forward(values: np.ndarray, rate: float, mode: str, rng=None):
    """Inverted dropout: kept entries are scaled by 1/(1-rate); eval is identity."""
    if mode == "eval" or rate == 0.0:
        return values, None
    keep = rng.random(values.shape) >= rate
    return values * keep / (1.0 - rate), keep


def dropout_backward(keep: np.ndarray | None, rate: float, dy: np.ndarray) -> np.ndarray:
    if keep is None:
        return dy
    return dy * keep / (1.0 - rate)


@dataclass
class PoolCache:
    lengths: np.ndarray
    in_shape: tuple


def avgpool4_forward(x: BatchTensor):
    """Mean over 4 contiguous segments of the valid frames.

    Segment s of an example with L valid frames covers [floor(s*L/4),
    floor((s+1)*L/4)); sequences shorter than 4 are first extended by
    repeating their last valid frame.
    """
    b, t, c = x.values.shape
    out = np.zeros((b, POOLED_STEPS, c))
    for i in range(b):
        length = int(x.lengths[i])
        if length >= POOLED_STEPS:
            for s in range(POOLED_STEPS):
                lo = (s * length) // POOLED_STEPS
                hi = ((s + 1) * length) // POOLED_STEPS
                out[i, s] = x.values[i, lo:hi].mean(axis=0)
        else:
            for s in range(POOLED_STEPS):
                out[i, s] = x.values[i, min(s, length - 1)]
    return out, PoolCache(x.lengths, (b, t, c))


def avgpool4_backward(cache: PoolCache, dy: np.ndarray) -> np.ndarray:
    dx = np.zeros(cache.in_shape)
    for i in range(cache.in_shape[0]):
        length = int(cache.lengths[i])
        if length >= POOLED_STEPS:
            for s in range(POOLED_STEPS):
                lo = (s * length) // POOLED_STEPS
                hi = ((s + 1) * length) // POOLED_STEPS
                dx[i, lo:hi] += dy[i, s] / (hi - lo)
        else:
            for s in range(POOLED_STEPS):
                dx[i, min(s, length - 1)] += dy[i, s]
    return dx


def linear_forward(h: np.ndarray, w: np.ndarray, b: np.ndarray):
    if h.shape[1] != w.shape[1]:
        raise ShapeError(f"linear input width {h.shape[1]} != weight width {w.shape[1]}")
    return h @ w.T + b, (h, w)


def linear_backward(cache, dy: np.ndarray):
    h, w = cache
    if dy.shape != (h.shape[0], w.shape[0]):
        raise ShapeError(f"dy shape {dy.shape} does not match linear forward")
    return dy @ w, dy.T @ h, dy.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    if not np.isfinite(logits).all():
        raise TrainError("non-finite logits")
    labels = np.asarray(labels)
    n = logits.shape[1]
    if labels.min() < 0 or labels.max() >= n:
        raise DataError(f"labels must lie in [0, {n})")
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=1, keepdims=True)
    b = logits.shape[0]
    rows = np.arange(b)
    loss = float(-np.log(probs[rows, labels]).mean())
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= b
    return loss, dlogits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    return expz / expz.sum(axis=1, keepdims=True)


def predict(logits: np.ndarray) -> np.ndarray:
    """Per-row argmax; ties resolve to the lowest index."""
    return np.argmax(logits, axis=1)


# ---------------------------------------------------------------------------
# Full model


@dataclass
class _BlockCache:
    conv: Conv1dCache
    bn: BatchNormCache
    relu: np.ndarray
    drop: np.ndarray | None
    mask: np.ndarray


@dataclass
class ForwardCache:
    cfg: ModelConfig
    ids: np.ndarray | None
    embed_rows: int
    blocks: list
    pool: PoolCache
    pool_drop: np.ndarray | None
    linear: tuple
    consumed: bool = field(default=False, compare=False)


def model_forward(batch, params: ModelParams, cfg: ModelConfig, mode: str,
                  dropout_seed: int = 0, step: int = 0):
    """Compose embedding lookup (id batches only), 4 conv blocks, pooling,
    dropout, and the linear head. Returns (logits, cache)."""
    arrays = params.arrays
    ids = None
    if isinstance(batch, IdBatch):
        if "embed.weight" not in arrays:
            raise ShapeError("id batch given but params carry no embedding matrix")
        emb = arrays["embed.weight"]
        ids = batch.ids
        if ids.min() < 0 or ids.max() >= emb.shape[0]:
            raise ShapeError(f"phone id out of range [0, {emb.shape[0]})")
        t = ids.shape[1]
        x = BatchTensor(emb[ids] * valid_mask(batch.lengths, t), batch.lengths)
    else:
        x = batch
    if x.values.shape[2] != cfg.input_dim:
        raise ShapeError(f"batch has {x.values.shape[2]} channels, config expects {cfg.input_dim}")

    blocks = []
    for layer in range(1, 5):
        # The conv bias is handed to batch norm as a per-channel shift rather
        # than added frame-by-frame: train-mode statistics cancel it exactly,
        # so folding keeps that invariance exact in floating point too.
        x, conv_cache = conv1d_forward(
            x, arrays[f"conv{layer}.weight"], None, cfg.dilations[layer - 1]
        )
        x, bn_cache = batchnorm_forward(
            x,
            arrays[f"bn{layer}.gamma"],
            arrays[f"bn{layer}.beta"],
            arrays[f"bn{layer}.running_mean"],
            arrays[f"bn{layer}.running_var"],
            mode,
            shift=arrays[f"conv{layer}.bias"],
        )
        values, relu_mask = relu_forward(x.values)
        rng = derive_rng(dropout_seed, NS_DROPOUT, layer, step) if mode == "train" else None
        values, drop_keep = dropout_forward(values, cfg.dropout_rate, mode, rng)
        mask = valid_mask(x.lengths, values.shape[1])
        values *= mask
        blocks.append(_BlockCache(conv_cache, bn_cache, relu_mask, drop_keep, mask))
        x = BatchTensor(values, x.lengths)

    pooled, pool_cache = avgpool4_forward(x)
    flat = pooled.reshape(pooled.shape[0], -1)
    rng = derive_rng(dropout_seed, NS_DROPOUT, 5, step) if mode == "train" else None
    flat, pool_drop = dropout_forward(flat, cfg.dropout_rate, mode, rng)
    logits, lin_cache = linear_forward(flat, arrays["head.weight"], arrays["head.bias"])
    emb_rows = arrays["embed.weight"].shape[0] if "embed.weight" in arrays else 0
    return logits, ForwardCache(cfg, ids, emb_rows, blocks, pool_cache, pool_drop, lin_cache)


def model_backward(cache: ForwardCache, dlogits: np.ndarray) -> ModelGrads:
    """Gradient registry congruent to the trainable parameters."""
    if cache.consumed:
        raise TrainError("forward cache already consumed by a backward pass")
    cache.consumed = True
    cfg = cache.cfg
    grads: ModelGrads = {}

    dflat, dw_head, db_head = linear_backward(cache.linear, dlogits)
    dflat = dropout_backward(cache.pool_drop, cfg.dropout_rate, dflat)
    dpooled = dflat.reshape(dflat.shape[0], POOLED_STEPS, cfg.channels)
    dx = avgpool4_backward(cache.pool, dpooled)

    for layer in range(4, 0, -1):
        block = cache.blocks[layer - 1]
        dx = dx * block.mask
        dx = dropout_backward(block.drop, cfg.dropout_rate, dx)
        dx = relu_backward(block.relu, dx)
        db = batchnorm_shift_grad(block.bn, dx)  # conv bias rides through BN
        dx, dgamma, dbeta = batchnorm_backward(block.bn, dx)
        dx, dw, _ = conv1d_backward(block.conv, dx)
        grads[f"conv{layer}.weight"] = dw
        grads[f"conv{layer}.bias"] = db
        grads[f"bn{layer}.gamma"] = dgamma
        grads[f"bn{layer}.beta"] = dbeta

    ordered: ModelGrads = {}
    for layer in range(1, 5):
        for part in ("weight", "bias"):
            ordered[f"conv{layer}.{part}"] = grads[f"conv{layer}.{part}"]
        for part in ("gamma", "beta"):
            ordered[f"bn{layer}.{part}"] = grads[f"bn{layer}.{part}"]
    ordered["head.weight"] = dw_head
    ordered["head.bias"] = db_head
    if cache.ids is not None:
        demb = np.zeros((cache.embed_rows, dx.shape[2]))
        np.add.at(demb, cache.ids.ravel(), dx.reshape(-1, dx.shape[2]))
        demb[0] = 0.0  # PAD row is pinned
        ordered["embed.weight"] = demb
    return ordered


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, cfg: ModelConfig, params: ModelParams) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<4I", *cfg.kernels))
        fh.write(struct.pack("<4I", *cfg.dilations))
        fh.write(
            struct.pack(
                "<IIIIf",
                cfg.channels,
                cfg.input_dim,
                cfg.n_classes,
                cfg.pooled_steps,
                cfg.dropout_rate,
            )
        )
        for name, arr in params.arrays.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ShapeError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ShapeError(f"{path}: unsupported checkpoint version {version}")
    kernels = struct.unpack_from("<4I", raw, 8)
    dilations = struct.unpack_from("<4I", raw, 24)
    channels, input_dim, n_classes, pooled, rate = struct.unpack_from("<IIIIf", raw, 40)
    cfg = ModelConfig(
        kernels=kernels,
        dilations=dilations,
        channels=channels,
        dropout_rate=float(rate),
        input_dim=input_dim,
        n_classes=n_classes,
        pooled_steps=pooled,
    )
    offset = 60
    arrays: dict[str, np.ndarray] = {}
    while offset < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        arrays[name] = values.astype(np.float64).reshape(shape)
    if offset != len(raw):
        raise ShapeError(f"{path}: trailing bytes after last registry entry")
    return cfg, ModelParams(arrays)
