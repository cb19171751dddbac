"""Adam with coupled L2 decay, the linear learning-rate schedule, and the
finite-difference gradient checker used to validate every backward rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainError
from .net import ModelParams, decayed_param
from .seeding import NS_GRADCHECK, derive_rng

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainHyper:
    lr0: float = 0.0015
    lr_final: float = 1e-6
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 50

    def __post_init__(self):
        if not self.lr0 > self.lr_final > 0:
            raise TrainError(f"need lr0 > lr_final > 0, got {self.lr0}, {self.lr_final}")
        if self.weight_decay < 0:
            raise TrainError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise TrainError("batch_size and epochs must be >= 1")


def lr_at(step: int, total_steps: int, lr0: float = 0.0015, lr_final: float = 1e-6) -> float:
    """Linear decay from lr0 at step 0 to lr_final at step == total_steps."""
    if total_steps < 1:
        raise TrainError("total_steps must be >= 1")
    if step < 0 or step > total_steps:
        raise TrainError(f"step {step} outside [0, {total_steps}]")
    return lr0 + (lr_final - lr0) * (step / total_steps)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        names = params.trainable_names()
        return cls(
            m={n: np.zeros_like(params.arrays[n]) for n in names},
            v={n: np.zeros_like(params.arrays[n]) for n in names},
        )


def adam_step(
    params: ModelParams,
    grads: dict,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> None:
    """One in-place Adam update.

    L2 decay is coupled (added to the gradient before the moment updates) and
    applies to conv and head weights only; biases, batch-norm parameters and
    the embedding matrix are never decayed. The PAD embedding row is re-pinned
    to zero after the update.
    """
    if lr <= 0:
        raise TrainError(f"learning rate must be positive, got {lr}")
    state.t += 1
    t = state.t
    for name in state.m:
        g = grads[name]
        if not np.isfinite(g).all():
            raise TrainError(f"non-finite gradient for parameter {name!r}")
        w = params.arrays[name]
        if weight_decay != 0.0 and decayed_param(name):
            g = g + weight_decay * w
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        w -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if "embed.weight" in params.arrays:
        params.arrays["embed.weight"][0] = 0.0


def grad_check(
    loss_fn,
    params: ModelParams,
    h: float = 1e-4,
    samples_per_entry: int = 20,
    seed: int = 0,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(params) -> (loss, grads)`` must be deterministic (dropout off or
    frozen, batch-norm in train mode on a fixed batch); this is verified by
    evaluating it twice. For every trainable registry entry at least
    ``samples_per_entry`` coordinates (or all, if fewer) are perturbed by
    +-h and the worst relative error max(|a - n| / max(|a|, |n|, 1e-8)) is
    returned. Batch-norm running buffers are touched by the repeated forward
    passes; they do not affect train-mode losses.
    """
    loss0, grads = loss_fn(params)
    loss1, _ = loss_fn(params)
    if loss0 != loss1:
        raise TrainError("loss closure is not deterministic: two passes disagree")
    rng = derive_rng(seed, NS_GRADCHECK)
    worst = 0.0
    for name in params.trainable_names():
        flat = params.arrays[name].reshape(-1)
        take = min(flat.size, samples_per_entry)
        coords = rng.choice(flat.size, size=take, replace=False)
        for raw in coords:
            i = int(raw)
            orig = flat[i]
            flat[i] = orig + h
            loss_plus = loss_fn(params)[0]
            flat[i] = orig - h
            loss_minus = loss_fn(params)[0]
            flat[i] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            analytic = float(grads[name].reshape(-1)[i])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
