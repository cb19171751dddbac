"""Training loop: epoch shuffling, Adam with the linear schedule, dev-based
checkpoint selection, accuracy evaluation, and multi-seed averaging.

Every reported number is a deterministic function of (dataset bytes, config,
hyperparameters, seed).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Dataset, LabelVocab, Utterance, build_label_vocab, random_feature_table
from .errors import ShapeError, TrainError
from .frontend import FittedFrontend, FrontEndKind, FrontendSpec, fit_frontend
from .net import (
    ModelConfig,
    ModelParams,
    collate_features,
    collate_ids,
    init_params,
    model_backward,
    model_forward,
    predict,
    softmax_cross_entropy,
)
from .optim import AdamState, TrainHyper, adam_step, grad_check, lr_at
from .seeding import NS_SHUFFLE, derive_rng

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class RunRecord:
    """Everything one (config, seed) run reports."""

    seed: int
    train_loss: list[float]
    train_acc: list[float]
    final_dev_acc: float | None = None
    best_dev_acc: float | None = None
    best_epoch: int | None = None
    eval_acc: float | None = None
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainedModel:
    params: ModelParams
    cfg: ModelConfig
    frontend: FittedFrontend
    labels: LabelVocab


@dataclass
class Setup:
    """One train/evaluate job, shared by the multi-seed protocol."""

    train: Dataset
    evalset: Dataset
    frontend: FrontendSpec
    cfg: ModelConfig
    hyper: TrainHyper
    dev: Dataset | None = None
    labels: LabelVocab | None = None


def collate(kind: FrontEndKind, encoded):
    if kind is FrontEndKind.PHONE:
        return collate_ids(encoded)
    return collate_features(encoded)


def train(
    train_ds: Dataset,
    dev_ds: Dataset | None,
    spec: FrontendSpec,
    cfg: ModelConfig,
    hyper: TrainHyper,
    seed: int,
    labels: LabelVocab | None = None,
) -> tuple[TrainedModel, RunRecord]:
    """Train one model. With a dev split, the parameters with the best dev
    accuracy are returned (ties keep the earlier epoch); otherwise the final
    parameters are."""
    t_start = time.perf_counter()
    if labels is None:
        labels = build_label_vocab(train_ds)
    if dev_ds is not None:
        for u in dev_ds:
            labels.index(u.label)  # fails loudly on uncovered labels
    if cfg.n_classes != len(labels):
        raise ShapeError(f"config has {cfg.n_classes} classes, data has {len(labels)}")
    fitted = fit_frontend(spec, train_ds)
    if fitted.input_dim != cfg.input_dim:
        raise ShapeError(
            f"front-end produces {fitted.input_dim}-dim input, config expects {cfg.input_dim}"
        )
    vocab_size = fitted.phone_vocab.size if fitted.phone_vocab is not None else None
    params = init_params(cfg, seed, vocab_size)
    state = AdamState.fresh(params)
    model = TrainedModel(params, cfg, fitted, labels)

    encoded = [fitted.encode(u) for u in train_ds]
    targets = np.array([labels.index(u.label) for u in train_ds])
    n = len(train_ds)
    steps_per_epoch = math.ceil(n / hyper.batch_size)
    total_steps = hyper.epochs * steps_per_epoch

    losses: list[float] = []
    accs: list[float] = []
    best_acc, best_params, best_epoch = -1.0, None, None
    step = 0
    for epoch in range(hyper.epochs):
        order = derive_rng(seed, NS_SHUFFLE, epoch).permutation(n)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            batch = collate(fitted.kind, [encoded[i] for i in idx])
            yb = targets[idx]
            try:
                logits, cache = model_forward(
                    batch, params, cfg, "train", dropout_seed=seed, step=step
                )
                loss, dlogits = softmax_cross_entropy(logits, yb)
                if not math.isfinite(loss):
                    raise TrainError("loss diverged to a non-finite value")
                grads = model_backward(cache, dlogits)
                adam_step(
                    params,
                    grads,
                    state,
                    lr_at(step, total_steps, hyper.lr0, hyper.lr_final),
                    hyper.weight_decay,
                )
            except TrainError as e:
                raise TrainError(f"epoch {epoch} step {step}: {e}") from None
            step += 1
            epoch_loss += loss * len(idx)
            correct += int((predict(logits) == yb).sum())
        losses.append(epoch_loss / n)
        accs.append(correct / n)
        if dev_ds is not None:
            acc = evaluate(model, dev_ds)
            if acc > best_acc:
                best_acc, best_params, best_epoch = acc, params.copy(), epoch

    record = RunRecord(seed=seed, train_loss=losses, train_acc=accs)
    if dev_ds is not None:
        record.final_dev_acc = evaluate(model, dev_ds)
        record.best_dev_acc = best_acc
        record.best_epoch = best_epoch
        model.params = best_params
    record.seconds = time.perf_counter() - t_start
    return model, record


def predictions(model: TrainedModel, dataset: Dataset, batch_size: int = 64):
    """Per-example (id, true label, predicted label), in dataset order."""
    encoded = [model.frontend.encode(u) for u in dataset]
    out = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset.utterances[start : start + batch_size]
        batch = collate(model.frontend.kind, encoded[start : start + batch_size])
        logits, _ = model_forward(batch, model.params, model.cfg, "eval")
        for u, cls in zip(chunk, predict(logits)):
            model.labels.index(u.label)  # eval labels must be in the vocabulary
            out.append((u.id, u.label, model.labels.labels[int(cls)]))
    return out

def evaluate(model: TrainedModel, dataset: Dataset, batch_size: int = 64) -> float:
    """Eval-mode accuracy (running batch-norm statistics, no dropout)."""
    preds = predictions(model, dataset, batch_size)
    return sum(1 for _, true, pred in preds if true == pred) / len(preds)


def run_seeds(setup: Setup, seeds=DEFAULT_SEEDS):
    """Train and evaluate once per seed; unweighted mean and population std."""
    seeds = tuple(seeds)
    if len(set(seeds)) != len(seeds):
        raise TrainError(f"seeds must be distinct, got {seeds}")
    records = []
    for seed in seeds:
        model, record = train(
            setup.train, setup.dev, setup.frontend, setup.cfg, setup.hyper, seed,
            labels=setup.labels,
        )
        record.eval_acc = evaluate(model, setup.evalset)
        records.append(record)
    accs = np.array([r.eval_acc for r in records])
    return float(accs.mean()), float(accs.std()), records


# ---------------------------------------------------------------------------
# Full-model gradient checking


def batch_closure(batch, targets: np.ndarray, cfg: ModelConfig):
    """Deterministic loss-and-gradients closure over a frozen batch.

    Dropout must be disabled in cfg; batch norm runs in train mode so batch
    statistics (and their gradients) are exercised.
    """
    if cfg.dropout_rate != 0.0:
        raise TrainError("gradient checking requires dropout_rate = 0")

    def closure(params: ModelParams):
        logits, cache = model_forward(batch, params, cfg, "train", dropout_seed=0, step=0)
        loss, dlogits = softmax_cross_entropy(logits, targets)
        return loss, model_backward(cache, dlogits)

    return closure


def _micro_utterances(kind: FrontEndKind, seed: int):
    phones = ["a", "k", "m", "s", "t"]
    kind_tag = [FrontEndKind.PHONE, FrontEndKind.PANPHONE, FrontEndKind.ALLO].index(kind)
    rng = derive_rng(seed, 97, kind_tag)
    utts = []
    for i, length in enumerate((9, 7)):
        seq = tuple(phones[int(j)] for j in rng.integers(0, len(phones), size=length))
        emb = rng.normal(size=(length, 16)) if kind is FrontEndKind.ALLO else None
        utts.append(Utterance(f"micro-{i}", f"c{i}", seq, emb))
    return Dataset("micro", utts), phones


def micro_gradcheck(
    kind: FrontEndKind, h: float = 1e-4, seed: int = 0, samples_per_entry: int = 20
) -> float:
    """Finite-difference check of the full composed model on a tiny instance.

    Runs at the random init, where gradients are well scaled and no ReLU
    input sits within h of its kink (central differences are meaningless
    across a kink, so heavily trained points make poor check points).
    """
    data, phones = _micro_utterances(kind, seed)
    table = random_feature_table(phones, seed) if kind is FrontEndKind.PANPHONE else None
    fitted = fit_frontend(FrontendSpec(kind, table=table), data)
    cfg = ModelConfig(
        kernels=(3, 3, 3, 3),
        dilations=(1, 2, 3, 4),
        channels=4,
        dropout_rate=0.0,
        input_dim=fitted.input_dim,
        n_classes=2,
    )
    vocab_size = fitted.phone_vocab.size if fitted.phone_vocab is not None else None
    params = init_params(cfg, seed, vocab_size)
    batch = collate(kind, [fitted.encode(u) for u in data])
    closure = batch_closure(batch, np.array([0, 1]), cfg)
    return grad_check(closure, params, h=h, samples_per_entry=samples_per_entry, seed=seed)
