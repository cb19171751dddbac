"""Input front-ends: learned phone embeddings, fixed articulatory features,
and pre-extracted acoustic frame embeddings.

Each front-end maps an utterance to either an integer id sequence (the
learned-embedding path, resolved to vectors inside the model so gradients can
flow into the embedding matrix) or a fixed float matrix with one row per
frame. Only the learned path has trainable state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .corpus import (
    FEATURE_DIM,
    Dataset,
    FeatureTable,
    PhoneVocab,
    Utterance,
    build_phone_vocab,
)
from .errors import DataError, ShapeError

PHONE_EMBED_DIM = 256
ALLO_DIM = 640


class FrontEndKind(enum.Enum):
    PHONE = "phone"
    PANPHONE = "panphone"
    ALLO = "allo"


def frontend_dim(kind: FrontEndKind) -> int:
    """Canonical input width per front-end."""
    return {
        FrontEndKind.PHONE: PHONE_EMBED_DIM,
        FrontEndKind.PANPHONE: FEATURE_DIM,
        FrontEndKind.ALLO: ALLO_DIM,
    }[kind]


def encode_phones(u: Utterance, vocab: PhoneVocab) -> np.ndarray:
    """Phone symbols to integer ids; symbols outside the vocabulary become UNK."""
    return np.array([vocab.id(p) for p in u.phones], dtype=np.int64)


def embed_phone_ids(ids: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Row lookup: output row t is matrix[ids[t]]."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= matrix.shape[0]):
        raise ShapeError(
            f"phone id out of range [0, {matrix.shape[0]}): "
            f"min={int(ids.min())} max={int(ids.max())}"
        )
    return matrix[ids]


def embed_panphone(phones, table: FeatureTable) -> np.ndarray:
    """Fixed ternary feature row per phone; phones absent from the table map
    to the zero vector."""
    out = np.zeros((len(phones), FEATURE_DIM))
    for t, p in enumerate(phones):
        row = table.get(p)
        if row is not None:
            out[t] = row
    return out


def embed_allo(u: Utterance) -> np.ndarray:
    """Pass the utterance's pre-extracted frame embeddings through unchanged."""
    if u.emb is None:
        raise DataError(f"utterance {u.id!r} has no embedding matrix (allo front-end)")
    if not np.isfinite(u.emb).all():
        raise DataError(f"utterance {u.id!r}: embedding contains non-finite values")
    return u.emb


@dataclass(frozen=True)
class FrontendSpec:
    """What is needed to build a front-end before seeing the training split."""

    kind: FrontEndKind
    table: FeatureTable | None = None  # required for PANPHONE
    standardize_allo: bool = False  # per-dimension train-statistics scaling, off by default


@dataclass
class FittedFrontend:
    """A front-end bound to a training split (vocabulary, optional statistics)."""

    kind: FrontEndKind
    input_dim: int
    phone_vocab: PhoneVocab | None = None
    table: FeatureTable | None = None
    allo_mean: np.ndarray | None = None
    allo_scale: np.ndarray | None = None

    def encode(self, u: Utterance) -> np.ndarray:
        """Id sequence (T,) for PHONE; float matrix (T, input_dim) otherwise."""
        if self.kind is FrontEndKind.PHONE:
            return encode_phones(u, self.phone_vocab)
        if self.kind is FrontEndKind.PANPHONE:
            return embed_panphone(u.phones, self.table)
        x = embed_allo(u)
        if x.shape[1] != self.input_dim:
            raise ShapeError(
                f"utterance {u.id!r}: embedding dim {x.shape[1]} != fitted {self.input_dim}"
            )
        if self.allo_mean is not None:
            x = (x - self.allo_mean) / self.allo_scale
        return x


def allo_data_dim(dataset: Dataset) -> int:
    first = dataset.utterances[0]
    if first.emb is None:
        raise DataError(f"utterance {first.id!r} has no embedding matrix (allo front-end)")
    return first.emb.shape[1]


def fit_frontend(spec: FrontendSpec, train: Dataset) -> FittedFrontend:
    if spec.kind is FrontEndKind.PHONE:
        return FittedFrontend(
            spec.kind, PHONE_EMBED_DIM, phone_vocab=build_phone_vocab(train)
        )
    if spec.kind is FrontEndKind.PANPHONE:
        if spec.table is None:
            raise DataError("panphone front-end needs a feature table")
        return FittedFrontend(spec.kind, FEATURE_DIM, table=spec.table)
    dim = allo_data_dim(train)
    fitted = FittedFrontend(spec.kind, dim)
    if spec.standardize_allo:
        frames = np.concatenate([embed_allo(u) for u in train], axis=0)
        fitted.allo_mean = frames.mean(axis=0)
        fitted.allo_scale = np.maximum(frames.std(axis=0), 1e-8)
    return fitted
