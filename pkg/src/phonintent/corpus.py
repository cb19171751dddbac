"""Datasets, on-disk formats, vocabularies, splits, and the synthetic corpus.

On-disk formats owned by this module:

* Manifest: UTF-8 text, one JSON object per line with fields ``id`` (string),
  ``label`` (string), ``phones`` (array of strings) and optional ``emb``
  (path to an embedding file, relative to the manifest). Unknown fields are
  ignored.
* Embedding file: bytes 0-3 magic ``ALLO``, bytes 4-7 version u32 = 1
  little-endian, bytes 8-11 frame count T (u32), bytes 12-15 dimension D
  (u32), then T*D IEEE 754 single-precision values, little-endian,
  time-major.
* Articulatory feature table: UTF-8 TSV with header row ``phone`` plus 26
  feature names; each data row is a phone symbol followed by 26 integers in
  {-1, 0, 1}.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .seeding import NS_SYNTH_GLOBAL, NS_SYNTH_TABLE, NS_SYNTH_UTT, derive_rng

ALLO_MAGIC = b"ALLO"
ALLO_VERSION = 1

PAD_ID = 0
UNK_ID = 1


@dataclass
class Utterance:
    """One example: a phone sequence, its intent label, optional frame features."""

    id: str
    label: str
    phones: tuple[str, ...]
    emb: np.ndarray | None = None  # (T_e, D) float64, finite

    def __post_init__(self):
        self.phones = tuple(self.phones)
        if not self.phones:
            raise DataError(f"utterance {self.id!r}: phones must be non-empty")
        if self.emb is not None:
            self.emb = np.asarray(self.emb, dtype=np.float64)
            if self.emb.ndim != 2 or self.emb.shape[0] < 1 or self.emb.shape[1] < 1:
                raise DataError(f"utterance {self.id!r}: emb must be a non-empty 2-D matrix")
            if not np.isfinite(self.emb).all():
                raise DataError(f"utterance {self.id!r}: emb contains non-finite values")


@dataclass
class Dataset:
    name: str
    utterances: list[Utterance]

    def __post_init__(self):
        if not self.utterances:
            raise DataError(f"dataset {self.name!r} is empty")
        seen = set()
        for u in self.utterances:
            if u.id in seen:
                raise DataError(f"dataset {self.name!r}: duplicate utterance id {u.id!r}")
            seen.add(u.id)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def labels(self) -> list[str]:
        return sorted({u.label for u in self.utterances})

    def by_label(self) -> dict[str, list[int]]:
        """Indices of utterances per label, in dataset order."""
        out: dict[str, list[int]] = {}
        for i, u in enumerate(self.utterances):
            out.setdefault(u.label, []).append(i)
        return out

    def subset(self, indices, name: str | None = None) -> "Dataset":
        return Dataset(name or self.name, [self.utterances[i] for i in indices])


@dataclass(frozen=True)
class LabelVocab:
    """Bijective label -> contiguous class index, lexicographic order."""

    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"label {label!r} not in vocabulary {self.labels}") from None


@dataclass(frozen=True)
class PhoneVocab:
    """Phone symbol -> integer id. Ids 0 (PAD) and 1 (UNK) are reserved."""

    symbols: tuple[str, ...]  # non-reserved symbols; symbol i has id i + 2
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_ids", {s: i + 2 for i, s in enumerate(self.symbols)})

    @property
    def size(self) -> int:
        """Total id count including PAD and UNK."""
        return len(self.symbols) + 2

    def id(self, symbol: str) -> int:
        return self._ids.get(symbol, UNK_ID)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]  # utterance id -> fold index

    def fold_ids(self, fold: int) -> list[str]:
        return [uid for uid, f in self.assignment.items() if f == fold]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the order-discriminative synthetic corpus.

    Each class is assigned a signature: ``sig_len`` phones that occur
    contiguously, in order, in every utterance of that class. Filler phones
    are drawn so the expected unigram histogram is the uniform distribution
    for every class; class identity is recoverable only from local phone
    order. Requires t_min >= vocab_size so the filler compensation stays a
    valid distribution.
    """

    n_classes: int = 6
    per_class: int = 64
    vocab_size: int = 18
    sig_len: int = 3
    t_min: int = 20
    t_max: int = 40
    emb_dim: int = 32
    noise_sigma: float = 0.25

    def __post_init__(self):
        if self.n_classes < 2:
            raise DataError("n_classes must be >= 2")
        if self.per_class < 1:
            raise DataError("per_class must be >= 1")
        if self.sig_len < 2:
            raise DataError("sig_len must be >= 2 (order must carry information)")
        if self.vocab_size < self.sig_len * self.n_classes:
            raise DataError(
                f"vocab_size {self.vocab_size} < sig_len*n_classes "
                f"{self.sig_len * self.n_classes}: signatures must use disjoint phones"
            )
        if self.t_min < self.vocab_size:
            raise DataError(
                f"t_min {self.t_min} < vocab_size {self.vocab_size}: unigram "
                "matching needs at least one expected occurrence per phone"
            )
        if self.t_max < self.t_min:
            raise DataError("t_max must be >= t_min")
        if self.emb_dim < 1:
            raise DataError("emb_dim must be >= 1")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")


FeatureTable = dict[str, np.ndarray]  # phone -> (26,) vector with entries in {-1, 0, 1}

FEATURE_DIM = 26


# ---------------------------------------------------------------------------
# Embedding files


def write_embedding_file(path, matrix) -> None:
    """Serialize a (T, D) matrix. Values are stored as little-endian float32."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise FormatError(f"{path}: embedding matrix must be 2-D and non-empty")
    t, d = m.shape
    with open(path, "wb") as fh:
        fh.write(ALLO_MAGIC)
        fh.write(struct.pack("<III", ALLO_VERSION, t, d))
        fh.write(m.tobytes())


def load_embedding_file(path) -> np.ndarray:
    """Read an embedding file back as float64 (the toolkit's working precision)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: file shorter than the 16-byte header")
    if raw[:4] != ALLO_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {ALLO_MAGIC!r}")
    version, t, d = struct.unpack("<III", raw[4:16])
    if version != ALLO_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if t == 0 or d == 0:
        raise FormatError(f"{path}: header declares empty matrix T={t} D={d}")
    expected = 16 + t * d * 4
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload size {len(raw) - 16} bytes, header implies {t * d * 4}"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=16).reshape(t, d)
    return values.astype(np.float64)


# ---------------------------------------------------------------------------
# Manifests


def load_manifest(path, emb_dim: int | None = None, name: str | None = None) -> Dataset:
    """Load a line-delimited manifest, attaching any referenced embedding files.

    When emb_dim is given, every referenced embedding must have exactly that
    many columns; otherwise all embeddings must simply agree with each other.
    """
    path = Path(path)
    base = path.parent
    utterances: list[Utterance] = []
    seen_ids: set[str] = set()
    seen_dim = emb_dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: not a valid record: {e}") from None
            if not isinstance(rec, dict):
                raise FormatError(f"{path}:{lineno}: record must be an object")
            for key in ("id", "label"):
                if key not in rec or not isinstance(rec[key], str):
                    raise FormatError(f"{path}:{lineno}: missing or non-string {key!r} field")
            phones = rec.get("phones")
            if (
                not isinstance(phones, list)
                or not phones
                or not all(isinstance(p, str) for p in phones)
            ):
                raise FormatError(f"{path}:{lineno}: 'phones' must be a non-empty string array")
            if rec["id"] in seen_ids:
                raise FormatError(f"{path}:{lineno}: duplicate id {rec['id']!r}")
            seen_ids.add(rec["id"])
            emb = None
            if rec.get("emb") is not None:
                emb_path = base / rec["emb"]
                if not emb_path.exists():
                    raise FormatError(f"{path}:{lineno}: embedding file {emb_path} missing")
                emb = load_embedding_file(emb_path)
                if seen_dim is None:
                    seen_dim = emb.shape[1]
                elif emb.shape[1] != seen_dim:
                    raise FormatError(
                        f"{path}:{lineno}: embedding {emb_path} has D={emb.shape[1]}, "
                        f"expected D={seen_dim}"
                    )
            try:
                utterances.append(Utterance(rec["id"], rec["label"], tuple(phones), emb))
            except DataError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    if not utterances:
        raise FormatError(f"{path}: manifest holds no records")
    return Dataset(name or path.stem, utterances)


def write_manifest(path, dataset: Dataset, emb_subdir: str = "emb") -> None:
    """Write a manifest plus one embedding file per utterance that carries one.

    Embedding files land in ``<manifest dir>/<emb_subdir>/<id>.allo``; ids are
    used as file names and must therefore be filesystem-safe.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    emb_dir = path.parent / emb_subdir
    lines = []
    for u in dataset:
        rec: dict = {"id": u.id, "label": u.label, "phones": list(u.phones)}
        if u.emb is not None:
            emb_dir.mkdir(parents=True, exist_ok=True)
            rel = f"{emb_subdir}/{u.id}.allo"
            write_embedding_file(path.parent / rel, u.emb)
            rec["emb"] = rel
        lines.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Vocabularies


def build_label_vocab(dataset: Dataset) -> LabelVocab:
    """Distinct labels, sorted lexicographically, indexed from 0."""
    return LabelVocab(tuple(dataset.labels()))


def build_phone_vocab(dataset: Dataset) -> PhoneVocab:
    """Distinct phones of a training split, sorted, ids starting at 2."""
    symbols = sorted({p for u in dataset for p in u.phones})
    return PhoneVocab(tuple(symbols))


# ---------------------------------------------------------------------------
# Splits


def kfold_split(dataset: Dataset, k: int, seed: int) -> FoldPlan:
    """Shuffle ids with the seed, deal round-robin into k balanced folds."""
    n = len(dataset)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if k > n:
        raise DataError(f"k = {k} exceeds dataset size {n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = {dataset.utterances[int(j)].id: i % k for i, j in enumerate(perm)}
    return FoldPlan(k, assignment)


def subsample_per_class(dataset: Dataset, split: int, seed: int, name: str | None = None) -> Dataset:
    """Keep exactly ``split`` examples of every class, chosen by seeded shuffle.

    Selected utterances keep their original dataset order.
    """
    if split < 1:
        raise DataError(f"split must be >= 1, got {split}")
    rng = np.random.default_rng(seed)
    by_label = dataset.by_label()
    keep: list[int] = []
    for label in sorted(by_label):
        idxs = by_label[label]
        if len(idxs) < split:
            raise DataError(f"class {label!r} has {len(idxs)} examples, need {split}")
        chosen = rng.permutation(len(idxs))[:split]
        keep.extend(idxs[int(c)] for c in chosen)
    keep.sort()
    return dataset.subset(keep, name=name or f"{dataset.name}@{split}")


def partition_per_class(dataset: Dataset, n_first: int) -> tuple[Dataset, Dataset]:
    """Split into (first n_first per class, rest) in dataset order."""
    first: list[int] = []
    rest: list[int] = []
    counts: dict[str, int] = {}
    for i, u in enumerate(dataset.utterances):
        c = counts.get(u.label, 0)
        (first if c < n_first else rest).append(i)
        counts[u.label] = c + 1
    short = [lab for lab, c in counts.items() if c <= n_first]
    if short:
        raise DataError(f"classes {sorted(short)} have no examples left for the second part")
    return (
        dataset.subset(first, name=f"{dataset.name}-train"),
        dataset.subset(rest, name=f"{dataset.name}-eval"),
    )


# ---------------------------------------------------------------------------
# Synthetic corpus


def synthetic_phones(spec: SyntheticSpec) -> list[str]:
    return [f"p{i:02d}" for i in range(spec.vocab_size)]


def synthetic_labels(spec: SyntheticSpec) -> list[str]:
    return [f"intent_{c:02d}" for c in range(spec.n_classes)]


@dataclass(frozen=True)
class _SynthContext:
    spec: SyntheticSpec
    seed: int
    signatures: tuple[tuple[int, ...], ...]  # per class, phone ids
    prototypes: np.ndarray  # (vocab, emb_dim)


def _synth_context(spec: SyntheticSpec, seed: int) -> _SynthContext:
    g = derive_rng(seed, NS_SYNTH_GLOBAL)
    perm = g.permutation(spec.vocab_size)
    signatures = tuple(
        tuple(int(perm[c * spec.sig_len + j]) for j in range(spec.sig_len))
        for c in range(spec.n_classes)
    )
    prototypes = g.normal(size=(spec.vocab_size, spec.emb_dim))
    return _SynthContext(spec, seed, signatures, prototypes)


def _filler_distribution(spec: SyntheticSpec, signature: tuple[int, ...], t: int) -> np.ndarray:
    # Chosen so that signature + (t - sig_len) filler draws have a uniform
    # expected unigram histogram: q[v] = (t/V - [v in sig]) / (t - sig_len).
    q = np.full(spec.vocab_size, t / spec.vocab_size)
    q[list(signature)] -= 1.0
    q /= t - spec.sig_len
    return q


def _make_utterance(ctx: _SynthContext, index: int) -> Utterance:
    """Generate utterance ``index``; randomness depends only on (seed, index)."""
    spec = ctx.spec
    cls = index // spec.per_class
    sig = ctx.signatures[cls]
    rng = derive_rng(ctx.seed, NS_SYNTH_UTT, index)
    t = int(rng.integers(spec.t_min, spec.t_max + 1))
    q = _filler_distribution(spec, sig, t)
    seq = rng.choice(spec.vocab_size, size=t, p=q)
    pos = int(rng.integers(0, t - spec.sig_len + 1))
    seq[pos : pos + spec.sig_len] = sig

    # Scrub chance occurrences of other classes' signatures so the ordered
    # signature is unambiguous. Foreign signatures share no phones with ours,
    # so no scrubbed window can overlap the planted one.
    foreign = {s for c, s in enumerate(ctx.signatures) if c != cls}
    mid = spec.sig_len // 2
    while True:
        hit = -1
        for start in range(t - spec.sig_len + 1):
            if start == pos:
                continue
            if tuple(int(v) for v in seq[start : start + spec.sig_len]) in foreign:
                hit = start
                break
        if hit < 0:
            break
        seq[hit + mid] = rng.choice(spec.vocab_size, p=q)

    emb = ctx.prototypes[seq].copy()
    if spec.noise_sigma > 0:
        emb += spec.noise_sigma * rng.normal(size=emb.shape)
    phones = synthetic_phones(spec)
    return Utterance(
        id=f"syn-{index:06d}",
        label=synthetic_labels(spec)[cls],
        phones=tuple(phones[int(v)] for v in seq),
        emb=emb,
    )


def generate_synthetic(spec: SyntheticSpec, seed: int, name: str = "synthetic") -> Dataset:
    """Deterministic synthetic corpus; class c occupies indices [c*per_class, ...)."""
    ctx = _synth_context(spec, seed)
    total = spec.n_classes * spec.per_class
    return Dataset(name, [_make_utterance(ctx, i) for i in range(total)])


def random_feature_table(phones, seed: int) -> FeatureTable:
    """Fixed ternary feature vector per phone; stand-in articulatory table."""
    rng = derive_rng(seed, NS_SYNTH_TABLE)
    return {
        p: rng.integers(-1, 2, size=FEATURE_DIM).astype(np.float64)
        for p in sorted(phones)
    }


# ---------------------------------------------------------------------------
# Articulatory feature tables


def load_panphone_table(path) -> FeatureTable:
    """Parse a 26-column ternary feature TSV."""
    path = Path(path)
    table: FeatureTable = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) != FEATURE_DIM + 1 or header[0] != "phone":
            raise FormatError(
                f"{path}: header must be 'phone' plus {FEATURE_DIM} feature names, "
                f"got {len(header)} columns"
            )
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != FEATURE_DIM + 1:
                raise FormatError(
                    f"{path}:{lineno}: expected {FEATURE_DIM} feature values, got {len(cells) - 1}"
                )
            phone = cells[0]
            if phone in table:
                raise FormatError(f"{path}:{lineno}: duplicate phone {phone!r}")
            try:
                values = [int(c) for c in cells[1:]]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer feature value") from None
            if any(v not in (-1, 0, 1) for v in values):
                raise FormatError(f"{path}:{lineno}: feature values must be -1, 0 or 1")
            table[phone] = np.array(values, dtype=np.float64)
    if not table:
        raise FormatError(f"{path}: table holds no rows")
    return table


def write_panphone_table(path, table: FeatureTable) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = "\t".join(f"f{i:02d}" for i in range(FEATURE_DIM))
    lines = ["phone\t" + names]
    for phone in sorted(table):
        row = table[phone]
        if row.shape != (FEATURE_DIM,):
            raise FormatError(f"feature row for {phone!r} has shape {row.shape}")
        lines.append(phone + "\t" + "\t".join(str(int(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
