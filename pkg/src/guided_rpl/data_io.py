"""File formats, synthetic data, task splits and run configuration.

Binary layouts (all little-endian):

``FMAT``  4-byte magic, u32 rows, u32 cols, rows*cols float64 row-major
``LVEC``  4-byte magic, u32 count, count u32 class ids
"""

from __future__ import annotations

import csv
import math
import re
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import (
    BadMagic,
    IndivisibleSplit,
    MalformedValue,
    NonFiniteValue,
    TruncatedFile,
    UnknownKey,
)
from .rpl import XiSchedule, make_rng

__all__ = [
    "read_matrix",
    "write_matrix",
    "read_labels",
    "write_labels",
    "read_csv_matrix",
    "SyntheticSpec",
    "SyntheticData",
    "generate_synthetic",
    "TaskBatch",
    "TaskSplit",
    "split_tasks",
    "parse_protocol",
    "RunConfig",
    "parse_config",
    "parse_synthetic_spec",
    "model_to_matrix",
    "model_from_matrix",
    "save_model",
    "load_model",
]

MATRIX_MAGIC = b"FMAT"
LABEL_MAGIC = b"LVEC"
_HEADER2 = struct.Struct("<4sII")
_HEADER1 = struct.Struct("<4sI")


def write_matrix(path, M) -> None:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteValue("matrix contains non-finite values")
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER2.pack(MATRIX_MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER2.size:
        raise TruncatedFile(f"{path}: header is {len(data)} bytes, need {_HEADER2.size}")
    magic, rows, cols = _HEADER2.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise BadMagic(f"{path}: magic {magic!r}, expected {MATRIX_MAGIC!r}")
    need = 8 * rows * cols
    payload = data[_HEADER2.size :]
    if len(payload) < need:
        raise TruncatedFile(f"{path}: payload has {len(payload)} bytes, need {need}")
    M = np.frombuffer(payload, dtype="<f8", count=rows * cols).astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(M)):
        raise NonFiniteValue(f"{path}: non-finite value in payload")
    return M


def write_labels(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
        raise ValueError("class ids must fit in an unsigned 32-bit integer")
    with open(path, "wb") as fh:
        fh.write(_HEADER1.pack(LABEL_MAGIC, labels.size))
        fh.write(labels.astype("<u4").tobytes())


def read_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER1.size:
        raise TruncatedFile(f"{path}: header is {len(data)} bytes, need {_HEADER1.size}")
    magic, count = _HEADER1.unpack_from(data)
    if magic != LABEL_MAGIC:
        raise BadMagic(f"{path}: magic {magic!r}, expected {LABEL_MAGIC!r}")
    payload = data[_HEADER1.size :]
    if len(payload) < 4 * count:
        raise TruncatedFile(f"{path}: payload has {len(payload)} bytes, need {4 * count}")
    return np.frombuffer(payload, dtype="<u4", count=count).astype(np.int64)


def read_csv_matrix(path, delimiter=",") -> np.ndarray:
    """Import a headerless numeric CSV as a float64 matrix."""
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh, delimiter=delimiter) if row]
    M = np.asarray(rows, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"{path}: ragged rows")
    if not np.all(np.isfinite(M)):
        raise NonFiniteValue(f"{path}: non-finite value")
    return M


# --------------------------------------------------------------------------
# synthetic features


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class clusters standing in for frozen backbone features.

    Classes are divided into ``n_tasks`` contiguous drift groups; group ``k``
    has its class means shifted by ``domain_gap * k`` along one seeded unit
    direction. The last ``redundancy`` feature dimensions copy the first ones
    up to 1e-6 jitter.
    """

    classes: int = 10
    train_per_class: int = 50
    test_per_class: int = 20
    feature_dim: int = 16
    cluster_spread: float = 1.0
    domain_gap: float = 0.0
    redundancy: int = 0
    seed: int = 0
    n_tasks: int = 1
    mean_scale: float = 1.5

    def __post_init__(self):
        for name in ("classes", "train_per_class", "test_per_class", "feature_dim", "n_tasks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.cluster_spread < 0 or self.domain_gap < 0 or self.mean_scale < 0:
            raise ValueError("spreads and gaps must be >= 0")
        if not (0 <= self.redundancy < self.feature_dim):
            raise ValueError(f"redundancy must lie in [0, feature_dim), got {self.redundancy}")


@dataclass
class SyntheticData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = make_rng(spec.seed)
    base = spec.feature_dim - spec.redundancy
    C = spec.classes
    means = rng.normal(0.0, spec.mean_scale, size=(C, base))
    direction = rng.normal(size=base)
    direction /= np.linalg.norm(direction)
    groups = (np.arange(C) * spec.n_tasks) // C
    means = means + spec.domain_gap * groups[:, None] * direction[None, :]

    def draw(per_class):
        X = np.repeat(means, per_class, axis=0)
        X = X + spec.cluster_spread * rng.normal(size=X.shape)
        y = np.repeat(np.arange(C), per_class)
        if spec.redundancy:
            copies = X[:, : spec.redundancy] + 1e-6 * rng.normal(size=(X.shape[0], spec.redundancy))
            X = np.hstack([X, copies])
        return X, y

    X_train, y_train = draw(spec.train_per_class)
    X_test, y_test = draw(spec.test_per_class)
    return SyntheticData(X_train, y_train, X_test, y_test)


# --------------------------------------------------------------------------
# class-incremental splits


@dataclass
class TaskBatch:
    features: np.ndarray
    labels: np.ndarray
    task_index: int
    classes: tuple = ()


@dataclass
class TaskSplit:
    train: list
    test: list
    protocol: str

    @property
    def n_tasks(self) -> int:
        return len(self.train)


def parse_protocol(text: str) -> tuple[int, int]:
    """Parse ``"B-m,Inc-n"`` (also accepts a space or ``Bm Incn``) into ``(m, n)``."""
    match = re.fullmatch(r"\s*B-?(\d+)\s*[, ]\s*Inc-?(\d+)\s*", text)
    if not match:
        raise MalformedValue(f"protocol {text!r} is not of the form B-m,Inc-n")
    return int(match.group(1)), int(match.group(2))


def _class_groups(classes: np.ndarray, m: int, n: int, seed: int) -> list:
    C = classes.size
    if n < 1:
        raise IndivisibleSplit("increment n must be >= 1")
    first = m if m > 0 else n
    if first > C or (C - first) % n:
        raise IndivisibleSplit(f"cannot split {C} classes as B-{m} Inc-{n}")
    order = classes[make_rng(seed).permutation(C)]
    groups = [order[:first]]
    for start in range(first, C, n):
        groups.append(order[start : start + n])
    return [tuple(sorted(int(c) for c in g)) for g in groups]


def split_tasks(features, labels, m: int, n: int, seed: int,
                test_features=None, test_labels=None) -> TaskSplit:
    """Assign classes to tasks with a seeded permutation and slice the samples.

    ``m = 0`` means an equal split with ``n`` classes in every task.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    classes = np.unique(labels)
    groups = _class_groups(classes, m, n, seed)

    def slice_(X, y):
        out = []
        for t, g in enumerate(groups):
            mask = np.isin(y, g)
            out.append(TaskBatch(X[mask], y[mask], t + 1, g))
        return out

    train = slice_(features, labels)
    test = []
    if test_features is not None:
        test = slice_(np.asarray(test_features, dtype=np.float64), np.asarray(test_labels).astype(np.int64))
    return TaskSplit(train, test, f"B-{m} Inc-{n}")


# --------------------------------------------------------------------------
# configuration files


@dataclass
class RunConfig:
    r: float = 0.99
    epsilon: float = 0.01
    lam: float = 0.01
    s: int = 50
    b_max: int = 10
    xi_min: float = 0.0008
    delta_xi: float = 0.0001
    xi_max: float = 0.004
    max_units: Optional[int] = None
    ri_xi: float = 1.0
    per_column: bool = False
    refactor_every: int = 20
    cond_subsample: int = 512
    cosine_sample_cap: int = 512

    @property
    def xi_schedule(self) -> XiSchedule:
        return XiSchedule(self.xi_min, self.delta_xi, self.xi_max)

    def construction_config(self, strategy="mgsm"):
        from .supervisory import ConstructionConfig

        return ConstructionConfig(
            r=self.r, epsilon=self.epsilon, s=self.s, b_max=self.b_max, lam=self.lam,
            xi_schedule=self.xi_schedule, max_units=self.max_units, strategy=strategy,
            per_column=self.per_column, ri_xi=self.ri_xi, refactor_every=self.refactor_every,
        )


# config file key -> RunConfig field; "lambda" is a Python keyword
_KEY_ALIASES = {"lambda": "lam"}


def _positive(x):
    return x > 0


_CHECKS = {
    "r": lambda x: 0 < x < 1,
    "epsilon": _positive,
    "lam": _positive,
    "s": lambda x: x >= 1,
    "b_max": lambda x: x >= 1,
    "xi_min": _positive,
    "delta_xi": _positive,
    "xi_max": _positive,
    "max_units": lambda x: x is None or x >= 1,
    "ri_xi": _positive,
    "refactor_every": lambda x: x >= 1,
    "cond_subsample": lambda x: x >= 1,
    "cosine_sample_cap": lambda x: x >= 2,
}


def _read_pairs(path):
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedValue(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise MalformedValue(f"{path}:{lineno}: empty key or value")
        pairs.append((lineno, key, value))
    return pairs


def _convert(kind, text, where):
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(text)
        return value
    except ValueError:
        raise MalformedValue(f"{where}: cannot parse {text!r} as {kind.__name__}") from None


def _field_kinds(cls):
    kinds = {}
    for f in fields(cls):
        t = f.type if isinstance(f.type, str) else f.type.__name__
        if "bool" in t:
            kinds[f.name] = bool
        elif "int" in t:
            kinds[f.name] = int
        else:
            kinds[f.name] = float
    return kinds


def parse_config(path) -> RunConfig:
    """Read ``key = value`` lines; missing keys keep their defaults."""
    kinds = _field_kinds(RunConfig)
    values = {}
    for lineno, key, text in _read_pairs(path):
        name = _KEY_ALIASES.get(key, key)
        if name not in kinds or key in _KEY_ALIASES.values():
            raise UnknownKey(f"{path}:{lineno}: unknown key {key!r}")
        value = _convert(kinds[name], text, f"{path}:{lineno}")
        check = _CHECKS.get(name)
        if check is not None and not check(value):
            raise MalformedValue(f"{path}:{lineno}: {key} = {text} is out of range")
        values[name] = value
    cfg = RunConfig(**values)
    if cfg.xi_min > cfg.xi_max:
        raise MalformedValue(f"{path}: xi_min exceeds xi_max")
    return cfg


def parse_synthetic_spec(path) -> SyntheticSpec:
    kinds = _field_kinds(SyntheticSpec)
    values = {}
    for lineno, key, text in _read_pairs(path):
        if key not in kinds:
            raise UnknownKey(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(kinds[key], text, f"{path}:{lineno}")
    try:
        return SyntheticSpec(**values)
    except ValueError as exc:
        raise MalformedValue(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# projection layer files
#
# One FMAT matrix with max(3, L) columns:
#   row 0            d, activation tag (0 = sigmoid), block count
#   rows 1..B        per block: s, xi
#   next d rows      input weights (d x L)
#   last row         biases (L)


_ACTIVATION_TAGS = {"sigmoid": 0}


def model_to_matrix(model) -> np.ndarray:
    d, L, nb = model.feature_dim, model.total_units, len(model.blocks)
    M = np.zeros((1 + nb + d + 1, max(3, L)))
    M[0, :3] = (d, _ACTIVATION_TAGS[model.activation], nb)
    for i, blk in enumerate(model.blocks):
        M[1 + i, :2] = (blk.size, blk.xi)
    M[1 + nb : 1 + nb + d, :L] = model.input_weights
    M[1 + nb + d, :L] = model.biases
    return M


def model_from_matrix(M):
    from .rpl import BasisBlock, RplModel

    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[1] < 3 or M.shape[0] < 2:
        raise MalformedValue(f"not a projection-layer matrix: shape {M.shape}")
    d, tag, nb = (int(x) for x in M[0, :3])
    tags = {v: k for k, v in _ACTIVATION_TAGS.items()}
    if tag not in tags or M.shape[0] != 1 + nb + d + 1:
        raise MalformedValue("inconsistent projection-layer header")
    W = M[1 + nb : 1 + nb + d]
    b = M[1 + nb + d]
    blocks, start = [], 0
    for i in range(nb):
        s, xi = int(M[1 + i, 0]), float(M[1 + i, 1])
        blocks.append(BasisBlock(W[:, start : start + s], b[start : start + s], xi))
        start += s
    return RplModel(d, tuple(blocks), tags[tag])


def save_model(path, model) -> None:
    write_matrix(path, model_to_matrix(model))


def load_model(path):
    return model_from_matrix(read_matrix(path))
