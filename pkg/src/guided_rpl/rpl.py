"""Random projection layer: candidate blocks, sampling and activations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import DimensionError, NumericError
from .numerics import as_matrix

__all__ = [
    "BasisBlock",
    "RplModel",
    "XiSchedule",
    "make_rng",
    "sample_block",
    "activate",
    "project",
]

SIGMOID = "sigmoid"
ACTIVATIONS = (SIGMOID,)

# keep activations strictly inside (0, 1) where float64 saturates
# floor chosen so squared activations stay normal and column norms never underflow
_ACT_LO = np.sqrt(np.finfo(np.float64).tiny)
_ACT_HI = 1.0 - np.finfo(np.float64).epsneg


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class BasisBlock:
    """``s`` hidden units sharing one sampling scale ``xi``.

    ``input_weights`` has shape (d, s), one column per unit, and ``biases``
    has shape (s,).
    """

    input_weights: np.ndarray
    biases: np.ndarray
    xi: float

    def __post_init__(self):
        w = np.asarray(self.input_weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape[1] < 1:
            raise DimensionError(f"input_weights must be (d, s) with s >= 1, got {w.shape}")
        if b.shape[0] != w.shape[1]:
            raise DimensionError(f"{b.shape[0]} biases for {w.shape[1]} units")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericError("block parameters must be finite")
        if not (math.isfinite(self.xi) and self.xi > 0):
            raise ValueError(f"xi must be positive, got {self.xi}")
        object.__setattr__(self, "input_weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def size(self) -> int:
        return self.input_weights.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.input_weights.shape[0]

    def column(self, i: int) -> "BasisBlock":
        """Single-unit block holding unit ``i``."""
        return BasisBlock(self.input_weights[:, i : i + 1], self.biases[i : i + 1], self.xi)


@dataclass(frozen=True)
class RplModel:
    feature_dim: int
    blocks: tuple = ()
    activation: str = SIGMOID

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        object.__setattr__(self, "blocks", tuple(self.blocks))
        for blk in self.blocks:
            if blk.feature_dim != self.feature_dim:
                raise DimensionError(
                    f"block expects {blk.feature_dim} input features, model has {self.feature_dim}"
                )

    @property
    def total_units(self) -> int:
        return sum(b.size for b in self.blocks)

    def with_block(self, block: BasisBlock) -> "RplModel":
        return RplModel(self.feature_dim, self.blocks + (block,), self.activation)

    @property
    def input_weights(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((self.feature_dim, 0))
        return np.hstack([b.input_weights for b in self.blocks])

    @property
    def biases(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.biases for b in self.blocks])


@dataclass(frozen=True)
class XiSchedule:
    """Discrete grid of sampling scales ``xi_min, xi_min + delta_xi, ... <= xi_max``."""

    xi_min: float = 0.0008
    delta_xi: float = 0.0001
    xi_max: float = 0.004
    _values: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.xi_min > 0 and self.delta_xi > 0 and self.xi_max > 0):
            raise ValueError("xi schedule entries must be positive")
        if self.xi_min > self.xi_max:
            raise ValueError(f"xi_min={self.xi_min} exceeds xi_max={self.xi_max}")
        # tolerance so that e.g. 0.0008 + 32 * 0.0001 still counts as <= 0.004
        n = int(math.floor((self.xi_max - self.xi_min) / self.delta_xi + 1e-9)) + 1
        object.__setattr__(self, "_values", tuple(self.xi_min + k * self.delta_xi for k in range(n)))

    @property
    def values(self) -> tuple:
        return self._values

    def __len__(self) -> int:
        return len(self._values)

    def __getitem__(self, i):
        return self._values[i]


def sample_block(rng: np.random.Generator, d: int, s: int, xi: float) -> BasisBlock:
    """Draw weights and biases i.i.d. from N(0, xi^2); weights first, then biases."""
    if d < 1 or s < 1:
        raise ValueError(f"need d >= 1 and s >= 1, got d={d}, s={s}")
    if not (math.isfinite(xi) and xi > 0):
        raise ValueError(f"xi must be positive, got {xi}")
    w = rng.normal(0.0, xi, size=(d, s))
    b = rng.normal(0.0, xi, size=s)
    return BasisBlock(w, b, float(xi))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.clip(expit(x), _ACT_LO, _ACT_HI)


def activate(Z, block: BasisBlock) -> np.ndarray:
    Z = as_matrix(Z, "Z")
    if Z.shape[1] != block.feature_dim:
        raise DimensionError(f"Z has {Z.shape[1]} columns, block expects {block.feature_dim}")
    return _sigmoid(Z @ block.input_weights + block.biases)


def project(Z, model: RplModel) -> np.ndarray:
    """Hidden-layer output ``g(ZW + 1 b^T)`` with columns in acceptance order."""
    Z = as_matrix(Z, "Z")
    if Z.shape[1] != model.feature_dim:
        raise DimensionError(f"Z has {Z.shape[1]} columns, model expects {model.feature_dim}")
    if not model.blocks:
        return np.zeros((Z.shape[0], 0))
    return np.hstack([activate(Z, blk) for blk in model.blocks])
