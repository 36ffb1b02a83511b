"""Shared domain types and tensor statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major float32 weight matrix, immutable once built."""

    data: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float32)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("matrix contains NaN or Inf")
        if a is self.data:
            a = a.copy()
        object.__setattr__(self, "data", _frozen(a))

    @classmethod
    def from_flat(cls, rows: int, cols: int, values) -> DenseMatrix:
        flat = np.asarray(values, dtype=np.float32).reshape(-1)
        if flat.size != rows * cols:
            raise ValueError(f"data length {flat.size} != {rows}x{cols}")
        return cls(flat.reshape(rows, cols))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()


SelectPolicy = Literal["best_error", "fixed_step"]


@dataclass(frozen=True)
class QuantConfig:
    bits: int = 4
    sigma_n: float = 3.0
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 200
    select: SelectPolicy = "best_error"
    # only read when select == "fixed_step"
    select_step: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bits must be in [2, 8], got {self.bits}")
        if not (self.sigma_n >= 0 and np.isfinite(self.sigma_n)):
            raise ValueError(f"sigma_n must be finite and >= 0, got {self.sigma_n}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.select not in ("best_error", "fixed_step"):
            raise ValueError(f"unknown select policy {self.select!r}")
        if self.select == "fixed_step" and not 0 <= self.select_step <= self.steps:
            raise ValueError(f"select_step {self.select_step} outside [0, {self.steps}]")

    @property
    def l_min(self) -> int:
        return -(2 ** (self.bits - 1)) + 1

    @property
    def l_max(self) -> int:
        return 2 ** (self.bits - 1)


@dataclass(frozen=True, eq=False)
class ChannelScales:
    """One positive float32 step size per column."""

    scales: np.ndarray

    def __post_init__(self):
        s = np.array(self.scales, dtype=np.float32).reshape(-1)
        if s.size == 0:
            raise ValueError("empty scale vector")
        if not (np.isfinite(s).all() and (s > 0).all()):
            raise ValueError("scales must be finite and strictly positive")
        object.__setattr__(self, "scales", _frozen(s))

    def __len__(self):
        return self.scales.size

    def __eq__(self, other):
        if not isinstance(other, ChannelScales):
            return NotImplemented
        return self.scales.tobytes() == other.scales.tobytes()


@dataclass(frozen=True)
class TensorStats:
    mean: float
    std: float
    max_abs: float
    count: int


def tensor_stats(W: DenseMatrix) -> TensorStats:
    """Tensor-wide mean, population std and max |w|.

    Two-pass, float64 accumulation over the row-major element order.
    """
    x = W.flat.astype(np.float64)
    n = x.size
    mean = float(np.sum(x) / n)
    d = x - mean
    std = float(np.sqrt(np.sum(d * d) / n))
    return TensorStats(mean=mean, std=std, max_abs=float(np.max(np.abs(x))), count=n)


@dataclass(frozen=True, eq=False)
class OutlierSet:
    """Sparse full-precision entries excluded from quantization.

    Coordinates are kept sorted by (row, col). ``mean``/``std``/``sigma_n`` are
    the statistics and threshold the set was detected with.
    """

    shape: tuple[int, int]
    row: np.ndarray
    col: np.ndarray
    value: np.ndarray
    mean: float = 0.0
    std: float = 0.0
    sigma_n: float = 0.0

    def __post_init__(self):
        r = np.array(self.row, dtype=np.int64).reshape(-1)
        c = np.array(self.col, dtype=np.int64).reshape(-1)
        v = np.array(self.value, dtype=np.float32).reshape(-1)
        if not (r.size == c.size == v.size):
            raise ValueError("row/col/value lengths differ")
        rows, cols = self.shape
        if r.size:
            if r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols:
                raise IndexError(f"outlier coordinate outside {rows}x{cols}")
            flat = r * cols + c
            if (np.diff(flat) <= 0).any():
                raise ValueError("outliers must be strictly sorted by (row, col)")
        object.__setattr__(self, "shape", (int(rows), int(cols)))
        object.__setattr__(self, "row", _frozen(r))
        object.__setattr__(self, "col", _frozen(c))
        object.__setattr__(self, "value", _frozen(v))

    @classmethod
    def empty(cls, shape, mean=0.0, std=0.0, sigma_n=0.0) -> OutlierSet:
        z = np.zeros(0, dtype=np.int64)
        return cls(shape, z, z, np.zeros(0, np.float32), mean, std, sigma_n)

    def __len__(self):
        return self.row.size

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(r), int(c), float(v)) for r, c, v in zip(self.row, self.col, self.value)]

    @property
    def flat_index(self) -> np.ndarray:
        return self.row * self.shape[1] + self.col

    def mask(self) -> np.ndarray:
        """Boolean (rows, cols) array, True at outlier coordinates."""
        m = np.zeros(self.shape, dtype=bool)
        m[self.row, self.col] = True
        return m

    @property
    def fraction(self) -> float:
        return len(self) / (self.shape[0] * self.shape[1])

    def __eq__(self, other):
        if not isinstance(other, OutlierSet):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row, other.row)
            and np.array_equal(self.col, other.col)
            and self.value.tobytes() == other.value.tobytes()
            and (self.mean, self.std, self.sigma_n) == (other.mean, other.std, other.sigma_n)
        )


@dataclass(frozen=True, eq=False)
class QuantizedWeight:
    """Packed levels, per-column scales and isolated outliers for one matrix.

    ``rtn_error``/``final_error`` are provenance only; they are not part of
    the tensor file and are ignored by equality.
    """

    rows: int
    cols: int
    bits: int
    packed_levels: bytes
    scales: ChannelScales
    outliers: OutlierSet
    rtn_error: float = field(default=float("nan"))
    final_error: float = field(default=float("nan"))

    def __post_init__(self):
        if len(self.scales) != self.cols:
            raise ValueError(f"{len(self.scales)} scales for {self.cols} columns")
        if self.outliers.shape != (self.rows, self.cols):
            raise ValueError("outlier set shape does not match the matrix")
        object.__setattr__(self, "packed_levels", bytes(self.packed_levels))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def levels(self) -> np.ndarray:
        """Unpacked (rows, cols) int16 level grid."""
        from .rtn import unpack_levels

        return unpack_levels(self.packed_levels, self.rows * self.cols, self.bits).reshape(
            self.rows, self.cols
        )

    def __eq__(self, other):
        if not isinstance(other, QuantizedWeight):
            return NotImplemented
        return (
            (self.rows, self.cols, self.bits) == (other.rows, other.cols, other.bits)
            and self.packed_levels == other.packed_levels
            and self.scales == other.scales
            and self.outliers == other.outliers
        )
