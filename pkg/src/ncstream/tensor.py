"""Dense row-major tensor carrier and the linear ops the rest of the engine consumes.

Design notes:
- Layout is fixed row-major (C order); there is no stride generality and no
  broadcasting arithmetic beyond what the listed operations need.
- Backing storage is a numpy ndarray marked read-only, so tensors are safe to
  hand between threads and every operation is a pure function.
- float32 matmul accumulates internally in float64.  This keeps the naive
  reference paths trustworthy when float32 streamed results are compared
  against them.
- Half precision is emulated by rounding to the nearest binary16 value and
  storing the result back as float32; there is no native 16-bit pipeline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

DTYPES = {"float32": np.float32, "float64": np.float64}
_DTYPE_CODES = {"float32": 0, "float64": 1}
_CODE_DTYPES = {code: name for name, code in _DTYPE_CODES.items()}
_MAGIC = b"NCT1"

# Largest finite binary16 value; everything above rounds to +inf.
FLOAT16_MAX = 65504.0


class ShapeMismatchError(ValueError):
    """Raised when operand shapes (or dtypes) are incompatible."""


class DenseTensor:
    """Immutable dense numeric array, row-major, dtype float32 or float64."""

    __slots__ = ("_array", "_dtype")

    def __init__(self, values, dtype: str | None = None, allow_nonfinite: bool = False):
        if dtype is None:
            src = np.asarray(values)
            dtype = "float64" if src.dtype == np.float64 else "float32" if src.dtype == np.float32 else None
            if dtype is None:
                dtype = "float64"
        if dtype not in DTYPES:
            raise ValueError(f"unsupported dtype {dtype!r} (expected float32 or float64)")
        arr = np.ascontiguousarray(values, dtype=DTYPES[dtype])
        if any(n < 1 for n in arr.shape):
            raise ValueError(f"axis sizes must be >= 1, got shape {arr.shape}")
        if not allow_nonfinite and not np.isfinite(arr).all():
            raise ValueError("non-finite values in tensor (pass allow_nonfinite=True to permit)")
        arr.setflags(write=False)
        self._array = arr
        self._dtype = dtype

    @classmethod
    def from_array(cls, arr: np.ndarray, allow_nonfinite: bool = False) -> DenseTensor:
        if arr.dtype == np.float64:
            return cls(arr, "float64", allow_nonfinite)
        return cls(arr.astype(np.float32, copy=False), "float32", allow_nonfinite)

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype: str = "float64") -> DenseTensor:
        return cls(np.zeros(tuple(shape), dtype=DTYPES[dtype]), dtype)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def rank(self) -> int:
        return self._array.ndim

    @property
    def dtype(self) -> str:
        return self._dtype

    @property
    def array(self) -> np.ndarray:
        """Shaped read-only ndarray view of the tensor."""
        return self._array

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the buffer."""
        return self._array.reshape(-1)

    @property
    def size(self) -> int:
        return self._array.size

    def tolist(self):
        return self._array.tolist()

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self.shape}, dtype={self._dtype})"


def matmul(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Matrix product of two rank-2 tensors.

    float64 inputs multiply in float64.  float32 inputs are promoted to
    float64 for the accumulation and the result is rounded back to float32,
    so the reference paths built on this op stay low-noise.
    """
    if a.rank != 2 or b.rank != 2:
        raise ShapeMismatchError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeMismatchError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    if a.dtype == "float64":
        return DenseTensor(a.array @ b.array, "float64")
    prod = a.array.astype(np.float64) @ b.array.astype(np.float64)
    return DenseTensor(prod.astype(np.float32), "float32")


def transpose(a: DenseTensor) -> DenseTensor:
    """Transpose of a rank-2 tensor: out[j, i] = a[i, j]."""
    if a.rank != 2:
        raise ShapeMismatchError(f"transpose needs a rank-2 operand, got shape {a.shape}")
    return DenseTensor(np.ascontiguousarray(a.array.T), a.dtype)


class QuantizeResult(NamedTuple):
    values: DenseTensor
    n_overflow: int


def quantize_f16_array(arr: np.ndarray) -> np.ndarray:
    """Round a float32 array to the nearest binary16 values, kept as float32.

    Rounding is round-to-nearest-even via the hardware float32->float16
    conversion; magnitudes above FLOAT16_MAX become +-inf.
    """
    with np.errstate(over="ignore"):
        return arr.astype(np.float16).astype(np.float32)


def quantize_f16(a: DenseTensor) -> QuantizeResult:
    """Replace every element by its nearest binary16-representable value.

    The result stays a float32 tensor.  Elements whose magnitude exceeds the
    binary16 maximum map to +-inf; their count is reported rather than raised.
    """
    if a.dtype != "float32":
        raise ValueError(f"quantize_f16 expects float32 input, got {a.dtype}")
    out = quantize_f16_array(a.array)
    overflowed = int(np.count_nonzero(np.isinf(out) & np.isfinite(a.array)))
    return QuantizeResult(DenseTensor(out, "float32", allow_nonfinite=True), overflowed)


@dataclass(frozen=True)
class CloseReport:
    """Outcome of an elementwise comparison, with an optional threshold count."""

    equal: bool
    max_abs_diff: float
    n_total: int
    abs_threshold: float | None = None
    n_within: int | None = None

    def __bool__(self) -> bool:
        return self.equal

    @property
    def frac_within(self) -> float:
        if self.n_within is None:
            raise ValueError("no abs_threshold was requested")
        return self.n_within / self.n_total


def allclose(
    a: DenseTensor,
    b: DenseTensor,
    rtol: float = 1e-7,
    atol: float = 0.0,
    abs_threshold: float | None = None,
) -> CloseReport:
    """Elementwise closeness test: |a_i - b_i| <= atol + rtol * |b_i| for all i.

    When ``abs_threshold`` is given, the report additionally counts the
    elements with |a_i - b_i| <= abs_threshold (the accuracy-style metric).
    Non-finite disagreements are never close.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    with np.errstate(invalid="ignore"):
        diff = np.abs(a.array.astype(np.float64) - b.array.astype(np.float64))
    finite = np.isfinite(diff)
    equal = bool(np.all(finite)) and bool(np.all(diff <= atol + rtol * np.abs(b.array)))
    max_diff = float(diff.max()) if diff.size else 0.0
    n_within = None
    if abs_threshold is not None:
        n_within = int(np.count_nonzero(finite & (diff <= abs_threshold)))
    return CloseReport(equal, max_diff, a.size, abs_threshold, n_within)


def save_tensor(t: DenseTensor, path) -> None:
    """Write a tensor in the NCT1 container (bit-exact round trip).

    Layout: magic "NCT1", little-endian u32 dtype code (0=float32, 1=float64),
    u32 rank, rank x u64 axis sizes, then the raw little-endian element data.
    """
    arr = t.array
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _DTYPE_CODES[t.dtype], arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def load_tensor(path) -> DenseTensor:
    """Read a tensor from the NCT1 container written by :func:`save_tensor`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        code, rank = struct.unpack("<II", fh.read(8))
        if code not in _CODE_DTYPES:
            raise ValueError(f"unknown dtype code {code}")
        dtype = _CODE_DTYPES[code]
        shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
        count = 1
        for n in shape:
            count *= n
        raw = fh.read()
        arr = np.frombuffer(raw, dtype=np.dtype(DTYPES[dtype]).newbyteorder("<"), count=count)
        arr = arr.astype(DTYPES[dtype]).reshape(shape)
    return DenseTensor(arr, dtype, allow_nonfinite=True)
