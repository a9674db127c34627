"""Dense f64 tensors, a counter-based PRNG and the ORDT binary format.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order.  The helpers here add the explicit shape checks and error types the
rest of the package relies on.

PRNG
----
``Rng`` is SplitMix64 used in counter mode.  For a generator with key ``k``
the n-th 64-bit word of the stream is::

    word(n) = mix64(k + (n + 1) * 0x9E3779B97F4A7C15)      (mod 2**64)

    mix64(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
              z =  z ^ (z >> 31)

with ``k = mix64(seed)``.  A uniform double in [0, 1) is ``(word >> 11) * 2**-53``.
Because every word depends only on (key, index), a block of draws is computed
in one vectorised step and the stream is identical on every platform.

Child generators are derived with ``split(stream)``: the child key is
``mix64(k ^ mix64(stream + 0xD1B54A32D192ED03))``.  Workers (dataset samples,
ablation variants, dropout layers) each get their own child, so results never
depend on scheduling order.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ShapeError

Tensor = np.ndarray

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_SPLIT_SALT = 0xD1B54A32D192ED03
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int (mod 2**64)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """Counter-based SplitMix64 stream.  Not safe to share between workers."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._key = mix64(self.seed)
        self.counter = 0

    @classmethod
    def _from_key(cls, key: int) -> Rng:
        rng = cls.__new__(cls)
        rng.seed = key
        rng._key = key
        rng.counter = 0
        return rng

    def split(self, stream: int) -> Rng:
        """Independent child stream; does not advance this generator."""
        return Rng._from_key(mix64(self._key ^ mix64(int(stream) + _SPLIT_SALT)))

    def words(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self._key) + idx * np.uint64(_GOLDEN)
        return _mix64_array(z)

    def random(self, dims=()) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        dims = (int(dims),) if np.isscalar(dims) else tuple(int(d) for d in dims)
        n = int(np.prod(dims, dtype=np.int64))
        u = (self.words(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        return u.reshape(dims)

    def uniform(self, dims, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return rng_uniform(self, dims, lo, hi)

    def integers(self, n: int, dims=()) -> np.ndarray:
        """Uniform integers in [0, n)."""
        if n < 1:
            raise ArgumentError(f"integers needs n >= 1, got {n}")
        u = self.random(dims)
        return np.minimum((u * n).astype(np.int64), n - 1)

    def bernoulli(self, p: float, dims) -> np.ndarray:
        return self.random(dims) < p


def rng_uniform(rng: Rng, dims, lo: float, hi: float) -> np.ndarray:
    """Uniform draws in [lo, hi) with the given extents."""
    if not lo < hi:
        raise ArgumentError(f"rng_uniform needs lo < hi, got lo={lo}, hi={hi}")
    dims = (int(dims),) if np.isscalar(dims) else tuple(int(d) for d in dims)
    if any(d < 0 for d in dims):
        raise ShapeError(f"negative extent in {dims}")
    n = int(np.prod(dims, dtype=np.int64))
    if n == 0:
        return np.zeros(dims)
    u = rng.random((n,))
    out = lo + (hi - lo) * u
    # rounding can land exactly on hi
    out = np.minimum(out, np.nextafter(hi, lo))
    return out.reshape(dims)


def tensor(values, dims=None) -> Tensor:
    """Build a float64 tensor, optionally reshaping a flat buffer."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if int(np.prod(dims, dtype=np.int64)) != arr.size:
            raise ShapeError(f"{arr.size} values cannot fill dims {dims}")
        arr = arr.reshape(dims)
    return arr


_ELEMENTWISE = {"add": np.add, "sub": np.subtract, "mul": np.multiply}
_REDUCE = {"sum": np.sum, "mean": np.mean, "max": np.max}


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    if op not in _ELEMENTWISE:
        raise ArgumentError(f"unknown elementwise op {op!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: dims {a.shape} != {b.shape}")
    return _ELEMENTWISE[op](a, b)


def reduce(op: str, a: Tensor, axis: int) -> Tensor:
    if op not in _REDUCE:
        raise ArgumentError(f"unknown reduce op {op!r}")
    a = np.asarray(a, dtype=np.float64)
    if not 0 <= axis < a.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {a.ndim}")
    return _REDUCE[op](a, axis=axis)


def flat_index(index, dims) -> int:
    """Row-major offset of a multi-index."""
    if len(index) != len(dims):
        raise ShapeError(f"index rank {len(index)} != tensor rank {len(dims)}")
    offset = 0
    for i, d in zip(index, dims):
        if not 0 <= i < d:
            raise ShapeError(f"index {tuple(index)} out of range for {tuple(dims)}")
        offset = offset * d + i
    return offset


# ---------------------------------------------------------------- ORDT format
#
# magic b"ORDT" | u8 version (1) | u8 dtype (0 = f32) | u8 rank |
# rank x u32 little-endian extents | payload, little-endian f32, row-major.
# Values are cast f64 -> f32 on write (round-to-nearest) and widened on read.

ORDT_MAGIC = b"ORDT"
ORDT_VERSION = 1
ORDT_F32 = 0


def ordt_dumps(t: Tensor) -> bytes:
    arr = np.asarray(t)
    if arr.ndim > 255:
        raise ShapeError("ORDT supports rank <= 255")
    head = ORDT_MAGIC + struct.pack("<BBB", ORDT_VERSION, ORDT_F32, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def ordt_loads(data: bytes) -> Tensor:
    buf = io.BytesIO(data)
    if buf.read(4) != ORDT_MAGIC:
        raise ArgumentError("not an ORDT tensor (bad magic)")
    version, dtype, rank = struct.unpack("<BBB", buf.read(3))
    if version != ORDT_VERSION:
        raise ArgumentError(f"unsupported ORDT version {version}")
    if dtype != ORDT_F32:
        raise ArgumentError(f"unsupported ORDT dtype tag {dtype}")
    dims = struct.unpack(f"<{rank}I", buf.read(4 * rank))
    n = int(np.prod(dims, dtype=np.int64))
    payload = buf.read()
    if len(payload) != 4 * n:
        raise ShapeError(f"ORDT payload has {len(payload)} bytes, expected {4 * n}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)


def save_ordt(path, t: Tensor) -> None:
    Path(path).write_bytes(ordt_dumps(t))


def load_ordt(path) -> Tensor:
    return ordt_loads(Path(path).read_bytes())
