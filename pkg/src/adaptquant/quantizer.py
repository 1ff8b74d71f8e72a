"""Component-wise adaptive grid quantizer and its bit-level wire format.

Each dimension is quantized onto ``2**b`` equally spaced points covering
``[center - r, center + r]``.  The receiver knows ``center`` (the previously
decoded message) and ``r`` (from the shared radius schedule), so only the
``b``-bit index per dimension travels over the link.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridOverflow, IndexOutOfRange, LengthMismatch

MAX_BITS = 64

# |c - center| may exceed r by this relative amount before GridOverflow.
OVERFLOW_SLACK = 1e-12
# plus this many ulps of the coordinates themselves: once r reaches rounding
# level the deviation of c is arithmetic noise, not a genuine overflow
ROUNDING_ULPS = 16
# fractional positions this close to a midpoint count as ties (resolved upward)
TIE_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    center: np.ndarray
    radius: float
    bits: int

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError(f"radius must be positive and finite, got {self.radius}")
        if not (1 <= int(self.bits) <= MAX_BITS):
            raise ValueError(f"bits must lie in [1, {MAX_BITS}], got {self.bits}")
        object.__setattr__(self, "bits", int(self.bits))
        if center.size == 0:
            raise ValueError("grid needs at least one dimension")
        if not np.all(np.isfinite(center)):
            raise ValueError("grid center must be finite")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def levels(self) -> int:
        """Largest index, ``2**b - 1``."""
        return (1 << self.bits) - 1

    @property
    def step(self) -> float:
        return grid_step(self)


@dataclass(frozen=True)
class QuantizedMessage:
    indices: np.ndarray
    value: np.ndarray
    bits: int

    @property
    def payload_bits(self) -> int:
        return self.indices.size * self.bits

    def to_bytes(self) -> bytes:
        return pack_bits(self.indices, self.bits)


def grid_step(grid: GridSpec) -> float:
    """Half the spacing between neighbouring grid points, ``r / (2**b - 1)``.

    This is also the worst-case quantization error for points inside the grid.
    """
    return grid.radius / float(grid.levels)


def decode(indices, grid: GridSpec) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.shape != (grid.dim,):
        raise LengthMismatch(f"expected {grid.dim} indices, got shape {idx.shape}")
    if idx.size and (np.any(idx < 0) or np.any(idx.astype(np.uint64) > np.uint64(grid.levels))):
        raise IndexOutOfRange(f"indices must lie in [0, {grid.levels}]")
    return _decode(idx.astype(np.uint64), grid)


def _decode(idx: np.ndarray, grid: GridSpec) -> np.ndarray:
    r = grid.radius
    levels = float(grid.levels)
    value = grid.center - r + (2.0 * r) * (idx.astype(float) / levels)
    # pin the end points so they do not pick up rounding noise
    value = np.where(idx == 0, grid.center - r, value)
    return np.where(idx == np.uint64(grid.levels), grid.center + r, value)


def quantize(c, grid: GridSpec) -> QuantizedMessage:
    """Project ``c`` onto the nearest grid point in every coordinate.

    Ties go to the larger grid point.  Raises :class:`GridOverflow` when some
    coordinate lies outside the closed grid box.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape != grid.center.shape:
        raise LengthMismatch(f"vector has {c.size} entries, grid has {grid.dim}")
    r = grid.radius
    diff = c - grid.center
    excess = np.abs(diff)
    allowed = r * (1.0 + OVERFLOW_SLACK) + ROUNDING_ULPS * np.finfo(float).eps * np.maximum(np.abs(c), np.abs(grid.center))
    if not np.all(np.isfinite(excess)) or np.any(excess > allowed):
        j = int(np.argmax(np.where(np.isfinite(excess), excess, np.inf)))
        raise GridOverflow(
            f"component {j} is {excess[j]:.6g} from the grid center, radius is {r:.6g}"
        )
    levels = float(grid.levels)
    # position in units of the grid spacing 2r/levels, 0 at center - r
    t = np.clip((diff + r) * levels / (2.0 * r), 0.0, levels)
    base = np.floor(t)
    frac = t - base
    up = frac >= 0.5 - TIE_TOL
    idx_f = np.minimum(base + up, levels)
    # float(2**64 - 1) rounds up to 2**64, which would overflow the cast
    idx = np.minimum(idx_f, np.nextafter(2.0**64, 0.0)).astype(np.uint64)
    idx[idx_f >= levels] = np.uint64(grid.levels)
    return QuantizedMessage(indices=idx, value=_decode(idx, grid), bits=grid.bits)


def pack_bits(indices, b: int) -> bytes:
    """Concatenate ``b``-bit indices MSB first, zero-padded to a byte boundary."""
    idx = [int(v) for v in np.asarray(indices).reshape(-1)]
    limit = 1 << b
    acc = 0
    for v in idx:
        if not 0 <= v < limit:
            raise IndexOutOfRange(f"index {v} does not fit in {b} bits")
        acc = (acc << b) | v
    nbits = len(idx) * b
    pad = -nbits % 8
    return (acc << pad).to_bytes((nbits + pad) // 8, "big")


def unpack_bits(data: bytes, d: int, b: int) -> np.ndarray:
    nbits = d * b
    nbytes = (nbits + 7) // 8
    if len(data) != nbytes:
        raise LengthMismatch(f"expected {nbytes} bytes for {d}x{b} bits, got {len(data)}")
    acc = int.from_bytes(data, "big") >> (nbytes * 8 - nbits)
    mask = (1 << b) - 1
    out = [(acc >> (b * (d - 1 - j))) & mask for j in range(d)]
    return np.array(out, dtype=np.uint64)
