"""Stochastic uniform quantizer for the digital uplink.

Magnitudes are mapped onto 2^b evenly spaced knots spanning the vector's own
magnitude range; each entry randomly rounds to one of its two bracketing
knots with probabilities that make the quantizer unbiased.  Levels are stored
as integers so the payload accounting stays honest.
"""

from __future__ import annotations

import dataclasses

import numpy as np

MAX_BITS = 32


@dataclasses.dataclass(frozen=True, eq=False)
class QuantizedUpdate:
    """Quantized gradient: per-entry knot index, sign, and magnitude range."""

    levels: np.ndarray
    signs: np.ndarray
    lo: float
    hi: float
    bits: int


def quantize_vector(g: np.ndarray, b: int, rng: np.random.Generator) -> QuantizedUpdate:
    """Stochastically quantize ``g`` onto ``2^b`` magnitude knots.

    An entry with magnitude in [t_i, t_{i+1}) rounds down with probability
    (t_{i+1} - |x|) / (t_{i+1} - t_i) and up otherwise; the boundary |x| = hi
    lands on the top knot deterministically.  Signs are kept exactly.
    """
    if not 1 <= int(b) <= MAX_BITS:
        raise ValueError(f"quantization bits must lie in [1, {MAX_BITS}], got {b}")
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("input must be a non-empty 1-D vector")

    mags = np.abs(g)
    lo = float(mags.min())
    hi = float(mags.max())
    signs = np.where(g < 0, -1, 1).astype(np.int8)
    n_steps = (1 << int(b)) - 1

    if hi == lo:
        # Degenerate range (includes the all-zero vector): a single knot
        # reproduces every magnitude exactly.
        levels = np.zeros(g.size, dtype=np.int64)
        return QuantizedUpdate(levels, signs, lo, hi, int(b))

    pos = (mags - lo) / (hi - lo) * n_steps
    base = np.minimum(np.floor(pos), n_steps - 1).astype(np.int64)
    frac = pos - base
    levels = base + (rng.random(g.size) < frac)
    return QuantizedUpdate(levels.astype(np.int64), signs, lo, hi, int(b))


def decode(qu: QuantizedUpdate) -> np.ndarray:
    """Map knot indices back to signed magnitudes."""
    n_steps = (1 << qu.bits) - 1
    if qu.hi == qu.lo:
        mags = np.full(qu.levels.shape, qu.lo, dtype=np.float64)
    else:
        mags = qu.lo + qu.levels * ((qu.hi - qu.lo) / n_steps)
    return qu.signs * mags


def payload_bits(d: int, b: int, q: int) -> int:
    """Bits per quantized update: d magnitude+sign entries plus range side info."""
    if d < 1:
        raise ValueError("model dimension must be at least 1")
    if b < 1:
        raise ValueError("quantization bits must be at least 1")
    if q < 0:
        raise ValueError("side-info bits cannot be negative")
    return d * (b + 1) + q


def quantizer_variance_bound(range_sq: float, b: int) -> float:
    """Worst-case expected squared quantization error for a bounded range.

    range_sq / (2^b - 1)^2, where range_sq uniformly bounds
    (d/4) * (hi - lo)^2 over the vectors being quantized.
    """
    if range_sq < 0:
        raise ValueError("range bound cannot be negative")
    if b < 1:
        raise ValueError("quantization bits must be at least 1")
    steps = (1 << int(b)) - 1
    return range_sq / (steps * steps)
