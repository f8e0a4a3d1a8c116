"""Fixed-point coding of reals as residues modulo n.

A real x maps to round(x / delta) mod n, with negatives occupying the upper
half of the residue range.  Multiplying two coded values multiplies their
scales, so one plaintext-by-ciphertext product moves data from scale delta
to delta**2; `requantize` brings it back.  Every decode in the package goes
through `decode_residue` so that plant, verifier, and reference results stay
bit-identical.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

DELTA_DEFAULT = 1e-4


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero (not banker's)."""
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def max_representable(delta: float, n: int) -> float:
    """Largest magnitude that encodes without wrapping the signed range."""
    return (n - 1) // 2 * delta


def encode_residue(x: float, delta: float, n: int) -> int:
    """Quantize x at resolution delta and reduce into [0, n)."""
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite value {x!r}")
    q = round_half_away(x / delta)
    if abs(q) > (n - 1) // 2:
        raise OverflowError(
            f"|{x}| exceeds the representable range {max_representable(delta, n)} "
            f"at resolution {delta}"
        )
    return q % n


def decode_residue(residue: int, delta: float, n: int) -> float:
    """Invert encode_residue: residues above n/2 are negative."""
    if not 0 <= residue < n:
        raise ValueError(f"residue {residue} outside [0, n)")
    if residue > n // 2:
        residue -= n
    return residue * delta


def requantize(residue: int, from_delta: float, to_delta: float, n: int) -> int:
    """Re-code a residue at a new resolution (e.g. delta**2 back to delta)."""
    return encode_residue(decode_residue(residue, from_delta, n), to_delta, n)


def encode_vector(values: Iterable[float], delta: float, n: int) -> tuple[int, ...]:
    return tuple(encode_residue(v, delta, n) for v in values)


def decode_vector(residues: Sequence[int], delta: float, n: int) -> tuple[float, ...]:
    return tuple(decode_residue(r, delta, n) for r in residues)
