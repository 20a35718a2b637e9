"""Teager energy transform and the two-sample smoother.

The energy transform is ``out[k] = x[k]**2 - x[k+1]*x[k-1]``; it annihilates
constants, maps a unit ramp to 1, and scales quadratically with amplitude,
which is what buys the quadratic spike-to-noise separation downstream.  The
sequence edges have no defined value, so both ends emit 0: an edge artifact
must never raise a spike.

The smoother is a trailing two-sample average, ``s[k] = (x[k] + x[k-1]) / 2``
with ``s[0] = x[0]``.  Its fixed-point form is an exact half-sum,
``(x[k] + x[k-1]) >> 1``: the half-sum of 7-bit codes spans the full 7-bit
input range and is carried at half-LSB weight, which is where the narrower
nominal width of the smoothed stream comes from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import FixedPointFormat, truncate_to

__all__ = ["TeoOutput", "teo", "smooth2", "teo_fixed", "smooth2_fixed"]


@dataclass(frozen=True)
class TeoOutput:
    """Energy-transform output, same length as its input, zero at both ends."""

    values: np.ndarray
    domain: str = "real"  # "real" or "integer"

    def __post_init__(self):
        if self.domain not in ("real", "integer"):
            raise ValueError(f"domain must be 'real' or 'integer', got {self.domain!r}")
        n = len(self.values)
        if n and (self.values[0] != 0 or self.values[n - 1] != 0):
            raise ValueError("boundary values must be zero")

    def __len__(self) -> int:
        return len(self.values)


def teo(x) -> TeoOutput:
    """Teager energy of a real sequence; inputs shorter than 3 come back all zero."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    if len(x) >= 3:
        out[1:-1] = x[1:-1] ** 2 - x[2:] * x[:-2]
    return TeoOutput(values=out, domain="real")


def smooth2(x) -> np.ndarray:
    """Trailing two-sample average; the first sample passes through unchanged."""
    x = np.asarray(x, dtype=np.float64)
    s = x.copy()
    if len(x) >= 2:
        s[1:] = (x[1:] + x[:-1]) / 2.0
    return s


def teo_fixed(
    x,
    input_format: FixedPointFormat,
    out_format: FixedPointFormat,
    drop_lsbs: int = 0,
) -> TeoOutput:
    """Integer Teager energy: exact interior arithmetic, then shift-and-saturate.

    Interior values are computed exactly in integers, arithmetic-right-shifted
    by ``drop_lsbs``, and saturated into ``out_format``.  Boundaries stay 0.
    """
    x = np.asarray(x, dtype=np.int64)
    if not input_format.contains(x):
        raise ValueError(
            f"input codes outside {input_format.total_bits}-bit range"
        )
    out = np.zeros_like(x)
    if len(x) >= 3:
        exact = x[1:-1] * x[1:-1] - x[2:] * x[:-2]
        out[1:-1] = truncate_to(exact, out_format, drop_lsbs)
    return TeoOutput(values=out, domain="integer")


def smooth2_fixed(x) -> np.ndarray:
    """Exact integer half-sum smoother: ``s[k] = (x[k] + x[k-1]) >> 1``.

    ``s[0] = (2*x[0]) >> 1 = x[0]``.  For 7-bit inputs the output also lies in
    [-64, 63]; no saturation is ever exercised.
    """
    x = np.asarray(x, dtype=np.int64)
    s = x.copy()
    if len(x) >= 2:
        s[1:] = (x[1:] + x[:-1]) >> 1
    return s
