"""Core signal value types and fixed-point quantization primitives.

Two representations flow through the package: analog-domain records
(:class:`SignalRecord`, real amplitudes) and quantized records
(:class:`QuantizedRecord`, two's-complement integer codes with an explicit
:class:`FixedPointFormat`).  Quantization uses floor rounding (toward minus
infinity, the behaviour of an arithmetic right shift) and saturates on
overflow; wraparound would alias large excursions into spurious transients.

Record files are stored as little-endian float32 samples with a sidecar
``<path>.hdr`` text header (``key=value`` lines), or as a CSV with one sample
per line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SignalRecord",
    "FixedPointFormat",
    "QuantizedRecord",
    "quantize",
    "quantize_mid_tread",
    "dequantize",
    "truncate_to",
    "save_record",
    "load_record",
    "read_header",
]


@dataclass(frozen=True)
class SignalRecord:
    """One channel's sample sequence in normalized amplitude units.

    Full scale is nominally [-1, +1); nothing enforces that bound, it is the
    convention the quantizer's ``full_scale`` argument maps onto.
    """

    samples: np.ndarray
    rate_hz: float
    channel_id: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.channel_id < 0:
            raise ValueError(f"channel_id must be non-negative, got {self.channel_id}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must all be finite")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.rate_hz


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed two's-complement integer format, ``total_bits`` wide.

    Rounding is floor everywhere (arithmetic right shift semantics) and range
    overflow saturates rather than wraps.
    """

    total_bits: int
    signed: bool = True
    saturating: bool = True
    rounding: str = "floor"

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise ValueError(f"total_bits must be in 2..32, got {self.total_bits}")
        if not self.signed:
            raise ValueError("only signed formats are supported")
        if self.rounding != "floor":
            raise ValueError(f"unsupported rounding mode {self.rounding!r}")

    @property
    def min_code(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_code(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    def contains(self, codes) -> bool:
        codes = np.asarray(codes)
        if codes.size == 0:
            return True
        return bool(codes.min() >= self.min_code and codes.max() <= self.max_code)


@dataclass(frozen=True)
class QuantizedRecord:
    """Integer-coded channel data plus the format and scale that produced it.

    ``full_scale`` is the amplitude mapped onto ``2**(total_bits-1)`` codes,
    i.e. the amplitude one LSB above the maximum positive code.
    """

    codes: np.ndarray
    format: FixedPointFormat
    rate_hz: float
    channel_id: int = 0
    full_scale: float = 1.0

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        object.__setattr__(self, "codes", codes)
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.full_scale <= 0:
            raise ValueError(f"full_scale must be positive, got {self.full_scale}")
        if not self.format.contains(codes):
            raise ValueError(
                f"codes outside {self.format.total_bits}-bit range "
                f"[{self.format.min_code}, {self.format.max_code}]"
            )

    def __len__(self) -> int:
        return len(self.codes)


def quantize(record: SignalRecord, format: FixedPointFormat, full_scale: float) -> QuantizedRecord:
    """Map real amplitudes to saturating two's-complement codes.

    ``code[k] = clamp(floor(samples[k] / full_scale * 2**(total_bits-1)))``.
    """
    if full_scale <= 0:
        raise ValueError(f"full_scale must be positive, got {full_scale}")
    x = record.samples
    if x.size and not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite samples")
    half = 1 << (format.total_bits - 1)
    codes = np.floor(x / full_scale * half).astype(np.int64)
    codes = np.clip(codes, format.min_code, format.max_code)
    return QuantizedRecord(
        codes=codes,
        format=format,
        rate_hz=record.rate_hz,
        channel_id=record.channel_id,
        full_scale=full_scale,
    )


def dequantize(q: QuantizedRecord) -> SignalRecord:
    """Map codes back to amplitudes: ``samples[k] = code[k] / 2**(bits-1) * full_scale``."""
    half = 1 << (q.format.total_bits - 1)
    samples = q.codes.astype(np.float64) / half * q.full_scale
    return SignalRecord(samples=samples, rate_hz=q.rate_hz, channel_id=q.channel_id)


def quantize_mid_tread(record: SignalRecord, format: FixedPointFormat, full_scale: float) -> QuantizedRecord:
    """Quantize with a half-LSB input offset ahead of the floor quantizer.

    Models a mid-tread converter front-end (the usual ADC offset trim): the
    floor quantizer alone centers each code bin on its lower edge, which
    leaves a half-LSB DC pedestal on the codes.  At fine resolution that bias
    is negligible; at coarse resolution it dominates the noise and breaks any
    one-sided statistic downstream, so the pipelines quantize through this
    entry point.  Rounding stays floor; only the bin centering changes.
    """
    half_lsb = full_scale / (1 << format.total_bits)
    shifted = SignalRecord(
        samples=record.samples + half_lsb,
        rate_hz=record.rate_hz,
        channel_id=record.channel_id,
    )
    return quantize(shifted, format, full_scale)


def truncate_to(value, target: FixedPointFormat, drop_lsbs: int = 0):
    """Arithmetic-right-shift ``value`` by ``drop_lsbs`` and saturate into ``target``.

    Floor semantics for negatives: ``truncate_to(-7, fmt, 1) == -4``.  Accepts
    scalars or integer arrays; arrays come back as int64.
    """
    if drop_lsbs < 0:
        raise ValueError(f"drop_lsbs must be >= 0, got {drop_lsbs}")
    if isinstance(value, np.ndarray):
        shifted = value.astype(np.int64) >> drop_lsbs
        return np.clip(shifted, target.min_code, target.max_code)
    shifted = int(value) >> drop_lsbs
    return min(max(shifted, target.min_code), target.max_code)


# ---------------------------------------------------------------------------
# Record file I/O: float32 payload + sidecar header, or CSV payload
# ---------------------------------------------------------------------------

_HEADER_SUFFIX = ".hdr"


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + _HEADER_SUFFIX)


def read_header(path) -> dict:
    """Parse the sidecar ``key=value`` header for a record data file."""
    hdr_path = _header_path(Path(path))
    if not hdr_path.exists():
        raise FileNotFoundError(f"missing header file {hdr_path}")
    header: dict = {}
    for lineno, raw in enumerate(hdr_path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{hdr_path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        header[key.strip()] = val.strip()
    for key in ("rate_hz", "channel_id", "n_samples"):
        if key not in header:
            raise ValueError(f"{hdr_path}: missing required header key {key!r}")
    return header


def save_record(record: SignalRecord, path, full_scale: float | None = None) -> None:
    """Write a record to ``path`` (float32 raw, or CSV when path ends in .csv).

    The sidecar header lands at ``<path>.hdr``.  ``full_scale`` defaults to the
    record's max absolute amplitude (1.0 for an all-zero record), which is the
    per-record normalization the quantizing pipelines use.
    """
    path = Path(path)
    if full_scale is None:
        peak = float(np.max(np.abs(record.samples))) if len(record) else 0.0
        full_scale = peak if peak > 0 else 1.0
    if path.suffix == ".csv":
        lines = "\n".join(repr(float(v)) for v in record.samples)
        path.write_text(lines + ("\n" if len(record) else ""))
    else:
        record.samples.astype("<f4").tofile(path)
    header = (
        f"rate_hz={record.rate_hz!r}\n"
        f"channel_id={record.channel_id}\n"
        f"full_scale={full_scale!r}\n"
        f"n_samples={len(record)}\n"
    )
    _header_path(path).write_text(header)


def load_record(path) -> SignalRecord:
    """Load a record written by :func:`save_record`, validating the header.

    A sample count that contradicts ``n_samples`` in the header is rejected.
    """
    path = Path(path)
    header = read_header(path)
    if path.suffix == ".csv":
        samples = []
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                samples.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {raw!r}") from None
        samples = np.asarray(samples, dtype=np.float64)
    else:
        samples = np.fromfile(path, dtype="<f4").astype(np.float64)
    n_expected = int(header["n_samples"])
    if len(samples) != n_expected:
        raise ValueError(
            f"{path}: header says {n_expected} samples, file holds {len(samples)}"
        )
    return SignalRecord(
        samples=samples,
        rate_hz=float(header["rate_hz"]),
        channel_id=int(header["channel_id"]),
    )
