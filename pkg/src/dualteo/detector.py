"""End-to-end spike detectors and crossing-to-event formation.

The dual detector runs two energy paths in parallel: the Teager energy of the
raw signal, and the Teager energy of the two-sample-smoothed signal.  The raw
path keys on sharp transients and wins when high-frequency noise is limited;
the smoothed path survives high-frequency noise at the cost of some edge
sharpness.  A sample crosses when either stream exceeds its adaptive
threshold, and the OR of the two boolean streams feeds event formation.

A single sigma estimator observes the smoothed signal and feeds both
thresholds; detections are suppressed for the first warm-up frames while it
converges.  Event formation merges crossing runs closer than a refractory gap
(1 ms by default) and aligns each event on the energy peak among its crossing
samples, ties to the earliest.

Amplitude-domain baselines (absolute threshold, dual-vertex threshold, moving
average energy) use the record's global standard deviation as their noise
scale, so their thresholds are exactly scale-equivariant.  Their default
multiples were tuned on the bundled synthetic corpus by
``scripts/calibrate_defaults.py``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .signal_model import SignalRecord
from .threshold import (
    EstimatorConfig,
    SIGMA_FRACTION_BITS,
    ThresholdCoefficients,
    compute_thresholds_q10,
    default_float_coefficients,
    sigma_frames,
)
from .transforms import smooth2, teo

__all__ = [
    "SpikeEvent",
    "EventFormationConfig",
    "DetectorKind",
    "PreparedDual",
    "form_events",
    "prepare_dual",
    "finish_dual",
    "dual_crossing_streams",
    "detect_dual",
    "detect_teo_single",
    "detect_at",
    "detect_dvt",
    "detect_mae",
    "detect",
    "moving_average_energy",
    "events_to_csv",
    "events_from_csv",
    "event_indices",
]

# Tuned on the bundled synthetic corpus (scripts/calibrate_defaults.py).
DEFAULT_AT_MULTIPLE = 4.0
DEFAULT_DVT_POS_MULTIPLE = 4.0
DEFAULT_DVT_NEG_MULTIPLE = 4.0
DEFAULT_MAE_WINDOW = 8
DEFAULT_MAE_MULTIPLE = 9.0


@dataclass(frozen=True)
class SpikeEvent:
    channel_id: int
    sample_index: int


@dataclass(frozen=True)
class EventFormationConfig:
    """Run merging and alignment policy for turning crossings into events."""

    refractory_samples: int
    alignment: str = "teo_peak"  # or "crossing_start"

    def __post_init__(self):
        if self.refractory_samples < 1:
            raise ValueError("refractory_samples must be >= 1")
        if self.alignment not in ("teo_peak", "crossing_start"):
            raise ValueError(f"unknown alignment {self.alignment!r}")

    @classmethod
    def for_rate(cls, rate_hz: float, alignment: str = "teo_peak") -> "EventFormationConfig":
        """Default refractory of 1 ms at the given sampling rate."""
        return cls(refractory_samples=max(1, round(rate_hz / 1000.0)), alignment=alignment)


class DetectorKind(Enum):
    DUAL = "dual"
    AT = "at"
    DVT = "dvt"
    MAE = "mae"
    TEO_SINGLE = "teo_single"


def form_events(crossings, teo_values, cfg: EventFormationConfig, channel_id: int = 0) -> list[SpikeEvent]:
    """Merge crossing runs separated by less than the refractory gap into events.

    The gap between two crossing samples is their index difference; runs whose
    gap is below ``refractory_samples`` belong to one event.  Alignment picks
    the maximum of ``teo_values`` over the event's crossing samples (earliest
    on ties), or the first crossing sample with ``crossing_start``.  Any two
    returned events are at least ``refractory_samples`` apart.
    """
    crossings = np.asarray(crossings, dtype=bool)
    teo_values = np.asarray(teo_values)
    if len(crossings) != len(teo_values):
        raise ValueError("crossings and teo_values must have the same length")
    idx = np.flatnonzero(crossings)
    if idx.size == 0:
        return []
    splits = np.flatnonzero(np.diff(idx) >= cfg.refractory_samples) + 1
    events = []
    for group in np.split(idx, splits):
        if cfg.alignment == "teo_peak":
            pos = int(group[int(np.argmax(teo_values[group]))])
        else:
            pos = int(group[0])
        events.append(SpikeEvent(channel_id=channel_id, sample_index=pos))
    return events


# ---------------------------------------------------------------------------
# Dual pipeline, split into a coefficient-independent prepare step and a
# cheap finish step so calibration can sweep coefficients without redoing
# transforms or the sigma trajectory.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedDual:
    """Per-record transform and sigma work, ready for thresholding."""

    x_energy: np.ndarray        # raw-path energy stream
    s_energy: np.ndarray        # smoothed-path energy stream
    sigma_per_frame: np.ndarray  # sigma in effect during each frame
    align: np.ndarray           # alignment signal for event formation
    frame_len: int
    warmup_samples: int
    rate_hz: float
    channel_id: int
    integer_domain: bool
    event_cfg: EventFormationConfig

    @property
    def n(self) -> int:
        return len(self.x_energy)

    def tolerance_samples(self, tolerance_ms: float = 1.0) -> int:
        return max(0, round(self.rate_hz * tolerance_ms / 1000.0))


def prepare_dual(
    record: SignalRecord,
    *,
    estimator: EstimatorConfig = EstimatorConfig(),
    event_cfg: EventFormationConfig | None = None,
    pipeline: str = "float",
    hw_cfg=None,
) -> PreparedDual:
    """Run the coefficient-independent part of the dual pipeline.

    With ``pipeline="hw"`` the record is quantized and processed by the
    integer pipeline at its native rate (see :mod:`dualteo.hw_model`).
    """
    if pipeline == "hw":
        from . import hw_model
        return hw_model.prepare_hw_dual(
            record, cfg=hw_cfg, estimator=estimator, event_cfg=event_cfg
        )
    if pipeline != "float":
        raise ValueError(f"unknown pipeline {pipeline!r}")
    x = record.samples
    s = smooth2(x)
    x_energy = teo(x).values
    s_energy = teo(s).values
    sig = sigma_frames(s, estimator)
    cfg = event_cfg if event_cfg is not None else EventFormationConfig.for_rate(record.rate_hz)
    return PreparedDual(
        x_energy=x_energy,
        s_energy=s_energy,
        sigma_per_frame=sig,
        align=np.maximum(x_energy, s_energy),
        frame_len=estimator.frame_len,
        warmup_samples=estimator.warmup_samples,
        rate_hz=record.rate_hz,
        channel_id=record.channel_id,
        integer_domain=False,
        event_cfg=cfg,
    )


def dual_crossing_streams(prep: PreparedDual, coeffs: ThresholdCoefficients):
    """Boolean crossing streams (raw path, smoothed path) before warm-up gating."""
    n = prep.n
    L = prep.frame_len
    if n == 0:
        empty = np.zeros(0, dtype=bool)
        return empty, empty
    if prep.integer_domain:
        thr_x_f, thr_s_f = compute_thresholds_q10(prep.sigma_per_frame, coeffs)
        thr_x = np.repeat(thr_x_f, L)[:n]
        thr_s = np.repeat(thr_s_f, L)[:n]
        cross_x = (prep.x_energy << SIGMA_FRACTION_BITS) > thr_x
        cross_s = (prep.s_energy << SIGMA_FRACTION_BITS) > thr_s
    else:
        sig = prep.sigma_per_frame
        thr_x_f = coeffs.c1.value * sig
        thr_s_f = coeffs.c2.value * sig + coeffs.c3.value * sig * sig
        thr_x = np.repeat(thr_x_f, L)[:n]
        thr_s = np.repeat(thr_s_f, L)[:n]
        cross_x = prep.x_energy > thr_x
        cross_s = prep.s_energy > thr_s
    return cross_x, cross_s


def finish_dual(prep: PreparedDual, coeffs: ThresholdCoefficients) -> list[SpikeEvent]:
    """Threshold, OR, gate the warm-up region, and form events."""
    cross_x, cross_s = dual_crossing_streams(prep, coeffs)
    crossings = cross_x | cross_s
    crossings[: prep.warmup_samples] = False
    return form_events(crossings, prep.align, prep.event_cfg, prep.channel_id)


def _check_warmup(record: SignalRecord, estimator: EstimatorConfig) -> bool:
    if len(record) <= estimator.warmup_samples:
        warnings.warn(
            f"record of {len(record)} samples does not outlast the "
            f"{estimator.warmup_samples}-sample warm-up; no detections possible",
            stacklevel=3,
        )
        return False
    return True


def detect_dual(
    record: SignalRecord,
    coeffs: ThresholdCoefficients | None = None,
    cfg: EventFormationConfig | None = None,
    *,
    estimator: EstimatorConfig = EstimatorConfig(),
) -> list[SpikeEvent]:
    """Dual-path detection on a floating-point record."""
    if coeffs is None:
        coeffs = default_float_coefficients()
    if not _check_warmup(record, estimator):
        return []
    prep = prepare_dual(record, estimator=estimator, event_cfg=cfg)
    return finish_dual(prep, coeffs)


def detect_teo_single(
    record: SignalRecord,
    coeffs: ThresholdCoefficients | None = None,
    cfg: EventFormationConfig | None = None,
    *,
    estimator: EstimatorConfig = EstimatorConfig(),
) -> list[SpikeEvent]:
    """Raw-path-only detection; its crossing set is a subset of the dual's."""
    if coeffs is None:
        coeffs = default_float_coefficients()
    if not _check_warmup(record, estimator):
        return []
    prep = prepare_dual(record, estimator=estimator, event_cfg=cfg)
    cross_x, _ = dual_crossing_streams(prep, coeffs)
    cross_x = cross_x.copy()
    cross_x[: prep.warmup_samples] = False
    return form_events(cross_x, prep.x_energy, prep.event_cfg, prep.channel_id)


# ---------------------------------------------------------------------------
# Amplitude-domain baselines
# ---------------------------------------------------------------------------


def detect_at(
    record: SignalRecord,
    threshold_multiple: float = DEFAULT_AT_MULTIPLE,
    cfg: EventFormationConfig | None = None,
) -> list[SpikeEvent]:
    """Absolute thresholding: ``|x| > multiple * std(x)``, aligned on the |x| peak."""
    x = record.samples
    thr = threshold_multiple * float(np.std(x)) if len(x) else 0.0
    mag = np.abs(x)
    crossings = mag > thr
    cfg = cfg if cfg is not None else EventFormationConfig.for_rate(record.rate_hz)
    return form_events(crossings, mag, cfg, record.channel_id)


def detect_dvt(
    record: SignalRecord,
    pos_multiple: float = DEFAULT_DVT_POS_MULTIPLE,
    neg_multiple: float = DEFAULT_DVT_NEG_MULTIPLE,
    cfg: EventFormationConfig | None = None,
) -> list[SpikeEvent]:
    """Dual-vertex thresholding with independent positive and negative levels."""
    x = record.samples
    sd = float(np.std(x)) if len(x) else 0.0
    crossings = (x > pos_multiple * sd) | (x < -neg_multiple * sd)
    cfg = cfg if cfg is not None else EventFormationConfig.for_rate(record.rate_hz)
    return form_events(crossings, np.abs(x), cfg, record.channel_id)


def moving_average_energy(x, window: int = DEFAULT_MAE_WINDOW) -> np.ndarray:
    """Trailing-window mean of squared samples; the window grows during warm-in.

    ``e[k]`` averages ``min(k+1, window)`` trailing squares, so a constant
    record maps to its squared value everywhere.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n == 0:
        return np.zeros(0)
    cs = np.concatenate(([0.0], np.cumsum(x * x)))
    e = np.empty(n)
    head = min(window - 1, n)
    e[:head] = cs[1 : head + 1] / np.arange(1, head + 1)
    if n >= window:
        e[window - 1 :] = (cs[window:] - cs[:-window]) / window
    return e


def detect_mae(
    record: SignalRecord,
    window: int = DEFAULT_MAE_WINDOW,
    threshold_multiple: float = DEFAULT_MAE_MULTIPLE,
    cfg: EventFormationConfig | None = None,
) -> list[SpikeEvent]:
    """Moving-average-energy detection: ``e > multiple * var(x)``."""
    x = record.samples
    e = moving_average_energy(x, window)
    thr = threshold_multiple * float(np.var(x)) if len(x) else 0.0
    crossings = e > thr
    cfg = cfg if cfg is not None else EventFormationConfig.for_rate(record.rate_hz)
    return form_events(crossings, e, cfg, record.channel_id)


def detect(
    record: SignalRecord,
    kind: DetectorKind,
    cfg: EventFormationConfig | None = None,
    estimator: EstimatorConfig = EstimatorConfig(),
    **kwargs,
) -> list[SpikeEvent]:
    """Dispatch to one detector by kind, with each detector's default tuning.

    ``estimator`` applies to the adaptive-threshold detectors only.
    """
    if kind == DetectorKind.DUAL:
        return detect_dual(record, cfg=cfg, estimator=estimator, **kwargs)
    if kind == DetectorKind.TEO_SINGLE:
        return detect_teo_single(record, cfg=cfg, estimator=estimator, **kwargs)
    if kind == DetectorKind.AT:
        return detect_at(record, cfg=cfg, **kwargs)
    if kind == DetectorKind.DVT:
        return detect_dvt(record, cfg=cfg, **kwargs)
    if kind == DetectorKind.MAE:
        return detect_mae(record, cfg=cfg, **kwargs)
    raise ValueError(f"unknown detector kind {kind!r}")


# ---------------------------------------------------------------------------
# Event list file format
# ---------------------------------------------------------------------------


def events_to_csv(events: list[SpikeEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "sample_index"])
        for ev in events:
            writer.writerow([ev.channel_id, ev.sample_index])


def events_from_csv(path) -> list[SpikeEvent]:
    events = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["channel", "sample_index"]:
            raise ValueError(f"{path}: expected header 'channel,sample_index'")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: malformed row {row!r}")
            events.append(SpikeEvent(channel_id=int(row[0]), sample_index=int(row[1])))
    return events


def event_indices(events: list[SpikeEvent]) -> np.ndarray:
    return np.asarray([ev.sample_index for ev in events], dtype=np.int64)
