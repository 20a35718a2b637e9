"""Event matching, the detection-accuracy metric, and sweep harnesses.

Accuracy is the ratio of correctly detected spikes (true positives) to the
total of detected (TP + FP) and missed (FN) spikes: ``tp / (tp + fp + fn)``.
Matching is greedy one-to-one in time order, each truth spike taking the
nearest unmatched detection within the tolerance window; with inter-spike
gaps above twice the tolerance this equals the optimal assignment.

Benchmark scoring excludes the estimator warm-up region: detectors emit
nothing there by construction, so truth spikes inside it are dropped from the
denominator rather than booked as misses.

Sweeps reproduce mean-accuracy curves against noise level, input resolution,
or sampling rate; for the latter two the noise level is fixed at 0.1 and each
replicate's base record is transformed per axis point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import detector as _detector
from .dataio import GroundTruth, SyntheticConfig, generate, rescale_ground_truth, resample
from .detector import DetectorKind, SpikeEvent, event_indices
from .signal_model import FixedPointFormat, dequantize, quantize_mid_tread
from .threshold import EstimatorConfig

__all__ = [
    "MatchReport",
    "SweepSpec",
    "SweepResult",
    "match_events",
    "accuracy",
    "score_events",
    "sweep",
    "report",
    "parse_results_csv",
]

DEFAULT_TOLERANCE_MS = 1.0
RESULTS_HEADER = "axis,point,detector,mean_accuracy,std_accuracy,replicates"


@dataclass(frozen=True)
class MatchReport:
    tp: int
    fp: int
    fn: int
    tolerance_samples: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tolerance_samples) < 0:
            raise ValueError("match report fields must be non-negative")

    @property
    def n_detected(self) -> int:
        return self.tp + self.fp

    @property
    def n_truth(self) -> int:
        return self.tp + self.fn


def match_events(
    detected: list[SpikeEvent] | np.ndarray,
    truth: GroundTruth,
    tolerance_samples: int,
) -> MatchReport:
    """Greedy one-to-one matching of detections to truth spikes.

    Truth spikes are visited in time order; each takes the nearest unmatched
    detection within ``tolerance_samples`` (earlier detection on distance
    ties).  Leftover detections are false positives, leftover truths are
    misses.  Bookkeeping identities ``tp + fp == detected`` and
    ``tp + fn == truth`` always hold.
    """
    if tolerance_samples < 0:
        raise ValueError("tolerance_samples must be >= 0")
    det = np.sort(np.asarray(
        event_indices(detected) if isinstance(detected, list) else detected,
        dtype=np.int64,
    ))
    tru = truth.spike_indices
    taken = np.zeros(len(det), dtype=bool)
    tp = 0
    for t in tru:
        lo = np.searchsorted(det, t - tolerance_samples, side="left")
        hi = np.searchsorted(det, t + tolerance_samples, side="right")
        best = -1
        best_dist = None
        for j in range(lo, hi):
            if taken[j]:
                continue
            dist = abs(int(det[j]) - int(t))
            if best_dist is None or dist < best_dist:
                best, best_dist = j, dist
        if best >= 0:
            taken[best] = True
            tp += 1
    report = MatchReport(
        tp=tp,
        fp=len(det) - tp,
        fn=len(tru) - tp,
        tolerance_samples=tolerance_samples,
    )
    assert report.n_detected == len(det) and report.n_truth == len(tru)
    return report


def accuracy(report: MatchReport) -> float:
    """``tp / (tp + fp + fn)``; undefined (raises) when all three are zero."""
    denom = report.tp + report.fp + report.fn
    if denom == 0:
        raise ValueError("accuracy undefined for an all-zero match report")
    return report.tp / denom


def score_events(
    detected: list[SpikeEvent],
    truth: GroundTruth,
    tolerance_samples: int,
    skip_before: int = 0,
) -> MatchReport:
    """Match after dropping truth spikes and detections inside the warm-up region."""
    det = event_indices(detected)
    det = det[det >= skip_before]
    tru_idx = truth.spike_indices[truth.spike_indices >= skip_before]
    return match_events(det, GroundTruth(spike_indices=tru_idx), tolerance_samples)


# ---------------------------------------------------------------------------
# Sweep harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    axis: str                      # "noise_level" | "resolution_bits" | "rate_hz"
    points: tuple
    detectors: tuple               # DetectorKind members
    replicates: int = 10
    base_cfg: SyntheticConfig = SyntheticConfig()
    tolerance_ms: float = DEFAULT_TOLERANCE_MS

    def __post_init__(self):
        if self.axis not in ("noise_level", "resolution_bits", "rate_hz"):
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        points = tuple(self.points)
        if not points:
            raise ValueError("a sweep needs at least one point")
        if list(points) != sorted(points):
            raise ValueError("sweep points must be sorted")
        object.__setattr__(self, "points", points)
        detectors = tuple(
            d if isinstance(d, DetectorKind) else DetectorKind(d) for d in self.detectors
        )
        if not detectors:
            raise ValueError("at least one detector required")
        object.__setattr__(self, "detectors", detectors)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


@dataclass(frozen=True)
class SweepResult:
    axis: str
    point: float
    detector: DetectorKind
    mean_accuracy: float
    std_accuracy: float
    replicates: int


def _replicate_dataset(spec: SweepSpec, replicate: int, noise_level: float):
    cfg = replace(spec.base_cfg, noise_level=noise_level, seed=spec.base_cfg.seed + replicate)
    return generate(cfg)


def _transform_for_point(spec, record, truth, point):
    """Apply the swept-axis transformation to one base record."""
    if spec.axis == "noise_level":
        return record, truth
    if spec.axis == "resolution_bits":
        fmt = FixedPointFormat(total_bits=int(point))
        peak = float(np.max(np.abs(record.samples)))
        q = quantize_mid_tread(record, fmt, full_scale=peak if peak > 0 else 1.0)
        return dequantize(q), truth
    if spec.axis == "rate_hz":
        resampled = resample(record, float(point))
        truth_r = rescale_ground_truth(truth, record.rate_hz, float(point), len(resampled))
        return resampled, truth_r
    raise ValueError(spec.axis)


def sweep(spec: SweepSpec, estimator: EstimatorConfig = EstimatorConfig()) -> list[SweepResult]:
    """Run the full (point x detector x replicate) grid and aggregate accuracy.

    For the resolution and rate axes the noise level is fixed at 0.1.  Results
    are bit-reproducible given the spec: replicate r uses seed
    ``base_cfg.seed + r``, and the same base record feeds every axis point.
    """
    results = []
    fixed_noise = 0.1 if spec.axis != "noise_level" else None
    # cell accuracies keyed by (point, detector)
    acc: dict = {(p, d): [] for p in spec.points for d in spec.detectors}
    for r in range(spec.replicates):
        noise = fixed_noise if fixed_noise is not None else None
        if spec.axis == "noise_level":
            bases = {
                p: _replicate_dataset(spec, r, noise_level=float(p)) for p in spec.points
            }
        else:
            base = _replicate_dataset(spec, r, noise_level=fixed_noise)
            bases = {p: base for p in spec.points}
        for p in spec.points:
            record, truth = bases[p]
            try:
                record_p, truth_p = _transform_for_point(spec, record, truth, p)
                tol = max(0, round(record_p.rate_hz * spec.tolerance_ms / 1000.0))
                for d in spec.detectors:
                    events = _detector.detect(record_p, d, estimator=estimator)
                    rep = score_events(events, truth_p, tol, skip_before=estimator.warmup_samples)
                    denom = rep.tp + rep.fp + rep.fn
                    acc[(p, d)].append(accuracy(rep) if denom else 1.0)
            except Exception as exc:
                raise RuntimeError(
                    f"sweep cell failed: axis={spec.axis} point={p} replicate={r}"
                ) from exc
    for p in spec.points:
        for d in spec.detectors:
            vals = np.asarray(acc[(p, d)])
            results.append(
                SweepResult(
                    axis=spec.axis,
                    point=float(p),
                    detector=d,
                    mean_accuracy=float(vals.mean()),
                    std_accuracy=float(vals.std()),
                    replicates=len(vals),
                )
            )
    return results


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------


def report(results: list[SweepResult], format: str = "csv", path=None) -> str:
    """Render results as CSV text, or a self-contained plotting script.

    With ``path`` given the text is also written there.  The plot script reads
    the CSV named alongside it and draws one accuracy curve per detector.
    """
    if format == "csv":
        lines = [RESULTS_HEADER]
        for r in results:
            lines.append(
                f"{r.axis},{r.point:g},{r.detector.value},"
                f"{r.mean_accuracy:.6f},{r.std_accuracy:.6f},{r.replicates}"
            )
        text = "\n".join(lines) + "\n"
    elif format == "plot_script":
        csv_name = "sweep_results.csv"
        text = _PLOT_TEMPLATE.format(csv_name=csv_name)
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def parse_results_csv(text: str) -> list[SweepResult]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != RESULTS_HEADER:
        raise ValueError("missing results header")
    out = []
    for ln in lines[1:]:
        axis, point, det, mean, std, reps = ln.split(",")
        out.append(
            SweepResult(
                axis=axis,
                point=float(point),
                detector=DetectorKind(det),
                mean_accuracy=float(mean),
                std_accuracy=float(std),
                replicates=int(reps),
            )
        )
    return out


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot mean detection accuracy per detector from {csv_name}."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

curves = defaultdict(list)
with open("{csv_name}") as fh:
    for row in csv.DictReader(fh):
        curves[row["detector"]].append(
            (float(row["point"]), float(row["mean_accuracy"]), float(row["std_accuracy"]))
        )

fig, ax = plt.subplots(figsize=(5, 3.5))
axis_label = None
for detector, pts in sorted(curves.items()):
    pts.sort()
    xs = [p for p, _, _ in pts]
    ys = [100 * m for _, m, _ in pts]
    es = [100 * s for _, _, s in pts]
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2, label=detector)
ax.set_xlabel("sweep point")
ax.set_ylabel("mean detection accuracy (%)")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig("sweep_results.png", dpi=150)
print("wrote sweep_results.png")
'''
