"""Online noise-scale estimation and adaptive threshold computation.

The estimator never computes a statistical standard deviation.  It keeps a
scalar ``sigma`` and, over 256-sample frames, counts how many smoothed samples
strictly exceed it.  At each frame boundary sigma moves by
``scaling_factor * (count - convergence_factor)``, so the loop converges to
the level exceeded by ``convergence_factor`` samples per frame, i.e. the
(1 - 20/256) quantile of the observed distribution with the defaults.  Small
factors make the estimate stable at the cost of convergence latency, which is
why detection is suppressed for the first ``warmup_frames`` frames.

Thresholds for the two energy streams are low-order polynomials in sigma,

    thr_x = c1 * sigma
    thr_s = c2 * sigma + c3 * sigma**2

with coefficients restricted to signed dyadic rationals (numerator * 2**-shift,
numerator holding at most two set bits) so the integer pipeline can realize
them with shifts and adds.  The quadratic term lets thr_s track the noise
floor of the energy domain, which grows with sigma squared.

Shipped default coefficients are the output of :func:`calibrate_coefficients`
on the bundled synthetic corpus; see ``data/`` and ``scripts/calibrate_defaults.py``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "SigmaEstimatorState",
    "EstimatorConfig",
    "ThresholdCoefficients",
    "ThresholdPair",
    "Dyadic",
    "estimator_step",
    "sigma_frames",
    "sigma_frames_q10",
    "initial_sigma_q10",
    "compute_thresholds",
    "compute_thresholds_q10",
    "calibrate_coefficients",
    "default_coefficient_grid",
    "dyadic_ladder",
    "save_coefficients",
    "load_coefficients",
    "default_float_coefficients",
    "default_hw_coefficients",
]

FRAME_LEN = 256
CONVERGENCE_FACTOR = 20
SCALING_FACTOR = 0.001
SIGMA_FRACTION_BITS = 10  # integer pipelines keep sigma in Q.10, gamma = 2**-10
WARMUP_FRAMES = 16


@dataclass(frozen=True)
class EstimatorConfig:
    """Feedback-loop parameters shared by the float and integer pipelines."""

    frame_len: int = FRAME_LEN
    convergence_factor: int = CONVERGENCE_FACTOR
    scaling_factor: float = SCALING_FACTOR
    warmup_frames: int = WARMUP_FRAMES

    def __post_init__(self):
        if self.frame_len < 1:
            raise ValueError("frame_len must be >= 1")
        if not 0 <= self.convergence_factor <= self.frame_len:
            raise ValueError("convergence_factor must lie in 0..frame_len")
        if self.scaling_factor <= 0:
            raise ValueError("scaling_factor must be positive")
        if self.warmup_frames < 0:
            raise ValueError("warmup_frames must be >= 0")

    @property
    def warmup_samples(self) -> int:
        return self.warmup_frames * self.frame_len


@dataclass(frozen=True)
class SigmaEstimatorState:
    """Feedback-loop state: current sigma plus the in-progress frame counters."""

    sigma: float
    frame_len: int = FRAME_LEN
    exceed_count: int = 0
    samples_in_frame: int = 0
    convergence_factor: int = CONVERGENCE_FACTOR
    scaling_factor: float = SCALING_FACTOR

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 <= self.exceed_count <= self.samples_in_frame <= self.frame_len:
            raise ValueError("frame counters out of order")


def estimator_step(state: SigmaEstimatorState, s_sample: float) -> SigmaEstimatorState:
    """Advance the estimator by one smoothed sample; update sigma at frame end.

    The comparison is strict: a sample equal to sigma does not count.  When the
    frame fills, sigma moves by ``scaling_factor * (count - convergence_factor)``,
    is clamped at zero, and the counters reset.
    """
    exceed = state.exceed_count + (1 if s_sample > state.sigma else 0)
    filled = state.samples_in_frame + 1
    if filled < state.frame_len:
        return replace(state, exceed_count=exceed, samples_in_frame=filled)
    sigma = state.sigma + state.scaling_factor * (exceed - state.convergence_factor)
    return replace(state, sigma=max(0.0, sigma), exceed_count=0, samples_in_frame=0)


def sigma_frames(s, cfg: EstimatorConfig = EstimatorConfig(), sigma0: float | None = None) -> np.ndarray:
    """Per-frame sigma trajectory: entry ``f`` is the sigma in effect over frame ``f``.

    Frame ``f`` covers samples ``[f*L, (f+1)*L)``.  A partial tail frame never
    triggers an update.  Without an explicit ``sigma0`` the first frame is a
    measurement frame: sigma reads 0 while the frame's empirical (population)
    standard deviation is accumulated, and that value takes effect from frame
    1.  This keeps the loop causal and self-scaling; the measurement frame
    falls inside the warm-up anyway.
    """
    s = np.asarray(s, dtype=np.float64)
    L = cfg.frame_len
    n = len(s)
    if n == 0:
        return np.zeros(0)
    n_frames = -(-n // L)
    out = np.empty(n_frames)
    measuring = sigma0 is None
    sigma = 0.0 if measuring else float(sigma0)
    for f in range(n_frames):
        out[f] = sigma
        frame = s[f * L:(f + 1) * L]
        if len(frame) < L:
            break
        if measuring and f == 0:
            sigma = float(np.std(frame))
        else:
            count = int(np.count_nonzero(frame > sigma))
            sigma = max(0.0, sigma + cfg.scaling_factor * (count - cfg.convergence_factor))
    return out


def initial_sigma_q10(s_codes, frame_len: int = FRAME_LEN) -> int:
    """Q.10 empirical standard deviation of the first frame, in exact integers.

    With ``v = n*sum(s**2) - sum(s)**2`` (so the variance is ``v / n**2``),
    ``floor(1024 * sqrt(v) / n) == isqrt(1024**2 * v) // n`` exactly.
    """
    s = np.asarray(s_codes, dtype=np.int64)[:frame_len]
    n = len(s)
    if n == 0:
        return 0
    total = int(s.sum())
    total_sq = int((s * s).sum())
    v = n * total_sq - total * total
    if v <= 0:
        return 0
    return math.isqrt((1 << (2 * SIGMA_FRACTION_BITS)) * v) // n


def sigma_frames_q10(
    s_codes,
    cfg: EstimatorConfig = EstimatorConfig(),
    sigma0_q10: int | None = None,
) -> np.ndarray:
    """Integer twin of :func:`sigma_frames`: sigma held in a Q.10 register.

    The per-frame correction is exactly ``count - convergence_factor`` register
    LSBs (gamma = 2**-10), and the exceedance comparison is the exact integer
    compare ``s << 10 > sigma_q``.
    """
    s = np.asarray(s_codes, dtype=np.int64)
    L = cfg.frame_len
    n = len(s)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    n_frames = -(-n // L)
    measuring = sigma0_q10 is None
    sigma_q = 0 if measuring else int(sigma0_q10)
    s_scaled = s << SIGMA_FRACTION_BITS
    out = np.empty(n_frames, dtype=np.int64)
    for f in range(n_frames):
        out[f] = sigma_q
        frame = s_scaled[f * L:(f + 1) * L]
        if len(frame) < L:
            break
        if measuring and f == 0:
            sigma_q = initial_sigma_q10(s[:L], L)
        else:
            count = int(np.count_nonzero(frame > sigma_q))
            sigma_q = max(0, sigma_q + (count - cfg.convergence_factor))
    return out


# ---------------------------------------------------------------------------
# Dyadic threshold coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dyadic:
    """Signed dyadic rational ``numerator * 2**-shift``, at most two set bits.

    The two-set-bit restriction keeps every coefficient realizable as one or
    two shift-and-add terms.
    """

    numerator: int
    shift: int

    def __post_init__(self):
        if self.shift < 0:
            raise ValueError("shift must be >= 0")
        if bin(abs(self.numerator)).count("1") > 2:
            raise ValueError(
                f"numerator {self.numerator} needs more than two power-of-two terms"
            )

    @property
    def value(self) -> float:
        return self.numerator * 2.0 ** -self.shift

    @property
    def terms(self) -> int:
        return bin(abs(self.numerator)).count("1")

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ThresholdCoefficients:
    c1: Dyadic
    c2: Dyadic
    c3: Dyadic

    @staticmethod
    def make(c1: tuple, c2: tuple, c3: tuple) -> "ThresholdCoefficients":
        return ThresholdCoefficients(Dyadic(*c1), Dyadic(*c2), Dyadic(*c3))

    @property
    def tiebreak_key(self) -> tuple:
        terms = self.c1.terms + self.c2.terms + self.c3.terms
        shifts = self.c1.shift + self.c2.shift + self.c3.shift
        return (terms, shifts)


@dataclass(frozen=True)
class ThresholdPair:
    """Comparator levels for the raw-path and smoothed-path energy streams."""

    thr_x: float
    thr_s: float


def compute_thresholds(sigma: float, coeffs: ThresholdCoefficients) -> ThresholdPair:
    """Evaluate ``thr_x = c1*sigma`` and ``thr_s = c2*sigma + c3*sigma**2``.

    Stateless; the pipelines call it once per frame, right after the sigma
    update.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    thr_x = coeffs.c1.value * sigma
    thr_s = coeffs.c2.value * sigma + coeffs.c3.value * sigma * sigma
    return ThresholdPair(thr_x=thr_x, thr_s=thr_s)


def compute_thresholds_q10(sigma_q, coeffs: ThresholdCoefficients):
    """Integer thresholds from a Q.10 sigma, exact up to one final floor per value.

    Both results are Q.10.  ``thr_x = (c1n * sigma_q) >> s1``; for ``thr_s`` the
    two terms are brought to a common denominator before a single arithmetic
    right shift, so no precision is lost between them:

        thr_s_q = (c2n*sigma_q << (d - s2)) + (c3n*sigma_q**2 << (d - s3 - 10)) >> d,
        d = max(s2, s3 + 10)

    Accepts a scalar or an int64 array of sigma values.  With 18-bit sigma
    registers and the default grid's numerators and shifts everything fits
    int64 with wide margin.
    """
    c1, c2, c3 = coeffs.c1, coeffs.c2, coeffs.c3
    d = max(c2.shift, c3.shift + SIGMA_FRACTION_BITS)
    if isinstance(sigma_q, np.ndarray):
        sq = sigma_q.astype(np.int64)
        thr_x = (c1.numerator * sq) >> c1.shift
        lin = (c2.numerator * sq) << (d - c2.shift)
        quad = (c3.numerator * sq * sq) << (d - c3.shift - SIGMA_FRACTION_BITS)
        thr_s = (lin + quad) >> d
        return thr_x, thr_s
    sq = int(sigma_q)
    thr_x = (c1.numerator * sq) >> c1.shift
    lin = (c2.numerator * sq) << (d - c2.shift)
    quad = (c3.numerator * sq * sq) << (d - c3.shift - SIGMA_FRACTION_BITS)
    thr_s = (lin + quad) >> d
    return thr_x, thr_s


# ---------------------------------------------------------------------------
# Coefficient fixture files: one "name numerator shift" line per coefficient
# ---------------------------------------------------------------------------


def save_coefficients(coeffs: ThresholdCoefficients, path) -> None:
    Path(path).write_text(
        f"c1 {coeffs.c1.numerator} {coeffs.c1.shift}\n"
        f"c2 {coeffs.c2.numerator} {coeffs.c2.shift}\n"
        f"c3 {coeffs.c3.numerator} {coeffs.c3.shift}\n"
    )


def _parse_coefficients(text: str, origin: str) -> ThresholdCoefficients:
    found: dict[str, Dyadic] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{origin}:{lineno}: expected 'name numerator shift'")
        name, num, shift = parts
        if name not in ("c1", "c2", "c3"):
            raise ValueError(f"{origin}:{lineno}: unknown coefficient {name!r}")
        found[name] = Dyadic(int(num), int(shift))
    missing = {"c1", "c2", "c3"} - set(found)
    if missing:
        raise ValueError(f"{origin}: missing coefficients {sorted(missing)}")
    return ThresholdCoefficients(found["c1"], found["c2"], found["c3"])


def load_coefficients(path) -> ThresholdCoefficients:
    path = Path(path)
    return _parse_coefficients(path.read_text(), str(path))


def _load_bundled(name: str) -> ThresholdCoefficients:
    text = resources.files("dualteo").joinpath("data").joinpath(name).read_text()
    return _parse_coefficients(text, name)


def default_float_coefficients() -> ThresholdCoefficients:
    """Calibrated defaults for the floating-point pipeline."""
    return _load_bundled("threshold_coeffs_float.txt")


def default_hw_coefficients() -> ThresholdCoefficients:
    """Calibrated defaults for the integer (7-bit, 16 kHz) pipeline."""
    return _load_bundled("threshold_coeffs_hw.txt")


# ---------------------------------------------------------------------------
# Calibration: exhaustive argmax over a dyadic grid
# ---------------------------------------------------------------------------


def dyadic_ladder(lo_exp: int, hi_exp: int, include_zero: bool = False) -> list[Dyadic]:
    """Candidate values m * 2**e for m in {1, 3}, e in [lo_exp, hi_exp].

    Two points per octave.  Positive exponents fold into the numerator
    (still one or two power-of-two terms), negative ones into the shift.
    """
    out = [Dyadic(0, 0)] if include_zero else []
    seen: dict[float, Dyadic] = {}
    for e in range(lo_exp, hi_exp + 1):
        for m in (1, 3):
            d = Dyadic(m << e, 0) if e >= 0 else Dyadic(m, -e)
            seen.setdefault(d.value, d)
    out.extend(seen[v] for v in sorted(seen))
    return out


def default_coefficient_grid(pipeline: str = "float") -> list[ThresholdCoefficients]:
    """Cartesian candidate grid, two points per octave in each coefficient.

    c2 and c3 include zero so either term of thr_s can drop out.  The hw grid
    sits lower because its sigma lives in input-code units while the energies
    carry their truncation shifts.
    """
    if pipeline == "float":
        c1s = dyadic_ladder(-3, 2)                      # 1/8 .. 12
        c2s = dyadic_ladder(-5, 1, include_zero=True)   # 0, 1/32 .. 6
        c3s = dyadic_ladder(-2, 3, include_zero=True)   # 0, 1/4 .. 24
    elif pipeline == "hw":
        c1s = dyadic_ladder(-4, 1)                      # 1/16 .. 6
        c2s = dyadic_ladder(-5, 0, include_zero=True)   # 0, 1/32 .. 3
        c3s = dyadic_ladder(-6, 0, include_zero=True)   # 0, 1/64 .. 3
    else:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    return [
        ThresholdCoefficients(a, b, c)
        for a in c1s
        for b in c2s
        for c in c3s
    ]


def calibrate_coefficients(
    training_set,
    search_grid=None,
    *,
    pipeline: str = "float",
    estimator: EstimatorConfig = EstimatorConfig(),
    event_cfg=None,
    hw_cfg=None,
    tolerance_ms: float = 1.0,
    return_score: bool = False,
):
    """Pick the grid point maximizing mean detection accuracy on the training set.

    ``training_set`` is a sequence of ``(SignalRecord, GroundTruth)`` pairs.
    Ties break toward fewer power-of-two terms, then smaller shifts.  The
    sigma trajectory is coefficient-independent, so each record's transform
    and sigma work is done once and every candidate only re-runs the
    threshold/compare/score tail.
    """
    from . import detector as _detector
    from . import metrics as _metrics

    training_set = list(training_set)
    if not training_set:
        raise ValueError("training set must not be empty")
    grid = list(default_coefficient_grid(pipeline) if search_grid is None else search_grid)
    if not grid:
        raise ValueError("search grid must not be empty")

    if pipeline == "hw":
        # the integer pipeline runs at its own rate; convert records and truth
        from . import dataio as _dataio
        from . import hw_model as _hw_model
        cfg = hw_cfg if hw_cfg is not None else _hw_model.HwConfig()
        converted = []
        for record, truth in training_set:
            resampled = _dataio.resample(record, cfg.rate_hz)
            converted.append((
                resampled,
                _dataio.rescale_ground_truth(truth, record.rate_hz, cfg.rate_hz, len(resampled)),
            ))
        training_set = converted
        hw_cfg = cfg

    prepared = [
        _detector.prepare_dual(
            record, estimator=estimator, event_cfg=event_cfg,
            pipeline=pipeline, hw_cfg=hw_cfg,
        )
        for record, _ in training_set
    ]
    truths = [truth for _, truth in training_set]

    best = None
    for cand in grid:
        total = 0.0
        for prep, truth in zip(prepared, truths):
            events = _detector.finish_dual(prep, cand)
            report = _metrics.score_events(
                events, truth, prep.tolerance_samples(tolerance_ms),
                skip_before=prep.warmup_samples,
            )
            total += _metrics.accuracy(report) if (report.tp + report.fp + report.fn) else 1.0
        mean_acc = total / len(prepared)
        key = (-mean_acc,) + cand.tiebreak_key
        if best is None or key < best[0]:
            best = (key, cand, mean_acc)
    if return_score:
        return best[1], best[2]
    return best[1]
