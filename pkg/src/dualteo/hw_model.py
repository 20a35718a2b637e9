"""Bit-exact integer realization of the dual detector, plus the 256-channel
time-multiplexed scheduler.

Datapath per channel, all in two's-complement integers: 7-bit input codes,
exact half-sum smoother (codes stay in the 7-bit range, carried at half-LSB
weight), exact Teager energies truncated by arithmetic right shift into 8-bit
(raw path) and 9-bit (smoothed path) streams, and Q.10 sigma/threshold
registers so the 2**-10 per-frame correction accumulates below one code LSB.
Nothing on the data path is ever a float.

Two equivalent execution models are provided and cross-checked:

* a vectorized per-channel model (:func:`hw_detect_channel`,
  :func:`trace_internal`) used for benchmarks, and
* a sample-serial engine (:func:`hw_detect_multichannel`) that services the
  interleaved channel stream one code at a time, round-robin across eight
  32-channel blocks, holding every register in a per-channel state object.

Scheduler transparency, multichannel output bit-identical to independent
per-channel runs, is the central property of the model and is enforced by
the test suite.  The energy at index k needs the k+1 input, so the serial
engine evaluates each comparator one service cycle after the sample arrives;
frame-boundary sigma updates fire after that comparator, which reproduces the
vectorized frame timing exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detector import (
    EventFormationConfig,
    PreparedDual,
    SpikeEvent,
    finish_dual,
)
from .signal_model import FixedPointFormat, QuantizedRecord, SignalRecord, quantize_mid_tread
from .threshold import (
    EstimatorConfig,
    SIGMA_FRACTION_BITS,
    ThresholdCoefficients,
    compute_thresholds_q10,
    default_hw_coefficients,
    sigma_frames_q10,
)
from .transforms import smooth2_fixed, teo_fixed

__all__ = [
    "HwConfig",
    "ChannelState",
    "HwTrace",
    "quantize_for_hw",
    "prepare_hw_dual",
    "hw_detect_channel",
    "hw_detect_multichannel",
    "trace_internal",
    "assert_closure",
    "save_multichannel",
    "load_multichannel",
]

THRESHOLD_REGISTER_BITS = 32  # signed Q.10; ample for the coefficient grid


@dataclass(frozen=True)
class HwConfig:
    """Datapath parameters: bit widths, drops, rate, and channel topology.

    ``smoothed_bits`` is the nominal width of the smoothed stream; its codes
    span the full input range because the half-sum is carried at half-LSB
    weight, so closure checks validate it against ``input_bits``.
    """

    input_bits: int = 7
    smoothed_bits: int = 6
    xteo_bits: int = 8
    steo_bits: int = 9
    rate_hz: float = 16000.0
    channels: int = 256
    channels_per_block: int = 32
    xteo_drop_lsbs: int = 7
    steo_drop_lsbs: int = 6

    def __post_init__(self):
        if self.channels % self.channels_per_block != 0:
            raise ValueError("channels must divide evenly into blocks")
        if min(self.xteo_drop_lsbs, self.steo_drop_lsbs) < 0:
            raise ValueError("drop counts must be >= 0")

    @property
    def input_format(self) -> FixedPointFormat:
        return FixedPointFormat(total_bits=self.input_bits)

    @property
    def xteo_format(self) -> FixedPointFormat:
        return FixedPointFormat(total_bits=self.xteo_bits)

    @property
    def steo_format(self) -> FixedPointFormat:
        return FixedPointFormat(total_bits=self.steo_bits)

    @property
    def sigma_register_max(self) -> int:
        # sigma never exceeds the top input code plus one correction step
        return 1 << (self.input_bits - 1 + SIGMA_FRACTION_BITS + 1)

    @property
    def n_blocks(self) -> int:
        return self.channels // self.channels_per_block


def quantize_for_hw(record: SignalRecord, cfg: HwConfig) -> QuantizedRecord:
    """Mid-tread quantization with per-record normalization (full scale = max |amplitude|)."""
    peak = float(np.max(np.abs(record.samples))) if len(record) else 0.0
    return quantize_mid_tread(record, cfg.input_format, full_scale=peak if peak > 0 else 1.0)


def _align_stream(x_teo: np.ndarray, s_teo: np.ndarray, cfg: HwConfig) -> np.ndarray:
    """Alignment signal on the common de-truncated scale of the two energies."""
    base = min(cfg.xteo_drop_lsbs, cfg.steo_drop_lsbs)
    return np.maximum(
        x_teo << (cfg.xteo_drop_lsbs - base),
        s_teo << (cfg.steo_drop_lsbs - base),
    )


def prepare_hw_dual(
    source: SignalRecord | QuantizedRecord,
    cfg: HwConfig | None = None,
    estimator: EstimatorConfig = EstimatorConfig(),
    event_cfg: EventFormationConfig | None = None,
) -> PreparedDual:
    """Coefficient-independent integer pipeline work for one channel."""
    cfg = cfg if cfg is not None else HwConfig()
    if isinstance(source, SignalRecord):
        q = quantize_for_hw(source, cfg)
    else:
        q = source
    if q.format.total_bits != cfg.input_bits:
        raise ValueError(
            f"expected {cfg.input_bits}-bit codes, got {q.format.total_bits}-bit"
        )
    if q.rate_hz != cfg.rate_hz:
        raise ValueError(f"expected rate {cfg.rate_hz} Hz, got {q.rate_hz} Hz")
    x = q.codes
    s = smooth2_fixed(x)
    x_teo = teo_fixed(x, cfg.input_format, cfg.xteo_format, cfg.xteo_drop_lsbs).values
    s_teo = teo_fixed(s, cfg.input_format, cfg.steo_format, cfg.steo_drop_lsbs).values
    sig_q = sigma_frames_q10(s, estimator)
    evt = event_cfg if event_cfg is not None else EventFormationConfig.for_rate(cfg.rate_hz)
    return PreparedDual(
        x_energy=x_teo,
        s_energy=s_teo,
        sigma_per_frame=sig_q,
        align=_align_stream(x_teo, s_teo, cfg),
        frame_len=estimator.frame_len,
        warmup_samples=estimator.warmup_samples,
        rate_hz=cfg.rate_hz,
        channel_id=q.channel_id,
        integer_domain=True,
        event_cfg=evt,
    )


def hw_detect_channel(
    q: QuantizedRecord,
    cfg: HwConfig | None = None,
    coeffs: ThresholdCoefficients | None = None,
    evt_cfg: EventFormationConfig | None = None,
    estimator: EstimatorConfig = EstimatorConfig(),
) -> list[SpikeEvent]:
    """Integer-only dual detection of one quantized channel."""
    cfg = cfg if cfg is not None else HwConfig()
    if coeffs is None:
        coeffs = default_hw_coefficients()
    if len(q) <= estimator.warmup_samples:
        warnings.warn(
            f"record of {len(q)} codes does not outlast the "
            f"{estimator.warmup_samples}-sample warm-up; no detections possible",
            stacklevel=2,
        )
        return []
    prep = prepare_hw_dual(q, cfg, estimator=estimator, event_cfg=evt_cfg)
    return finish_dual(prep, coeffs)


# ---------------------------------------------------------------------------
# Per-sample trace and format-closure checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HwTrace:
    """Per-sample intermediate values; thresholds are raw Q.10 register values."""

    x: np.ndarray
    s: np.ndarray
    x_teo: np.ndarray
    s_teo: np.ndarray
    thr_x: np.ndarray
    thr_s: np.ndarray
    crossing: np.ndarray

    COLUMNS = ("x", "s", "x_teo", "s_teo", "thr_x", "thr_s", "crossing")

    def __len__(self) -> int:
        return len(self.x)

    def to_csv(self, path) -> None:
        cols = [getattr(self, c) for c in self.COLUMNS]
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in zip(*cols):
                fh.write(",".join(str(int(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "HwTrace":
        text = Path(path).read_text().splitlines()
        if not text or text[0] != ",".join(cls.COLUMNS):
            raise ValueError(f"{path}: bad trace header")
        rows = [tuple(int(v) for v in ln.split(",")) for ln in text[1:] if ln]
        arrays = [np.asarray(col, dtype=np.int64) for col in zip(*rows)] if rows else [
            np.zeros(0, dtype=np.int64) for _ in cls.COLUMNS
        ]
        return cls(*arrays)


def trace_internal(
    q: QuantizedRecord,
    cfg: HwConfig | None = None,
    coeffs: ThresholdCoefficients | None = None,
    estimator: EstimatorConfig = EstimatorConfig(),
) -> HwTrace:
    """Emit every intermediate integer per sample for golden-trace regression.

    The crossing column is the raw comparator OR, before warm-up gating.
    """
    cfg = cfg if cfg is not None else HwConfig()
    if coeffs is None:
        coeffs = default_hw_coefficients()
    prep = prepare_hw_dual(q, cfg, estimator=estimator)
    n = prep.n
    L = prep.frame_len
    thr_x_f, thr_s_f = compute_thresholds_q10(prep.sigma_per_frame, coeffs)
    thr_x = np.repeat(thr_x_f, L)[:n]
    thr_s = np.repeat(thr_s_f, L)[:n]
    crossing = (
        ((prep.x_energy << SIGMA_FRACTION_BITS) > thr_x)
        | ((prep.s_energy << SIGMA_FRACTION_BITS) > thr_s)
    ).astype(np.int64)
    return HwTrace(
        x=q.codes.copy(),
        s=smooth2_fixed(q.codes),
        x_teo=prep.x_energy,
        s_teo=prep.s_energy,
        thr_x=thr_x,
        thr_s=thr_s,
        crossing=crossing,
    )


def assert_closure(trace: HwTrace, cfg: HwConfig | None = None) -> None:
    """Verify every traced value stays inside its declared register format."""
    cfg = cfg if cfg is not None else HwConfig()

    def check(name, values, lo, hi):
        if len(values) and (values.min() < lo or values.max() > hi):
            raise AssertionError(
                f"{name} escaped [{lo}, {hi}]: range "
                f"[{values.min()}, {values.max()}]"
            )

    in_fmt = cfg.input_format
    check("x", trace.x, in_fmt.min_code, in_fmt.max_code)
    # half-sum smoother: full input range at half-LSB weight
    check("s", trace.s, in_fmt.min_code, in_fmt.max_code)
    check("x_teo", trace.x_teo, cfg.xteo_format.min_code, cfg.xteo_format.max_code)
    check("s_teo", trace.s_teo, cfg.steo_format.min_code, cfg.steo_format.max_code)
    thr_bound = 1 << (THRESHOLD_REGISTER_BITS - 1)
    check("thr_x", trace.thr_x, -thr_bound, thr_bound - 1)
    check("thr_s", trace.thr_s, -thr_bound, thr_bound - 1)
    check("crossing", trace.crossing, 0, 1)
    # sigma is not a trace column; bound it via the thresholds' inputs instead
    # (sigma_frames_q10 clamps at zero and cannot exceed the top code + one step)


# ---------------------------------------------------------------------------
# Sample-serial engine and the multichannel scheduler
# ---------------------------------------------------------------------------


class ChannelState:
    """All per-channel registers of the serial engine.

    Mirrors the hardware register banks: the two input delay codes (the newer
    one doubles as the smoother input), two smoothed delay codes, the sigma
    estimator accumulators, the current Q.10 threshold pair, and the running
    event-formation registers (peak, gap, pending flag).
    """

    __slots__ = (
        "channel_id", "t", "x1", "x2", "s1", "s2",
        "sigma_q", "exceed", "sum_s", "sumsq_s",
        "thr_x_q", "thr_s_q",
        "pending", "peak_val", "peak_idx", "first_idx", "last_true",
        "events", "crossings",
    )

    def __init__(self, channel_id: int, n_samples: int, record_crossings: bool):
        self.channel_id = channel_id
        self.t = 0
        self.x1 = 0
        self.x2 = 0
        self.s1 = 0
        self.s2 = 0
        self.sigma_q = 0
        self.exceed = 0
        self.sum_s = 0
        self.sumsq_s = 0
        self.thr_x_q = 0
        self.thr_s_q = 0
        self.pending = False
        self.peak_val = 0
        self.peak_idx = -1
        self.first_idx = -1
        self.last_true = -(1 << 40)
        self.events: list[SpikeEvent] = []
        self.crossings = np.zeros(n_samples, dtype=bool) if record_crossings else None


class _SerialChannel:
    """One channel of the serial engine; one ``push`` per arriving code."""

    def __init__(self, cfg: HwConfig, coeffs: ThresholdCoefficients,
                 evt_cfg: EventFormationConfig, estimator: EstimatorConfig,
                 channel_id: int, n_samples: int, record_crossings: bool):
        self.cfg = cfg
        self.coeffs = coeffs
        self.evt = evt_cfg
        self.est = estimator
        self.state = ChannelState(channel_id, n_samples, record_crossings)
        self.n_samples = n_samples
        # precompute comparator constants
        self.xteo_min = cfg.xteo_format.min_code
        self.xteo_max = cfg.xteo_format.max_code
        self.steo_min = cfg.steo_format.min_code
        self.steo_max = cfg.steo_format.max_code
        self.xdrop = cfg.xteo_drop_lsbs
        self.sdrop = cfg.steo_drop_lsbs
        base = min(self.xdrop, self.sdrop)
        self.xshift = self.xdrop - base
        self.sshift = self.sdrop - base

    def _emit(self, k: int, x_teo: int, s_teo: int) -> None:
        """Comparator plus streaming event formation for energy index k."""
        st = self.state
        crossed = (
            (x_teo << SIGMA_FRACTION_BITS) > st.thr_x_q
            or (s_teo << SIGMA_FRACTION_BITS) > st.thr_s_q
        )
        if st.crossings is not None:
            st.crossings[k] = crossed
        if not crossed or k < self.est.warmup_samples:
            return
        align = max(x_teo << self.xshift, s_teo << self.sshift)
        if st.pending and k - st.last_true < self.evt.refractory_samples:
            if align > st.peak_val:
                st.peak_val = align
                st.peak_idx = k
            st.last_true = k
            return
        if st.pending:
            self._finalize_event()
        st.pending = True
        st.peak_val = align
        st.peak_idx = k
        st.first_idx = k
        st.last_true = k

    def _finalize_event(self) -> None:
        st = self.state
        idx = st.peak_idx if self.evt.alignment == "teo_peak" else st.first_idx
        st.events.append(SpikeEvent(channel_id=st.channel_id, sample_index=idx))
        st.pending = False

    def push(self, code: int) -> None:
        st = self.state
        t = st.t
        L = self.est.frame_len
        s_t = code if t == 0 else (code + st.x1) >> 1

        # 1) comparator for energy index t-1, before any frame update
        if t >= 1:
            if t == 1:
                self._emit(0, 0, 0)  # boundary convention
            else:
                xe = st.x1 * st.x1 - code * st.x2
                xe >>= self.xdrop
                if xe < self.xteo_min:
                    xe = self.xteo_min
                elif xe > self.xteo_max:
                    xe = self.xteo_max
                se = st.s1 * st.s1 - s_t * st.s2
                se >>= self.sdrop
                if se < self.steo_min:
                    se = self.steo_min
                elif se > self.steo_max:
                    se = self.steo_max
                self._emit(t - 1, xe, se)

        # 2) frame boundary: measurement frame assigns sigma, later frames
        #    apply the counting correction; thresholds recompute right after
        if t > 0 and t % L == 0:
            if t == L:
                v = L * st.sumsq_s - st.sum_s * st.sum_s
                st.sigma_q = (
                    math.isqrt((1 << (2 * SIGMA_FRACTION_BITS)) * v) // L if v > 0 else 0
                )
            else:
                st.sigma_q = max(
                    0, st.sigma_q + (st.exceed - self.est.convergence_factor)
                )
            st.exceed = 0
            st.thr_x_q, st.thr_s_q = compute_thresholds_q10(st.sigma_q, self.coeffs)

        # 3) estimator observes the smoothed sample
        if t < L:
            st.sum_s += s_t
            st.sumsq_s += s_t * s_t
        elif (s_t << SIGMA_FRACTION_BITS) > st.sigma_q:
            st.exceed += 1

        # 4) shift the delay registers
        st.x2 = st.x1
        st.x1 = code
        st.s2 = st.s1
        st.s1 = s_t
        st.t = t + 1

    def finish(self) -> list[SpikeEvent]:
        st = self.state
        if st.t >= 1:
            self._emit(st.t - 1, 0, 0)  # final boundary index, energy is 0
        if st.pending:
            self._finalize_event()
        return st.events


def hw_detect_multichannel(
    frames,
    cfg: HwConfig | None = None,
    coeffs: ThresholdCoefficients | None = None,
    evt_cfg: EventFormationConfig | None = None,
    estimator: EstimatorConfig = EstimatorConfig(),
    return_crossings: bool = False,
):
    """Serve an interleaved multichannel code stream through the serial engine.

    ``frames`` is either a flat stream (scan-major: sample t of channels
    0..C-1, then sample t+1) whose length must divide by the channel count, or
    a 2D array of shape (n_scans, channels).  Channels are serviced round-robin
    within each 32-channel block, blocks in order; states never cross blocks,
    so the output equals independent per-channel runs bit-exactly.

    Returns a list of per-channel event lists; with ``return_crossings`` also
    a (channels, n_scans) boolean array of raw comparator outputs.
    """
    cfg = cfg if cfg is not None else HwConfig()
    if coeffs is None:
        coeffs = default_hw_coefficients()
    stream = np.asarray(frames, dtype=np.int64)
    if stream.ndim == 1:
        if stream.size % cfg.channels != 0:
            raise ValueError(
                f"ragged stream: {stream.size} codes do not divide into "
                f"{cfg.channels} channels"
            )
        stream = stream.reshape(-1, cfg.channels)
    elif stream.ndim != 2 or stream.shape[1] != cfg.channels:
        raise ValueError(f"expected (n_scans, {cfg.channels}) stream")
    if not cfg.input_format.contains(stream):
        raise ValueError(f"codes outside {cfg.input_bits}-bit range")
    n_scans = stream.shape[0]
    evt = evt_cfg if evt_cfg is not None else EventFormationConfig.for_rate(cfg.rate_hz)

    engines = [
        _SerialChannel(cfg, coeffs, evt, estimator, ch, n_scans, return_crossings)
        for ch in range(cfg.channels)
    ]
    per_block = cfg.channels_per_block
    rows = stream.tolist()  # plain ints keep the inner loop cheap
    for row in rows:
        for block in range(cfg.n_blocks):
            base = block * per_block
            for slot in range(per_block):
                ch = base + slot
                engines[ch].push(row[ch])
    events = [eng.finish() for eng in engines]
    if return_crossings:
        crossings = np.stack([eng.state.crossings for eng in engines])
        return events, crossings
    return events


# ---------------------------------------------------------------------------
# Multichannel stream files: int8 codes, scan-major, sidecar header
# ---------------------------------------------------------------------------


def save_multichannel(stream: np.ndarray, rate_hz: float, path) -> None:
    """Write (n_scans, channels) codes as raw little-endian int8 plus header."""
    stream = np.asarray(stream)
    if stream.ndim != 2:
        raise ValueError("stream must be 2D (n_scans, channels)")
    if stream.min() < -128 or stream.max() > 127:
        raise ValueError("codes do not fit int8")
    path = Path(path)
    stream.astype(np.int8).tofile(path)
    header = (
        f"rate_hz={rate_hz!r}\n"
        f"channels={stream.shape[1]}\n"
        f"n_scans={stream.shape[0]}\n"
    )
    path.with_name(path.name + ".hdr").write_text(header)


def load_multichannel(path) -> tuple[np.ndarray, float]:
    path = Path(path)
    hdr_path = path.with_name(path.name + ".hdr")
    if not hdr_path.exists():
        raise FileNotFoundError(f"missing header file {hdr_path}")
    header = {}
    for line in hdr_path.read_text().splitlines():
        if line.strip():
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
    channels = int(header["channels"])
    n_scans = int(header["n_scans"])
    codes = np.fromfile(path, dtype=np.int8).astype(np.int64)
    if codes.size != channels * n_scans:
        raise ValueError(f"{path}: header promises {channels * n_scans} codes, file holds {codes.size}")
    return codes.reshape(n_scans, channels), float(header["rate_hz"])
