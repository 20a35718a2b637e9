"""Dual Teager-energy spike detection: float reference pipeline, bit-exact
integer hardware model, amplitude-domain baselines, and a benchmark harness
with synthetic labeled data."""

from .signal_model import (
    FixedPointFormat,
    QuantizedRecord,
    SignalRecord,
    dequantize,
    load_record,
    quantize,
    quantize_mid_tread,
    save_record,
    truncate_to,
)
from .transforms import TeoOutput, smooth2, smooth2_fixed, teo, teo_fixed
from .threshold import (
    Dyadic,
    EstimatorConfig,
    SigmaEstimatorState,
    ThresholdCoefficients,
    ThresholdPair,
    calibrate_coefficients,
    compute_thresholds,
    compute_thresholds_q10,
    default_float_coefficients,
    default_hw_coefficients,
    estimator_step,
    load_coefficients,
    save_coefficients,
)
from .detector import (
    DetectorKind,
    EventFormationConfig,
    SpikeEvent,
    detect,
    detect_at,
    detect_dual,
    detect_dvt,
    detect_mae,
    detect_teo_single,
    events_from_csv,
    events_to_csv,
    form_events,
)
from .hw_model import (
    ChannelState,
    HwConfig,
    HwTrace,
    assert_closure,
    hw_detect_channel,
    hw_detect_multichannel,
    quantize_for_hw,
    trace_internal,
)
from .dataio import (
    GroundTruth,
    SyntheticConfig,
    generate,
    load_ground_truth,
    resample,
    rescale_ground_truth,
    save_ground_truth,
)
from .metrics import (
    MatchReport,
    SweepResult,
    SweepSpec,
    accuracy,
    match_events,
    report,
    score_events,
    sweep,
)

__version__ = "0.1.0"
