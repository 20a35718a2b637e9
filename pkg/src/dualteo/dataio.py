"""Synthetic benchmark data with ground truth, plus record/truth file I/O.

The generator emulates the construction of the classic labeled extracellular
benchmarks: a train of 2 ms biphasic template spikes at unit peak, placed at
Poisson times thinned to a minimum inter-spike interval, over background
noise built half (in variance) from superimposed low-amplitude spike shapes
and half from white Gaussian noise.  Pure Gaussian background would misstate
the difficulty: spike-shaped noise is band-limited and survives smoothing,
white noise is what the energy operator amplifies.  The noise trace is
rescaled so its measured standard deviation over the mean placed-spike peak
equals ``noise_level`` exactly.

Everything is deterministic given the config seed.  Ground truth is a sorted
list of spike-peak sample indices with optional per-spike template ids.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .signal_model import SignalRecord, save_record, load_record

__all__ = [
    "GroundTruth",
    "SyntheticConfig",
    "generate",
    "resample",
    "rescale_ground_truth",
    "save_ground_truth",
    "load_ground_truth",
    "save_dataset",
    "load_dataset",
    "load_record",
]

TEMPLATE_DURATION_S = 0.002
NOISE_SPIKE_RATE_HZ = 8000.0      # density of the spike-shaped background
NOISE_SPIKE_AMP_RANGE = (0.05, 0.3)  # relative, before variance normalization (sub-detection units)
GAUSSIAN_VARIANCE_SHARE = 0.5
GAUSSIAN_BAND_HZ = (300.0, 2000.0)  # recording-chain band for the Gaussian part


@dataclass(frozen=True)
class GroundTruth:
    """Sorted spike-peak sample indices, optionally tagged with template ids."""

    spike_indices: np.ndarray
    template_ids: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.spike_indices, dtype=np.int64)
        object.__setattr__(self, "spike_indices", idx)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ValueError("spike indices must be strictly increasing")
        if idx.size and idx[0] < 0:
            raise ValueError("spike indices must be non-negative")
        if self.template_ids is not None:
            tids = np.asarray(self.template_ids, dtype=np.int64)
            if len(tids) != len(idx):
                raise ValueError("template_ids length must match spike_indices")
            object.__setattr__(self, "template_ids", tids)

    def __len__(self) -> int:
        return len(self.spike_indices)


@dataclass(frozen=True)
class SyntheticConfig:
    duration_s: float = 10.0
    rate_hz: float = 24000.0
    noise_level: float = 0.1
    firing_rate_hz: float = 20.0
    n_templates: int = 3
    min_isi_s: float = 0.002
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if self.firing_rate_hz <= 0:
            raise ValueError("firing_rate_hz must be positive")
        if self.n_templates < 2:
            raise ValueError("need at least two distinct templates")
        if self.min_isi_s * self.firing_rate_hz >= 1:
            raise ValueError(
                "infeasible ISI constraint: min_isi_s * firing_rate_hz must be < 1"
            )


MAIN_LOBE_TAU_S = (0.045e-3, 0.065e-3)
NOISE_LOBE_TAU_S = (0.08e-3, 0.13e-3)  # background units are distant, tissue-filtered, broader


def _make_templates(
    rng: np.random.Generator,
    n_templates: int,
    rate_hz: float,
    tau_range=MAIN_LOBE_TAU_S,
):
    """Distinct positive-dominant biphasic shapes, 2 ms long, unit peak.

    A fast main lobe followed by a slower opposite lobe; the fast lobe width
    (``tau_range``) sets the energy-operator signature.  Background-unit
    shapes are drawn with a broader range than target units.
    """
    n_t = max(4, round(TEMPLATE_DURATION_S * rate_hz))
    t = np.arange(n_t) / rate_hz
    templates = []
    peak_offsets = []
    for _ in range(n_templates):
        t_main = rng.uniform(0.45e-3, 0.65e-3)
        tau_main = rng.uniform(*tau_range)
        t_second = t_main + rng.uniform(0.45e-3, 0.70e-3)
        tau_second = rng.uniform(0.20e-3, 0.35e-3)
        depth = rng.uniform(0.35, 0.65)
        w = np.exp(-0.5 * ((t - t_main) / tau_main) ** 2)
        w -= depth * np.exp(-0.5 * ((t - t_second) / tau_second) ** 2)
        w /= np.max(w)
        templates.append(w)
        peak_offsets.append(int(np.argmax(w)))
    return templates, peak_offsets, n_t


def _poisson_arrivals(rng, duration_s, rate_hz):
    """Unthinned Poisson arrival times on [0, duration)."""
    times = []
    t = rng.exponential(1.0 / rate_hz)
    while t < duration_s:
        times.append(t)
        t += rng.exponential(1.0 / rate_hz)
    return np.asarray(times)


def min_isi_samples(cfg: SyntheticConfig) -> int:
    """Smallest integer peak-index gap satisfying the ISI floor."""
    return max(1, int(np.ceil(cfg.min_isi_s * cfg.rate_hz - 1e-9)))


def _add_at(out, starts, template, amps):
    """Accumulate amp-scaled copies of one template at the given start samples."""
    if len(starts) == 0:
        return
    n_t = len(template)
    idx = starts[:, None] + np.arange(n_t)[None, :]
    np.add.at(out, idx.ravel(), (amps[:, None] * template[None, :]).ravel())


def _bandlimit(x: np.ndarray, rate_hz: float, lo_hz: float, hi_hz: float) -> np.ndarray:
    """Restrict a sequence to [lo, hi] Hz with raised-cosine band edges.

    Models the recording-chain bandpass the Gaussian noise component arrives
    through; an FFT-domain window keeps it dependency-free and deterministic.
    """
    n = len(x)
    if n == 0:
        return x
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    lo_width = max(1.0, 0.5 * lo_hz)
    hi_width = max(1.0, 0.2 * hi_hz)
    gain = np.ones_like(freqs)
    rising = (freqs < lo_hz) & (freqs >= lo_hz - lo_width)
    gain[freqs < lo_hz - lo_width] = 0.0
    gain[rising] = 0.5 * (1 + np.cos(np.pi * (lo_hz - freqs[rising]) / lo_width))
    falling = (freqs > hi_hz) & (freqs <= hi_hz + hi_width)
    gain[freqs > hi_hz + hi_width] = 0.0
    gain[falling] = 0.5 * (1 + np.cos(np.pi * (freqs[falling] - hi_hz) / hi_width))
    return np.fft.irfft(np.fft.rfft(x) * gain, n)


def generate(cfg: SyntheticConfig) -> tuple[SignalRecord, GroundTruth]:
    """Build one labeled synthetic record; deterministic given ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    n = round(cfg.duration_s * cfg.rate_hz)
    templates, peak_offsets, n_t = _make_templates(rng, cfg.n_templates, cfg.rate_hz)

    # Target spikes: Poisson arrivals, template fully inside the record, then
    # greedy thinning so ground-truth peak indices respect the ISI floor.
    times = _poisson_arrivals(rng, cfg.duration_s, cfg.firing_rate_hz)
    tids = rng.integers(0, cfg.n_templates, size=len(times))
    starts = np.round(times * cfg.rate_hz).astype(np.int64)
    keep = (starts >= 0) & (starts + n_t <= n)
    starts, tids = starts[keep], tids[keep]
    cand_peaks = starts + np.asarray(peak_offsets)[tids]
    order = np.argsort(cand_peaks, kind="stable")
    gap = min_isi_samples(cfg)
    chosen = []
    last_peak = None
    for i in order:
        if last_peak is None or cand_peaks[i] - last_peak >= gap:
            chosen.append(i)
            last_peak = cand_peaks[i]
    starts, tids = starts[chosen], tids[chosen]

    clean = np.zeros(n)
    for tid in range(cfg.n_templates):
        sel = tids == tid
        _add_at(clean, starts[sel], templates[tid], np.ones(int(sel.sum())))
    peaks = starts + np.asarray(peak_offsets)[tids]

    # Background: dense superposition of distant-unit spike shapes plus
    # band-limited Gaussian, equal variance, then one exact rescale to the
    # requested noise level.
    noise_templates, _, _ = _make_templates(
        rng, cfg.n_templates, cfg.rate_hz, tau_range=NOISE_LOBE_TAU_S
    )
    n_noise = rng.poisson(NOISE_SPIKE_RATE_HZ * cfg.duration_s) if n > n_t else 0
    noise_starts = rng.integers(0, max(1, n - n_t), size=n_noise)
    noise_tids = rng.integers(0, cfg.n_templates, size=n_noise)
    noise_amps = rng.uniform(*NOISE_SPIKE_AMP_RANGE, size=n_noise)
    spiky = np.zeros(n)
    for tid in range(cfg.n_templates):
        sel = noise_tids == tid
        _add_at(spiky, noise_starts[sel], noise_templates[tid], noise_amps[sel])
    gauss = _bandlimit(rng.standard_normal(n), cfg.rate_hz, *GAUSSIAN_BAND_HZ)

    spiky -= spiky.mean()  # dense superposition leaves a DC pedestal; recordings are AC-coupled
    spiky_std = float(np.std(spiky))
    if spiky_std > 0:
        spiky = spiky / spiky_std * np.sqrt(1.0 - GAUSSIAN_VARIANCE_SHARE)
    gauss_std = float(np.std(gauss))
    if gauss_std > 0:
        gauss = gauss / gauss_std * np.sqrt(GAUSSIAN_VARIANCE_SHARE)
    raw = spiky + gauss
    raw_std = float(np.std(raw))
    mean_peak = 1.0  # templates are unit peak and placed at unit amplitude
    noise = raw / raw_std * (cfg.noise_level * mean_peak) if raw_std > 0 else raw * 0.0

    record = SignalRecord(samples=clean + noise, rate_hz=cfg.rate_hz, channel_id=0)
    order = np.argsort(peaks, kind="stable")
    truth = GroundTruth(spike_indices=peaks[order], template_ids=tids[order])
    return record, truth


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def resample(record: SignalRecord, new_rate_hz: float) -> SignalRecord:
    """Linear interpolation at the new sample instants.

    Duration is preserved to within one output sample period.  Band-limited
    resampling is deliberately not attempted; rate sweeps target trends.
    """
    if new_rate_hz <= 0:
        raise ValueError("new_rate_hz must be positive")
    if new_rate_hz == record.rate_hz:
        return record
    n_old = len(record)
    n_new = round(n_old * new_rate_hz / record.rate_hz)
    positions = np.arange(n_new) * (record.rate_hz / new_rate_hz)
    samples = np.interp(positions, np.arange(n_old), record.samples)
    return SignalRecord(samples=samples, rate_hz=new_rate_hz, channel_id=record.channel_id)


def rescale_ground_truth(
    truth: GroundTruth, old_rate_hz: float, new_rate_hz: float, n_new: int
) -> GroundTruth:
    """Rescale truth indices by the rate ratio with rounding.

    Indices clipped into range; collisions (possible only under extreme
    downsampling) merge.
    """
    if len(truth) == 0:
        return GroundTruth(spike_indices=np.zeros(0, dtype=np.int64))
    idx = np.round(truth.spike_indices * (new_rate_hz / old_rate_hz)).astype(np.int64)
    idx = np.clip(idx, 0, max(0, n_new - 1))
    idx, keep = np.unique(idx, return_index=True)
    tids = truth.template_ids[keep] if truth.template_ids is not None else None
    return GroundTruth(spike_indices=idx, template_ids=tids)


# ---------------------------------------------------------------------------
# Ground-truth and dataset files
# ---------------------------------------------------------------------------


def save_ground_truth(truth: GroundTruth, path) -> None:
    """CSV, one spike per line: ``sample_index[,template_id]``, no header."""
    lines = []
    for i, idx in enumerate(truth.spike_indices):
        if truth.template_ids is not None:
            lines.append(f"{idx},{truth.template_ids[i]}")
        else:
            lines.append(str(int(idx)))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_ground_truth(path) -> GroundTruth:
    path = Path(path)
    indices = []
    tids = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) not in (1, 2):
            raise ValueError(f"{path}:{lineno}: expected 'sample_index[,template_id]'")
        try:
            indices.append(int(parts[0]))
            if len(parts) == 2:
                tids.append(int(parts[1]))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not an integer: {raw!r}") from None
    if tids and len(tids) != len(indices):
        raise ValueError(f"{path}: template ids present on only some lines")
    return GroundTruth(
        spike_indices=np.asarray(indices, dtype=np.int64),
        template_ids=np.asarray(tids, dtype=np.int64) if tids else None,
    )


def save_dataset(record: SignalRecord, truth: GroundTruth, cfg: SyntheticConfig, out_dir, name: str) -> dict:
    """Write record + truth + manifest; returns the file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record_path = out_dir / f"{name}.f32"
    truth_path = out_dir / f"{name}_truth.csv"
    manifest_path = out_dir / f"{name}.manifest.json"
    save_record(record, record_path)
    save_ground_truth(truth, truth_path)
    manifest = {"name": name, "config": asdict(cfg), "n_samples": len(record), "n_spikes": len(truth)}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"record": record_path, "truth": truth_path, "manifest": manifest_path}


def load_dataset(out_dir, name: str) -> tuple[SignalRecord, GroundTruth]:
    out_dir = Path(out_dir)
    record = load_record(out_dir / f"{name}.f32")
    truth = load_ground_truth(out_dir / f"{name}_truth.csv")
    if len(truth) and truth.spike_indices[-1] >= len(record):
        raise ValueError(f"{name}: ground truth index beyond record end")
    return record, truth
