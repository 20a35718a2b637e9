import json

import numpy as np
import pytest

from dualteo.dataio import (
    GroundTruth,
    SyntheticConfig,
    generate,
    load_dataset,
    load_ground_truth,
    min_isi_samples,
    resample,
    rescale_ground_truth,
    save_dataset,
    save_ground_truth,
)
from dualteo.signal_model import SignalRecord


class TestConfigValidation:
    def test_infeasible_isi_rejected(self):
        with pytest.raises(ValueError, match="infeasible"):
            SyntheticConfig(min_isi_s=0.06, firing_rate_hz=20.0)

    def test_needs_two_templates(self):
        with pytest.raises(ValueError, match="template"):
            SyntheticConfig(n_templates=1)

    def test_negative_noise_rejected(self):
        with pytest.raises(ValueError):
            SyntheticConfig(noise_level=-0.1)


class TestGroundTruthType:
    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError, match="increasing"):
            GroundTruth(spike_indices=np.array([5, 5, 9]))

    def test_template_ids_length_checked(self):
        with pytest.raises(ValueError, match="length"):
            GroundTruth(spike_indices=np.array([1, 2]), template_ids=np.array([0]))


@pytest.fixture(scope="module")
def mid_noise():
    cfg = SyntheticConfig(duration_s=5.0, noise_level=0.1, seed=21)
    return cfg, *generate(cfg)


class TestGenerate:
    def test_noiseless_record_is_pure_template_train(self):
        cfg = SyntheticConfig(duration_s=3.0, noise_level=0.0, seed=5)
        record, truth = generate(cfg)
        assert len(truth) > 0
        assert np.max(record.samples) == pytest.approx(1.0, abs=1e-12)
        # samples away from any template span are exactly zero
        mask = np.ones(len(record), bool)
        n_t = round(0.002 * cfg.rate_hz)
        for p in truth.spike_indices:
            mask[max(0, p - n_t): p + n_t] = False
        assert np.all(record.samples[mask] == 0.0)

    def test_measured_noise_ratio_within_two_percent(self, mid_noise):
        cfg, record, truth = mid_noise
        mask = np.ones(len(record), bool)
        n_t = round(0.002 * cfg.rate_hz)
        for p in truth.spike_indices:
            mask[max(0, p - n_t): p + n_t] = False
        ratio = float(np.std(record.samples[mask]))  # mean placed peak is 1.0
        assert 0.098 <= ratio <= 0.102

    def test_same_seed_reproduces_bitwise(self):
        cfg = SyntheticConfig(duration_s=2.0, noise_level=0.15, seed=77)
        ra, ta = generate(cfg)
        rb, tb = generate(cfg)
        assert np.array_equal(ra.samples, rb.samples)
        assert np.array_equal(ta.spike_indices, tb.spike_indices)

    def test_same_seed_different_noise_same_spikes(self):
        a = generate(SyntheticConfig(duration_s=2.0, noise_level=0.05, seed=3))[1]
        b = generate(SyntheticConfig(duration_s=2.0, noise_level=0.2, seed=3))[1]
        assert np.array_equal(a.spike_indices, b.spike_indices)
        assert np.array_equal(a.template_ids, b.template_ids)

    def test_isi_floor_respected(self, mid_noise):
        cfg, _, truth = mid_noise
        gaps = np.diff(truth.spike_indices)
        assert gaps.min() >= min_isi_samples(cfg)
        assert min_isi_samples(cfg) >= cfg.min_isi_s * cfg.rate_hz - 1e-6

    def test_truth_within_record_bounds(self, mid_noise):
        _, record, truth = mid_noise
        assert truth.spike_indices[0] >= 0
        assert truth.spike_indices[-1] < len(record)

    def test_record_shorter_than_template_has_no_spikes(self):
        # too short for any template; background noise still present at scale
        record, truth = generate(SyntheticConfig(duration_s=0.001, noise_level=0.1, seed=1))
        assert len(truth) == 0
        assert np.std(record.samples) == pytest.approx(0.1, rel=1e-9)


class TestResample:
    def test_same_rate_is_identity(self):
        record = SignalRecord(np.arange(10.0), rate_hz=24000.0)
        assert resample(record, 24000.0) is record

    def test_constant_record_stays_constant(self):
        record = SignalRecord(np.full(100, 2.5), rate_hz=24000.0)
        out = resample(record, 16000.0)
        np.testing.assert_allclose(out.samples, 2.5)
        assert out.rate_hz == 16000.0

    def test_ramp_slope_scales_by_rate_ratio(self):
        record = SignalRecord(np.arange(300, dtype=float), rate_hz=24000.0)
        out = resample(record, 16000.0)
        steps = np.diff(out.samples[:-2])  # clamped endpoint excluded
        np.testing.assert_allclose(steps, 1.5)

    def test_duration_preserved_within_one_period(self):
        record = SignalRecord(np.zeros(9999), rate_hz=24000.0)
        for new_rate in (16000.0, 30000.0, 12345.0):
            out = resample(record, new_rate)
            assert abs(out.duration_s - record.duration_s) <= 1.0 / new_rate

    def test_truth_rescaling_rounds_and_clips(self):
        truth = GroundTruth(spike_indices=np.array([0, 100, 299]))
        out = rescale_ground_truth(truth, 24000.0, 16000.0, n_new=200)
        assert out.spike_indices.tolist() == [0, 67, 199]

    def test_empty_truth_rescales_to_empty(self):
        out = rescale_ground_truth(GroundTruth(np.zeros(0, dtype=int)), 24000.0, 16000.0, 10)
        assert len(out) == 0


class TestGroundTruthFiles:
    def test_roundtrip_with_template_ids(self, tmp_path):
        truth = GroundTruth(spike_indices=np.array([10, 50, 90]), template_ids=np.array([0, 2, 1]))
        path = tmp_path / "truth.csv"
        save_ground_truth(truth, path)
        back = load_ground_truth(path)
        assert np.array_equal(back.spike_indices, truth.spike_indices)
        assert np.array_equal(back.template_ids, truth.template_ids)

    def test_empty_file_gives_empty_truth(self, tmp_path):
        path = tmp_path / "truth.csv"
        path.write_text("")
        assert len(load_ground_truth(path)) == 0

    def test_three_line_fixture(self, tmp_path):
        path = tmp_path / "truth.csv"
        path.write_text("120\n480\n960\n")
        truth = load_ground_truth(path)
        assert truth.spike_indices.tolist() == [120, 480, 960]
        assert truth.template_ids is None

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "truth.csv"
        path.write_text("120\nabc\n")
        with pytest.raises(ValueError, match=":2"):
            load_ground_truth(path)

    def test_partial_template_ids_rejected(self, tmp_path):
        path = tmp_path / "truth.csv"
        path.write_text("120,1\n480\n")
        with pytest.raises(ValueError, match="some lines"):
            load_ground_truth(path)


class TestDatasetBundle:
    def test_roundtrip_and_manifest(self, tmp_path):
        cfg = SyntheticConfig(duration_s=1.0, noise_level=0.1, seed=1)
        record, truth = generate(cfg)
        paths = save_dataset(record, truth, cfg, tmp_path, "demo")
        back_record, back_truth = load_dataset(tmp_path, "demo")
        np.testing.assert_allclose(back_record.samples, record.samples, atol=1e-6)
        assert np.array_equal(back_truth.spike_indices, truth.spike_indices)
        manifest = json.loads(paths["manifest"].read_text())
        assert manifest["config"]["seed"] == 1
        assert manifest["n_spikes"] == len(truth)

    def test_truth_beyond_record_rejected(self, tmp_path):
        cfg = SyntheticConfig(duration_s=1.0, noise_level=0.1, seed=1)
        record, truth = generate(cfg)
        save_dataset(record, truth, cfg, tmp_path, "demo")
        (tmp_path / "demo_truth.csv").write_text(f"{len(record) + 5}\n")
        with pytest.raises(ValueError, match="beyond"):
            load_dataset(tmp_path, "demo")
