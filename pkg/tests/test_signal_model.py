import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualteo.signal_model import (
    FixedPointFormat,
    QuantizedRecord,
    SignalRecord,
    dequantize,
    load_record,
    quantize,
    quantize_mid_tread,
    read_header,
    save_record,
    truncate_to,
)

FMT7 = FixedPointFormat(total_bits=7)


def rec(samples, rate=24000.0):
    return SignalRecord(samples=np.asarray(samples, dtype=float), rate_hz=rate)


class TestQuantize:
    def test_zero_maps_to_zero(self):
        q = quantize(rec([0.0]), FMT7, 1.0)
        assert q.codes.tolist() == [0]

    def test_saturates_at_max_code(self):
        q = quantize(rec([2.0]), FMT7, 1.0)
        assert q.codes.tolist() == [63]

    def test_negative_half_scale(self):
        q = quantize(rec([-0.5]), FMT7, 1.0)
        assert q.codes.tolist() == [-32]

    def test_rejects_bad_full_scale(self):
        with pytest.raises(ValueError):
            quantize(rec([0.0]), FMT7, 0.0)

    def test_nonfinite_samples_rejected_at_record_construction(self):
        with pytest.raises(ValueError, match="finite"):
            rec([np.inf])

    @given(
        st.lists(st.floats(min_value=-3.0, max_value=3.0), min_size=1, max_size=64),
        st.integers(min_value=2, max_value=16),
    )
    def test_codes_never_leave_range(self, samples, bits):
        fmt = FixedPointFormat(total_bits=bits)
        q = quantize(rec(samples), fmt, 0.7)
        assert q.codes.min() >= fmt.min_code
        assert q.codes.max() <= fmt.max_code

    @given(st.lists(st.floats(min_value=-0.999, max_value=0.999), min_size=1, max_size=64))
    def test_roundtrip_error_within_one_lsb(self, samples):
        q = quantize(rec(samples), FMT7, 1.0)
        back = dequantize(q).samples
        lsb = 1.0 / 64
        assert np.all(np.abs(back - np.asarray(samples)) <= lsb + 1e-12)

    @given(st.lists(st.floats(min_value=-4.0, max_value=4.0), min_size=1, max_size=64))
    def test_roundtrip_tracks_clamped_input_within_one_lsb(self, samples):
        # out-of-scale inputs saturate; the roundtrip stays within one LSB of clamp(x)
        q = quantize(rec(samples), FMT7, 1.0)
        back = dequantize(q).samples
        lsb = 1.0 / 64
        clamped = np.clip(samples, -1.0, 63.0 / 64.0)
        assert np.all(np.abs(back - clamped) <= lsb + 1e-12)


class TestDequantize:
    def test_zero_code(self):
        q = QuantizedRecord(codes=[0], format=FMT7, rate_hz=1.0, full_scale=1.0)
        assert dequantize(q).samples.tolist() == [0.0]

    def test_max_positive_code(self):
        q = QuantizedRecord(codes=[63], format=FMT7, rate_hz=1.0, full_scale=1.0)
        assert dequantize(q).samples.tolist() == [0.984375]

    @given(st.lists(st.integers(min_value=-64, max_value=63), min_size=1, max_size=64))
    def test_requantize_is_identity_on_codes(self, codes):
        q = QuantizedRecord(codes=codes, format=FMT7, rate_hz=1.0, full_scale=0.5)
        again = quantize(dequantize(q), FMT7, 0.5)
        assert again.codes.tolist() == codes

    def test_out_of_range_codes_rejected(self):
        with pytest.raises(ValueError, match="range"):
            QuantizedRecord(codes=[64], format=FMT7, rate_hz=1.0, full_scale=1.0)


class TestTruncateTo:
    WIDE = FixedPointFormat(total_bits=24)

    def test_identity_at_zero_drop(self):
        assert truncate_to(5, self.WIDE, 0) == 5

    def test_floor_semantics_for_negatives(self):
        assert truncate_to(-7, self.WIDE, 1) == -4

    def test_saturation_into_narrow_format(self):
        assert truncate_to(300, FixedPointFormat(total_bits=8), 0) == 127
        assert truncate_to(-300, FixedPointFormat(total_bits=8), 0) == -128

    def test_rejects_negative_drop(self):
        with pytest.raises(ValueError):
            truncate_to(1, self.WIDE, -1)

    def test_full_range_against_floor_division_oracle(self):
        # the implementation shifts; the oracle divides
        values = np.arange(-(1 << 20), (1 << 20) + 1, dtype=np.int64)
        for drop in range(9):
            got = truncate_to(values, self.WIDE, drop)
            oracle = np.clip(
                np.floor_divide(values, 1 << drop), self.WIDE.min_code, self.WIDE.max_code
            )
            assert np.array_equal(got, oracle), f"mismatch at drop={drop}"

    @given(st.integers(min_value=-(1 << 30), max_value=1 << 30), st.integers(min_value=0, max_value=12))
    def test_scalar_matches_floor_division(self, value, drop):
        assert truncate_to(value, self.WIDE, drop) == min(
            max(value // (1 << drop), self.WIDE.min_code), self.WIDE.max_code
        )


class TestMidTread:
    def test_zero_maps_to_zero_at_coarse_resolution(self):
        fmt = FixedPointFormat(total_bits=4)
        q = quantize_mid_tread(rec([0.0, 0.0]), fmt, 1.0)
        assert q.codes.tolist() == [0, 0]

    def test_removes_floor_bias_on_symmetric_noise(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-0.5, 0.5, size=20000)
        fmt = FixedPointFormat(total_bits=4)
        plain = quantize(rec(x), fmt, 1.0).codes.mean()
        trimmed = quantize_mid_tread(rec(x), fmt, 1.0).codes.mean()
        assert abs(plain + 0.5) < 0.05      # floor leaves a half-code pedestal
        assert abs(trimmed) < 0.05


class TestRecordFiles:
    @pytest.mark.parametrize("suffix", [".f32", ".csv"])
    def test_save_load_roundtrip(self, tmp_path, suffix):
        r = rec([0.25, -0.75, 0.0, 0.5], rate=16000.0)
        path = tmp_path / f"chan{suffix}"
        save_record(r, path, full_scale=1.0)
        back = load_record(path)
        np.testing.assert_allclose(back.samples, r.samples, atol=1e-7)
        assert back.rate_hz == 16000.0
        assert back.channel_id == 0

    def test_header_carries_full_scale(self, tmp_path):
        path = tmp_path / "chan.f32"
        save_record(rec([0.5]), path, full_scale=2.0)
        header = read_header(path)
        assert float(header["full_scale"]) == 2.0

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "chan.f32"
        np.zeros(4, dtype="<f4").tofile(path)
        with pytest.raises(FileNotFoundError):
            load_record(path)

    def test_sample_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "chan.f32"
        save_record(rec([0.1, 0.2, 0.3]), path)
        hdr = path.with_name(path.name + ".hdr")
        hdr.write_text(hdr.read_text().replace("n_samples=3", "n_samples=5"))
        with pytest.raises(ValueError, match="samples"):
            load_record(path)

    def test_malformed_header_line_named(self, tmp_path):
        path = tmp_path / "chan.f32"
        save_record(rec([0.1]), path)
        hdr = path.with_name(path.name + ".hdr")
        hdr.write_text("rate_hz 24000\n")
        with pytest.raises(ValueError, match="key=value"):
            load_record(path)

    def test_bad_csv_row_named(self, tmp_path):
        path = tmp_path / "chan.csv"
        save_record(rec([0.1, 0.2]), path)
        path.write_text("0.1\nnot-a-number\n")
        with pytest.raises(ValueError, match="2"):
            load_record(path)
