import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binsparx.devices import DeviceModel, WireModel
from binsparx.errors import ConfigError, DomainError
from binsparx.readout import AdcModel, DummyColumnConfig, adc_quantize, dummy_compensate
from binsparx.solver import solve_columns_fast


class TestAdc:
    def test_rounding_example(self):
        adc = AdcModel(bits=6, quantum=1e-6)
        assert adc_quantize(9.4e-6, adc) == 9

    def test_saturation_example(self):
        adc = AdcModel(bits=6, quantum=1e-6)
        assert adc_quantize(70e-6, adc) == 63

    def test_ties_to_even(self):
        adc = AdcModel(bits=6, quantum=1e-6)
        assert adc_quantize(2.5e-6, adc) == 2
        assert adc_quantize(3.5e-6, adc) == 4

    def test_half_up_variant(self):
        adc = AdcModel(bits=6, quantum=1e-6, rounding="half_up")
        assert adc_quantize(2.5e-6, adc) == 3
        assert adc_quantize(3.5e-6, adc) == 4

    def test_offset(self):
        adc = AdcModel(bits=4, quantum=1e-6, offset=2e-6)
        assert adc_quantize(5e-6, adc) == 3
        assert adc_quantize(0.0, adc) == 0  # clamps below zero

    def test_negative_input_rejected(self):
        adc = AdcModel(bits=4, quantum=1e-6)
        with pytest.raises(DomainError):
            adc_quantize(-1e-9, adc)

    def test_clamp_counting(self):
        adc = AdcModel(bits=3, quantum=1e-6)
        levels, clamps = adc.quantize_array(np.array([0.0, 3e-6, 9e-6, 20e-6]))
        assert levels.tolist() == [0, 3, 7, 7]
        assert clamps == 2

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            AdcModel(bits=0, quantum=1e-6)
        with pytest.raises(ConfigError):
            AdcModel(bits=4, quantum=0.0)
        with pytest.raises(ConfigError):
            AdcModel(bits=4, quantum=1e-6, rounding="floor")

    @settings(max_examples=300, derandomize=True)
    @given(st.floats(min_value=0.0, max_value=15.49))
    def test_error_at_most_half_quantum_in_range(self, level_units):
        adc = AdcModel(bits=4, quantum=1e-6)
        i = level_units * 1e-6
        level = adc_quantize(i, adc)
        assert abs(level * 1e-6 - i) <= 0.5e-6 * (1 + 1e-9)

    def test_reduced_adc_lossless_below_corner(self):
        # 5-bit reduced ADC: counts 0..31 map one-to-one
        adc = AdcModel(bits=5, quantum=1e-6)
        for s in range(32):
            assert adc_quantize(s * 1e-6, adc) == s


class TestDummy:
    def test_identity_when_zero(self):
        assert dummy_compensate(5e-6, 0.0) == 5e-6

    def test_subtracts(self):
        # 32 active HRS cells at 0.1 uA leak 3.2 uA; compensation removes it
        assert dummy_compensate(10e-6 + 3.2e-6, 3.2e-6) == pytest.approx(10e-6)

    def test_floor_at_zero(self):
        assert dummy_compensate(1e-6, 2e-6) == 0.0

    def test_array_form(self):
        out = dummy_compensate(np.array([3e-6, 1e-6]), np.array([1e-6, 2e-6]))
        assert out.tolist() == [2e-6, 0.0]

    def test_domain_validation(self):
        with pytest.raises(ConfigError):
            DummyColumnConfig(enabled=True, domain="optical")

    def test_exact_cancellation_linear_no_parasitics(self, rng):
        # with ohmic cells and no wire resistance the dummy current equals
        # (# gate-on cells) * i_hrs exactly, so compensation cancels the
        # HRS term to machine precision
        dev = DeviceModel(kind="reram1t1r", i_on=1e-6, i_hrs=1e-7, i_off=0.0,
                          curve="linear")
        wire = WireModel(0.0, 0.0, 0.0, 0.0)
        stored = rng.integers(0, 2, (8, 64))
        gates = rng.integers(0, 2, (8, 64))
        data = solve_columns_fast(stored, gates, dev, wire, 0.7, tol=1e-12)
        dummy = solve_columns_fast(np.zeros_like(stored), gates, dev, wire, 0.7, tol=1e-12)
        comp = dummy_compensate(data.i_out, dummy.i_out)
        on = ((stored > 0) & (gates > 0)).sum(axis=1)
        hrs_on = ((stored == 0) & (gates > 0)).sum(axis=1)
        assert np.allclose(data.i_out, on * 1e-6 + hrs_on * 1e-7, rtol=1e-9)
        assert np.allclose(comp, on * 1e-6, rtol=1e-9)

    def test_compensation_reduces_error_with_parasitics(self, rng):
        dev = DeviceModel.reram1t1r()
        wire = WireModel.preset("M4")
        B = 64
        stored = rng.integers(0, 2, (B, 64))
        gates = rng.integers(0, 2, (B, 64))
        data = solve_columns_fast(stored, gates, dev, wire, 0.7, tol=1e-9, max_iter=2000)
        dummy = solve_columns_fast(np.zeros_like(stored), gates, dev, wire, 0.7,
                                   tol=1e-9, max_iter=2000)
        ideal = ((stored > 0) & (gates > 0)).sum(axis=1) * dev.i_on
        raw_err = np.abs(data.i_out - ideal)
        comp_err = np.abs(dummy_compensate(data.i_out, dummy.i_out) - ideal)
        assert comp_err.mean() < raw_err.mean()
