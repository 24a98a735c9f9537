import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasebench.bench import Bench, DriftModel, Role, VacConfig, vac_transfer
from phasebench.dut import Mode
from phasebench.errors import ConfigError, NullNotFound, RetriesExhausted, Timeout
from phasebench.netcal import SParamSet, compute_corrections, find_row
from phasebench.phasor import phase_error_bound
from phasebench.procedure import (
    DetectorCurve,
    ProcedureConfig,
    approach,
    await_drift_window,
    curve_acquisition,
    error_budget,
    null_search,
    post_check,
    reference_acquisition,
    run_point,
    setup_gain,
)
from phasebench.published import table2_sparams

BOUND_41 = phase_error_bound(-41.0, 0.0)


def still(offset0=0.0):
    return DriftModel(rate_at_ref=0.0, offset0=offset0)


class TestNullSearch:
    def test_ideal_bench(self):
        b = Bench(3.0, drift=still(40.0))
        null = null_search(b)
        assert null.dp_m_null == 0.0
        assert abs(b.null_deviation()) < 0.01

    def test_reference_line(self):
        null = null_search(Bench(3.0, drift=still()))
        assert null.p_sum == pytest.approx(6.02, abs=0.005)
        assert null.line_ref == pytest.approx(null.p_sum - 41.0)
        assert null.line_ref == pytest.approx(-34.98, abs=0.005)

    def test_seven_ghz_power_correction(self):
        # the level imbalance measured at 7 GHz needs -0.3 dB on the primary
        sp = find_row(table2_sparams(), 7)
        b = Bench(7.0, network=sp, drift=still(), primary_level_error_db=0.26)
        assert null_search(b).dp_m_null == pytest.approx(-0.30, abs=1e-9)

    def test_power_resolution(self):
        b = Bench(3.0, drift=still(), primary_level_error_db=0.123)
        dp = null_search(b).dp_m_null
        assert dp == pytest.approx(round(dp, 2), abs=1e-12)
        assert dp == pytest.approx(-0.12, abs=0.011)

    def test_excess_imbalance(self):
        with pytest.raises(NullNotFound):
            null_search(Bench(3.0, drift=still(), primary_level_error_db=8.0))


def parked_bench(rate, offset0):
    """Ideal bench, nulled, whose drift then runs linearly from ``offset0``."""
    b = Bench(3.0, drift=still())
    null = null_search(b)
    b.set_phase(Role.SECONDARY, null.theta_s_ref, action=None)
    now = b.clock.now
    b.drift = DriftModel(rate_at_ref=rate, proportional=False, offset0=offset0 - rate * now)
    return b, null


class TestDriftWindow:
    def test_zero_drift(self):
        b, null = parked_bench(0.0, 0.0)
        t0 = b.clock.now
        assert await_drift_window(b, null) == pytest.approx(t0 + 0.4)

    def test_linear_approach(self):
        b, null = parked_bench(-0.5, 3.0)
        t0 = b.clock.now
        entry = await_drift_window(b, null, ProcedureConfig(entry_margin_db=0.0))
        # |offset| falls from 3 to the 1.02 deg line in 3.96 s, read every 0.2 s
        assert entry - t0 == pytest.approx(4.0, abs=1e-9)
        assert abs(b.null_deviation()) <= BOUND_41

    def test_moving_away(self):
        b, null = parked_bench(+0.5, 3.0)
        with pytest.raises(Timeout):
            await_drift_window(b, null, ProcedureConfig(horizon_s=20.0))

    def test_approach_finds_the_incoming_side(self):
        b, null = parked_bench(-0.2, 0.0)
        side = approach(b, null)
        assert side != 0
        entry = await_drift_window(b, null)
        assert abs(b.null_deviation()) <= BOUND_41
        assert entry > null.captured_at

    def test_approach_without_drift_stays_on_the_null(self):
        b, null = parked_bench(0.0, 0.0)
        assert approach(b, null) == 0
        assert b.secondary.phase_setting == pytest.approx(null.theta_s_ref)


class TestReferenceBlock:
    def test_ideal_levels_and_duration(self):
        b, null = parked_bench(0.0, 0.0)
        t0 = b.clock.now
        refs = reference_acquisition(b, compute_corrections(SParamSet.identity(3.0)))
        assert refs.acquired_at - t0 == pytest.approx(9.0)
        amp = b.primary.amplitude * b.secondary.amplitude
        lsb = b.adc.lsb
        assert refs.vi_180 == pytest.approx(vac_transfer(b.vac, -amp), abs=lsb)
        assert refs.vq_90 == pytest.approx(vac_transfer(b.vac, +amp), abs=lsb)
        assert refs.vi_90 == pytest.approx(vac_transfer(b.vac, 0.0), abs=lsb)
        assert all(0.0 <= v <= 5.0 for v in (refs.vi_180, refs.vi_90, refs.vq_90, refs.vq_180))
        assert b.switch_state == 2

    def test_without_corrections_skips_the_power_entries(self):
        b, _ = parked_bench(0.0, 0.0)
        t0 = b.clock.now
        assert reference_acquisition(b, None).acquired_at - t0 == pytest.approx(7.0)

    def test_capture_order(self):
        b, _ = parked_bench(0.0, 0.0)
        refs = reference_acquisition(b, None)
        assert list(refs.capture_times) == sorted(refs.capture_times)
        assert refs.capture_times[-1] < refs.acquired_at

    def test_corrections_restored(self):
        sp = find_row(table2_sparams(), 5)
        b = Bench(5.0, network=sp, drift=still())
        null_search(b)
        theta, pm = b.secondary.phase_setting, b.primary.power
        refs = reference_acquisition(b, compute_corrections(sp))
        assert b.secondary.phase_setting == pytest.approx(theta)
        assert b.primary.power == pytest.approx(pm)
        assert max(abs(e) for e in refs.true_errors) < 0.01


class TestPostCheck:
    @pytest.mark.parametrize("drift_deg, valid", [(0.0, True), (0.4, True), (1.6, False)])
    def test_accumulated_drift(self, drift_deg, valid):
        b, null = parked_bench(drift_deg / 9.0, 0.0)
        reference_acquisition(b, None)
        # the check read itself happens 9 s after the block started
        assert post_check(b, null) is valid


class TestCurves:
    def test_ideal_beat(self):
        b = Bench(3.0, drift=still())
        setup_gain(b, ProcedureConfig())
        ci, cq = curve_acquisition(b, None)
        assert len(ci) == 280 and ci.mode is Mode.IXI and cq.mode is Mode.QXI
        assert len(ci) / ci.sample_rate * ci.beat_hz > 1.0
        assert not ci.clipped and not cq.clipped
        assert b.switch_state == 2 and b.primary.freq_trim == 0.0
        # one clean beat cosine
        t = np.arange(len(ci)) / ci.sample_rate
        w = 2 * np.pi * ci.beat_hz * t
        design = np.column_stack([np.ones_like(w), np.cos(w), np.sin(w)])
        coef, *_ = np.linalg.lstsq(design, ci.volts, rcond=None)
        assert np.max(np.abs(design @ coef - ci.volts)) <= b.adc.lsb

    def test_published_levels(self):
        b = Bench(3.0, drift=still())
        amp = b.primary.amplitude * b.secondary.amplitude
        # divider chosen so that the swing lands on 0.46 .. 4.77 V
        gain = (4.77 - 0.46) / amp
        b.vac = VacConfig(v_ref=(4.77 + 0.46) / gain, r1=10000.0, r2=10000.0 / (gain - 1) - 100.0, r3=100.0)
        ci, _ = curve_acquisition(b, None)
        assert ci.volts.max() == pytest.approx(4.77, abs=0.01)
        assert ci.volts.min() == pytest.approx(0.46, abs=0.01)

    def test_gain_too_high_is_flagged(self):
        b = Bench(3.0, drift=still(), vac=VacConfig(v_ref=5.0, r1=10000.0, r2=0.0, r3=100.0))
        ci, _ = curve_acquisition(b, None)
        assert ci.clipped

    def test_short_buffer_rejected(self):
        with pytest.raises(ConfigError):
            DetectorCurve(Mode.IXI, np.zeros(100), np.zeros(100), 11.0, 2800.0, 3.0)

    def test_gain_setup_fills_range(self):
        b = Bench(3.0, drift=still())
        setup_gain(b, ProcedureConfig())
        ci, cq = curve_acquisition(b, None)
        for c in (ci, cq):
            assert c.volts.min() == pytest.approx(0.25, abs=0.02)
            assert c.volts.max() == pytest.approx(4.75, abs=0.02)


class TestRunPoint:
    def test_zero_drift(self):
        rep = run_point(Bench(3.0, drift=still(12.0)), None)
        assert rep.retries == 0 and rep.refs.valid

    def test_retry_then_success(self):
        # the first block lands on a steep stretch of the wander, a later one near its turning point
        drift = DriftModel(rate_at_ref=0.0, proportional=False, offset0=180.0,
                           wander_amp=10.0, wander_period=300.0)
        rep = run_point(Bench(3.0, drift=drift), None)
        assert rep.retries >= 1
        assert rep.refs.valid and rep.attempts[-1].valid
        assert not any(a.valid for a in rep.attempts[:-1])

    def test_retries_exhausted(self):
        drift = DriftModel(rate_at_ref=0.0, proportional=False, wander_amp=10.0, wander_period=100.0)
        with pytest.raises(RetriesExhausted):
            run_point(Bench(3.0, drift=drift), None, cfg=ProcedureConfig(max_retries=2))

    def test_skipped_corrections_budget(self):
        c = compute_corrections(find_row(table2_sparams(), 4))
        cfg = ProcedureConfig(skip_network_corrections=True)
        assert error_budget(cfg, c) == pytest.approx(BOUND_41 + 0.95)
        assert error_budget(cfg, c) == pytest.approx(1.95, abs=0.025)
        assert error_budget(ProcedureConfig(), c) == pytest.approx(BOUND_41)

    def test_tighter_line(self):
        assert ProcedureConfig(line_offset_db=47.0).error_bound_deg == pytest.approx(0.511858, abs=1e-5)


def assert_sound(rep, bound):
    for a in rep.attempts:
        if a.valid:
            assert abs(a.true_deviation_start) <= bound + 1e-9
            assert abs(a.true_deviation_end) <= bound + 1e-9
    assert all(abs(e) <= bound + 1e-9 for e in rep.refs.true_errors)
    for c in rep.curves:
        assert len(c) / c.sample_rate * c.beat_hz > 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.1, 0.1), st.floats(0, 360), st.sampled_from([41.0, 47.0]))
def test_guarantee_with_linear_drift(rate, offset0, line):
    cfg = ProcedureConfig(line_offset_db=line)
    b = Bench(3.0, drift=DriftModel(rate_at_ref=rate, proportional=False, offset0=offset0))
    try:
        rep = run_point(b, None, cfg=cfg)
    except (Timeout, RetriesExhausted):
        return
    assert_sound(rep, cfg.error_bound_deg)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 10), st.floats(60, 400), st.floats(0, 360), st.floats(-0.05, 0.05))
def test_retry_soundness_with_wander(amp, period, offset0, rate):
    drift = DriftModel(rate_at_ref=rate, proportional=False, offset0=offset0,
                       wander_amp=amp, wander_period=period)
    try:
        rep = run_point(Bench(3.0, drift=drift), None)
    except (NullNotFound, Timeout, RetriesExhausted):
        # a fast wander can outrun the null search itself
        return
    # the wander is not monotone, so only the block endpoints are checked
    for a in rep.attempts:
        if a.valid:
            assert abs(a.true_deviation_start) <= BOUND_41 + 1e-9
            assert abs(a.true_deviation_end) <= BOUND_41 + 1e-9
    assert rep.refs.valid
