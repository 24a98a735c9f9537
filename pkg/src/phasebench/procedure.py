"""Calibration and measurement procedure driven against a simulated bench.

One frequency point runs as:

1. gain set-up: +1 kHz trim, look at the detector output, set the VAC so
   the curves fill the ADC range;
2. null search at the combiner (theta_M = 180), P_SUM at theta_M = 0 and a
   reference line P_SUM - line_offset;
3. park theta_S just outside the line on the side the drift is coming
   from and wait until the SA power falls under the line;
4. reference data acquisition (four detector voltages at theta_M = 180
   and 90, I x I then Q x I), as fast as the action costs allow;
5. post-check: back on the combiner, the SA power must still be under the
   line, otherwise everything from step 2 is repeated;
6. curve acquisition with the primary trimmed by +11 Hz.

The engine only looks at what an operator could see: SA readings, the
scope and ADC captures.  Ground-truth phase errors are recorded next to
the captures for verification but never steer the procedure.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bench import Bench, Role, adc_to_volts
from .dut import Mode, QuadratureSpec
from .errors import ConfigError, NullNotFound, RetriesExhausted, Timeout
from .netcal import CorrectionSet
from .phasor import dbm_to_mw, phase_error_bound

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class ProcedureConfig:
    line_offset_db: float = 41.0
    max_retries: int = 10
    skip_network_corrections: bool = False
    horizon_s: float = 120.0
    entry_margin_db: float = 0.5  # "clearly under" the reference line
    approach_margin_deg: float = 0.2  # how far outside the line theta_S is parked
    null_margin_db: float = 3.0  # the null must reach this far below the line
    max_power_adjust_db: float = 3.0  # P_M range available to the null search
    power_step_db: float = 0.01
    coarse_step_deg: float = 1.0
    stationary_frac: float = 1e-3  # SA change, as a fraction of the line power, that counts as none
    beat_hz: float = 11.0
    gain_trim_hz: float = 1000.0
    vac_target: tuple = (0.25, 4.75)
    approach_side: str = "auto"  # "auto", "+" or "-"

    @property
    def error_bound_deg(self) -> float:
        return phase_error_bound(-self.line_offset_db, 0.0)


@dataclass
class NullResult:
    theta_s_ref: float
    dp_m_null: float
    p_sum: float
    line_ref: float
    null_power: float
    captured_at: float

    def as_dict(self) -> dict:
        return {
            "theta_s_ref": self.theta_s_ref,
            "dp_m_null": self.dp_m_null,
            "p_sum": self.p_sum,
            "line_ref": self.line_ref,
            "null_power": self.null_power,
            "captured_at": self.captured_at,
        }


@dataclass
class ReferenceVoltages:
    vi_180: float
    vi_90: float
    vq_90: float
    vq_180: float
    acquired_at: float = 0.0  # clock time when the block finished
    valid: bool = False
    started_at: float = 0.0
    capture_times: tuple = ()
    true_errors: tuple = ()  # deg, DUT input phase error at each capture (diagnostic)

    def as_dict(self) -> dict:
        return {
            "vi_180": self.vi_180,
            "vi_90": self.vi_90,
            "vq_90": self.vq_90,
            "vq_180": self.vq_180,
            "acquired_at": self.acquired_at,
            "started_at": self.started_at,
            "valid": self.valid,
        }


@dataclass
class DetectorCurve:
    mode: Mode
    codes: np.ndarray
    volts: np.ndarray
    beat_hz: float
    sample_rate: float
    frequency: float  # GHz
    clipped: bool = False
    acquired_at: float = 0.0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if len(self.codes) / self.sample_rate * self.beat_hz <= 1.0:
            raise ConfigError(
                f"{len(self.codes)} samples at {self.sample_rate:g} Hz do not span one "
                f"{self.beat_hz:g} Hz beat period"
            )

    def __len__(self):
        return len(self.codes)


@dataclass
class Attempt:
    started_at: float
    finished_at: float
    entry_power: float
    check_power: float
    valid: bool
    true_deviation_start: float
    true_deviation_end: float
    true_errors: tuple

    def as_dict(self) -> dict:
        return dict(self.__dict__, true_errors=list(self.true_errors))


@dataclass
class ProcedureReport:
    frequency: float
    null: NullResult
    refs: ReferenceVoltages
    curves: tuple
    retries: int
    error_budget_deg: float
    corrections: Optional[CorrectionSet] = None
    attempts: list = field(default_factory=list)
    vac: dict = field(default_factory=dict)


def _golden(f, lo: float, hi: float, tol: float):
    """Golden-section minimum of ``f`` on [lo, hi]; returns the best point seen."""
    best = (math.inf, None)
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    best = min(best, (fc, c), (fd, d))
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
            best = min(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
            best = min(best, (fd, d))
    return best[1], best[0]


def setup_gain(bench: Bench, cfg: ProcedureConfig) -> dict:
    """Main-sequence preamble: size the VAC from the detector swing at +1 kHz."""
    bench.set_power(Role.PRIMARY, bench.power_dbm)
    bench.set_power(Role.SECONDARY, bench.power_dbm)
    bench.set_mode(Mode.IXI)
    bench.set_switch(1)
    bench.set_trim(Role.PRIMARY, cfg.gain_trim_hz)
    window = 1.2 / cfg.gain_trim_hz
    swing = [bench.scope_capture(window)]
    # Q x I is checked as well so a larger Q swing cannot clip
    bench.set_mode(Mode.QXI)
    swing.append(bench.scope_capture(window))
    bench.set_mode(Mode.IXI)
    lo = min(float(s.min()) for s in swing)
    hi = max(float(s.max()) for s in swing)

    vac = bench.vac
    t_lo, t_hi = cfg.vac_target
    gain = (t_hi - t_lo) * 2.0 / max(hi - lo, 1e-12)
    gain_min = 1.0 + vac.r1 / (vac.r2_max + vac.r3)
    gain_max = 1.0 + vac.r1 / vac.r3 if vac.r3 > 0 else math.inf
    gain = min(max(gain, gain_min), gain_max)
    r2 = vac.r1 / (gain - 1.0) - vac.r3 if gain > 1.0 else vac.r2_max
    r2 = min(max(r2, 0.0), vac.r2_max)
    gain = 1.0 + vac.r1 / (r2 + vac.r3)
    v_ref = (t_lo + t_hi) / gain - 0.5 * (lo + hi)
    bench.set_vac(v_ref=v_ref, r2=r2)
    bench.set_trim(Role.PRIMARY, 0.0)
    bench.set_switch(2)
    return {"v_ref": v_ref, "r2": r2, "gain": gain, "raw_min": lo, "raw_max": hi}


def null_search(bench: Bench, cfg: Optional[ProcedureConfig] = None) -> NullResult:
    """Coordinate search for the combiner null, then P_SUM and the reference line."""
    cfg = cfg or ProcedureConfig()
    if bench.switch_state != 2:
        bench.set_switch(2)
    base_pm = bench.secondary.power
    bench.set_phase(Role.PRIMARY, 180.0)

    def at_phase(theta):
        bench.set_phase(Role.SECONDARY, theta, action="knob")
        return dbm_to_mw(bench.read_sa(action=None))

    def at_power(dp):
        bench.set_power(Role.PRIMARY, base_pm + dp, action="knob")
        return dbm_to_mw(bench.read_sa(action=None))

    grid = np.arange(0.0, 360.0, cfg.coarse_step_deg)
    powers = [at_phase(th) for th in grid]
    theta = float(grid[int(np.argmin(powers))])
    step = cfg.coarse_step_deg
    theta, _ = _golden(at_phase, theta - 2 * step, theta + 2 * step, 1e-3)
    dp, _ = _golden(at_power, -cfg.max_power_adjust_db, cfg.max_power_adjust_db, cfg.power_step_db / 4)
    dp = round(dp / cfg.power_step_db) * cfg.power_step_db
    at_power(dp)
    theta, p_null = _golden(at_phase, theta - 0.5, theta + 0.5, 1e-3)
    bench.set_phase(Role.SECONDARY, theta, action="knob")
    captured = bench.clock.now
    null_power = bench.read_sa(action=None)

    bench.set_phase(Role.PRIMARY, 0.0)
    p_sum = bench.read_sa()
    line = p_sum - cfg.line_offset_db
    bench.set_phase(Role.PRIMARY, 180.0)
    if null_power > line - cfg.null_margin_db:
        raise NullNotFound(
            f"deepest null {null_power:.2f} dBm does not reach {cfg.null_margin_db:g} dB "
            f"under the reference line at {line:.2f} dBm"
        )
    log.debug("null at theta_S=%.3f dP_M=%.2f, P_SUM=%.2f dBm", theta, dp, p_sum)
    return NullResult(theta % 360.0, dp, p_sum, line, null_power, captured)


def _power_step(p1: float, p2: float, null: NullResult) -> float:
    """Change between two SA readings in units of the line power (linear)."""
    return (dbm_to_mw(p2) - dbm_to_mw(p1)) / dbm_to_mw(null.line_ref)


def approach(bench: Bench, null: NullResult, cfg: Optional[ProcedureConfig] = None) -> int:
    """Park theta_S just outside the line on the side the drift approaches from.

    Both sides are tried; the one where the SA power falls wins.  Returns
    the side (+1/-1), or 0 when neither side shows a measurable change and
    theta_S goes back to the null.
    """
    cfg = cfg or ProcedureConfig()
    if bench.primary.phase_setting != 180.0:
        bench.set_phase(Role.PRIMARY, 180.0)
    offset = cfg.error_bound_deg + cfg.approach_margin_deg
    if cfg.approach_side != "auto":
        side = +1 if cfg.approach_side == "+" else -1
        bench.set_phase(Role.SECONDARY, null.theta_s_ref + side * offset)
        return side
    for side in (+1, -1):
        bench.set_phase(Role.SECONDARY, null.theta_s_ref + side * offset)
        p1, p2 = bench.read_sa(), bench.read_sa()
        if _power_step(p1, p2, null) < -cfg.stationary_frac:
            return side
    # drift too slow to notice from outside the line
    bench.set_phase(Role.SECONDARY, null.theta_s_ref)
    return 0


def await_drift_window(bench: Bench, null: NullResult, cfg: Optional[ProcedureConfig] = None) -> float:
    """Poll the SA until its power is clearly under the line and not rising."""
    cfg = cfg or ProcedureConfig()
    threshold = null.line_ref - cfg.entry_margin_db
    t0 = bench.clock.now
    prev = bench.read_sa()
    while True:
        cur = bench.read_sa()
        if cur <= threshold and (cur < prev or abs(_power_step(prev, cur, null)) <= cfg.stationary_frac):
            return bench.clock.now
        if bench.clock.now - t0 > cfg.horizon_s:
            raise Timeout(f"SA power did not fall under the line within {cfg.horizon_s:g} s")
        prev = cur


def reference_acquisition(bench: Bench, corrections: Optional[CorrectionSet],
                          cfg: Optional[ProcedureConfig] = None) -> ReferenceVoltages:
    """Capture Vi180, Vi90, Vq90, Vq180 through the DUT path, then switch back."""
    cfg = cfg or ProcedureConfig()
    start = bench.clock.now
    theta_s0 = bench.secondary.phase_setting
    pm0 = bench.primary.power
    apply = corrections is not None and not cfg.skip_network_corrections
    times, errors, volts = [], [], []

    def capture(v):
        times.append(bench.clock.now)
        errors.append(bench.dut_phase_error())
        volts.append(v)

    bench.set_switch(1)
    if apply:
        bench.set_power(Role.PRIMARY, pm0 + corrections.dp_mc, action="phase_entry")
        bench.set_phase(Role.SECONDARY, theta_s0 + corrections.dtheta_sc, action=None)
    if bench.mode is not Mode.IXI:
        bench.set_mode(Mode.IXI, action=None)
    if bench.primary.phase_setting != 180.0:
        bench.set_phase(Role.PRIMARY, 180.0, action=None)
    capture(bench.press_button()[1])
    bench.set_phase(Role.PRIMARY, 90.0)
    capture(bench.sample_vd()[1])
    bench.set_mode(Mode.QXI)
    capture(bench.press_button()[1])
    bench.set_phase(Role.PRIMARY, 180.0)
    capture(bench.sample_vd()[1])
    if apply:
        bench.set_power(Role.PRIMARY, pm0, action="phase_entry")
        bench.set_phase(Role.SECONDARY, theta_s0, action=None)
    bench.set_switch(2)
    return ReferenceVoltages(*volts, acquired_at=bench.clock.now, started_at=start,
                             capture_times=tuple(times), true_errors=tuple(errors))


def post_check(bench: Bench, null: NullResult, cfg: Optional[ProcedureConfig] = None) -> bool:
    if bench.switch_state != 2:
        bench.set_switch(2)
    return bench.read_sa() <= null.line_ref


def curve_acquisition(bench: Bench, corrections: Optional[CorrectionSet],
                      cfg: Optional[ProcedureConfig] = None) -> tuple:
    """Acquire the I x I and Q x I curves with the primary trimmed by the beat."""
    cfg = cfg or ProcedureConfig()
    pm0 = bench.primary.power
    dp_mc = 0.0 if corrections is None or cfg.skip_network_corrections else corrections.dp_mc
    if dp_mc:
        bench.set_power(Role.PRIMARY, pm0 + dp_mc)
    bench.set_switch(1)
    bench.set_trim(Role.PRIMARY, cfg.beat_hz)
    curves = []
    for mode in (Mode.IXI, Mode.QXI):
        bench.set_mode(mode)
        t = bench.clock.now
        codes, clipped = bench.acquire_curve(cfg.beat_hz)
        if clipped:
            log.warning("%s curve at %g GHz hit the VAC clamp", mode, bench.frequency_ghz)
        curves.append(DetectorCurve(mode, codes, adc_to_volts(bench.adc, codes), cfg.beat_hz,
                                    bench.adc.sample_rate, bench.frequency_ghz, clipped, t))
    bench.set_trim(Role.PRIMARY, 0.0)
    bench.set_switch(2)
    if dp_mc:
        bench.set_power(Role.PRIMARY, pm0)
    return tuple(curves)


def error_budget(cfg: ProcedureConfig, corrections: Optional[CorrectionSet]) -> float:
    budget = cfg.error_bound_deg
    if cfg.skip_network_corrections and corrections is not None:
        budget += abs(corrections.dtheta_sc)
    return budget


def run_point(bench: Bench, corrections: Optional[CorrectionSet],
              spec: Optional[QuadratureSpec] = None,
              cfg: Optional[ProcedureConfig] = None) -> ProcedureReport:
    """Run the whole procedure at the bench's frequency."""
    cfg = cfg or ProcedureConfig()
    vac = setup_gain(bench, cfg)
    attempts = []
    retries = 0
    while True:
        null = null_search(bench, cfg)
        approach(bench, null, cfg)
        await_drift_window(bench, null, cfg)
        start_dev = bench.null_deviation()
        entry_power = bench.read_sa(action=None)
        refs = reference_acquisition(bench, corrections, cfg)
        check_power = bench.read_sa()
        valid = check_power <= null.line_ref
        attempts.append(Attempt(refs.started_at, bench.clock.now, entry_power, check_power, valid,
                                start_dev, bench.null_deviation(), refs.true_errors))
        if valid:
            refs.valid = True
            break
        retries += 1
        log.info("post-check failed at %g GHz (%.2f dBm > %.2f dBm), retry %d",
                 bench.frequency_ghz, check_power, null.line_ref, retries)
        if retries > cfg.max_retries:
            raise RetriesExhausted(
                f"reference block failed the post-check {retries} times at {bench.frequency_ghz:g} GHz"
            )
    curves = curve_acquisition(bench, corrections, cfg)
    return ProcedureReport(bench.frequency_ghz, null, refs, curves, retries,
                           error_budget(cfg, corrections), corrections, attempts, vac)
