"""Discrete-time simulation of the calibration and measurement bench.

Two generators share a 10 MHz reference but are only quasi-synchronised:
the secondary's phase drifts slowly against the primary.  SPDT switches
route both generators either to a power combiner watched by a spectrum
analyser, or to the two DUT inputs.  The DUT output goes through the
voltage adjustment circuit (VAC) into a 10-bit ADC.

Every operator action advances a shared virtual clock by a configurable
cost, so the time spent in a procedure, and hence the phase drift it
accumulates, is explicit and reproducible.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dut import DutModel, Mode
from .errors import ConfigError, InvalidDivider
from .netcal import SParamSet, apply_network
from .phasor import Phasor, amplitude_to_dbm, dbm_to_amplitude, wrap180, wrap360

DEFAULT_ACTION_COSTS = {
    "switch": 1.0,  # a0/a9 push on the switch driver
    "phase_entry": 1.0,
    "power_entry": 1.0,
    "pushbutton": 1.0,
    "banana": 1.0,
    "trim": 1.0,
    "vac_adjust": 1.0,
    "scope": 1.0,
    "sa_read": 0.2,
    "knob": 0.02,  # fine knob step while watching the SA during a null search
}


class Role(str, enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass
class BenchClock:
    now: float = 0.0
    action_costs: dict = field(default_factory=lambda: dict(DEFAULT_ACTION_COSTS))

    def cost(self, kind: str) -> float:
        try:
            return self.action_costs[kind]
        except KeyError:
            raise ConfigError(f"unknown action kind {kind!r}") from None

    def advance(self, kind: Optional[str]) -> float:
        if kind is not None:
            self.wait(self.cost(kind))
        return self.now

    def wait(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("the bench clock cannot run backwards")
        self.now += seconds
        return self.now


@dataclass
class DriftModel:
    """Phase of the secondary relative to the primary, as a function of time.

    Linear drift whose rate scales with the carrier, optionally with a
    slow sinusoidal wander on top.  ``offset0`` is the arbitrary phase
    relation at t = 0.
    """

    rate_at_ref: float = 0.05  # deg/s
    ref_frequency: float = 3e9  # Hz
    proportional: bool = True
    offset0: float = 0.0
    wander_amp: float = 0.0  # deg
    wander_period: float = 60.0  # s

    def rate(self, carrier_hz: float) -> float:
        if self.proportional:
            return self.rate_at_ref * carrier_hz / self.ref_frequency
        return self.rate_at_ref

    def offset(self, t, carrier_hz: float):
        t = np.asarray(t, dtype=float)
        out = self.offset0 + self.rate(carrier_hz) * t
        if self.wander_amp:
            out = out + self.wander_amp * np.sin(2 * np.pi * t / self.wander_period)
        return out if out.ndim else float(out)


@dataclass
class GeneratorState:
    role: Role
    frequency: float  # Hz
    power: float = 0.0  # dBm
    phase_setting: float = 0.0
    freq_trim: float = 0.0  # Hz
    level_error_db: float = 0.0  # actual output minus the set power
    _trim_accum: float = 0.0
    _trim_since: float = 0.0

    def __post_init__(self):
        self.role = Role(self.role)
        if not self.frequency > 0:
            raise ConfigError("generator frequency must be positive")
        self.phase_setting = wrap360(self.phase_setting)

    @property
    def amplitude(self) -> float:
        return dbm_to_amplitude(self.power + self.level_error_db)

    def trim_phase(self, t):
        """Phase accumulated (deg) from frequency trims up to time ``t``."""
        t = np.asarray(t, dtype=float)
        out = self._trim_accum + 360.0 * self.freq_trim * (t - self._trim_since)
        return out if out.ndim else float(out)

    def set_trim(self, hz: float, t: float) -> None:
        self._trim_accum = wrap360(self.trim_phase(t))
        self._trim_since = t
        self.freq_trim = hz


@dataclass
class AdcConfig:
    full_scale: float = 5.0
    bits: int = 10
    sample_rate: float = 2800.0
    buffer_len: int = 280
    quantize: bool = True  # False models an ideal converter (real-valued codes)

    @property
    def max_code(self) -> int:
        return 2**self.bits - 1

    @property
    def lsb(self) -> float:
        return self.full_scale / self.max_code


@dataclass
class VacConfig:
    v_ref: float = 5.0
    r1: float = 0.0
    r2: float = 1000.0
    r3: float = 1000.0
    full_scale: float = 5.0
    r2_max: float = 10000.0  # potentiometer end stop

    @classmethod
    def adjustable(cls) -> "VacConfig":
        """Divider with room for gains from about 2 to 101."""
        return cls(v_ref=5.0, r1=10000.0, r2=10000.0, r3=100.0)

    @property
    def gain(self) -> float:
        if self.r2 + self.r3 == 0:
            raise InvalidDivider("R2 + R3 must be non-zero")
        return 1.0 + self.r1 / (self.r2 + self.r3)


@dataclass(frozen=True)
class Route:
    state: int
    pairs: tuple  # ((source port, destination port), ...)


def switch_route(state: int) -> Route:
    if state == 1:
        return Route(1, ((1, "a"), (2, "b")))
    if state == 2:
        return Route(2, ((1, "3"), (2, "3")))
    raise ValueError(f"switch state must be 1 or 2, got {state!r}")


def generator_phasor(gen: GeneratorState, drift: DriftModel, clock: BenchClock) -> Phasor:
    t = clock.now
    phase = gen.phase_setting + gen.trim_phase(t)
    if gen.role is Role.SECONDARY:
        phase += drift.offset(t, gen.frequency)
    return Phasor(gen.amplitude, phase)


def sa_measure(p: Phasor, noise_floor: float = -90.0) -> float:
    return max(p.power_dbm, noise_floor)


def vac_transfer_raw(cfg: VacConfig, v_in):
    return (cfg.v_ref + np.asarray(v_in, dtype=float)) / 2.0 * cfg.gain


def vac_transfer(cfg: VacConfig, v_in):
    """VAC output, clamped to the converter range."""
    out = np.clip(vac_transfer_raw(cfg, v_in), 0.0, cfg.full_scale)
    return out if out.ndim else float(out)


def vac_clipped(cfg: VacConfig, v_in):
    raw = vac_transfer_raw(cfg, v_in)
    out = (raw < 0.0) | (raw > cfg.full_scale)
    return out if out.ndim else bool(out)


def adc_sample(cfg: AdcConfig, v):
    x = np.clip(np.asarray(v, dtype=float) / cfg.full_scale * cfg.max_code, 0.0, cfg.max_code)
    if cfg.quantize:
        x = np.floor(x + 0.5).astype(np.int64)
    return x if x.ndim else x.item()


def adc_to_volts(cfg: AdcConfig, code):
    out = np.asarray(code, dtype=float) * cfg.lsb
    return out if out.ndim else float(out)


def acquire_buffer(cfg: AdcConfig, source: Callable, clock: BenchClock, beat_hz: float = 11.0):
    """Sample ``source(t)`` at uniform intervals starting now; advances the clock."""
    span = cfg.buffer_len / cfg.sample_rate * beat_hz
    if span <= 1.0:
        raise ConfigError(
            f"{cfg.buffer_len} samples at {cfg.sample_rate:g} Hz cover only {span:.3f} "
            f"periods of a {beat_hz:g} Hz beat; more than one is required"
        )
    times = clock.now + np.arange(cfg.buffer_len) / cfg.sample_rate
    codes = adc_sample(cfg, source(times))
    clock.wait(cfg.buffer_len / cfg.sample_rate)
    return codes


@dataclass
class Bench:
    """One bench at one frequency point.  Single-threaded state machine."""

    frequency_ghz: float
    dut: DutModel = None
    network: Optional[SParamSet] = None
    drift: DriftModel = field(default_factory=DriftModel)
    vac: VacConfig = field(default_factory=VacConfig.adjustable)
    adc: AdcConfig = field(default_factory=AdcConfig)
    clock: BenchClock = field(default_factory=BenchClock)
    noise_floor: float = -90.0
    power_dbm: float = 0.0
    primary_level_error_db: float = 0.0
    secondary_level_error_db: float = 0.0

    def __post_init__(self):
        if self.dut is None:
            self.dut = DutModel.ideal([self.frequency_ghz])
        if self.network is None:
            self.network = SParamSet.identity(self.frequency_ghz)
        f = self.frequency_ghz * 1e9
        self.primary = GeneratorState(Role.PRIMARY, f, self.power_dbm,
                                      level_error_db=self.primary_level_error_db)
        self.secondary = GeneratorState(Role.SECONDARY, f, self.power_dbm,
                                        level_error_db=self.secondary_level_error_db)
        self.switch_state = 2
        self.mode = Mode.IXI
        self.dut_entry = self.dut.entry(self.frequency_ghz)

    # -- operator actions -------------------------------------------------

    def generator(self, role) -> GeneratorState:
        return self.primary if Role(role) is Role.PRIMARY else self.secondary

    def set_switch(self, state: int, action: Optional[str] = "switch") -> None:
        switch_route(state)
        self.clock.advance(action)
        self.switch_state = state

    def set_phase(self, role, deg: float, action: Optional[str] = "phase_entry") -> None:
        self.clock.advance(action)
        self.generator(role).phase_setting = wrap360(deg)

    def set_power(self, role, dbm: float, action: Optional[str] = "power_entry") -> None:
        self.clock.advance(action)
        self.generator(role).power = dbm

    def set_trim(self, role, hz: float, action: Optional[str] = "trim") -> None:
        self.clock.advance(action)
        self.generator(role).set_trim(hz, self.clock.now)

    def set_mode(self, mode, action: Optional[str] = "banana") -> None:
        self.clock.advance(action)
        self.mode = Mode(mode)

    def set_vac(self, v_ref: Optional[float] = None, r2: Optional[float] = None,
                action: Optional[str] = "vac_adjust") -> None:
        self.clock.advance(action)
        if v_ref is not None:
            self.vac.v_ref = v_ref
        if r2 is not None:
            self.vac.r2 = r2
        self.vac.gain  # validates the divider

    def wait(self, seconds: float) -> float:
        return self.clock.wait(seconds)

    def read_sa(self, action: Optional[str] = "sa_read") -> float:
        self.clock.advance(action)
        return sa_measure(self.combiner_phasor(), self.noise_floor)

    def sample_vd(self):
        """ADC code and volts of the VAC output right now."""
        code = adc_sample(self.adc, vac_transfer(self.vac, self.detector_output(self.clock.now)))
        return code, adc_to_volts(self.adc, code)

    def press_button(self):
        self.clock.advance("pushbutton")
        return self.sample_vd()

    def scope_capture(self, duration: float, n: int = 400, action: Optional[str] = "scope"):
        """Raw (pre-VAC) detector output over ``duration`` seconds."""
        t = self.clock.now + np.linspace(0.0, duration, n, endpoint=False)
        out = self.detector_output(t)
        self.clock.advance(action)
        return out

    def acquire_curve(self, beat_hz: float = 11.0):
        """Pushbutton-triggered buffer capture.  Returns (codes, clipped)."""
        self.clock.advance("pushbutton")
        clipped = []

        def source(t):
            raw = self.detector_output(t)
            clipped.append(bool(np.any(vac_clipped(self.vac, raw))))
            return vac_transfer(self.vac, raw)

        codes = acquire_buffer(self.adc, source, self.clock, beat_hz)
        return codes, any(clipped)

    # -- physics ----------------------------------------------------------

    @property
    def carrier_hz(self) -> float:
        return self.frequency_ghz * 1e9

    def secondary_phase(self, t):
        s = self.secondary
        return s.phase_setting + s.trim_phase(t) + self.drift.offset(t, self.carrier_hz)

    def primary_phase(self, t):
        p = self.primary
        return p.phase_setting + p.trim_phase(t)

    def port_phasors(self, t: Optional[float] = None) -> dict:
        """Generator waves at ports 1 (secondary) and 2 (primary)."""
        t = self.clock.now if t is None else t
        return {
            1: Phasor(self.secondary.amplitude, self.secondary_phase(t)),
            2: Phasor(self.primary.amplitude, self.primary_phase(t)),
        }

    def combiner_phasor(self, t: Optional[float] = None) -> Phasor:
        if self.switch_state != 2:
            return Phasor(0.0)
        out = apply_network(self.network, switch_route(2), self.port_phasors(t))
        return out["3"]

    def dut_inputs(self, t: Optional[float] = None):
        if self.switch_state != 1:
            return Phasor(0.0), Phasor(0.0)
        out = apply_network(self.network, switch_route(1), self.port_phasors(t))
        return out["a"], out["b"]

    def detector_output(self, t):
        """Raw detector volts at time(s) ``t`` in the current mode."""
        t = np.asarray(t, dtype=float)
        if self.switch_state != 1:
            out = self.dut_entry.response(np.zeros_like(t), 0.0, self.mode)
            return out if out.ndim else float(out)
        net = self.network
        amp_a = self.secondary.amplitude * net.sa1.linear
        amp_b = self.primary.amplitude * net.sb2.linear
        delta = (self.primary_phase(t) + net.sb2.deg) - (self.secondary_phase(t) + net.sa1.deg)
        out = self.dut_entry.response(delta, amp_a * amp_b, self.mode)
        return out if np.ndim(out) else float(out)

    # -- ground truth, for tests and reports only ---------------------------

    def null_deviation(self, t: Optional[float] = None) -> float:
        """Phase error relative to the combiner null condition (deg, wrapped).

        Zero when theta_M = 180 would give a perfect phase null at port 3.
        """
        ports = self.port_phasors(t)
        net = self.network
        rel = (ports[2].phase + net.s32.deg) - (ports[1].phase + net.s31.deg)
        return wrap180(rel - self.primary.phase_setting)

    def dut_phase_error(self, t: Optional[float] = None) -> float:
        """Deviation of the DUT input phase difference from theta_M (deg)."""
        ports = self.port_phasors(t)
        net = self.network
        delta = (ports[2].phase + net.sb2.deg) - (ports[1].phase + net.sa1.deg)
        return wrap180(delta - self.primary.phase_setting)

    def amplitude_imbalance_db(self, t: Optional[float] = None) -> float:
        """Primary minus secondary level at the combiner (dB)."""
        ports = self.port_phasors(t)
        net = self.network
        return (amplitude_to_dbm(ports[2].amplitude) + net.s32.db) - (
            amplitude_to_dbm(ports[1].amplitude) + net.s31.db
        )

