"""Phasor arithmetic, dBm conversions and null-technique relations.

Angles are kept in degrees everywhere; radians only appear inside the
trig helpers.  A perfect null is represented by ``NEG_INF`` (IEEE -inf),
never by a large negative number.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .errors import NoSolution

NEG_INF = float("-inf")


def wrap360(deg: float) -> float:
    """Reduce an angle to [0, 360)."""
    out = math.fmod(deg, 360.0)
    if out < 0.0:
        out += 360.0
    # fmod of a tiny negative plus 360 can round up to exactly 360
    if out >= 360.0:
        out = 0.0
    return out + 0.0


def wrap180(deg: float) -> float:
    """Reduce an angle to (-180, 180], exactly (no detour through [0, 360))."""
    out = math.remainder(deg, 360.0)
    if out == -180.0:
        out = 180.0
    return out + 0.0


def angdiff(a: float, b: float) -> float:
    """Absolute circular distance between two angles, in [0, 180]."""
    return abs(wrap180(a - b))


def cosd(deg: float) -> float:
    # exact at multiples of 90 so that ideal cancellations give an exact zero;
    # remainder() keeps small negative angles at full relative precision
    d = math.remainder(deg, 360.0)
    if d == 0.0:
        return 1.0
    if abs(d) == 90.0:
        return 0.0
    if abs(d) == 180.0:
        return -1.0
    return math.cos(math.radians(d))


def sind(deg: float) -> float:
    d = math.remainder(deg, 360.0)
    if d == 0.0 or abs(d) == 180.0:
        return 0.0
    if abs(d) == 90.0:
        return math.copysign(1.0, d)
    return math.sin(math.radians(d))


def expd(deg: float) -> complex:
    """Unit complex number at ``deg`` degrees."""
    return complex(cosd(deg), sind(deg))


@dataclass(frozen=True)
class Phasor:
    """Complex amplitude as (peak volts, degrees)."""

    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0.0:
            raise ValueError(f"phasor amplitude must be >= 0, got {self.amplitude}")
        object.__setattr__(self, "phase", wrap360(self.phase))

    @classmethod
    def from_complex(cls, z: complex) -> "Phasor":
        if z == 0:
            return cls(0.0, 0.0)
        return cls(abs(z), math.degrees(cmath.phase(z)))

    def to_complex(self) -> complex:
        return self.amplitude * expd(self.phase)

    def __add__(self, other: "Phasor") -> "Phasor":
        return Phasor.from_complex(self.to_complex() + other.to_complex())

    def rotate(self, deg: float) -> "Phasor":
        return Phasor(self.amplitude, self.phase + deg)

    def scale(self, factor: float) -> "Phasor":
        return Phasor(self.amplitude * factor, self.phase)

    @property
    def power_dbm(self) -> float:
        return amplitude_to_dbm(self.amplitude)


@dataclass(frozen=True)
class DeviationPair:
    """Amplitude ratio ``s`` (dB) and phase deviation (deg) of the secondary."""

    s: float
    delta_theta_s: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ValueError("amplitude ratio s must be finite")
        object.__setattr__(self, "delta_theta_s", wrap180(self.delta_theta_s))

    def delta_amplitude(self, amplitude: float) -> float:
        return (10.0 ** (self.s / 20.0) - 1.0) * amplitude


def dbm_to_amplitude(a: float) -> float:
    """Peak voltage into 50 ohm for a power of ``a`` dBm."""
    if not math.isfinite(a):
        raise ValueError("power must be finite")
    return 10.0 ** (a / 20.0 - 0.5)


def amplitude_to_dbm(amplitude: float) -> float:
    if amplitude <= 0.0:
        return NEG_INF
    return 20.0 * math.log10(amplitude) + 10.0


def dbm_to_mw(p: float) -> float:
    if p == NEG_INF:
        return 0.0
    return 10.0 ** (p / 10.0)


def mw_to_dbm(p: float) -> float:
    if p <= 0.0:
        return NEG_INF
    return 10.0 * math.log10(p)


def combiner_output(a: float, dev: DeviationPair, theta_m: float) -> Phasor:
    """Ideal lossless sum of the primary (at ``theta_m``) and the deviated secondary."""
    amp = dbm_to_amplitude(a)
    primary = amp * expd(theta_m)
    secondary = (amp + dev.delta_amplitude(amp)) * expd(dev.delta_theta_s)
    return Phasor.from_complex(primary + secondary)


def null_ratio_db(a: float, dev: DeviationPair) -> float:
    """Null-to-maximum power ratio in dB.

    Uses the half-angle form of ``1 -/+ cos`` to avoid cancellation for
    small deviations.  Returns ``NEG_INF`` for a perfect null.
    """
    amp = dbm_to_amplitude(a)
    d_amp = dev.delta_amplitude(amp)
    half = dev.delta_theta_s / 2.0
    cross = 4.0 * amp * (amp + d_amp)
    num = d_amp * d_amp + cross * sind(half) ** 2
    den = d_amp * d_amp + cross * cosd(half) ** 2
    if num <= 0.0:
        return NEG_INF
    if den <= 0.0:
        return math.inf
    return 10.0 * math.log10(num / den)


def phase_error_bound(r: float, s: float = 0.0, tol: float = 1e-9) -> float:
    """Largest phase deviation (deg) compatible with a measured null ratio ``r``.

    Inverts :func:`null_ratio_db` in the phase deviation for a fixed
    amplitude ratio ``s`` by bisection on [0, 90] degrees.  The ratio does
    not depend on the absolute power level, so 0 dBm is used internally.
    """
    if not r < 0.0:
        raise NoSolution(f"null ratio must be negative, got {r} dB")
    floor = null_ratio_db(0.0, DeviationPair(s, 0.0))
    if r < floor:
        raise NoSolution(
            f"ratio {r:.3f} dB is deeper than the {floor:.3f} dB that s={s} dB alone produces"
        )
    lo, hi = 0.0, 90.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if null_ratio_db(0.0, DeviationPair(s, mid)) < r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
