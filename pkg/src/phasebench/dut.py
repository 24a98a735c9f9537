"""Behavioural model of the switched dual-multiplier phase detector.

The detector multiplies the two inputs either directly (I x I) or with
one input passed through the hybrid (Q x I).  Only the low-frequency
product survives::

    IxI:  gain_i * (Aa*Ab/2) * f(D) + offset_i
    QxI:  gain_q * (Aa*Ab/2) * f(D - hybrid_shift) + offset_q

with ``D = phase(b) - phase(a) + path_phase`` and
``f(x) = cos x + h2 cos 2x + h3 cos 3x``.  ``path_phase`` is an internal
path-length difference common to both products; it moves the curves on
the phase axis but not their relative shift.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownFrequency

FREQ_MATCH_GHZ = 1e-3


class Mode(str, enum.Enum):
    IXI = "IxI"
    QXI = "QxI"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class DutEntry:
    hybrid_shift: float = 90.0
    gain_i: float = 2.0
    gain_q: float = 2.0
    offset_i: float = 0.0
    offset_q: float = 0.0
    path_phase: float = 0.0
    h2: float = 0.0
    h3: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.hybrid_shift < 180.0:
            raise ValueError(f"hybrid_shift must lie in (0, 180), got {self.hybrid_shift}")
        if not (self.gain_i > 0 and self.gain_q > 0):
            raise ValueError("detector gains must be positive")

    def shape(self, x_deg):
        x = np.radians(x_deg)
        return np.cos(x) + self.h2 * np.cos(2 * x) + self.h3 * np.cos(3 * x)

    def response(self, delta_deg, amp_product, mode):
        """Vectorised detector output for phase difference(s) ``delta_deg``."""
        d = np.asarray(delta_deg, dtype=float) + self.path_phase
        if Mode(mode) is Mode.IXI:
            return self.gain_i * (amp_product / 2.0) * self.shape(d) + self.offset_i
        return self.gain_q * (amp_product / 2.0) * self.shape(d - self.hybrid_shift) + self.offset_q


@dataclass
class DutModel:
    entries: dict = field(default_factory=dict)  # GHz -> DutEntry

    @classmethod
    def ideal(cls, frequencies=(3, 4, 5, 6, 7, 8)) -> "DutModel":
        return cls({float(f): DutEntry() for f in frequencies})

    def entry(self, f_ghz: float) -> DutEntry:
        for f, e in self.entries.items():
            if abs(f - f_ghz) <= FREQ_MATCH_GHZ:
                return e
        raise UnknownFrequency(f"DUT model has no entry at {f_ghz:g} GHz")


@dataclass(frozen=True)
class QuadratureSpec:
    beta_max: float = 40.0

    def __post_init__(self):
        if not 0.0 < self.beta_max < 90.0:
            raise ValueError("beta_max must lie in (0, 90)")


def detect(dut: DutModel, f: float, input_a, input_b, mode) -> float:
    """Detector output volts for phasors at ports a (secondary) and b (primary)."""
    e = dut.entry(f)
    delta = input_b.phase - input_a.phase
    return float(e.response(delta, input_a.amplitude * input_b.amplitude, mode))


def ground_truth_shift(dut: DutModel, f: float) -> float:
    return dut.entry(f).hybrid_shift


def quadrature_check(shift: float, spec: QuadratureSpec) -> bool:
    """True when the I/Q shift lies in the closed interval 90 +/- beta_max."""
    return 90.0 - spec.beta_max <= shift <= 90.0 + spec.beta_max


def quadrature_verdict(shift: float, spec: QuadratureSpec) -> str:
    return "YES" if quadrature_check(shift, spec) else "NO"
