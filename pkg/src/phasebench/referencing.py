"""Place unreferenced detector curves on the absolute theta_M axis.

A curve acquired with the 11 Hz beat carries slightly more than one
period of the detector response, but nothing says which sample sits at
which input phase.  The two reference voltages captured at theta_M = 90
and 180 deg fix that: the one closer to the middle of the curve gives two
candidate positions (a level cuts a periodic curve twice), and the other
one decides between them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AmbiguityUnresolved, DegenerateCurve, NoCrossing, NoPeriodicity
from .phasor import angdiff, wrap360

OVERSAMPLE = 4
KERNEL_HALF_WIDTH = 16
KAISER_BETA = 8.0
MERGE_DEG = 5.0  # crossings closer than this are one crossing (quantisation chatter)
TIE_DEG = 10.0


def _point_reflect(x: np.ndarray, n: int) -> np.ndarray:
    # odd extension keeps value and slope continuous at both ends
    n = min(n, len(x) - 1)
    left = 2 * x[0] - x[n:0:-1]
    right = 2 * x[-1] - x[-2:-n - 2:-1]
    return np.concatenate([left, x, right]), n


def oversample(samples, factor: int = OVERSAMPLE, half_width: int = KERNEL_HALF_WIDTH,
               beta: float = KAISER_BETA) -> np.ndarray:
    """Kaiser-windowed sinc interpolation by an integer ``factor``.

    Output sample ``i*factor`` is input sample ``i`` (the kernel vanishes
    at non-zero integers), so the original samples are kept exactly.
    """
    x = np.asarray(samples, dtype=float)
    if factor < 1:
        raise ValueError("oversampling factor must be >= 1")
    if factor == 1 or len(x) < 2:
        return x.copy()
    padded, pad = _point_reflect(x, half_width)
    offsets = np.arange(-half_width + 1, half_width + 1)
    base = np.arange(len(x))[:, None] + offsets[None, :] + pad
    base = np.clip(base, 0, len(padded) - 1)
    window = padded[base]
    out = np.empty((len(x), factor))
    out[:, 0] = x
    for k in range(1, factor):
        d = offsets - k / factor  # distance from each tap to the target point
        taps = np.sinc(d) * np.i0(beta * np.sqrt(np.clip(1 - (d / half_width) ** 2, 0, None)))
        taps /= taps.sum()
        out[:, k] = window @ taps
    return out.reshape(-1)


@dataclass
class PhaseVector:
    period: float  # samples, fractional
    phases: np.ndarray  # deg, 0 at the first sample

    @classmethod
    def from_period(cls, period: float, n: int) -> "PhaseVector":
        return cls(period, 360.0 * np.arange(n) / period)

    @property
    def one_period(self) -> np.ndarray:
        """Mask of the samples that make up exactly one period."""
        return self.phases < 360.0


def nsdf(x: np.ndarray) -> np.ndarray:
    """Normalised square-difference autocorrelation, one value per lag."""
    n = len(x)
    r = np.correlate(x, x, mode="full")[n - 1:]
    sq = np.cumsum(x * x)
    lags = np.arange(n)
    head = sq[n - 1 - lags]  # sum of x[i]^2 for i <= n-1-L
    tail = sq[-1] - np.concatenate([[0.0], sq[:-1]])  # sum of x[i]^2 for i >= L
    m = head + tail
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(m > 0, 2 * r / m, 0.0)
    return out


def _harmonic_residual(x: np.ndarray, period: float, harmonics: int) -> float:
    w = 2 * np.pi * np.arange(len(x)) / period
    cols = [np.ones_like(w)]
    for k in range(1, harmonics + 1):
        cols += [np.cos(k * w), np.sin(k * w)]
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    r = x - design @ coef
    return float(r @ r)


def refine_period(samples, period: float, span: float = 0.15, harmonics: int = 5,
                  tol: float = 1e-4) -> float:
    """Period minimising the misfit of a DC + harmonics model over the whole buffer.

    With barely more than one period in the buffer the autocorrelation
    peak rests on a short overlap; when that overlap falls on a flat,
    quantised extremum the peak drifts by several percent.  The model fit
    uses every sample instead.
    """
    x = np.asarray(samples, dtype=float)
    hi = min(period * (1 + span), len(x) - 1.0)
    lo = min(period * (1 - span), hi)
    grid = np.linspace(lo, hi, 41)
    res = [_harmonic_residual(x, p, harmonics) for p in grid]
    k = int(np.argmin(res))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = _harmonic_residual(x, c, harmonics), _harmonic_residual(x, d, harmonics)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = _harmonic_residual(x, c, harmonics)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = _harmonic_residual(x, d, harmonics)
    return 0.5 * (a + b)


def estimate_period(samples, min_overlap: int = 8, threshold: float = 0.8,
                    refine: bool = True) -> PhaseVector:
    """Fractional period: autocorrelation peak, quadratic interpolation, then a model fit."""
    x = np.asarray(samples, dtype=float)
    span = x.max() - x.min() if len(x) else 0.0
    if len(x) < 4 or span <= 1e-12 * max(1.0, abs(x.max())):
        raise NoPeriodicity("signal is constant")
    x = x - 0.5 * (x.max() + x.min())
    acf = nsdf(x)
    last = len(x) - min_overlap
    negative = np.flatnonzero(acf[1:last] < 0)
    if negative.size == 0:
        raise NoPeriodicity("autocorrelation never goes negative: less than half a period")
    start = negative[0] + 1
    region = acf[start:last + 1]
    if region.size < 3:
        raise NoPeriodicity("buffer too short to contain a full period")
    lag = start + int(np.argmax(region))
    peak = acf[lag]
    if lag >= last or peak < threshold:
        raise NoPeriodicity(f"no periodic peak (best {peak:.3f} at lag {lag})")
    y0, y1, y2 = acf[lag - 1], acf[lag], acf[lag + 1]
    denom = y0 - 2 * y1 + y2
    frac = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
    period = lag + frac
    if refine:
        period = refine_period(x, period)
    return PhaseVector.from_period(period, len(x))


def _circular_clusters(values, merge_deg: float):
    vals = sorted(wrap360(v) for v in values)
    if not vals:
        return []
    groups = [[vals[0]]]
    for v in vals[1:]:
        if v - groups[-1][-1] < merge_deg:
            groups[-1].append(v)
        else:
            groups.append([v])
    if len(groups) > 1 and groups[0][0] + 360.0 - groups[-1][-1] < merge_deg:
        groups[0] = [g - 360.0 for g in groups.pop()] + groups[0]
    out = []
    for g in groups:
        z = np.mean(np.exp(1j * np.radians(g)))
        out.append(wrap360(float(np.degrees(np.angle(z)))))
    return out


def crossings(samples, phase_vec: PhaseVector, level: float, merge_deg: float = MERGE_DEG):
    """Phases (deg, within one period) where ``level`` cuts the curve."""
    x = np.asarray(samples, dtype=float)
    ph = phase_vec.phases
    stop = min(len(x) - 1, int(np.ceil(phase_vec.period)) + 1)
    d = x[: stop + 1] - level
    found = []
    for i in range(stop):
        a, b = d[i], d[i + 1]
        if a == 0.0:
            found.append(ph[i])
        elif a * b < 0.0:
            found.append(ph[i] + (ph[i + 1] - ph[i]) * a / (a - b))
    return _circular_clusters(found, merge_deg)


@dataclass
class AnchorSolution:
    y: int
    theta_ref_y: float
    v_ref_y: float
    slope: int
    candidates: tuple
    other_crossings: tuple
    v_o: float
    v_dm: float
    discriminants: tuple = ()

    @property
    def axis_offset(self) -> float:
        """theta_M minus acquisition phase, constant along the curve."""
        return wrap360(self.y - self.theta_ref_y)

    def as_dict(self) -> dict:
        return {
            "y": self.y,
            "theta_ref_y": self.theta_ref_y,
            "v_ref_y": self.v_ref_y,
            "slope": self.slope,
            "candidates": list(self.candidates),
            "other_crossings": list(self.other_crossings),
            "v_o": self.v_o,
            "v_dm": self.v_dm,
            "discriminants": list(self.discriminants),
        }


def resolve_anchor(samples, phase_vec: PhaseVector, vx_180: float, vx_90: float,
                   tie_deg: float = TIE_DEG, merge_deg: float = MERGE_DEG) -> AnchorSolution:
    x = np.asarray(samples, dtype=float)
    one = x[: max(2, int(np.ceil(phase_vec.period)))]
    v_dm = 0.5 * (one.max() + one.min())
    if abs(vx_180 - v_dm) <= abs(vx_90 - v_dm):
        y, v_ref, slope, v_o = 180, vx_180, -1, vx_90
    else:
        y, v_ref, slope, v_o = 90, vx_90, +1, vx_180

    cands = crossings(x, phase_vec, v_ref, merge_deg)
    if not cands:
        raise NoCrossing(f"reference level {v_ref:.4f} V never meets the curve")

    others = crossings(x, phase_vec, v_o, merge_deg)
    if not others:
        # the level sits just beyond an extremum (quantisation, drift): use the extremum
        mask = phase_vec.one_period
        idx = np.argmax(x[mask]) if v_o > v_dm else np.argmin(x[mask])
        others = [float(phase_vec.phases[mask][idx])]

    disc = [min(angdiff(c + slope * 90.0, o) for o in others) for c in cands]
    order = np.argsort(disc, kind="stable")
    if len(cands) > 1 and disc[order[1]] - disc[order[0]] < tie_deg:
        raise AmbiguityUnresolved(
            f"candidates {cands[order[0]]:.2f} and {cands[order[1]]:.2f} deg are "
            f"indistinguishable ({disc[order[0]]:.2f} vs {disc[order[1]]:.2f} deg)"
        )
    return AnchorSolution(
        y=y,
        theta_ref_y=float(cands[order[0]]),
        v_ref_y=float(v_ref),
        slope=slope,
        candidates=tuple(float(c) for c in cands),
        other_crossings=tuple(float(o) for o in others),
        v_o=float(v_o),
        v_dm=float(v_dm),
        discriminants=tuple(float(d) for d in disc),
    )


@dataclass
class ReferencedCurve:
    theta_m: np.ndarray  # deg per sample, wrapped to [0, 360)
    volts: np.ndarray
    anchor: AnchorSolution
    mode: Optional[str] = None

    def sorted(self):
        order = np.argsort(self.theta_m, kind="stable")
        return self.theta_m[order], self.volts[order]

    def value_at(self, theta: float) -> float:
        th, v = self.sorted()
        return float(np.interp(wrap360(theta), th, v, period=360.0))


def restore_curve(samples, phase_vec: PhaseVector, anchor: AnchorSolution,
                  mode: Optional[str] = None) -> ReferencedCurve:
    x = np.asarray(samples, dtype=float)
    mask = phase_vec.one_period[: len(x)]
    theta = np.mod(phase_vec.phases[: len(x)][mask] - anchor.theta_ref_y + anchor.y, 360.0)
    theta[theta >= 360.0] = 0.0
    return ReferencedCurve(theta, x[mask].copy(), anchor, mode)


def fundamental(theta_deg, volts, harmonics: int = 3):
    """Least-squares (amplitude, phase) of the first harmonic.

    The phase is the delay ``p`` in ``A cos(theta - p)``; DC and the
    higher harmonics are fitted alongside so they do not leak into it.
    """
    th = np.radians(np.asarray(theta_deg, dtype=float))
    cols = [np.ones_like(th)]
    for k in range(1, harmonics + 1):
        cols += [np.cos(k * th), np.sin(k * th)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), np.asarray(volts, dtype=float), rcond=None)
    a, b = coef[1], coef[2]
    return float(np.hypot(a, b)), wrap360(float(np.degrees(np.arctan2(b, a))))


def iq_phase_shift(curve_i: ReferencedCurve, curve_q: ReferencedCurve,
                   min_amplitude: float = 1e-3) -> float:
    """theta_QxI - theta_IxI in [0, 360); +90 for an ideal quadrature hybrid."""
    amp_i, ph_i = fundamental(curve_i.theta_m, curve_i.volts)
    amp_q, ph_q = fundamental(curve_q.theta_m, curve_q.volts)
    for name, amp in (("IxI", amp_i), ("QxI", amp_q)):
        if amp < min_amplitude:
            raise DegenerateCurve(f"{name} fundamental amplitude {amp:.2e} V is too small")
    return wrap360(ph_q - ph_i)


@dataclass
class ReferencingResult:
    curve_i: ReferencedCurve
    curve_q: ReferencedCurve
    shift: float
    periods: tuple = field(default_factory=tuple)


def reference_curves(volts_i, volts_q, vi_180: float, vi_90: float, vq_90: float,
                     vq_180: float, factor: int = OVERSAMPLE) -> ReferencingResult:
    """Full referencing of an I x I / Q x I pair from its four reference voltages."""
    out = []
    periods = []
    for volts, v180, v90, mode in ((volts_i, vi_180, vi_90, "IxI"), (volts_q, vq_180, vq_90, "QxI")):
        fine = oversample(volts, factor)
        pv = estimate_period(fine)
        anchor = resolve_anchor(fine, pv, v180, v90)
        out.append(restore_curve(fine, pv, anchor, mode))
        periods.append(pv.period / factor)
    return ReferencingResult(out[0], out[1], iq_phase_shift(out[0], out[1]), tuple(periods))
