"""S-parameters of the connection block and the generator corrections derived from them.

Port numbering follows the bench wiring: port 1 is fed by the secondary
generator, port 2 by the primary.  Switch state 2 routes both to the
combiner output (port 3); state 1 routes them to the DUT inputs a and b.

File format, one row per frequency (``#`` starts a comment)::

    freq_ghz  s31_db s31_deg  s32_db s32_deg  sa1_db sa1_deg  sb2_db sb2_deg  [pub_dp_mc pub_dtheta_sc]

The two trailing columns are optional published correction values used
only for comparison reports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

from .errors import DuplicateFrequency, InvariantError, ParseError, UnknownFrequency
from .phasor import Phasor, expd, wrap180

FREQ_MATCH_GHZ = 1e-3  # rows must match a requested frequency within 1 MHz


class SParam(NamedTuple):
    db: float
    deg: float

    @property
    def complex(self) -> complex:
        return 10.0 ** (self.db / 20.0) * expd(self.deg)

    @property
    def linear(self) -> float:
        return 10.0 ** (self.db / 20.0)


@dataclass(frozen=True)
class SParamSet:
    frequency: float  # GHz
    s31: SParam
    s32: SParam
    sa1: SParam
    sb2: SParam
    published: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("s31", "s32", "sa1", "sb2"):
            sp = SParam(*getattr(self, name))
            if not (math.isfinite(sp.db) and math.isfinite(sp.deg)):
                raise InvariantError(f"{name} must be finite")
            if sp.db > 0.0:
                raise InvariantError(
                    f"{name} magnitude {sp.db} dB > 0 dB: the connection block must be passive"
                )
            object.__setattr__(self, name, SParam(sp.db, wrap180(sp.deg)))

    @classmethod
    def identity(cls, frequency: float) -> "SParamSet":
        one = SParam(0.0, 0.0)
        return cls(frequency, one, one, one, one)

    def lookup(self, src: int, dst: str) -> SParam:
        table = {(1, "3"): self.s31, (2, "3"): self.s32, (1, "a"): self.sa1, (2, "b"): self.sb2}
        try:
            return table[(src, dst)]
        except KeyError:
            raise ValueError(f"no transmission path from port {src} to port {dst}") from None


@dataclass(frozen=True)
class CorrectionSet:
    frequency: float  # GHz
    dp_mc: float  # dB, applied to the primary
    dtheta_sc: float  # deg, applied to the secondary
    dp: float  # dB, power offset seen at the DUT ports

    @property
    def dp_sc(self) -> float:
        """Equivalent secondary amplitude correction (dB)."""
        return -self.dp_mc

    def as_dict(self) -> dict:
        return {
            "frequency_ghz": self.frequency,
            "dp_mc_db": self.dp_mc,
            "dtheta_sc_deg": self.dtheta_sc,
            "dp_db": self.dp,
        }


def compute_corrections(sp: SParamSet) -> CorrectionSet:
    """Secondary correction ratio S31*Sb2 / (S32*Sa1), split into power and phase.

    The amplitude part is moved onto the primary with opposite sign so the
    operator only touches the secondary's phase.
    """
    dtheta = wrap180(sp.s31.deg + sp.sb2.deg - sp.s32.deg - sp.sa1.deg)
    mag_db = sp.s31.db + sp.sb2.db - sp.s32.db - sp.sa1.db
    return CorrectionSet(sp.frequency, -mag_db, dtheta, sp.sa1.db)


def apply_network(sp: SParamSet, route, inputs: dict) -> dict:
    """Propagate generator phasors (keyed by port 1/2) through ``route``.

    Contributions arriving at the same destination are summed.
    """
    acc: dict = {}
    for src, dst in route.pairs:
        if src not in inputs:
            continue
        z = inputs[src].to_complex() * sp.lookup(src, dst).complex
        acc[dst] = acc.get(dst, 0j) + z
    return {dst: Phasor.from_complex(z) for dst, z in acc.items()}


def find_row(sets, frequency: float, tol: float = FREQ_MATCH_GHZ) -> SParamSet:
    for sp in sets:
        if abs(sp.frequency - frequency) <= tol:
            return sp
    raise UnknownFrequency(f"no S-parameter row for {frequency:g} GHz")


def parse_sparams(text: str, path=None) -> list:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) not in (9, 11):
            raise ParseError(f"expected 9 or 11 columns, got {len(parts)}", lineno, path)
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", lineno, path) from None
        f = vals[0]
        if not f > 0:
            raise ParseError("frequency must be positive", lineno, path)
        published = tuple(vals[9:11]) if len(vals) == 11 else None
        try:
            sp = SParamSet(
                f,
                SParam(vals[1], vals[2]),
                SParam(vals[3], vals[4]),
                SParam(vals[5], vals[6]),
                SParam(vals[7], vals[8]),
                published=published,
            )
        except InvariantError as exc:
            raise InvariantError(f"line {lineno}: {exc}") from None
        for other in rows:
            if abs(other.frequency - f) <= FREQ_MATCH_GHZ:
                raise DuplicateFrequency(f"duplicate frequency {f:g} GHz", lineno, path)
        rows.append(sp)
    if not rows:
        raise ParseError("no S-parameter rows found", None, path)
    rows.sort(key=lambda s: s.frequency)
    return rows


def load_sparams(path) -> list:
    path = Path(path)
    return parse_sparams(path.read_text(), path=str(path))


def format_sparams(sets) -> str:
    lines = ["# freq_ghz s31_db s31_deg s32_db s32_deg sa1_db sa1_deg sb2_db sb2_deg"]
    for sp in sets:
        vals = [sp.frequency, *sp.s31, *sp.s32, *sp.sa1, *sp.sb2]
        if sp.published is not None:
            vals += list(sp.published)
        lines.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def write_sparams(path, sets) -> None:
    Path(path).write_text(format_sparams(sets))
