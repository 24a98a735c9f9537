"""Published reference tables and the comparisons run against them."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from importlib import resources

from .netcal import CorrectionSet, SParamSet, compute_corrections, parse_sparams
from .phasor import DeviationPair, combiner_output, null_ratio_db

PHASE_FLAG_DEG = 0.05  # computed vs published phase correction disagreement that gets flagged


def _data_text(name: str) -> str:
    return resources.files("phasebench").joinpath("data", name).read_text()


def _read_csv(name: str) -> list:
    lines = [ln for ln in _data_text(name).splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def round_decimal(x: float, places: int = 1) -> float:
    """Round the printed decimal value of ``x`` half-to-even (-1.85 -> -1.8)."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class NullCase:
    case: int
    a_dbm: float
    s_db: float
    dtheta_s: float
    sa_max: float
    sa_min: float
    r: float


def table1_published() -> list:
    out = []
    for row in _read_csv("table1.csv"):
        out.append(NullCase(int(row["case"]), *(float(row[k]) for k in (
            "a_dbm", "s_db", "dtheta_s_deg", "sa_max_dbm", "sa_min_dbm", "r_db"))))
    return out


def null_case(case: int, a_dbm: float, s_db: float, dtheta_s: float) -> NullCase:
    """Combiner maximum, null and their ratio for one input configuration."""
    dev = DeviationPair(s_db, dtheta_s)
    sa_max = combiner_output(a_dbm, dev, 0.0).power_dbm
    sa_min = combiner_output(a_dbm, dev, 180.0).power_dbm
    return NullCase(case, a_dbm, s_db, dtheta_s, sa_max, sa_min, null_ratio_db(a_dbm, dev))


def _delta(computed: float, published: float) -> float:
    if math.isinf(computed) and math.isinf(published) and (computed > 0) == (published > 0):
        return 0.0
    return computed - published


def table1_comparison(tol: float = 0.01) -> list:
    rows = []
    for pub in table1_published():
        calc = null_case(pub.case, pub.a_dbm, pub.s_db, pub.dtheta_s)
        deltas = {k: _delta(getattr(calc, k), getattr(pub, k)) for k in ("sa_max", "sa_min", "r")}
        rows.append({
            "case": pub.case,
            "computed": calc,
            "published": pub,
            "delta": deltas,
            "match": all(abs(d) <= tol for d in deltas.values()),
        })
    return rows


def fmt_db(x: float, places: int = 2) -> str:
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return f"{x:.{places}f}"


def format_table1(rows) -> str:
    head = f"{'case':>4} {'SA_max':>8} {'pub':>7} {'SA_min':>8} {'pub':>7} {'r':>8} {'pub':>7}  {'d_max':>6} {'d_min':>6} {'d_r':>6}  ok"
    lines = [head]
    for row in rows:
        c, p, d = row["computed"], row["published"], row["delta"]
        lines.append(
            f"{row['case']:>4} {fmt_db(c.sa_max):>8} {fmt_db(p.sa_max):>7} {fmt_db(c.sa_min):>8} "
            f"{fmt_db(p.sa_min):>7} {fmt_db(c.r):>8} {fmt_db(p.r):>7}  {d['sa_max']:>+6.3f} "
            f"{d['sa_min']:>+6.3f} {d['r']:>+6.3f}  {'yes' if row['match'] else 'NO'}"
        )
    return "\n".join(lines)


def table2_sparams() -> list:
    return parse_sparams(_data_text("table2_sparams.txt"), path="table2_sparams.txt")


def table3_published() -> list:
    return [{k: float(v) for k, v in row.items()} for row in _read_csv("table3.csv")]


def table4_published() -> list:
    out = []
    for row in _read_csv("table4.csv"):
        out.append({
            "freq_ghz": float(row["freq_ghz"]),
            "mode": row["mode"],
            "y": int(row["y_deg"]),
            "theta_ref": float(row["theta_ref_deg"]),
            "v_ref": float(row["v_ref_v"]),
            "shift": float(row["shift_deg"]),
            "verdict": row["verdict"],
        })
    return out


@dataclass
class CorrectionRow:
    sparams: SParamSet
    corrections: CorrectionSet
    published_dp_mc: float = None
    published_dtheta_sc: float = None

    @property
    def flagged(self) -> bool:
        if self.published_dtheta_sc is None:
            return False
        return abs(self.corrections.dtheta_sc - self.published_dtheta_sc) > PHASE_FLAG_DEG

    def as_dict(self) -> dict:
        out = self.corrections.as_dict()
        out.update(
            dp_rounded_db=round_decimal(self.corrections.dp, 1),
            published_dp_mc_db=self.published_dp_mc,
            published_dtheta_sc_deg=self.published_dtheta_sc,
            flagged=self.flagged,
        )
        return out


def correction_rows(sets) -> list:
    rows = []
    for sp in sets:
        pub = sp.published or (None, None)
        rows.append(CorrectionRow(sp, compute_corrections(sp), *pub))
    return rows


def format_corrections(rows) -> str:
    lines = [f"{'f_GHz':>6} {'dP_Mc':>8} {'dTheta_Sc':>10} {'dP':>6} {'pub_dP_Mc':>10} {'pub_dTheta':>10}  flag"]
    for row in rows:
        c = row.corrections
        pub_p = "" if row.published_dp_mc is None else f"{row.published_dp_mc:.3f}"
        pub_t = "" if row.published_dtheta_sc is None else f"{row.published_dtheta_sc:.3f}"
        flag = "MISMATCH" if row.flagged else ""
        lines.append(f"{c.frequency:>6g} {c.dp_mc:>8.3f} {c.dtheta_sc:>10.3f} "
                     f"{round_decimal(c.dp, 1):>6.1f} {pub_p:>10} {pub_t:>10}  {flag}")
    return "\n".join(lines)
