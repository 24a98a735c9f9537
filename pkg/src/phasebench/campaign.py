"""Multi-frequency campaigns: run every point, reference its curves, write the outputs."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .bench import AdcConfig, Bench, BenchClock, DriftModel
from .config import CampaignConfig
from .dut import Mode, QuadratureSpec, quadrature_verdict
from .errors import ConfigError, ParseError, PhaseBenchError
from .netcal import SParamSet, compute_corrections, find_row, load_sparams
from .procedure import DetectorCurve, run_point
from .published import table2_sparams
from .referencing import reference_curves
from .svgplot import curves_svg

log = logging.getLogger(__name__)

REF_KEYS = ("vi_180", "vi_90", "vq_90", "vq_180")


# -- curve and reference-voltage files -------------------------------------

def format_curve_csv(curve: DetectorCurve) -> str:
    lines = [
        f"# mode={curve.mode.value}",
        f"# freq_ghz={curve.frequency!r}",
        f"# sample_rate_hz={float(curve.sample_rate)!r}",
        f"# beat_hz={float(curve.beat_hz)!r}",
        "sample_index,code,volts",
    ]
    for i, (c, v) in enumerate(zip(curve.codes, curve.volts)):
        code = int(c) if float(c).is_integer() else repr(float(c))
        lines.append(f"{i},{code},{float(v)!r}")
    return "\n".join(lines) + "\n"


def parse_curve_csv(text: str, path=None) -> DetectorCurve:
    meta, codes, volts = {}, [], []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if [h.strip() for h in line.split(",")] != ["sample_index", "code", "volts"]:
                raise ParseError("expected header 'sample_index,code,volts'", lineno, path)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", lineno, path)
        try:
            idx, code, v = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("non-numeric field", lineno, path) from None
        if idx != len(codes):
            raise ParseError(f"sample_index {idx} out of sequence", lineno, path)
        codes.append(code)
        volts.append(v)
    if "mode" not in meta:
        raise ParseError("missing '# mode=' header", None, path)
    try:
        mode = Mode(meta["mode"])
        freq = float(meta.get("freq_ghz", "nan"))
        rate = float(meta.get("sample_rate_hz", AdcConfig().sample_rate))
        beat = float(meta.get("beat_hz", 11.0))
    except ValueError as exc:
        raise ParseError(f"bad header value ({exc})", None, path) from None
    return DetectorCurve(mode, np.array(codes), np.array(volts), beat, rate, freq)


def read_curve_csv(path) -> DetectorCurve:
    path = Path(path)
    return parse_curve_csv(path.read_text(), path=str(path))


def format_refs(refs: dict) -> str:
    return "".join(f"{k} = {float(refs[k])!r}\n" for k in REF_KEYS)


def parse_refs(text: str, path=None) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.replace(":", "=", 1).partition("=")
        key = key.strip().lower()
        if not sep or key not in REF_KEYS:
            raise ParseError(f"expected one of {', '.join(REF_KEYS)} = <volts>", lineno, path)
        try:
            out[key] = float(value)
        except ValueError:
            raise ParseError(f"non-numeric value for {key}", lineno, path) from None
    missing = [k for k in REF_KEYS if k not in out]
    if missing:
        raise ParseError(f"missing reference voltages: {', '.join(missing)}", None, path)
    return out


def read_refs(path) -> dict:
    path = Path(path)
    return parse_refs(path.read_text(), path=str(path))


# -- referencing ------------------------------------------------------------

def referencing_block(curve_i: DetectorCurve, curve_q: DetectorCurve, refs: dict,
                      spec: QuadratureSpec):
    """Reference an I x I / Q x I pair; returns (json-ready block, ReferencingResult)."""
    if curve_i.mode is not Mode.IXI or curve_q.mode is not Mode.QXI:
        raise ConfigError("need one IxI and one QxI curve")
    res = reference_curves(curve_i.volts, curve_q.volts, refs["vi_180"], refs["vi_90"],
                           refs["vq_90"], refs["vq_180"])
    block = {
        "IxI": res.curve_i.anchor.as_dict(),
        "QxI": res.curve_q.anchor.as_dict(),
        "periods_samples": list(res.periods),
        "shift_deg": res.shift,
        "beta_max_deg": spec.beta_max,
        "verdict": quadrature_verdict(res.shift, spec),
    }
    return block, res


def format_reference_rows(freq, block: dict) -> str:
    """Anchor rows in the published results layout plus the shift and verdict."""
    lines = []
    for mode in ("QxI", "IxI"):
        a = block[mode]
        f = "" if freq is None or (isinstance(freq, float) and math.isnan(freq)) else f"{freq:g}"
        lines.append(f"{f:>5} {a['y']:>4} {a['theta_ref_y']:>9.3f} {a['v_ref_y']:>7.3f} {mode:>4} "
                     f"{block['shift_deg']:>9.3f} {block['verdict']:>4}")
    return "\n".join(lines)


REFERENCE_HEADER = f"{'f':>5} {'y':>4} {'theta_ref':>9} {'V_ref':>7} {'curve':>4} {'shift':>9} {'90+-b':>4}"


# -- campaign -----------------------------------------------------------------

def _sparam_sets(cfg: CampaignConfig):
    if cfg.sparams == "table2":
        return table2_sparams()
    if cfg.sparams == "identity":
        return [SParamSet.identity(f) for f in cfg.frequencies]
    return load_sparams(cfg.resolve(cfg.sparams))


def initial_offsets(cfg: CampaignConfig) -> dict:
    """Per-frequency initial phase relation between the generators, from the seed."""
    rng = np.random.default_rng(cfg.seed)
    draws = rng.uniform(0.0, 360.0, size=len(cfg.frequencies))
    return {f: float(d) for f, d in zip(cfg.frequencies, draws)}


def build_bench(cfg: CampaignConfig, f: float, network, offset0: float) -> Bench:
    b = cfg.bench
    drift = DriftModel(b.drift.rate_at_ref, b.drift.ref_frequency, b.drift.proportional,
                       offset0, b.drift.wander_amp, b.drift.wander_period)
    adc = AdcConfig(b.adc.full_scale, b.adc.bits, b.adc.sample_rate, b.adc.buffer_len, b.adc.quantize)
    return Bench(
        f, dut=cfg.dut, network=network, drift=drift, adc=adc,
        clock=BenchClock(0.0, dict(b.action_costs)), noise_floor=b.noise_floor,
        power_dbm=b.power_dbm, primary_level_error_db=b.primary_level_error_db,
        secondary_level_error_db=b.secondary_level_error_db,
    )


@dataclass
class MeasurementRecord:
    freq_ghz: float
    status: str = "ok"
    error: dict = None
    data: dict = field(default_factory=dict)
    curves: tuple = ()  # DetectorCurve pair, not serialised into the report
    referencing: object = None  # ReferencingResult, for plots

    def as_dict(self) -> dict:
        out = {"freq_ghz": self.freq_ghz, "status": self.status}
        if self.error is not None:
            out["error"] = self.error
        out.update(self.data)
        return out


def curve_filename(f: float, mode) -> str:
    return f"curve_{f:g}GHz_{Mode(mode).value}.csv"


def refs_filename(f: float) -> str:
    return f"refs_{f:g}GHz.txt"


def run_frequency(cfg: CampaignConfig, f: float, offset0: float, sets=None) -> MeasurementRecord:
    """One campaign point; engine failures become the record's error entry."""
    try:
        sets = _sparam_sets(cfg) if sets is None else sets
        try:
            network = find_row(sets, f)
        except PhaseBenchError:
            if not cfg.procedure.skip_network_corrections:
                raise
            network = SParamSet.identity(f)
        corrections = compute_corrections(network)
        bench = build_bench(cfg, f, network, offset0)
        rep = run_point(bench, corrections, cfg.quadrature, cfg.procedure)
        refs = {k: getattr(rep.refs, k) for k in REF_KEYS}
        block, res = referencing_block(rep.curves[0], rep.curves[1], refs, cfg.quadrature)
    except PhaseBenchError as exc:
        log.warning("point %g GHz failed: %s", f, exc)
        return MeasurementRecord(f, "error", {"type": type(exc).__name__, "message": str(exc)})
    truth = cfg.dut.entry(f).hybrid_shift
    data = {
        "initial_offset_deg": offset0,
        "corrections": corrections.as_dict(),
        "corrections_applied": not cfg.procedure.skip_network_corrections,
        "vac": rep.vac,
        "null": rep.null.as_dict(),
        "refs": rep.refs.as_dict(),
        "retries": rep.retries,
        "attempts": [a.as_dict() for a in rep.attempts],
        "error_budget_deg": rep.error_budget_deg,
        "curves": {
            c.mode.value: {"file": curve_filename(f, c.mode), "clipped": c.clipped,
                           "samples": len(c), "acquired_at": c.acquired_at}
            for c in rep.curves
        },
        "refs_file": refs_filename(f),
        "referencing": block,
        "ground_truth_shift_deg": truth,
        "ground_truth_verdict": quadrature_verdict(truth, cfg.quadrature),
        "elapsed_s": bench.clock.now,
    }
    return MeasurementRecord(f, "ok", None, data, rep.curves, res)


def _run_one(args):
    cfg, f, offset0 = args
    return run_frequency(cfg, f, offset0)


@dataclass
class CampaignReport:
    records: list
    provenance: dict

    @property
    def ok(self) -> bool:
        return all(r.status == "ok" for r in self.records)

    def summary(self) -> list:
        rows = []
        for r in self.records:
            row = {"freq_ghz": r.freq_ghz, "status": r.status}
            if r.status == "ok":
                row["shift_deg"] = r.data["referencing"]["shift_deg"]
                row["verdict"] = r.data["referencing"]["verdict"]
                row["retries"] = r.data["retries"]
            rows.append(row)
        return rows

    def as_dict(self, include_timestamp: bool = True) -> dict:
        prov = dict(self.provenance)
        if not include_timestamp:
            prov.pop("generated_at", None)
        return {
            "provenance": prov,
            "summary": self.summary(),
            "records": [r.as_dict() for r in self.records],
        }

    def to_json(self, include_timestamp: bool = True) -> str:
        return json.dumps(self.as_dict(include_timestamp), indent=2, sort_keys=True, allow_nan=True) + "\n"


def run_campaign(cfg: CampaignConfig, parallel: int = None) -> CampaignReport:
    offsets = initial_offsets(cfg)
    jobs = [(cfg, f, offsets[f]) for f in cfg.frequencies]
    workers = cfg.parallel if parallel is None else parallel
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]
    records.sort(key=lambda r: r.freq_ghz)
    provenance = {
        "config_sha256": cfg.config_hash,
        "seed": cfg.seed,
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return CampaignReport(records, provenance)


def write_outputs(report: CampaignReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in report.records:
        if r.status != "ok":
            continue
        for c in r.curves:
            (out / curve_filename(r.freq_ghz, c.mode)).write_text(format_curve_csv(c))
        refs = {k: r.data["refs"][k] for k in REF_KEYS}
        (out / refs_filename(r.freq_ghz)).write_text(format_refs(refs))
        res = r.referencing
        svg = curves_svg(
            {"IxI": (res.curve_i.theta_m, res.curve_i.volts), "QxI": (res.curve_q.theta_m, res.curve_q.volts)},
            title=f"{r.freq_ghz:g} GHz, shift {res.shift:.3f} deg",
        )
        (out / f"curves_{r.freq_ghz:g}GHz.svg").write_text(svg)
    path = out / "report.json"
    path.write_text(report.to_json())
    return path


def reference_files(curve_paths, refs_path, spec: QuadratureSpec) -> tuple:
    """Offline referencing of exported curves; returns (freq, block)."""
    curves = [read_curve_csv(p) for p in curve_paths]
    by_mode = {c.mode: c for c in curves}
    if len(curves) != 2 or len(by_mode) != 2:
        raise ConfigError("expected exactly one IxI and one QxI curve file")
    refs = read_refs(refs_path)
    block, _ = referencing_block(by_mode[Mode.IXI], by_mode[Mode.QXI], refs, spec)
    return by_mode[Mode.IXI].frequency, block

