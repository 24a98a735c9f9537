"""Campaign configuration in INI form.

Sections and keys (units in brackets)::

    [campaign]
    frequencies = 3, 4, 5, 6, 7, 8      ; GHz
    sparams = table2                    ; S-parameter file, "table2" (bundled) or "identity"
    output = out                        ; directory for report, curves and plots
    seed = 0                            ; randomises each point's initial phase relation
    parallel = 1

    [bench]
    drift_rate = 0.05                   ; deg/s at drift_ref_ghz
    drift_ref_ghz = 3
    drift_proportional = true
    wander_amp = 0                      ; deg
    wander_period = 60                  ; s
    noise_floor = -90                   ; dBm
    power_dbm = 0
    primary_level_error_db = 0
    secondary_level_error_db = 0
    adc_bits = 10
    sample_rate = 2800                  ; Hz
    buffer_len = 280
    adc_quantize = true
    cost.<action> = 1.0                 ; s, overrides one action cost

    [procedure]
    line_offset_db = 41
    max_retries = 10
    skip_network_corrections = false
    horizon_s = 120
    entry_margin_db = 0.5
    beat_hz = 11

    [quadrature]
    beta_max = 40                       ; deg

    [dut]                               ; defaults for every frequency
    hybrid_shift = 90
    gain_i = 2
    gain_q = 2
    offset_i = 0
    offset_q = 0
    path_phase = 0
    h2 = 0
    h3 = 0

    [dut 8]                             ; overrides at 8 GHz
    hybrid_shift = 144
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .bench import DEFAULT_ACTION_COSTS, AdcConfig, DriftModel
from .dut import DutEntry, DutModel, QuadratureSpec
from .errors import ConfigError
from .procedure import ProcedureConfig

DEFAULT_FREQUENCIES = (3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
DUT_KEYS = tuple(f.name for f in dataclasses.fields(DutEntry))


@dataclass
class BenchSettings:
    drift: DriftModel = field(default_factory=DriftModel)
    adc: AdcConfig = field(default_factory=AdcConfig)
    action_costs: dict = field(default_factory=lambda: dict(DEFAULT_ACTION_COSTS))
    noise_floor: float = -90.0
    power_dbm: float = 0.0
    primary_level_error_db: float = 0.0
    secondary_level_error_db: float = 0.0


@dataclass
class CampaignConfig:
    frequencies: tuple = DEFAULT_FREQUENCIES
    sparams: str = "table2"
    output: str = "out"
    seed: int = 0
    parallel: int = 1
    bench: BenchSettings = field(default_factory=BenchSettings)
    procedure: ProcedureConfig = field(default_factory=ProcedureConfig)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    dut: DutModel = None
    source_text: str = ""
    base_dir: Optional[str] = None

    def __post_init__(self):
        if not self.frequencies:
            raise ConfigError("at least one frequency is required")
        if len(set(self.frequencies)) != len(self.frequencies):
            raise ConfigError("frequencies must be unique")
        if self.dut is None:
            self.dut = DutModel.ideal(self.frequencies)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from None


def _get(section, key, conv, default):
    if key not in section:
        return default
    try:
        return conv(section[key])
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: cannot parse {section[key]!r}") from None


def _bool(section, key, default):
    if key not in section:
        return default
    try:
        return section.getboolean(key)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: expected true/false") from None


def _check_keys(section, allowed):
    for key in section:
        if key not in allowed and not key.startswith("cost."):
            raise ConfigError(f"[{section.name}] unknown key {key!r}")


def _dut_entry(section, base: DutEntry) -> DutEntry:
    _check_keys(section, DUT_KEYS)
    values = {k: _get(section, k, float, getattr(base, k)) for k in DUT_KEYS}
    try:
        return DutEntry(**values)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {exc}") from None


def parse_config(text: str, base_dir: Optional[str] = None) -> CampaignConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    known = {"campaign", "bench", "procedure", "quadrature", "dut"}
    for name in cp.sections():
        if name not in known and not name.startswith("dut "):
            raise ConfigError(f"unknown section [{name}]")

    camp = cp["campaign"] if cp.has_section("campaign") else cp[cp.default_section]
    if cp.has_section("campaign"):
        _check_keys(camp, {"frequencies", "sparams", "output", "seed", "parallel"})
    freqs = _get(camp, "frequencies", _floats, DEFAULT_FREQUENCIES)

    bench = BenchSettings()
    if cp.has_section("bench"):
        sec = cp["bench"]
        _check_keys(sec, {
            "drift_rate", "drift_ref_ghz", "drift_proportional", "wander_amp", "wander_period",
            "noise_floor", "power_dbm", "primary_level_error_db", "secondary_level_error_db",
            "adc_bits", "sample_rate", "buffer_len", "adc_quantize",
        })
        bench.drift = DriftModel(
            rate_at_ref=_get(sec, "drift_rate", float, bench.drift.rate_at_ref),
            ref_frequency=_get(sec, "drift_ref_ghz", float, bench.drift.ref_frequency / 1e9) * 1e9,
            proportional=_bool(sec, "drift_proportional", True),
            wander_amp=_get(sec, "wander_amp", float, 0.0),
            wander_period=_get(sec, "wander_period", float, 60.0),
        )
        bench.adc = AdcConfig(
            bits=_get(sec, "adc_bits", int, 10),
            sample_rate=_get(sec, "sample_rate", float, 2800.0),
            buffer_len=_get(sec, "buffer_len", int, 280),
            quantize=_bool(sec, "adc_quantize", True),
        )
        for key in sec:
            if key.startswith("cost."):
                kind = key[len("cost."):]
                if kind not in DEFAULT_ACTION_COSTS:
                    raise ConfigError(f"[bench] unknown action kind {kind!r}")
                cost = _get(sec, key, float, None)
                if cost < 0:
                    raise ConfigError(f"[bench] {key} must be non-negative")
                bench.action_costs[kind] = cost
        bench.noise_floor = _get(sec, "noise_floor", float, bench.noise_floor)
        bench.power_dbm = _get(sec, "power_dbm", float, bench.power_dbm)
        bench.primary_level_error_db = _get(sec, "primary_level_error_db", float, 0.0)
        bench.secondary_level_error_db = _get(sec, "secondary_level_error_db", float, 0.0)

    proc = ProcedureConfig()
    if cp.has_section("procedure"):
        sec = cp["procedure"]
        _check_keys(sec, {"line_offset_db", "max_retries", "skip_network_corrections",
                          "horizon_s", "entry_margin_db", "beat_hz"})
        proc = ProcedureConfig(
            line_offset_db=_get(sec, "line_offset_db", float, proc.line_offset_db),
            max_retries=_get(sec, "max_retries", int, proc.max_retries),
            skip_network_corrections=_bool(sec, "skip_network_corrections", False),
            horizon_s=_get(sec, "horizon_s", float, proc.horizon_s),
            entry_margin_db=_get(sec, "entry_margin_db", float, proc.entry_margin_db),
            beat_hz=_get(sec, "beat_hz", float, proc.beat_hz),
        )
    if proc.line_offset_db <= 0 or proc.max_retries < 0:
        raise ConfigError("line_offset_db must be positive and max_retries non-negative")

    quad = QuadratureSpec()
    if cp.has_section("quadrature"):
        _check_keys(cp["quadrature"], {"beta_max"})
        try:
            quad = QuadratureSpec(_get(cp["quadrature"], "beta_max", float, 40.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    base = _dut_entry(cp["dut"], DutEntry()) if cp.has_section("dut") else DutEntry()
    entries = {f: base for f in freqs}
    for name in cp.sections():
        if name.startswith("dut "):
            try:
                f = float(name.split(None, 1)[1])
            except ValueError:
                raise ConfigError(f"bad DUT section name [{name}]") from None
            if f not in entries:
                raise ConfigError(f"[{name}] is not one of the campaign frequencies")
            entries[f] = _dut_entry(cp[name], base)

    return CampaignConfig(
        frequencies=tuple(freqs),
        sparams=_get(camp, "sparams", str, "table2"),
        output=_get(camp, "output", str, "out"),
        seed=_get(camp, "seed", int, 0),
        parallel=max(1, _get(camp, "parallel", int, 1)),
        bench=bench,
        procedure=proc,
        quadrature=quad,
        dut=DutModel(entries),
        source_text=text,
        base_dir=base_dir,
    )


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=str(path.parent))
