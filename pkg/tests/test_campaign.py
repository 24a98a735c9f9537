import json
import math

import numpy as np
import pytest

from phasebench.bench import DriftModel
from phasebench.campaign import (
    curve_filename,
    format_curve_csv,
    format_refs,
    parse_curve_csv,
    parse_refs,
    reference_files,
    refs_filename,
    run_campaign,
    write_outputs,
)
from phasebench.cli import main
from phasebench.config import parse_config
from phasebench.dut import Mode, QuadratureSpec
from phasebench.errors import ConfigError, ParseError
from phasebench.netcal import format_sparams
from phasebench.procedure import DetectorCurve
from phasebench.published import table2_sparams

PUBLISHED_SHIFTS = {3: 99.967, 4: 99.967, 5: 94.667, 6: 95.667, 7: 51.667, 8: 144.0}

IDEAL = """
[campaign]
frequencies = 3, 4, 5, 6, 7, 8
sparams = table2
seed = 7
"""


def with_shifts(shifts, extra=""):
    return IDEAL + extra + "".join(f"\n[dut {f}]\nhybrid_shift = {s}\n" for f, s in shifts.items())


@pytest.fixture(scope="module")
def ideal_report():
    return run_campaign(parse_config(IDEAL))


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.frequencies == (3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
        assert cfg.procedure.line_offset_db == 41.0
        assert cfg.quadrature.beta_max == 40.0
        assert cfg.bench.drift == DriftModel()

    def test_sections(self):
        cfg = parse_config("""
[campaign]
frequencies = 3 5
[bench]
drift_rate = 0.1
cost.sa_read = 0.5
[procedure]
line_offset_db = 47
[quadrature]
beta_max = 10
[dut]
h2 = 0.05
[dut 5]
hybrid_shift = 100
""")
        assert cfg.frequencies == (3.0, 5.0)
        assert cfg.bench.drift.rate_at_ref == 0.1
        assert cfg.bench.action_costs["sa_read"] == 0.5
        assert cfg.procedure.error_bound_deg == pytest.approx(0.5119, abs=1e-4)
        assert cfg.dut.entry(5).hybrid_shift == 100 and cfg.dut.entry(5).h2 == 0.05
        assert cfg.dut.entry(3).hybrid_shift == 90

    @pytest.mark.parametrize("text", [
        "[bogus]\nx = 1\n",
        "[campaign]\nfrequncies = 3\n",
        "[campaign]\nfrequencies = 3, x\n",
        "[campaign]\nfrequencies = 3, 3\n",
        "[bench]\ncost.teleport = 1\n",
        "[procedure]\nline_offset_db = -3\n",
        "[quadrature]\nbeta_max = 95\n",
        "[dut 9]\nhybrid_shift = 90\n",
        "[dut]\nhybrid_shift = 0\n",
        "no section header\n",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_hash_tracks_text(self):
        assert parse_config(IDEAL).config_hash == parse_config(IDEAL).config_hash
        assert parse_config(IDEAL).config_hash != parse_config(IDEAL + "\n").config_hash


class TestCampaign:
    def test_ideal_dut(self, ideal_report):
        rows = ideal_report.summary()
        assert len(rows) == 6 and ideal_report.ok
        for row in rows:
            assert row["shift_deg"] == pytest.approx(90.0, abs=0.5)
            assert row["verdict"] == "YES"

    def test_published_verdicts(self):
        rep = run_campaign(parse_config(with_shifts(PUBLISHED_SHIFTS)))
        assert [r["verdict"] for r in rep.summary()] == ["YES"] * 5 + ["NO"]
        for r in rep.records:
            budget = r.data["error_budget_deg"]
            assert r.data["referencing"]["shift_deg"] == pytest.approx(PUBLISHED_SHIFTS[int(r.freq_ghz)],
                                                                       abs=budget + 0.5)

    def test_missing_sparam_row_is_isolated(self, tmp_path):
        rows = [s for s in table2_sparams() if s.frequency != 8.0]
        (tmp_path / "net.txt").write_text(format_sparams(rows))
        text = IDEAL.replace("sparams = table2", "sparams = net.txt")
        rep = run_campaign(parse_config(text, base_dir=str(tmp_path)))
        status = {r.freq_ghz: r.status for r in rep.records}
        assert status == {3.0: "ok", 4.0: "ok", 5.0: "ok", 6.0: "ok", 7.0: "ok", 8.0: "error"}
        err = rep.records[-1].as_dict()["error"]
        assert err["type"] == "UnknownFrequency"
        assert not rep.ok

    def test_missing_row_tolerated_without_corrections(self, tmp_path):
        (tmp_path / "net.txt").write_text(format_sparams(table2_sparams()[:1]))
        text = IDEAL.replace("sparams = table2", "sparams = net.txt").replace("3, 4, 5, 6, 7, 8", "3, 8")
        text += "\n[procedure]\nskip_network_corrections = true\n"
        assert run_campaign(parse_config(text, base_dir=str(tmp_path))).ok

    def test_deterministic_report(self):
        a = run_campaign(parse_config(IDEAL)).to_json(include_timestamp=False)
        b = run_campaign(parse_config(IDEAL), parallel=2).to_json(include_timestamp=False)
        assert a == b
        assert "generated_at" not in a

    def test_seed_changes_initial_phase(self):
        a = run_campaign(parse_config(IDEAL))
        b = run_campaign(parse_config(IDEAL.replace("seed = 7", "seed = 8")))
        assert a.records[0].data["initial_offset_deg"] != b.records[0].data["initial_offset_deg"]

    def test_provenance(self, ideal_report):
        prov = json.loads(ideal_report.to_json())["provenance"]
        assert prov["seed"] == 7 and len(prov["config_sha256"]) == 64 and "generated_at" in prov


class TestFiles:
    def test_curve_round_trip(self, ideal_report):
        c = ideal_report.records[0].curves[0]
        back = parse_curve_csv(format_curve_csv(c))
        assert back.mode is c.mode and back.frequency == c.frequency
        assert np.array_equal(back.codes, c.codes) and np.array_equal(back.volts, c.volts)

    def test_refs_round_trip(self):
        refs = {"vi_180": 0.25, "vi_90": 2.5, "vq_90": 4.75, "vq_180": 2.4975562072336266}
        assert parse_refs(format_refs(refs)) == refs

    def test_refs_missing_key(self):
        with pytest.raises(ParseError):
            parse_refs("vi_180 = 1\nvi_90 = 2\n")

    def test_bad_csv_line(self):
        text = "# mode=IxI\nsample_index,code,volts\n0,1,abc\n"
        with pytest.raises(ParseError) as info:
            parse_curve_csv(text, path="c.csv")
        assert "c.csv:3:" in str(info.value)

    def test_truncated_curve(self):
        c = DetectorCurve(Mode.IXI, np.zeros(280), np.zeros(280), 11.0, 2800.0, 3.0)
        lines = format_curve_csv(c).splitlines()
        with pytest.raises(ConfigError):
            parse_curve_csv("\n".join(lines[:5 + 100]))

    def test_exported_files_reference_identically(self, ideal_report, tmp_path):
        write_outputs(ideal_report, tmp_path)
        for r in ideal_report.records:
            f = r.freq_ghz
            paths = [tmp_path / curve_filename(f, m) for m in (Mode.IXI, Mode.QXI)]
            freq, block = reference_files(paths, tmp_path / refs_filename(f), QuadratureSpec(40))
            assert freq == f
            assert block == r.data["referencing"]
        assert (tmp_path / "curves_3GHz.svg").read_text().startswith("<svg")
        assert json.loads((tmp_path / "report.json").read_text())["summary"][0]["freq_ghz"] == 3.0


def synthetic_pair(tmp_path, shift):
    n = np.arange(280)
    phase = 360.0 * n / (2800 / 11) + 37.0  # theta_M of each sample
    paths = []
    for mode, delay in ((Mode.IXI, 0.0), (Mode.QXI, shift)):
        volts = 2.5 + 2.0 * np.cos(np.radians(phase - delay))
        codes = np.round(volts / 5 * 1023)
        c = DetectorCurve(mode, codes, codes * 5 / 1023, 11.0, 2800.0, 5.0)
        p = tmp_path / curve_filename(5, mode)
        p.write_text(format_curve_csv(c))
        paths.append(p)
    level = lambda th, d: round((2.5 + 2.0 * math.cos(math.radians(th - d))) / 5 * 1023) * 5 / 1023
    refs = {"vi_180": level(180, 0), "vi_90": level(90, 0), "vq_90": level(90, shift), "vq_180": level(180, shift)}
    (tmp_path / "refs.txt").write_text(format_refs(refs))
    return paths, tmp_path / "refs.txt"


class TestCli:
    def test_reference_synthetic_pair(self, tmp_path, capsys):
        paths, refs = synthetic_pair(tmp_path, 130.0)
        assert main(["reference", *map(str, paths), str(refs), "--json"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["referencing"]["shift_deg"] == pytest.approx(130.0, abs=0.5)

    def test_reference_text_rows(self, tmp_path, capsys):
        paths, refs = synthetic_pair(tmp_path, 144.0)
        assert main(["reference", *map(str, paths), str(refs)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3 and lines[1].split()[4] == "QxI" and lines[2].split()[-1] == "NO"

    def test_reference_truncated(self, tmp_path, capsys):
        paths, refs = synthetic_pair(tmp_path, 90.0)
        text = paths[0].read_text().splitlines()
        paths[0].write_text("\n".join(text[:105]) + "\n")
        assert main(["reference", *map(str, paths), str(refs)]) == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_table1(self, capsys):
        assert main(["table1", "--json"]) == 0
        rows = {r["case"]: r for r in json.loads(capsys.readouterr().out)}
        assert rows[1]["computed"]["r"] == -math.inf
        assert round(rows[7]["computed"]["r"], 2) == -41.19
        assert round(rows[4]["computed"]["sa_max"], 2) == 11.10
        assert round(rows[4]["computed"]["r"], 2) == -41.28

    def test_table1_text_renders_inf(self, capsys):
        main(["table1"])
        assert capsys.readouterr().out.splitlines()[1].split()[3] == "-inf"

    def test_corrections(self, capsys):
        assert main(["corrections", "table2", "--json"]) == 0
        rows = {r["frequency_ghz"]: r for r in json.loads(capsys.readouterr().out)}
        assert rows[3.0]["dtheta_sc_deg"] == pytest.approx(-0.34) and not rows[3.0]["flagged"]
        assert rows[4.0]["dtheta_sc_deg"] == pytest.approx(-0.95) and rows[4.0]["flagged"]

    def test_corrections_identity_file(self, tmp_path, capsys):
        (tmp_path / "id.txt").write_text("3 0 0 0 0 0 0 0 0\n4 0 0 0 0 0 0 0 0\n")
        assert main(["corrections", str(tmp_path / "id.txt"), "--json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert all(r["dtheta_sc_deg"] == 0 and r["dp_mc_db"] == 0 for r in rows)

    def test_corrections_parse_error(self, tmp_path, capsys):
        (tmp_path / "bad.txt").write_text("3 0 0\n")
        assert main(["corrections", str(tmp_path / "bad.txt")]) == 2

    def test_simulate_exit_codes(self, tmp_path, capsys):
        (tmp_path / "ok.ini").write_text(with_shifts(PUBLISHED_SHIFTS))
        assert main(["simulate", str(tmp_path / "ok.ini"), "--out", str(tmp_path / "ok")]) == 0
        assert (tmp_path / "ok" / "report.json").exists()
        (tmp_path / "net.txt").write_text(format_sparams(table2_sparams()[:5]))
        (tmp_path / "bad.ini").write_text(IDEAL.replace("sparams = table2", "sparams = net.txt"))
        assert main(["simulate", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "bad")]) == 1
        report = json.loads((tmp_path / "bad" / "report.json").read_text())
        assert [r["status"] for r in report["summary"]] == ["ok"] * 5 + ["error"]

    def test_simulate_overrides(self, tmp_path, capsys):
        (tmp_path / "c.ini").write_text(IDEAL.replace("3, 4, 5, 6, 7, 8", "4"))
        out = tmp_path / "o"
        assert main(["simulate", str(tmp_path / "c.ini"), "--out", str(out), "--skip-netcal",
                     "--line-offset-db", "47", "--beta-max", "1"]) == 0
        rec = json.loads((out / "report.json").read_text())["records"][0]
        assert rec["corrections_applied"] is False
        assert rec["error_budget_deg"] == pytest.approx(0.5119 + 0.95, abs=1e-3)
        assert rec["referencing"]["beta_max_deg"] == 1.0

    def test_missing_config(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path / "nope.ini")]) == 2
