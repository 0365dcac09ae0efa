import csv
import json
import subprocess
import sys

import pytest

from wittenmorse import cli
from wittenmorse.config import ExperimentConfig, from_mapping, load, load_batch, parse_schedule
from wittenmorse.errors import ConfigError
from wittenmorse.harness import (ReportRow, emit_csv, emit_json, execute, exit_code, format_float,
                                 header_for, run, run_batch)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- runners ---------------------------------------------------------------

def test_betti_octahedron(tmp_path):
    cfg, rows, csv_path, _ = run(from_mapping({}, "betti"), tmp_path)
    recs = read_csv(csv_path)
    assert [(r["p"], r["beta"]) for r in recs] == [("0", "1"), ("1", "0"), ("2", "1")]
    assert all(r["beta"] == r["beta_smith"] for r in recs)
    assert exit_code(rows) == 0


def test_morse_verify_example():
    rows = execute(from_mapping({"function": "torus/cos2x+cosy"}, "morse-verify"))
    (row,) = rows
    v = row.values
    assert tuple(v["M"]) == (2, 4, 2) and tuple(v["beta"]) == (1, 2, 1)
    assert v["weak"] and v["strong"] and v["chi"] == 0
    assert row.verdict == "pass"


def test_witten_scan_kernels():
    rows = execute(from_mapping({"schedule": [0, 1, 2, 5]}, "witten-scan"))
    by_t = {}
    for r in rows:
        by_t.setdefault(r.values["t"], []).append(r.values["kernel"])
    assert sorted(by_t) == [0, 1, 2, 5]
    assert all(v == [1, 2, 1] for v in by_t.values())
    assert all(r.verdict == "pass" for r in rows)


def test_susy_pairing_octahedron():
    rows = execute(from_mapping({}, "susy-pairing"))
    assert rows and all(r.verdict == "pass" for r in rows)


def test_semiclassical_columns(tmp_path):
    cfg = from_mapping({"schedule": [10], "semiclassical": {"potential": "harmonic", "N": 512}},
                       "semiclassical")
    _, rows, csv_path, _ = run(cfg, tmp_path)
    header = csv_path.read_text().splitlines()[0].split(",")
    assert header[1:6] == ["lambda", "n", "E_over_lambda", "e_n", "deviation"]
    assert [r.values["e_n"] for r in rows] == [1.0, 3.0, 5.0]
    assert all(r.verdict == "pass" for r in rows)


TRIANGLE = "OFF\n3 1 3\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


def test_module_errors_become_rows(tmp_path):
    off = tmp_path / "disk.off"
    off.write_text(TRIANGLE)
    rows = execute(from_mapping({"complex": None, "off_path": str(off), "name": "disk"}, "betti"))
    assert [r.values["p"] for r in rows] == [0, 1, 2]
    for row in rows:
        assert row.verdict == "error:TopologyError"
        assert row.message.startswith("disk: ")
    assert exit_code(rows) == 1


# --- writers ---------------------------------------------------------------

def test_empty_rows_header_only(tmp_path):
    path = emit_csv([], tmp_path / "e.csv", header_for("betti"))
    assert path.read_text() == "experiment,p,beta,beta_smith,verdict,message\n"
    assert emit_json([], tmp_path / "e.json").read_text() == "[]\n"


def test_single_row_two_lines(tmp_path):
    row = ReportRow("b", {"p": 0, "beta": 1, "beta_smith": 1}, "pass")
    text = emit_csv([row], tmp_path / "one.csv").read_text()
    assert text.splitlines() == ["experiment,p,beta,beta_smith,verdict,message", "b,0,1,1,pass,"]


def test_verdict_validation():
    with pytest.raises(ValueError):
        ReportRow("x", {}, "maybe")
    ReportRow("x", {}, "error:NoGap")


@pytest.mark.parametrize("x,s", [(1.0, "1.0"), (0.1, "0.10000000000000001"), (1e-20, "9.9999999999999995e-21"),
                                 (float("nan"), "NaN"), (float("inf"), "Infinity")])
def test_format_float(x, s):
    assert format_float(x) == s


def test_json_round_trip(tmp_path):
    row = ReportRow("j", {"t": 0.5, "kernel": [1, 2, 1], "ok": True}, "pass")
    data = json.loads(emit_json([row], tmp_path / "j.json").read_text())
    assert data == [{"experiment": "j", "t": 0.5, "kernel": [1, 2, 1], "ok": True,
                     "verdict": "pass", "message": ""}]


def test_reruns_are_byte_identical(tmp_path):
    cfg = from_mapping({"schedule": [0, 1]}, "witten-scan")
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    assert a[2].read_bytes() == b[2].read_bytes()
    assert a[3].read_bytes() == b[3].read_bytes()


# --- configuration ---------------------------------------------------------

def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_experiment_table(tmp_path):
    cfg = load(write(tmp_path, '[experiment]\nkind = "witten-scan"\nschedule = [0, 0.5]\ngrid = 16\n'))
    assert cfg.kind == "witten-scan" and cfg.schedule == (0.0, 0.5) and cfg.grid == 16


@pytest.mark.parametrize("text,field", [
    ('schedule = [0, 2, 1]\n', "schedule[2]"),
    ('bogus = 1\n', "bogus"),
    ('kind = "betti"\n', "kind"),
    ('order = 3\n', "order"),
    ('grid = 2\n', "grid"),
    ('[solver]\nk = 0\n', "solver.k"),
    ('[solver]\nwhat = 0\n', "solver.what"),
    ('seed = -1\n', "seed"),
])
def test_config_error_field_paths(tmp_path, text, field):
    with pytest.raises(ConfigError) as info:
        load(write(tmp_path, text), "witten-scan")
    assert info.value.field == field


def test_batch_error_prefix(tmp_path):
    text = '[[experiments]]\nname = "a"\n\n[[experiments]]\nname = "b"\nschedule = [1, 1]\n'
    with pytest.raises(ConfigError) as info:
        load_batch(write(tmp_path, text), "witten-scan")
    assert info.value.field == "experiments[1]"


def test_missing_file():
    with pytest.raises(ConfigError):
        load("/nonexistent/x.toml", "betti")


def test_overrides_revalidate():
    cfg = from_mapping({}, "witten-scan")
    assert cfg.with_overrides(grid=None, seed=3).seed == 3
    with pytest.raises(ConfigError):
        cfg.with_overrides(schedule=(2.0, 1.0))


def test_parse_schedule():
    assert parse_schedule("0,1,2,5") == (0.0, 1.0, 2.0, 5.0)


def test_potential_defaults():
    cfg = from_mapping({"semiclassical": {"potential": "double-well"}}, "semiclassical")
    assert cfg.semiclassical.N == 2048 and cfg.schedule == (5.0, 10.0, 20.0, 40.0)
    assert isinstance(cfg, ExperimentConfig)


def test_duplicate_names_rejected():
    cfg = from_mapping({}, "betti")
    with pytest.raises(ConfigError):
        run_batch([cfg, cfg])


# --- command line ----------------------------------------------------------

def test_cli_betti(tmp_path, capsys):
    assert cli.main(["betti", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "betti.csv").exists() and (tmp_path / "betti.json").exists()


def test_cli_flags_override_config(tmp_path):
    cfg = write(tmp_path, 'schedule = [0, 1, 2]\nname = "fromfile"\n')
    assert cli.main(["witten-scan", "--config", str(cfg), "--t-schedule", "0,3", "--name", "flag",
                     "--out", str(tmp_path)]) == 0
    recs = read_csv(tmp_path / "flag.csv")
    assert sorted({float(r["t"]) for r in recs}) == [0.0, 3.0]
    assert not (tmp_path / "fromfile.csv").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, 'schedule = [1, 0]\n')
    assert cli.main(["witten-scan", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "schedule[1]" in capsys.readouterr().err


def test_cli_failure_exit_code(tmp_path, capsys):
    off = tmp_path / "disk.off"
    off.write_text(TRIANGLE)
    assert cli.main(["betti", "--off", str(off), "--out", str(tmp_path)]) == 1
    assert "error:TopologyError" in capsys.readouterr().err


def test_cli_bad_seed():
    with pytest.raises(SystemExit):
        cli.main(["betti", "--seed", str(2**64)])


def test_cli_batch_with_workers(tmp_path):
    text = ('[[experiments]]\nname = "s0"\nschedule = [0]\n\n'
            '[[experiments]]\nname = "s1"\nschedule = [1]\n')
    cfg = write(tmp_path, text)
    assert cli.main(["witten-scan", "--config", str(cfg), "--workers", "2", "--out", str(tmp_path)]) == 0
    assert read_csv(tmp_path / "s0.csv")[0]["t"] == "0.0"
    assert read_csv(tmp_path / "s1.csv")[0]["t"] == "1.0"


def test_catalog_list():
    out = subprocess.run([sys.executable, "-m", "wittenmorse", "catalog", "list"],
                         capture_output=True, text=True, check=True).stdout
    assert "octahedron" in out and "torus/cos2x+cosy" in out
