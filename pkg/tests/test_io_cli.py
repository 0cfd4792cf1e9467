import csv
import json
import shutil
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccsflex import cli
from ccsflex.datasets import toy_system
from ccsflex.domain import ccs_plant
from ccsflex.io import (
    InputError,
    bundled_dataset,
    emit_report,
    gigawatts,
    load_inputs,
    millions,
    read_fixed_caps,
    write_fixed_caps,
    write_inputs,
)
from ccsflex.solver import Solution
from ccsflex.workflow import SweepReport, flex_combo

TOY = bundled_dataset("texas-toy")


@pytest.fixture
def toy_copy(tmp_path):
    d = tmp_path / "toy"
    shutil.copytree(TOY, d)
    return d


# ---- loading -----------------------------------------------------------------

def test_bundled_dataset_loads():
    b = load_inputs(TOY)
    assert b.spec.horizon_hours == 48
    assert len(b.spec.resources) == 10
    assert b.spec.resource("ccs").capex_power == 2310.0
    assert [p.label() for p in b.policies] == ["tax200", "ces90+credit85"]
    assert b.spec.hour_weight == pytest.approx(8760.0 / 48)


def test_week_dataset_loads():
    b = load_inputs(bundled_dataset("texas-toy-336"))
    assert b.spec.horizon_hours == 336
    assert sum(r.is_uc for r in b.spec.resources) == 2
    assert (b.solver.mip_gap, b.solver.branching) == (1e-3, "pseudocost")


def test_bundled_data_matches_the_generator():
    b = load_inputs(TOY)
    ref = toy_system(48)
    np.testing.assert_array_equal(b.spec.demand, ref.demand)
    assert b.spec.resources == ref.resources


def test_unknown_profile_resource_names_the_row(toy_copy):
    with open(toy_copy / "profiles.csv", "a") as f:
        f.write("1,ghost,0.5\n")
    with pytest.raises(InputError) as err:
        load_inputs(toy_copy)
    n_lines = len((toy_copy / "profiles.csv").read_text().splitlines())
    msg = "\n".join(err.value.issues)
    assert "ghost" in msg and f"profiles.csv:{n_lines}" in msg


def test_missing_hour_is_a_contiguity_error(toy_copy):
    lines = (toy_copy / "demand.csv").read_text().splitlines()
    (toy_copy / "demand.csv").write_text("\n".join(l for l in lines if not l.startswith("5,")) + "\n")
    with pytest.raises(InputError) as err:
        load_inputs(toy_copy)
    msg = "\n".join(err.value.issues)
    assert "demand.csv" in msg and "5" in msg


def test_malformed_number_reports_line(toy_copy):
    text = (toy_copy / "demand.csv").read_text().replace("\n3,", "\n3,abc", 1)
    (toy_copy / "demand.csv").write_text(text)
    with pytest.raises(InputError) as err:
        load_inputs(toy_copy)
    assert any("demand.csv:4" in i for i in err.value.issues)


def test_missing_file_and_bad_config(toy_copy):
    (toy_copy / "resources.csv").unlink()
    with open(toy_copy / "config.yaml", "a") as f:
        f.write("mystery: 1\n")
    with pytest.raises(InputError) as err:
        load_inputs(toy_copy)
    msg = "\n".join(err.value.issues)
    assert "resources.csv" in msg and "mystery" in msg


def test_not_a_directory(tmp_path):
    with pytest.raises(InputError):
        load_inputs(tmp_path / "nowhere")


def test_spec_round_trips_through_files(tmp_path):
    spec = toy_system(24).with_resource(ccs_plant("ccs2", existing_cap=250.0, unit_size=250.0))
    write_inputs(spec, tmp_path / "rt")
    back = load_inputs(tmp_path / "rt").spec
    assert back.resources == spec.resources
    np.testing.assert_array_equal(back.demand, spec.demand)
    assert set(back.vre_profiles) == set(spec.vre_profiles)
    for k in spec.vre_profiles:
        np.testing.assert_array_equal(back.vre_profiles[k], spec.vre_profiles[k])
    assert (back.nse_penalty, back.hour_weight) == (spec.nse_penalty, spec.hour_weight)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 1e5, allow_nan=False), min_size=24, max_size=24))
def test_demand_values_survive_exactly(tmp_path_factory, values):
    d = tmp_path_factory.mktemp("rt")
    spec = replace(toy_system(24), demand=np.array(values))
    write_inputs(spec, d)
    np.testing.assert_array_equal(load_inputs(d).spec.demand, np.array(values))


def test_fixed_caps_round_trip(tmp_path):
    p = write_fixed_caps(tmp_path / "caps.csv", {"a": 1.5, "battery": 20.0}, {"battery": 160.25})
    assert read_fixed_caps(p) == ({"a": 1.5, "battery": 20.0}, {"battery": 160.25})


# ---- number formatting -----------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.floats(-1e11, 1e11, allow_nan=False))
def test_table_numbers_parse_back_at_one_decimal(v):
    assert float(millions(v)) == pytest.approx(round(v / 1e6, 1), abs=1e-9)
    assert float(gigawatts(v)) == pytest.approx(round(v / 1e3, 1), abs=1e-9)
    assert "," not in millions(v) and not millions(v).startswith("-0.0")


# ---- reports -----------------------------------------------------------------

def test_empty_sweep_gives_header_only_tables(tmp_path):
    files = emit_report(SweepReport("B", [], {"input_hash": "x"}), tmp_path)
    names = {f.name for f in files}
    assert {"profit_delta.csv", "tsc_delta.csv", "summary.csv", "manifest.json", "results.json"} <= names
    rows = list(csv.reader(open(tmp_path / "profit_delta.csv")))
    assert len(rows) == 1 and len(rows[0]) == 18
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["provenance"]["input_hash"] == "x"
    assert set(man["files"]) == {f.name for f in files if f.name != "manifest.json"}


# ---- command line -----------------------------------------------------------

def test_validate_exit_zero(capsys):
    assert cli.main(["validate", str(TOY)]) == 0
    assert "10 resources" in capsys.readouterr().err


def test_validate_bad_input_exit_one(toy_copy, capsys):
    (toy_copy / "demand.csv").write_text("hour,load_mw\n1,10\n3,10\n")
    assert cli.main(["validate", str(toy_copy)]) == 1
    err = capsys.readouterr()
    assert "demand.csv" in err.err and err.out == ""


def test_unknown_flag_prints_usage(capsys):
    assert cli.main(["validate", str(TOY), "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()
    assert cli.main([]) == 1


def test_bad_combo_is_an_input_error(tmp_path, capsys):
    assert cli.main(["expand", str(TOY), "--flex", "P7", "--out", str(tmp_path)]) == 1
    assert "P7" in capsys.readouterr().err


@pytest.fixture(scope="module")
def stage_a_caps(tmp_path_factory):
    out = tmp_path_factory.mktemp("a")
    assert cli.main(["expand", str(TOY), "--no-ccs", "--out", str(out)]) == 0
    return out / "capacities.csv"


def test_expand_without_plant_writes_capacities(stage_a_caps):
    caps, _ = read_fixed_caps(stage_a_caps)
    assert "ccs" not in caps
    assert caps["nuclear"] >= 400.0 - 1e-6


def test_dispatch_parses_the_combo(stage_a_caps, tmp_path, capsys):
    assert cli.main(["dispatch", str(TOY), "--fixed-caps", str(stage_a_caps), "--flex", "P1+P2",
                     "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.split()
    assert str(tmp_path / "results.json") in printed
    bundle = json.loads((tmp_path / "results.json").read_text())
    cells = {tuple(c["combo"]): c for c in bundle["cells"]}
    assert set(cells) == {(), ("P1", "P2")}
    fx = flex_combo({"P1", "P2"})
    assert cells[("P1", "P2")]["flex"] == {k: getattr(fx, k) for k in cells[("P1", "P2")]["flex"]}
    assert bundle["provenance"]["source_hash"]


def test_dispatch_missing_capacity_is_input_error(tmp_path, capsys):
    p = write_fixed_caps(tmp_path / "caps.csv", {"wind": 100.0}, {})
    assert cli.main(["dispatch", str(TOY), "--fixed-caps", str(p), "--out", str(tmp_path / "o")]) == 1


def test_solver_failure_exit_two(monkeypatch, tmp_path, capsys):
    import ccsflex.workflow as wf

    monkeypatch.setattr(wf, "solve", lambda p, o=None: Solution("infeasible", np.nan, None))
    assert cli.main(["expand", str(TOY), "--out", str(tmp_path)]) == 2
    assert "tax200" in capsys.readouterr().err


@pytest.fixture(scope="module")
def sweep_b(tmp_path_factory):
    out = tmp_path_factory.mktemp("b")
    assert cli.main(["sweep", str(TOY), "--stage", "b", "--out", str(out)]) == 0
    return out


def test_sweep_b_emits_seventeen_column_tables(sweep_b):
    for sc in ("tax200", "ces90_credit85"):
        for name in (f"profit_delta_{sc}.csv", f"tsc_delta_{sc}.csv"):
            rows = list(csv.reader(open(sweep_b / name)))
            assert rows[0][0] == "improved"
            assert len(rows[0]) - 1 == 17
            assert [r[0] for r in rows[1:]] == ["P1", "P2", "P3", "P4", "P5"]
    assert (sweep_b / "dispatch" / "tax200__None.csv").exists()


def test_report_regenerates_identical_tables(sweep_b, tmp_path, capsys):
    copy = tmp_path / "copy"
    shutil.copytree(sweep_b, copy)
    for f in copy.glob("*_delta_*.csv"):
        f.unlink()
    assert cli.main(["report", str(copy)]) == 0
    for f in sweep_b.glob("*.csv"):
        assert (copy / f.name).read_bytes() == f.read_bytes()
    assert cli.main(["report", str(tmp_path / "nothing")]) == 1


def test_sweep_results_json_matches_tables(sweep_b):
    bundle = json.loads((sweep_b / "results.json").read_text())
    cells = {(c["scenario"], tuple(c["combo"])): c for c in bundle["cells"]}
    base = cells[("tax200", ())]["profit"]["operating_profit"]
    full = cells[("tax200", ("P1", "P2", "P3", "P4", "P5"))]["profit"]["operating_profit"]
    rows = list(csv.reader(open(sweep_b / "summary_tax200.csv")))
    together = [r for r in rows if r[0] == "all together"][0]
    assert float(together[2]) == pytest.approx(round((full - base) / 1e6, 1))


def test_console_script_runs():
    exe = shutil.which("ccsflex")
    cmd = [exe] if exe else [sys.executable, "-m", "ccsflex.cli"]
    res = subprocess.run(cmd + ["validate", str(TOY)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == ""
