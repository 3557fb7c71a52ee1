import csv
import io as _io
import json

import numpy as np
import pytest

from helmfno import io
from helmfno.cli import main

SMALL = ["--grid", "24x24", "--pad", "20", "--nt", "400"]


def test_no_command_exits_two(capsys):
    assert main([]) == 2


def test_unknown_command_exits_two():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_bad_list_argument():
    with pytest.raises(SystemExit) as e:
        main(["build-dataset", "--family", "flat-A", "--count", "1", "--seed", "0", "--freqs", "a,b",
              "--out", "x"])
    assert e.value.code == 2


def test_runtime_error_exits_one(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(tmp_path)]) == 1


@pytest.fixture(scope="module")
def fault_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "fault"
    rc = main(["build-dataset", "--family", "fault-A", "--count", "8", "--sources", "2",
               "--freqs", "10,15", "--seed", "3", *SMALL, "--out", str(out)])
    assert rc == 0
    return out


def test_build_dataset_manifest(fault_dir):
    m = io.read_manifest(fault_dir)
    assert m["n_samples"] == 8 * 2 * 2
    assert m["arrays"]["labels"]["shape"] == [8, 2, 2, 2, 24, 24]
    assert m["recipe"]["family"]["kind"] == "fault-A"
    io.read_dataset(fault_dir)


def test_gen_velocity(tmp_path):
    assert main(["gen-velocity", "--family", "style-A", "--count", "2", "--seed", "1", "--grid", "30x30",
                 "--out", str(tmp_path)]) == 0
    ds = io.read_dataset(tmp_path)
    assert ds.velocities.shape == (2, 30, 30)
    assert ds.velocities.min() >= 1500 and ds.velocities.max() <= 4500


def test_simulate_and_helmholtz(tmp_path, capsys):
    out = tmp_path / "p.f32"
    assert main(["simulate", "--constant", "2000", "--grid", "20x20", "--source-x", "100",
                 "--source-z", "100", "--pad", "10", "--nt", "200", "--freqs", "10",
                 "--out", str(out)]) == 0
    p = np.fromfile(out, dtype="<f4").reshape(200, 20, 20)
    assert np.any(p) and (tmp_path / "p.f32.10Hz").exists()
    assert main(["helmholtz-solve", "--constant", "2000", "--grid", "20x20", "--source-x", "100",
                 "--source-z", "100", "--pad", "10", "--freq", "10", "--out",
                 str(tmp_path / "u.f32")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["residual"] <= 1e-8


def test_reconstruct_reports_small_error(capsys):
    assert main(["reconstruct", "--constant", "2000", "--grid", "20x20", "--source-x", "100",
                 "--source-z", "100", "--pad", "10", "--nt", "500", "--band", "11:20"]) == 0
    assert json.loads(capsys.readouterr().out)["relative_rms_vs_bandpass"] <= 1e-8


def test_train_eval_report(fault_dir, tmp_path, capsys):
    ck = tmp_path / "m.ckpt"
    assert main(["train", "--data", str(fault_dir), "--arch", "fno", "--width", "4", "--modes", "4",
                 "--epochs", "2", "--batch-size", "8", "--n-train", "6", "--seed", "0",
                 "--out", str(ck)]) == 0
    rep = json.loads((tmp_path / "m.ckpt.report.json").read_text())
    assert rep["results"]["final_test_mse"] > 0
    assert main(["eval", "--checkpoint", str(ck), "--data", str(fault_dir), "--models", "6:8",
                 "--out", str(tmp_path / "eval.json")]) == 0
    ev = json.loads((tmp_path / "eval.json").read_text())
    assert ev["results"]["mse"] == pytest.approx(rep["results"]["final_test_mse"], rel=1e-12)
    capsys.readouterr()
    assert main(["report", "--in", str(tmp_path)]) == 0
    rows = list(csv.DictReader(_io.StringIO(capsys.readouterr().out)))
    assert {r["experiment"] for r in rows} == {"train", "eval"}
    assert all(len(r["config_hash"]) == 12 for r in rows)


def test_bench_helmholtz(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--helmholtz-sizes", "20,30", "--reps", "1", "--pad", "5",
                 "--out", str(out)]) == 0
    recs = json.loads(out.read_text())["results"]["records"]
    assert len(recs) == 2 and all(r["per_instance"] > 0 for r in recs)
    assert main(["bench"]) == 1
