import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from specverify.cli import SEED_ENV, decision_surface, main, resolve_seed
from specverify.datasets import MNIST_FILES, write_idx_images, write_idx_labels
from specverify.network import init_mlp, mlp, save_model
from specverify.physics import CSV_HEADER


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--n", "400", "--out", str(d / "p.csv"), "--seed", "1"]) == 0
    assert main(["train", "--data", str(d / "p.csv"), "--loss", "l1", "--epochs", "2",
                 "--out", str(d / "m.json"), "--log", str(d / "log.csv")]) == 0
    return d


@pytest.fixture(scope="module")
def mnist_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("mnist")
    rng = np.random.default_rng(0)
    for img, lab in MNIST_FILES.values():
        write_idx_images(d / img, rng.integers(0, 256, (12, 784)))
        write_idx_labels(d / lab, rng.integers(0, 10, 12))
    save_model(init_mlp([784, 20, 10], rng), d / "m.json")
    return d


def test_simulate_output(workspace):
    lines = (workspace / "p.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 401
    assert (workspace / "log.csv").read_text().startswith("epoch,train_loss,test_metric")


def test_simulate_seed_env(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "7")
    main(["simulate", "--n", "5", "--out", str(tmp_path / "a.csv")])
    main(["simulate", "--n", "5", "--out", str(tmp_path / "b.csv"), "--seed", "7"])
    main(["simulate", "--n", "5", "--out", str(tmp_path / "c.csv"), "--seed", "8"])
    a, b, c = ((tmp_path / f"{k}.csv").read_text() for k in "abc")
    assert a == b != c


def test_resolve_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_seed(None) == 0 and resolve_seed(5) == 5
    monkeypatch.setenv(SEED_ENV, "0x10")
    assert resolve_seed(None) == 16


def test_bad_seed_env_is_usage_error(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "abc")
    assert main(["simulate", "--n", "5", "--out", str(tmp_path / "a.csv")]) == 2


def test_verify_energy_at_zero_radius(workspace, capsys):
    code = main(["verify", "--model", str(workspace / "m.json"), "--spec", "energy",
                 "--dataset", str(workspace / "p.csv"), "--input-index", "0", "--delta", "0"])
    out = capsys.readouterr().out
    assert "LP_MAX=" in out and "LP_ITERATIONS=" in out
    assert code in (0, 1)
    status = [l for l in out.splitlines() if l.startswith("STATUS=")][0]
    assert status.split("=")[1] in ("VERIFIED", "FALSIFIED", "UNKNOWN")
    assert (code == 1) == (status == "STATUS=FALSIFIED")


def test_verify_falsified_exit_code(workspace, tmp_path, capsys):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"kind": "linear", "c": [1.0, 0.0, 0.0], "d": -5.0}))
    net = mlp([np.eye(3) * 10.0], [np.zeros(3)])
    save_model(net, tmp_path / "id.json")
    args = ["--model", str(tmp_path / "id.json"), "--spec", str(spec),
            "--dataset", str(workspace / "p.csv"), "--split", "all", "--delta", "1.0"]
    code = main(["verify", *args, "--input-index", "0", "--dump-lp", str(tmp_path / "x.lp")])
    assert code == 1 and "FALSIFIED, f_max=" in capsys.readouterr().out
    assert (tmp_path / "x.lp").read_text().startswith("\\")
    assert main(["falsify", *args, "--input-index", "0", "--witness", str(tmp_path / "w.json")]) == 1
    w = json.loads((tmp_path / "w.json").read_text())
    assert w["value"] > 0 and len(w["inputs"]) == 1


def test_verify_verified_exit_code(workspace, tmp_path, capsys):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"kind": "linear", "c": [1.0, 0.0, 0.0], "d": -5.0}))
    save_model(mlp([np.eye(3)], [np.zeros(3)]), tmp_path / "id.json")
    code = main(["verify", "--model", str(tmp_path / "id.json"), "--spec", str(spec),
                 "--dataset", str(workspace / "p.csv"), "--input-index", "3", "--delta", "0.5"])
    assert code == 0 and "VERIFIED, lp_max=" in capsys.readouterr().out


def test_usage_errors(workspace, tmp_path):
    base = ["verify", "--model", str(workspace / "m.json"), "--spec", "energy",
            "--dataset", str(workspace / "p.csv"), "--delta", "0.1"]
    assert main([*base, "--input-index", "100000"]) == 2
    assert main(["verify", "--model", str(workspace / "m.json")]) == 2
    assert main(["sweep", "--model", str(workspace / "m.json"), "--spec", "energy",
                 "--dataset", str(workspace / "p.csv"), "--deltas", "a,b"]) == 2
    assert main(["nonsense"]) == 2


def test_runtime_errors(workspace, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["verify", "--model", str(bad), "--spec", "energy", "--dataset",
                 str(workspace / "p.csv"), "--input-index", "0", "--delta", "0.1"]) == 3
    assert main(["verify", "--model", str(tmp_path / "missing.json"), "--spec", "energy",
                 "--dataset", str(workspace / "p.csv"), "--input-index", "0", "--delta", "0.1"]) == 3


def test_sweep_rows(workspace, tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--model", str(workspace / "m.json"), "--spec", "energy",
                 "--dataset", str(workspace / "p.csv"), "--deltas", "0,0.01,0.05",
                 "--limit", "4", "--jobs", "1", "--pgd-restarts", "3", "--pgd-steps", "10",
                 "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["delta"]) for r in rows] == [0.0, 0.01, 0.05]
    for r in rows:
        assert 0 <= float(r["verification_bound"]) <= float(r["adversarial_bound"]) <= 1
        assert r["n_examples"] == "4" and r["wall_ms"] == "0"


def test_surface_on_images(mnist_dir, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["surface", "--model", str(mnist_dir / "m.json"), "--dataset", str(mnist_dir),
                 "--images", "0,1,2", "--grid", "5", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["s", "t", "label"] and len(rows) == 26
    assert main(["surface", "--model", str(mnist_dir / "m.json"), "--dataset", str(mnist_dir),
                 "--images", "0,1", "--out", str(out)]) == 2


def test_surface_corners_match_images(rng):
    net = init_mlp([4, 6, 3], rng)
    a, b, c = rng.uniform(0, 1, (3, 4))
    rows = decision_surface(net, a, b, c, grid_n=3, lo=0.0, hi=1.0)
    lab = {(s, t): k for s, t, k in rows}
    from specverify.network import forward
    assert lab[0.0, 0.0] == int(np.argmax(forward(net, a)))
    assert lab[1.0, 0.0] == int(np.argmax(forward(net, b)))
    assert lab[0.0, 1.0] == int(np.argmax(forward(net, c)))


def test_constant_network_single_label(rng):
    net = mlp([np.zeros((3, 4))], [np.array([0.0, 2.0, 1.0])])
    rows = decision_surface(net, *rng.uniform(0, 1, (3, 4)), grid_n=7)
    assert {k for _, _, k in rows} == {1}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "specverify", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "specverify" in res.stdout
