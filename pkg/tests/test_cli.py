import json

import pytest

from csiloc.cli import main

SCENARIO = ["--rows", "2", "--cols", "2", "--n", "1", "--m", "2", "--f", "10",
            "--separation", "8", "--sigma", "1"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    train = root / "train.csv"
    test = root / "test.csv"
    assert main(["synth", *SCENARIO, "--packets", "300", "--out", str(train)]) == 0
    assert main(["synth", *SCENARIO, "--packets", "120", "--data-seed", "5", "--out", str(test)]) == 0
    model = root / "model.json"
    assert main(["train", str(train), "--out", str(model), "--w", "40", "--d", "20", "--g", "15",
                 "--k", "1", "--seed", "1"]) == 0
    return root, train, test, model


def test_synth_writes_sidecar(workspace):
    root, train, _, _ = workspace
    header = train.read_text().splitlines()[0]
    assert header == "n=1,m=2,f=10"
    coords = json.loads((root / "train.csv.coords.json").read_text())
    assert coords["locations"]["L0101"] == [1.0, 1.0]


def test_locate_writes_records(workspace, capsys):
    root, _, test, model = workspace
    out = root / "est.csv"
    assert main(["locate", str(model), str(test), "--k", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "window_index,discrete_id,x,y,latency_ms,top_k"
    assert len(lines) == 1 + 4 * 3
    first = lines[1].split(",")
    assert first[0] == "0" and first[1].startswith("L")


def test_evaluate_prints_json(workspace, capsys):
    _, _, test, model = workspace
    assert main(["evaluate", str(model), str(test), "--k", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["median_error_m"] == 0.0
    assert report["n"] == 12


def test_train_with_links_and_f(workspace):
    root, train, _, _ = workspace
    model = root / "m2.json"
    assert main(["train", str(train), "--out", str(model), "--w", "40", "--d", "10", "--g", "5",
                 "--f", "5", "--links", "0-1"]) == 0
    cfg = json.loads(model.read_text())["config"]
    assert cfg["links"] == ["0-1"] and cfg["subcarriers"] == [0, 2, 4, 7, 9]


def test_midpoint_synth(tmp_path):
    out = tmp_path / "mid.csv"
    assert main(["synth", *SCENARIO, "--packets", "10", "--points", "midpoints", "--out", str(out)]) == 0
    coords = json.loads((tmp_path / "mid.csv.coords.json").read_text())
    assert coords["locations"] == {"M000": [0.5, 0.5]}


def test_sweep_table(capsys):
    assert main(["sweep", *SCENARIO, "--param", "k", "--values", "1,2", "--w", "40", "--d", "10",
                 "--g", "5", "--train-windows", "4", "--test-windows", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["k", "median_m", "std_m", "reports"]
    assert len(lines) == 3


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["locate", str(tmp_path / "missing.json"), str(tmp_path / "none.csv")]) == 2
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("n=1,m=1,f=2\n0.0,0,0,A,1.0\n")
    (tmp_path / "bad.csv.coords.json").write_text('{"locations": {}, "grid": []}')
    assert main(["train", str(bad), "--out", str(tmp_path / "m.json")]) == 2
    assert main(["sweep", "--param", "k", "--values", "x"]) == 2
