import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from mv_reinsure.cli import main
from mv_reinsure.compare import CramerLundbergSpec, cl_value_excess
from mv_reinsure.simulate import read_samples


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out.read_text()


def parse_csv(text):
    meta_line, body = text.split("\n", 1)
    assert meta_line.startswith("# ")
    return json.loads(meta_line[2:]), list(csv.DictReader(io.StringIO(body)))


def test_eval_time_column(tmp_path):
    code, text = run(["eval", "--config", "builtin:example1", "--times", ",".join(map(str, range(10)))], tmp_path)
    assert code == 0
    _, rows = parse_csv(text)
    m = [float(r["m_star"]) for r in rows]
    assert all(a < b for a, b in zip(m, m[1:]))
    assert m[-1] == 0.6


def test_eval_rate_sweep(tmp_path):
    # mu = 0.10 caps the admissible rates below 0.10
    rates = ",".join(f"{v / 100:.2f}" for v in range(1, 10))
    code, text = run(["eval", "--config", "builtin:example1", "--times", "4", "--vary", f"r={rates}"], tmp_path)
    assert code == 0
    meta, rows = parse_csv(text)
    assert meta["command"]["vary"]["key"] == "r"
    m = [float(r["m_star"]) for r in rows]
    pi = [float(r["pi_star"]) for r in rows]
    assert len(m) == 9
    assert all(a > b for a, b in zip(m, m[1:]))
    assert all(a > b for a, b in zip(pi, pi[1:]))


def test_table_columns(tmp_path, ex2):
    code, text = run(["table", "--config", "builtin:example2", "--times", "0,1.5,3", "--surplus", "0,4"], tmp_path)
    assert code == 0
    _, rows = parse_csv(text)
    spec = CramerLundbergSpec.from_model(ex2.params, ex2.measure)
    for r in rows:
        t, x, B, b, V, g, var = (float(r[k]) for k in ("t", "x", "B", "b", "V", "g", "Var"))
        if t == 3.0:
            assert B == b == 0.0 and V == g == x
        assert var == pytest.approx(2 / ex2.params.gamma * (g - V), rel=1e-10, abs=1e-11)
    V00 = float(rows[0]["V"])
    assert V00 == pytest.approx(cl_value_excess(0.0, 0.0, spec)[0], abs=1e-9)


def test_table_tabulated_close_to_direct(tmp_path):
    _, direct = run(["table", "--config", "builtin:example1"], tmp_path, "a")
    _, tab = run(["table", "--config", "builtin:example1", "--tabulate"], tmp_path, "b")
    for r1, r2 in zip(parse_csv(direct)[1], parse_csv(tab)[1]):
        assert float(r1["V"]) == pytest.approx(float(r2["V"]), abs=1e-8)


def test_verify_example1(tmp_path):
    code, text = run(["verify", "--config", "builtin:example1"], tmp_path)
    assert code == 0
    doc = json.loads(text)
    assert doc["passed"] and len(doc["rows"]) == 15
    assert all(r["ehjb1_residual"] < 1e-7 for r in doc["rows"])


def test_compare_example2(tmp_path):
    code, text = run(["compare", "--config", "builtin:example2"], tmp_path)
    assert code == 0
    meta, rows = parse_csv(text)
    assert meta["V2_reconstructed"] is True
    assert all(float(r["V1"]) >= float(r["V2"]) for r in rows)


def test_simulate_is_byte_identical(tmp_path, monkeypatch):
    args = ["simulate", "--config", "builtin:example2", "--paths", "10", "--seed", "3"]
    _, first = run(args, tmp_path, "a")
    monkeypatch.setenv("MV_REINSURE_THREADS", "4")
    _, second = run(args, tmp_path, "b")
    assert first == second
    assert json.loads(first)["rows"][0]["n_paths"] == 10


def test_simulate_dump(tmp_path):
    dump = tmp_path / "x.csv"
    code, text = run(["simulate", "--config", "builtin:example2", "--paths", "33",
                      "--dump", str(dump), "--dump-format", "csv"], tmp_path)
    assert code == 0
    samples = read_samples(dump, "csv")
    assert samples.size == 33
    assert json.loads(text)["rows"][0]["mean"] == pytest.approx(samples.mean(), rel=1e-12)


@pytest.mark.parametrize("args", [
    ["eval", "--times", "0,3", "--vary", "gamma=0.5,1,2"],
    ["table", "--surplus", "0,2"],
    ["compare", "--times", "0,1"],
    ["verify", "--times", "0,3"],
    ["simulate", "--paths", "50", "--strategy", "deductible=1.5"],
    ["perturb", "--paths", "200", "--eps", "0.5"],
])
def test_embedded_config_reproduces_output(tmp_path, args):
    _, first = run([*args, "--config", "builtin:example2"], tmp_path, "a")
    if first.startswith("#"):
        meta = json.loads(first.split("\n", 1)[0][2:])
    else:
        meta = json.loads(first)
    cfg = tmp_path / "embedded.json"
    cfg.write_text(json.dumps(meta["params"]))
    _, second = run([*args, "--config", str(cfg)], tmp_path, "b")
    assert first == second


def test_json_and_csv_formats(tmp_path):
    _, text = run(["eval", "--config", "builtin:example1", "--format", "json"], tmp_path)
    doc = json.loads(text)
    assert set(doc) == {"params", "command", "rows"}
    _, text = run(["verify", "--config", "builtin:example1", "--times", "9", "--format", "csv"], tmp_path)
    _, rows = parse_csv(text)
    assert all(r["passed"] == "true" for r in rows)


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"market": {"r": 0.05, "mu": 0.1, "sigma2": 0.3, "rho": 1.0}}))
    assert main(["eval", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "market.rho" in err and "insurance" in err
    assert main(["eval", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["eval", "--config", "builtin:example1", "--vary", "r=0.05,0.1"]) == 2
    assert main(["compare", "--config", "builtin:example1"]) == 2
    assert main(["simulate", "--config", "builtin:example2", "--strategy", "nope"]) == 2


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["eval", "--config", "builtin:example1", "--vary", "kappa=1,2"])
    assert e.value.code == 2


def test_failed_equilibrium_check_exits_1(tmp_path):
    # 200 paths cannot resolve the small investment ratios at 3 SE
    code, text = run(["perturb", "--config", "builtin:example2", "--paths", "200", "--eps", "0.1"], tmp_path)
    assert code == 1
    assert json.loads(text)["passed"] is False


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mv_reinsure", "eval", "--config", "builtin:example1",
                          "--times", "9"], capture_output=True, text=True, check=True)
    assert res.stdout.splitlines()[2].startswith("9,0.6,")
