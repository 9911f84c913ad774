import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from robust_mcbf import solver as cs
from robust_mcbf.cli import main
from robust_mcbf.formats import load_scenario
from robust_mcbf.problems import build_design

ROOT = Path(__file__).resolve().parents[1]
SINGLE = ROOT / "configs" / "single_cell.json"
DEFAULT = ROOT / "configs" / "default.ini"


def write(path, text):
    path.write_text(text)
    return path


SMALL = """
[experiment]
gamma_grid_db = 9
num_channel_draws = 4
num_error_draws = 50
methods = RobustMcbf, NominalMcbf
randomization_trials = 10
extraction_error_draws = 100
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = write(tmp / "small.ini", SMALL)
    out = tmp / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def test_run_writes_outputs(small_run):
    cfg, out = small_run
    assert sorted(p.name for p in out.iterdir()) == [
        "aggregate.csv", "config.ini", "manifest.json", "trials.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_path"] == str(cfg)
    exp = manifest["config"]["experiment"]
    # defaults that the file left out are echoed too
    assert exp["base_seed"] == 0 and exp["num_error_draws"] == 50
    assert manifest["config"]["scenario"]["error_radius"] == 0.1
    assert manifest["outputs"] == sorted(["aggregate.csv", "config.ini", "manifest.json",
                                          "trials.csv"])
    assert {"robust_mcbf", "numpy", "scipy", "python"} <= set(manifest["versions"])
    assert manifest["started"] <= manifest["finished"]


def test_run_robust_beats_target_nominal_misses(small_run):
    _, out = small_run
    rows = {r["method"]: r for r in csv.DictReader(open(out / "aggregate.csv"))}
    robust, nominal = rows["RobustMcbf"], rows["NominalMcbf"]
    assert int(robust["all_feasible"]) > 0
    assert float(robust["avg_min_sinr_db"]) >= 9.0 - 1e-4
    assert float(nominal["avg_min_sinr_db"]) < 9.0


def test_rerun_from_echoed_config_is_bitwise_identical(small_run, tmp_path):
    _, out = small_run
    again = tmp_path / "again"
    assert main(["run", "--config", str(out / "config.ini"), "--out", str(again)]) == 0
    assert (again / "trials.csv").read_bytes() == (out / "trials.csv").read_bytes()
    assert (again / "aggregate.csv").read_bytes() == (out / "aggregate.csv").read_bytes()


def test_run_errors_have_distinct_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 3
    assert "not found" in capsys.readouterr().err
    bad = write(tmp_path / "bad.ini", "[experiment]\nnum_channel_draws = 0\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--config", str(write(tmp_path / "e.ini", ""))]) == 2
    blocker = write(tmp_path / "file", "")
    ok = write(tmp_path / "ok.ini", SMALL)
    assert main(["run", "--config", str(ok), "--out", str(blocker / "sub")]) == 3
    assert "not writable" in capsys.readouterr().err
    assert main(["run", "--config", str(ok), "--threads", "0"]) == 2


def _solve(tmp_path, scenario, name="sol.json"):
    out = tmp_path / name
    code = main(["solve", "--scenario", str(scenario), "--out", str(out)])
    return code, json.loads(out.read_text())


def test_solve_shipped_example(tmp_path):
    code, sol = _solve(tmp_path, SINGLE)
    assert code == 0 and sol["status"] == "optimal"
    assert sol["objective_watts"] == pytest.approx(1 / 0.81, rel=1e-4)
    assert sol["objective_watts"] == pytest.approx(1.2346, abs=1e-4)
    assert sol["extraction"]["verification"] == "rank-one"
    assert len(sol["beamformers"][0][0]) == 3


def _variant(tmp_path, **changes):
    d = json.loads(SINGLE.read_text())
    d.update(changes)
    return write(tmp_path / "variant.json", json.dumps(d))


def test_solve_variants(tmp_path):
    code, sol = _solve(tmp_path, _variant(tmp_path, error_radius=0.0))
    assert code == 0 and sol["objective_watts"] == pytest.approx(1.0, rel=1e-6)
    code, sol = _solve(tmp_path, _variant(tmp_path, sinr_targets=[1e9]))
    assert code == 0 and sol["status"] == "primal-infeasible"
    assert "beamformers" not in sol


def test_solve_malformed_input(tmp_path):
    bad = write(tmp_path / "bad.json", "{not json")
    assert main(["solve", "--scenario", str(bad)]) == 2
    assert main(["solve", "--scenario", str(tmp_path / "none.json")]) == 3


def test_verify_robust_and_nominal(tmp_path, capsys):
    _, _ = _solve(tmp_path, SINGLE, "robust.json")
    code = main(["verify", "--solution", str(tmp_path / "robust.json"),
                 "--scenario", str(SINGLE), "--samples", "500", "--out",
                 str(tmp_path / "r.json")])
    assert code == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["all_pass"] and report["tolerance_db"] == 1e-4

    nominal = _variant(tmp_path, method="NominalMcbf")
    _solve(tmp_path, nominal, "nominal.json")
    capsys.readouterr()
    code = main(["verify", "--solution", str(tmp_path / "nominal.json"),
                 "--scenario", str(SINGLE), "--samples", "500"])
    assert code == 0
    assert "some users fail" in capsys.readouterr().out


def test_verify_single_sample_is_reproducible(tmp_path):
    _solve(tmp_path, SINGLE, "robust.json")
    outs = []
    for name in ("a.json", "b.json"):
        assert main(["verify", "--solution", str(tmp_path / "robust.json"),
                     "--scenario", str(SINGLE), "--samples", "1", "--seed", "5",
                     "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_verify_dimension_mismatch(tmp_path):
    _solve(tmp_path, SINGLE, "robust.json")
    other = _variant(tmp_path, channels=[[[[[1, 0], [0, 0]]]]])
    assert main(["verify", "--solution", str(tmp_path / "robust.json"),
                 "--scenario", str(other)]) == 2


def test_dump_conic_round_trip(tmp_path):
    out = tmp_path / "p.txt"
    assert main(["dump-conic", "--scenario", str(SINGLE), "--out", str(out)]) == 0
    with open(out) as fh:
        loaded = cs.load_problem(fh)
    sc = load_scenario(SINGLE)
    built = build_design(sc.method, sc.channels, sc.system)
    assert (loaded.A != built.A).nnz == 0
    assert list(loaded.b) == list(built.b) and list(loaded.c) == list(built.c)
    a, b = cs.solve(loaded), cs.solve(built)
    assert a.status == b.status == "optimal"


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "robust_mcbf.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("run", "solve", "verify", "dump-conic"):
        assert cmd in res.stdout


def test_default_config_parses():
    from robust_mcbf.formats import load_config
    cfg = load_config(DEFAULT)
    assert cfg.num_channel_draws == 200 and cfg.gamma_grid_db == (1, 3, 5, 7, 9, 11)
    assert len(cfg.methods) == 4
