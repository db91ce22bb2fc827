import csv
import io
import math

import pytest

from fdcellfree.cli import main
from fdcellfree.config import SystemConfig, save_config
from fdcellfree.harness import ExperimentSpec, run_experiment


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_spec_defaults_and_validation():
    s = ExperimentSpec("wsee_vs_bits")
    assert s.sweep == (1, 2, 3, 4) and s.cases == (100e6, 10e6) and s.allocators == ("OPA",)
    with pytest.raises(ValueError):
        ExperimentSpec("nope")


def test_same_seed_same_csv(tmp_path):
    cfg = SystemConfig(drops=2, mc_trials=200)
    spec = ExperimentSpec("se_vs_power", sweep=(10.0,))
    a = run_experiment(spec, cfg).to_csv()
    b = run_experiment(spec, cfg).to_csv()
    assert a == b
    c = run_experiment(spec, cfg.replace(seed=1)).to_csv()
    assert a != c


def test_parallel_matches_serial():
    cfg = SystemConfig(drops=3)
    serial = run_experiment(ExperimentSpec("wsee_vs_power", sweep=(20.0,), allocators=("EPA1", "RPA")), cfg)
    par = run_experiment(ExperimentSpec("wsee_vs_power", sweep=(20.0,), allocators=("EPA1", "RPA"), workers=3), cfg)
    assert serial.to_csv() == par.to_csv()


def test_stderr_shrinks_with_drops():
    spec = ExperimentSpec("wsee_vs_power", sweep=(30.0,), allocators=("EPA1",))
    err = {}
    for n in (20, 80):
        t = run_experiment(spec, SystemConfig(drops=n))
        err[n] = next(r["wsee"] for r in t.aggregate if r["drop"] == "stderr")
    assert 1.4 < err[20] / err[80] < 2.8  # 1/sqrt(drops) predicts 2


def test_infeasible_drop_is_a_flagged_row():
    cfg = SystemConfig(drops=1, qos_dl=5.0, qos_ul=5.0)
    t = run_experiment(ExperimentSpec("wsee_vs_power", sweep=(30.0,), allocators=("OPA", "EPA1")), cfg)
    opa = [r for r in t.rows if r["allocator"] == "OPA"][0]
    assert opa["flag"].startswith("qos_infeasible") and math.isnan(opa["wsee"])
    assert not t.ok
    mean = [r for r in t.aggregate if r["allocator"] == "OPA" and r["drop"] == "mean"][0]
    assert "excluded" in mean["flag"]


def test_csv_layout(tmp_path):
    out = tmp_path / "bits.csv"
    cfg = SystemConfig(drops=1)
    run_experiment(ExperimentSpec("wsee_vs_bits", sweep=(2,), cases=(100e6,), out=str(out)), cfg)
    rows = _rows(out.read_text())
    assert list(rows[0]) == ["c_fh", "nu", "drop", "allocator", "wsee", "sum_se", "converged", "flag"]
    assert [r["drop"] for r in rows] == ["0", "mean", "stderr"]


def test_cli_success_and_config(tmp_path, capsys):
    cfgp = tmp_path / "c.ini"
    save_config(SystemConfig(drops=1, mc_trials=100), cfgp)
    out = tmp_path / "se.csv"
    code = main(["se-vs-power", "--config", str(cfgp), "--sweep", "0", "--out", str(out),
                 "--set", "geometry.M=4", "--set", "unity_fading=true"])
    assert code == 0
    rows = _rows(out.read_text())
    assert {r["case"] for r in rows} == {"perfect", "limited"}


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["selftest-solver", "--set", "geometry.K_d=50"]) == 2
    assert main(["selftest-solver", "--set", "nonsense=1"]) == 2
    assert main(["selftest-solver", "--config", str(tmp_path / "missing.ini")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_invariant_failure_exit_code(capsys):
    code = main(["wsee-vs-power", "--drops", "1", "--sweep", "30", "--allocators", "OPA", "EPA1",
                 "--set", "qos_dl=5", "--set", "qos_ul=5"])
    assert code == 1
    assert "FAIL OPA QoS-feasible" in capsys.readouterr().err


def test_cli_selftest(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["selftest-solver", "--count", "4", "--out", str(out)]) == 0
    assert len(_rows(out.read_text())) == 4


def test_sweep_points_share_the_drop():
    # rows for one capacity must not depend on which other capacities ran first
    cfg = SystemConfig(drops=2)
    both = run_experiment(ExperimentSpec("wsee_vs_bits", sweep=(1, 2), cases=(100e6, 10e6),
                                         allocators=("EPA1", "RPA")), cfg)
    alone = run_experiment(ExperimentSpec("wsee_vs_bits", sweep=(1, 2), cases=(10e6,),
                                          allocators=("EPA1", "RPA")), cfg)
    pick = lambda t: [(r["nu"], r["drop"], r["allocator"], r["wsee"]) for r in t.rows if r["c_fh"] == 10e6]
    assert pick(both) == pick(alone)
