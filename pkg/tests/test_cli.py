import json

import pytest

from kone import measure as mc
from kone.cli import build_config, main, make_parser
from kone.config import RunConfig
from kone.reports import loads


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_seed_is_required(capsys):
    with pytest.raises(SystemExit) as info:
        main(["sample-crm", "--n", "2"])
    assert info.value.code == 2
    assert "--seed" in capsys.readouterr().err


def test_sample_crm_is_reproducible(capsys, tmp_path):
    code, a, _ = run(capsys, "sample-crm", "--seed", "3", "--n", "4", "--window", "0..1,0..1", "--s-min", "0.01")
    assert code == 0
    _, b, _ = run(capsys, "sample-crm", "--seed", "3", "--n", "4", "--window", "0..1,0..1", "--s-min", "0.01")
    assert a == b
    ms = mc.loads(a)
    assert len(ms) == 4 and all(m.window.hi == (1.0, 1.0) for m in ms)


def test_sample_gibbs_writes_diagnostics_to_stderr(capsys):
    code, out, err = run(capsys, "sample-gibbs", "--seed", "1", "--n", "3", "--window", "0..2,0..2",
                         "--burnin", "500", "--thin", "50")
    assert code == 0 and len(mc.loads(out)) == 3
    assert "acceptance" in json.loads(err.strip().splitlines()[-1])


def test_simulate_csv(capsys):
    code, out, err = run(capsys, "simulate", "--seed", "2", "--window", "0..2,0..2", "--burnin", "500",
                         "--T", "0.01", "--dt", "0.001", "--observables", "mass,count,F:sin")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "t,mass,count,F:sin" and len(lines) == 12


def test_check_c2_exit_codes(capsys):
    code, out, _ = run(capsys, "check-c2", "--potential", "bump:R=1,height=1,delta=0.5", "--d", "2")
    rec = json.loads(out)
    assert code == 0 and rec["pass"] and abs(rec["epsilon"] - 37.69911184307752) < 1e-12
    code, out, _ = run(capsys, "check-c2", "--potential", "ring:R=1,height=5,depth=0.5,r_well=0.8,delta=0.3")
    assert code == 1 and not json.loads(out)["pass"]


def test_metric_distance(capsys, tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("# d=2 window=-1..1,-1..1\n1 0 0\n")
    b.write_text("# d=2 window=-1..1,-1..1\n")
    code, out, _ = run(capsys, "metric-distance", str(a), str(b), "--k", "1")
    rec = json.loads(out)
    assert code == 0 and rec["d_k"] == 2.0 and rec["d"] == pytest.approx(rec["d_V"] + rec["d_f"])


def test_errors_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "metric-distance", str(tmp_path / "missing"), str(tmp_path / "missing"))
    assert code == 2 and err.startswith("kone: error:")
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nseed = 1\nchecks = nope\n")
    code, _, err = run(capsys, "run-suite", "--config", str(bad))
    assert code == 2 and "bad.ini:3:" in err


def test_empty_check_list_passes(capsys, tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("[run]\nchecks =\n")
    code, out, _ = run(capsys, "run-suite", "--config", str(cfg))
    assert code == 0 and out == ""


def test_stochastic_suite_without_seed_fails(capsys, tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text("[run]\nchecks = laplace\n")
    code, _, err = run(capsys, "run-suite", "--config", str(cfg))
    assert code == 2 and "seed" in err


def test_deterministic_checks_need_no_seed(capsys, tmp_path):
    cfg = tmp_path / "c2.ini"
    cfg.write_text("[run]\nchecks = c2\n")
    code, out, _ = run(capsys, "run-suite", "--config", str(cfg))
    recs = loads(out)
    assert code == 0 and [r["name"] for r in recs] == ["epsilon_d2_R1_delta05", "bump"]
    assert all(r["seed"] is None for r in recs)


def test_arguments_round_trip_into_config():
    args = make_parser().parse_args(["verify-ibp", "--seed", "5", "--measure", "gibbs", "--n", "20",
                                     "--window", "0..3,0..3", "--potential", "ring:R=1,height=200,delta=0.3",
                                     "--dual"])
    cfg = build_config(args, ["ibp", "dual"])
    assert cfg["measure"]["kind"] == "gibbs" and cfg["sampling"]["n"] == 20
    assert cfg["potential"]["kind"] == "ring" and cfg["potential"]["height"] == 200.0
    assert RunConfig.parse(cfg.dumps()).values == cfg.values


def test_suite_report_is_byte_identical_across_runs(capsys, tmp_path):
    cfg = tmp_path / "l.ini"
    cfg.write_text("[run]\nseed = 8\nchecks = laplace, c2\n[sampling]\nn = 300\n")
    _, a, _ = run(capsys, "run-suite", "--config", str(cfg))
    _, b, _ = run(capsys, "run-suite", "--config", str(cfg))
    assert a == b
    recs = loads(a)
    assert [r["check"] for r in recs] == ["laplace", "c2", "c2"]
    assert all(r["config"] == RunConfig.load(cfg).to_dict() for r in recs)


@pytest.mark.slow
def test_fast_suite(capsys):
    code, out, _ = run(capsys, "run-suite", "--fast", "--seed", "11")
    recs = loads(out)
    assert code == 0
    assert {r["check"] for r in recs} == {"mecke", "mecke_quadrature", "ibp"}
    for r in recs:
        assert set(r) == {"check", "name", "lhs", "rhs", "se", "tolerance", "pass", "seed", "config_hash",
                          "config", "extra"}
        assert r["seed"] == 11
