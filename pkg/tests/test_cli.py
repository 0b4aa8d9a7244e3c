import csv
import json

import pytest

from eastwalk.cli import COLUMNS, ResultRecord, RunConfig, ValidationError, main, parse_config, write_results


def test_eps_rejected(capsys):
    assert main(["simulate", "--eps", "0.7"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["key"] == "eps" and "[-1/2, 1/2]" in err["message"]


def test_rho_rejected():
    with pytest.raises(ValidationError) as e:
        parse_config(["simulate", "--rho", "0"])
    assert e.value.key == "rho"


def test_flag_overrides_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"replicas": 30, "rho": 0.4}))
    cfg = parse_config(["simulate", "--config", str(p), "--replicas", "50"])
    assert cfg.replicas == 50 and cfg.rho == 0.4


def test_unknown_key_rejected(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"replica": 30}))
    assert main(["simulate", "--config", str(p)]) == 2
    assert json.loads(capsys.readouterr().err)["key"] == "replica"


def test_command_specific_validation():
    with pytest.raises(ValidationError):
        parse_config(["kappa", "--rho", "0.3"])
    with pytest.raises(ValidationError):
        parse_config(["exact", "--L", "20"])
    with pytest.raises(ValidationError):
        parse_config(["profile", "--L", "16", "--window", "5"])


def test_empty_results_header_only(tmp_path):
    path = write_results([], tmp_path / "e.csv")
    assert path.read_text() == ",".join(COLUMNS) + "\n"


def test_float_format(tmp_path):
    r = ResultRecord("x", "east", 0.1, None, 8, "ring", 1.0, 20, 0, value=1 / 3)
    text = write_results([r], tmp_path / "r.csv").read_text()
    assert "0.33333333333333331" in text and ",0.10000000000000001," in text


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_isf_zero_and_reproducible(tmp_path):
    args = ["simulate", "--kind", "isf", "--rho", "0.5", "--eps", "0.2", "--L", "32", "--horizon", "200",
            "--replicas", "20", "--burn-in", "10", "--seed", "5", "--workers", "1"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    a, b = _rows(tmp_path / "a.csv"), _rows(tmp_path / "b.csv")
    strip = lambda rows: [{k: v for k, v in r.items() if k not in ("runtime_s", "version")} for r in rows]
    assert strip(a) == strip(b)
    assert abs(float(a[0]["value"])) < 3 * float(a[0]["se"])


def test_workers_do_not_change_estimates(tmp_path):
    base = ["simulate", "--L", "32", "--horizon", "100", "--replicas", "20", "--burn-in", "5", "--seed", "2"]
    main(base + ["--workers", "1", "--out", str(tmp_path / "a.csv")])
    main(base + ["--workers", "2", "--out", str(tmp_path / "b.csv")])
    assert _rows(tmp_path / "a.csv")[0]["value"] == _rows(tmp_path / "b.csv")[0]["value"]


def test_profile_rows_and_svg(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["profile", "--L", "32", "--window", "3", "--horizon", "100", "--replicas", "20",
                 "--burn-in", "5", "--workers", "1", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [int(r["param1"]) for r in rows] == list(range(-3, 4))
    assert (tmp_path / "p.svg").read_text().startswith("<svg")


def test_exact_suite_exit_zero(tmp_path):
    out = tmp_path / "x.csv"
    assert main(["exact", "--out", str(out)]) == 0
    assert all(r["param2"] == "1" for r in _rows(out))


def test_series_check(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["series-check", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 8 and rows[-1]["command"] == "series-check:remainder"


def test_figure3_small(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["figure3", "--L", "32", "--horizon", "100", "--replicas", "20", "--eps-grid=-0.2,0,0.2",
                 "--burn-in", "5", "--workers", "1", "--out", str(out)]) == 0
    assert len(_rows(out)) == 3 and (tmp_path / "f.svg").exists()


def test_u_survival_and_criterion(tmp_path):
    assert main(["u-survival", "--replicas", "40", "--s-grid", "0,1,2", "--workers", "1",
                 "--out", str(tmp_path / "u.csv")]) == 0
    rows = _rows(tmp_path / "u.csv")
    assert float(rows[0]["value"]) == -0.25
    assert main(["criterion", "--replicas", "40", "--t-grid", "0.5", "--y-grid", "1", "--workers", "1",
                 "--out", str(tmp_path / "c.csv")]) == 0
    assert {r["command"] for r in _rows(tmp_path / "c.csv")} == {"criterion", "orientation", "two-point"}


def test_front_and_kappa(tmp_path):
    assert main(["front", "--rho-grid", "0.5", "--horizon", "30", "--replicas", "20", "--L", "512",
                 "--workers", "1", "--out", str(tmp_path / "f.csv")]) == 0
    assert len(_rows(tmp_path / "f.csv")) == 2
    assert main(["kappa", "--L", "128", "--inner-horizon", "5", "--outer-samples", "20", "--inner-pairs", "1",
                 "--workers", "1", "--out", str(tmp_path / "k.csv")]) == 0


def test_runtime_error_exit_code(tmp_path, capsys):
    # an unwritable output path is a runtime failure
    bad = tmp_path / "file"
    bad.write_text("x")
    assert main(["exact", "--out", str(bad / "sub" / "x.csv")]) == 3
    assert json.loads(capsys.readouterr().err)["code"] == 3
