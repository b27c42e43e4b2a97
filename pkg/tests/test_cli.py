import csv
import json

import numpy as np
import pytest

from so3tp.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_coeffs_json(capsys):
    code, out, _ = run(capsys, "coeffs", "--lmax", "1")
    doc = json.loads(out)
    assert code == 0 and len(doc["records"]) == 5
    r = doc["records"][0]
    assert (r["l1"], r["l2"], r["l3"]) == (0, 0, 0)
    assert r["Gamma"] == pytest.approx(np.sqrt(4 * np.pi))


def test_coeffs_lmax_zero_and_round_trip(capsys, tmp_path):
    from so3tp.coupling import build_table, read_table
    code, out, _ = run(capsys, "coeffs", "--lmax", "0")
    recs = json.loads(out)["records"]
    assert code == 0 and len(recs) == 1
    assert recs[0]["G_tilde"] == pytest.approx(1 / np.sqrt(4 * np.pi), rel=1e-14)
    p = tmp_path / "t.json"
    assert main(["coeffs", "--lmax", "3", "-o", str(p)]) == 0
    assert np.array_equal(read_table(p).gamma, build_table(3).gamma)


def test_fit_norm_threads_do_not_change_result(capsys):
    outs = []
    for threads in ("1", "3"):
        code, out, _ = run(capsys, "fit-norm", "--lmax", "4", "--restarts", "3", "--threads", threads)
        outs.append(json.loads(out))
    assert outs[0] == outs[1]


def test_coeffs_csv_and_blocks(capsys, tmp_path):
    code, out, _ = run(capsys, "coeffs", "--lmax", "2", "--format", "csv")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and rows[0]["parity"] == "0"
    p = tmp_path / "t.json"
    assert main(["coeffs", "--lmax", "1", "--blocks", "-o", str(p)]) == 0
    assert len(json.loads(p.read_text())["records"][4]["cg_block"]) == 3


def test_coeffs_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["coeffs", "--lmax", "-1"])
    assert e.value.code == 2
    code, _, err = run(capsys, "coeffs", "--lmax", "2", "--quadrature", "design:/no/such/file")
    assert code == 2 and "error" in err


def test_verify_pass_and_negative_control(capsys):
    code, out, err = run(capsys, "verify", "--lmax", "3")
    assert code == 0 and json.loads(out)["passed"]
    assert "PASS" in err and "FAIL" not in err
    code, out, err = run(capsys, "verify", "--lmax", "3", "--flip-vtilde", "1", "1", "1")
    assert code == 1
    failing = [c for c in json.loads(out)["checks"] if not c["passed"]]
    assert [c["name"] for c in failing] == ["vtilde_closed_form_vs_quadrature"]


def test_verify_on_design(capsys, design_path):
    code, _, _ = run(capsys, "verify", "--lmax", "3", "--quadrature", f"design:{design_path}")
    assert code == 0


def test_tp_methods(capsys, tmp_path):
    p = tmp_path / "h.json"
    p.write_text("[0.5, -1, 2]")
    res = {}
    for m in ("cgtp", "gtp", "vstp", "combined"):
        code, out, _ = run(capsys, "tp", "--method", m, "--l1", "1", "--l2", "1", "--l3", "1",
                           "--h1", "[1, 2, 3]", "--h2", f"@{p}")
        assert code == 0
        res[m] = np.array(json.loads(out)["coeffs"])
    assert not np.any(np.abs(res["gtp"]) > 1e-14)
    assert np.allclose(res["combined"], res["vstp"], atol=1e-14)


def test_tp_bad_vector(capsys):
    code, _, _ = run(capsys, "tp", "--method", "cgtp", "--l1", "1", "--l2", "1", "--l3", "1",
                     "--h1", "[1, 2]", "--h2", "[1, 2, 3]")
    assert code == 2
    code, _, _ = run(capsys, "tp", "--method", "cgtp", "--l1", "1", "--l2", "1", "--l3", "1",
                     "--h1", "nope", "--h2", "[1, 2, 3]")
    assert code == 2


def test_fit_norm_with_sweep(capsys, tmp_path):
    sweep = tmp_path / "s.csv"
    code, out, _ = run(capsys, "fit-norm", "--target", "vtilde", "--lmax", "4", "--restarts", "2",
                       "--sweep-csv", str(sweep))
    doc = json.loads(out)
    assert code == 0 and doc["rank"] == 2 and doc["sigma_log"] < 0.05
    rows = list(csv.DictReader(sweep.read_text().splitlines()))
    assert len(rows) == 8 and {r["rank"] for r in rows} == {"1", "2"}


def test_bench_small(capsys):
    code, out, err = run(capsys, "bench", "--L", "2", "4", "--repeats", "1", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and len(doc["records"]) == 6
    assert set(doc["slopes"]) == {"cgtp_dense", "integral_gaunt", "integral_combined"}
    assert "slope" in err
