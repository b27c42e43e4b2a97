import numpy as np

from so3tp.coupling import build_table
from so3tp.verify import CheckResult, block_error, check_closed_form, run_all


def test_block_error():
    c = np.array([1.0, -2.0])
    assert block_error(2 * c, 2.0, c) == 0
    assert block_error(np.array([0.0, 1e-12]), 0.0, c) == 1e-12


def test_check_result_records_failures():
    r = CheckResult("x", 1e-9)
    r.record((1, 1, 1), 1e-12)
    assert r.passed
    r.record((1, 1, 2), float("nan"))
    assert not r.passed and r.as_dict()["failures"][0]["triplet"] == [1, 1, 2]


def test_run_all_small():
    checks = run_all(2)
    assert all(c.passed for c in checks)
    assert {c.name for c in checks} >= {"parity_masks", "refinement_invariance"}


def test_flip_fails_only_flipped_triplet():
    res = check_closed_form(build_table(3), flip=(2, 1, 2))
    assert [f["triplet"] for f in res.failures] == [[2, 1, 2]]
