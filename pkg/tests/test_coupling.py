import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import so3tp.coupling as coupling
from oracles import lebedev, real_harmonics, sympy_cg
from so3tp.coupling import (InconsistentRatio, admissible_triplets, build_table,
                            cross_integral_block, dumps_table, extract_gtilde, extract_vtilde,
                            gaunt_integral_block, read_table, write_table)
from so3tp.quadrature import gauss_product_grid
from so3tp.wigner import Triplet, cg_real


def test_admissible_triplets_small():
    assert [tuple(t) for t in admissible_triplets(1)] == [
        (0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)]
    assert admissible_triplets(0) == [Triplet(0, 0, 0)]


def test_admissible_count_matches_brute_force():
    L = 6
    brute = [(a, b, c) for a in range(L + 1) for b in range(L + 1) for c in range(L + 1)
             if abs(a - b) <= c <= a + b]
    assert [tuple(t) for t in admissible_triplets(L)] == brute


def test_extract_000():
    assert extract_gtilde((0, 0, 0)) == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-13)
    assert extract_vtilde((0, 0, 0)) == 0.0


def test_extract_111_is_purely_antisymmetric():
    assert extract_gtilde((1, 1, 1)) == 0.0
    assert abs(extract_vtilde((1, 1, 1))) > 0.1


@pytest.mark.parametrize("t", [(1, 1, 2), (2, 2, 2), (3, 2, 1), (4, 3, 5)])
def test_gtilde_from_m_zero_gaunt(t):
    l1, l2, l3 = t
    # G follows from the m = 0 Gaunt coefficient and the standard closed form
    c0 = sympy_cg(l1, 0, l2, 0, l3, 0)
    ref = math.sqrt((2 * l1 + 1) * (2 * l2 + 1) / (4 * math.pi * (2 * l3 + 1))) * abs(c0)
    assert extract_gtilde(t) == pytest.approx(ref, rel=1e-12)
    assert extract_gtilde(t) > 0


@pytest.mark.parametrize("t", [(1, 1, 2), (2, 1, 2), (3, 3, 3), (2, 3, 4)])
def test_gaunt_block_against_lebedev_oracle(t):
    th, ph, w = lebedev(41)
    y = [real_harmonics(l, th, ph) for l in t]
    ref = np.einsum("ap,bp,cp,p->abc", *y, w)
    assert_allclose(gaunt_integral_block(t, gauss_product_grid(sum(t) + 2)), ref, atol=1e-12)


def test_inconsistent_ratio_detected(monkeypatch):
    real = coupling.gaunt_integral_block

    def skewed(t, grid):
        b = real(t, grid)
        k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
        b[k] *= 1.01
        return b

    monkeypatch.setattr(coupling, "gaunt_integral_block", skewed)
    with pytest.raises(InconsistentRatio):
        extract_gtilde((2, 2, 2))


def test_inadmissible_rejected():
    with pytest.raises(ValueError):
        extract_gtilde((0, 1, 2))
    with pytest.raises(ValueError):
        extract_vtilde((1, 1, 3))


@pytest.fixture(scope="module")
def table8():
    return build_table(8)


def test_table_matches_closed_forms(table8):
    assert table8.max_rel_dev_g < 1e-9
    assert table8.max_rel_dev_v < 1e-9
    cf = build_table(8, source="closed_form")
    assert_allclose(table8.g_tilde, cf.g_tilde, rtol=1e-9, atol=0)
    assert_allclose(table8.v_tilde, cf.v_tilde, rtol=1e-9, atol=0)


def test_parity_exclusive(table8):
    for t, g, v in zip(table8.triplets, table8.g_tilde, table8.v_tilde):
        assert (g != 0) != (v != 0)
        assert (g != 0) == (t.parity() == 0)
    assert np.all(table8.g_tilde >= 0)


def test_gamma_definition(table8):
    assert_allclose(table8.gamma, 1 / (table8.g_tilde + table8.v_tilde), rtol=1e-15)
    assert table8.gamma_of(0, 0, 0) == pytest.approx(math.sqrt(4 * math.pi))


def test_swap_symmetry(table8):
    # on odd triplets the cross integral and the real CG block both change sign
    # under l1 <-> l2, so both scalars are swap invariant
    for t in table8.triplets:
        s = t.swapped()
        assert table8.g(*s) == pytest.approx(table8.g(*t), rel=1e-12)
        assert table8.v(*s) == pytest.approx(table8.v(*t), rel=1e-12)


def test_gamma_finite_at_lmax_12():
    tab = build_table(12, source="closed_form")
    assert np.all(np.isfinite(tab.gamma))


def test_dense_scatter(table8):
    d = table8.dense("v_tilde")
    assert d.shape == (9, 9, 9)
    assert d[1, 1, 1] == table8.v(1, 1, 1)
    assert d[0, 1, 2] == 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), st.data())
def test_refinement_invariance(l1, l2, data):
    l3 = data.draw(st.integers(abs(l1 - l2), l1 + l2))
    t = (l1, l2, l3)
    lo, hi = gauss_product_grid(sum(t)), gauss_product_grid(sum(t) + 4)
    assert np.abs(gaunt_integral_block(t, lo) - gaunt_integral_block(t, hi)).max() < 1e-12
    assert np.abs(cross_integral_block(t, lo) - cross_integral_block(t, hi)).max() < 1e-12


def test_blocks_proportional_to_cg():
    t = Triplet(3, 2, 4)
    grid = gauss_product_grid(11)
    assert_allclose(gaunt_integral_block(t, grid), extract_gtilde(t) * cg_real(t).dense(), atol=1e-13)
    t = Triplet(3, 2, 2)
    assert_allclose(cross_integral_block(t, grid), extract_vtilde(t) * cg_real(t).dense(), atol=1e-12)


def test_json_round_trip(tmp_path):
    tab = build_table(4)
    p = tmp_path / "t.json"
    write_table(tab, p, blocks=True)
    back = read_table(p)
    assert back.triplets == tab.triplets
    for k in ("g_tilde", "v_tilde", "lambda_im", "gamma"):
        assert np.array_equal(getattr(back, k), getattr(tab, k))
    rec = json.loads(p.read_text())["records"][5]
    t = Triplet(rec["l1"], rec["l2"], rec["l3"])
    assert_allclose(np.array(rec["cg_block"]), cg_real(t).dense(), rtol=0, atol=0)


def test_read_table_rejects_foreign(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"records": []}))
    with pytest.raises(ValueError):
        read_table(p)


def test_unknown_source():
    with pytest.raises(ValueError):
        build_table(2, source="magic")


def test_dumps_table_header():
    doc = json.loads(dumps_table(build_table(1, source="closed_form")))
    assert doc["format"] == "so3tp-coupling-table" and len(doc["records"]) == 5
