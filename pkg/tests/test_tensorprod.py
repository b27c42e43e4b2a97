import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from oracles import real_cg_dense_oracle
from so3tp.coupling import admissible_triplets, build_table
from so3tp.quadrature import gauss_product_grid, load_tdesign
from so3tp.tensorprod import (DenseWeights, InadmissibleTriplet, InsufficientDegree, IrrepFeature,
                              MultiIrrepFeature, RankRWeights, cgtp, cgtp_layer_plan, combined_tp,
                              effective_dense_weights, gtp, mimo_layer_cgtp, mimo_layer_integral,
                              vstp)
from so3tp.wigner import cg_real

# real l = 1 coefficients are ordered (y, z, x)
XYZ = [2, 0, 1]
YZX = [1, 2, 0]


def test_scalar_times_vector():
    v = IrrepFeature(1, [1.0, 2.0, 3.0])
    out = cgtp(IrrepFeature(0, [2.0]), v, 1)
    assert_allclose(out.coeffs, 2 * v.coeffs, atol=1e-15)


def test_vector_dot_product():
    a, b = np.array([1.0, -2.0, 0.5]), np.array([0.3, 4.0, 1.0])
    out = cgtp(IrrepFeature(1, a), IrrepFeature(1, b), 0)
    assert abs(out.coeffs[0]) == pytest.approx(abs(a @ b) / np.sqrt(3), rel=1e-14)


def test_vector_cross_product(rng):
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    out = cgtp(IrrepFeature(1, a), IrrepFeature(1, b), 1).coeffs
    cross = np.cross(a[XYZ], b[XYZ])[YZX]
    k = out @ cross / (cross @ cross)
    assert abs(k) == pytest.approx(1 / np.sqrt(2), rel=1e-13)
    assert_allclose(out, k * cross, atol=1e-14)


def test_inadmissible_and_shape_errors():
    with pytest.raises(InadmissibleTriplet):
        cgtp(IrrepFeature(1, np.ones(3)), IrrepFeature(1, np.ones(3)), 3)
    with pytest.raises(ValueError):
        IrrepFeature(2, np.ones(3))
    with pytest.raises(InsufficientDegree):
        gtp(IrrepFeature(2, np.ones(5)), IrrepFeature(2, np.ones(5)), 2, gauss_product_grid(5))


@pytest.mark.parametrize("t", [tuple(t) for t in admissible_triplets(4)][::3])
def test_cgtp_matches_dense_oracle(t, rng):
    h1, h2 = IrrepFeature.random(t[0], rng), IrrepFeature.random(t[1], rng)
    ref = np.einsum("abc,a,b->c", real_cg_dense_oracle(*t).real, h1.coeffs, h2.coeffs)
    assert_allclose(cgtp(h1, h2, t[2]).coeffs, ref, atol=1e-13)


@pytest.fixture(scope="module")
def table6():
    return build_table(6, source="closed_form")


@pytest.mark.parametrize("t", [tuple(t) for t in admissible_triplets(6)][::7])
def test_integral_products_scale_cgtp(t, table6, rng):
    h1, h2 = IrrepFeature.random(t[0], rng), IrrepFeature.random(t[1], rng)
    ref = cgtp(h1, h2, t[2]).coeffs
    g, v = table6.g(*t), table6.v(*t)
    assert_allclose(gtp(h1, h2, t[2]).coeffs, g * ref, atol=1e-12)
    assert_allclose(vstp(h1, h2, t[2]).coeffs, v * ref, atol=1e-12)
    assert_allclose(table6.gamma_of(*t) * combined_tp(h1, h2, t[2]).coeffs, ref,
                    atol=1e-11 * max(1, np.abs(ref).max()))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4), st.integers(0, 4), st.data(), st.floats(-3, 3), st.integers(0, 2 ** 32 - 1))
def test_bilinearity(l1, l2, data, s, seed):
    l3 = data.draw(st.integers(abs(l1 - l2), l1 + l2))
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_normal(2 * l1 + 1), rng.standard_normal(2 * l1 + 1), rng.standard_normal(2 * l2 + 1)
    for fn in (cgtp, combined_tp):
        lhs = fn(IrrepFeature(l1, a + s * b), IrrepFeature(l2, c), l3).coeffs
        rhs = fn(IrrepFeature(l1, a), IrrepFeature(l2, c), l3).coeffs + s * fn(
            IrrepFeature(l1, b), IrrepFeature(l2, c), l3).coeffs
        assert_allclose(lhs, rhs, atol=1e-11)


def test_combined_is_sum_of_parts(rng):
    h1, h2 = IrrepFeature.random(3, rng), IrrepFeature.random(2, rng)
    for l3 in range(1, 6):
        comb = combined_tp(h1, h2, l3).coeffs
        assert_allclose(comb, gtp(h1, h2, l3).coeffs + vstp(h1, h2, l3).coeffs, atol=1e-12)


def test_product_on_tdesign(design_path, rng):
    grid = load_tdesign(design_path)
    h1, h2 = IrrepFeature.random(4, rng), IrrepFeature.random(3, rng)
    for l3 in (1, 4, 5):
        assert_allclose(combined_tp(h1, h2, l3, grid).coeffs, combined_tp(h1, h2, l3).coeffs, atol=1e-12)


# ---- layers ----------------------------------------------------------------

def test_plan_nnz_matches_blocks():
    plan = cgtp_layer_plan(3, 3, 3)
    total = sum(cg_real(t).nnz for t in admissible_triplets(3))
    assert plan.nnz == total
    assert len(plan.paths) == len(admissible_triplets(3))


def test_recursion_plan_matches_exact_plan(rng):
    ex, rc = cgtp_layer_plan(6, 6, 6, "exact"), cgtp_layer_plan(6, 6, 6, "recursion")
    x1, x2 = rng.standard_normal(49), rng.standard_normal(49)
    w = rng.standard_normal((7, 7, 7))
    assert_allclose(rc(x1, x2, w), ex(x1, x2, w), atol=1e-12)


def naive_layer(h1, h2, w):
    out = [np.zeros(2 * l + 1) for l in range(w.shape[0])]
    for l3 in range(w.shape[0]):
        for l1 in range(h1.lmax + 1):
            for l2 in range(h2.lmax + 1):
                if abs(l1 - l2) <= l3 <= l1 + l2:
                    out[l3] += w[l3, l1, l2] * cgtp(h1.block(l1), h2.block(l2), l3).coeffs
    return np.concatenate(out)


def test_mimo_cgtp_against_naive_loop(rng):
    h1, h2 = MultiIrrepFeature.random(2, rng), MultiIrrepFeature.random(2, rng)
    w = rng.standard_normal((3, 3, 3))
    assert_allclose(mimo_layer_cgtp(h1, h2, DenseWeights(w)).data, naive_layer(h1, h2, w), atol=1e-13)


def test_mimo_cgtp_rectangular(rng):
    h1, h2 = MultiIrrepFeature.random(3, rng), MultiIrrepFeature.random(1, rng)
    w = rng.standard_normal((5, 4, 2))
    assert_allclose(mimo_layer_cgtp(h1, h2, DenseWeights(w)).data, naive_layer(h1, h2, w), atol=1e-13)
    with pytest.raises(ValueError):
        mimo_layer_cgtp(h2, h1, DenseWeights(w))


@pytest.mark.parametrize("R", [1, 2, 3])
@pytest.mark.parametrize("mode", ["gaunt", "combined"])
def test_integral_layer_matches_effective_dense(R, mode, rng):
    L = 4
    h1, h2 = MultiIrrepFeature.random(L, rng), MultiIrrepFeature.random(L, rng)
    w = RankRWeights.random(R, L, rng)
    ref = mimo_layer_cgtp(h1, h2, effective_dense_weights(w, mode)).data
    got = mimo_layer_integral(h1, h2, w, mode=mode).data
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-12


def test_integral_layer_on_tdesign(design_path, rng):
    h1, h2 = MultiIrrepFeature.random(4, rng), MultiIrrepFeature.random(4, rng)
    w = RankRWeights.random(2, 4, rng)
    a = mimo_layer_integral(h1, h2, w, load_tdesign(design_path)).data
    b = mimo_layer_integral(h1, h2, w).data
    assert_allclose(a, b, atol=1e-12)


def test_factorized_weights():
    w = RankRWeights.factorized(np.ones(3), np.arange(3.0), np.ones(3))
    assert w.rank == 1 and w.lmax == (2, 2, 2)
    assert w.product()[0, 2, 1] == 2.0


def test_integral_layer_errors(rng):
    h = MultiIrrepFeature.random(2, rng)
    w = RankRWeights.random(1, 2, rng)
    with pytest.raises(InsufficientDegree):
        mimo_layer_integral(h, h, w, gauss_product_grid(5))
    with pytest.raises(ValueError):
        mimo_layer_integral(h, h, w, mode="vector")
    with pytest.raises(ValueError):
        RankRWeights(np.ones((2, 3)), np.ones((1, 3)), np.ones((1, 3)))


def test_multi_irrep_blocks(rng):
    blocks = [IrrepFeature.random(l, rng) for l in range(3)]
    m = MultiIrrepFeature.from_blocks(blocks)
    assert m.lmax == 2
    assert_allclose(m.block(1).coeffs, blocks[1].coeffs)
    p = m.padded()
    assert p.shape == (3, 5) and p[0, 0] == 0 and p[0, 2] == blocks[0].coeffs[0]
