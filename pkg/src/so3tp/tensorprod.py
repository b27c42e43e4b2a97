"""Tensor products of real irrep features: the exact CG product and the three
integral products (Gaunt, antisymmetric cross-gradient, combined), plus the
multi-irrep bilinear (MIMO) layers built from them.

The integral products are staged as synthesis (coefficients to node values),
a pointwise kernel, and analysis (node values to coefficients). Raw integral
outputs carry the coupling scalars; no normalization is applied here.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .coupling import CouplingScalars, build_table
from .harmonics import azimuth_factors, combined_kernel, cross_kernel, ring_factors
from .quadrature import SAFETY_MARGIN, QuadratureGrid, basis_table, gauss_product_grid
from .wigner import Triplet, cg_complex_table_float, cg_real, cg_real_from_float_table

__all__ = [
    "CGTPLayerPlan",
    "DenseWeights",
    "InadmissibleTriplet",
    "InsufficientDegree",
    "IrrepFeature",
    "MultiIrrepFeature",
    "RankRWeights",
    "analyze",
    "cgtp",
    "combined_tp",
    "effective_dense_weights",
    "gtp",
    "mimo_layer_cgtp",
    "mimo_layer_integral",
    "synthesize",
    "vstp",
]

EXACT_PLAN_LMAX = 12


class InadmissibleTriplet(ValueError):
    pass


class InsufficientDegree(ValueError):
    pass


@dataclass(frozen=True)
class IrrepFeature:
    """Real coefficients of one irrep, ordered m = -l..l."""

    l: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (2 * self.l + 1,):
            raise ValueError(f"degree {self.l} needs {2 * self.l + 1} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def random(cls, l: int, rng: np.random.Generator) -> "IrrepFeature":
        return cls(l, rng.standard_normal(2 * l + 1))

    def __array__(self, dtype=None, copy=None):
        return self.coeffs if dtype is None else self.coeffs.astype(dtype)


@dataclass(frozen=True)
class MultiIrrepFeature:
    """Direct sum of irreps l = 0..lmax stored flat at index l*l + l + m."""

    lmax: int
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.shape != ((self.lmax + 1) ** 2,):
            raise ValueError(f"lmax={self.lmax} needs {(self.lmax + 1) ** 2} entries, got {d.shape}")
        object.__setattr__(self, "data", d)

    @classmethod
    def from_blocks(cls, blocks) -> "MultiIrrepFeature":
        blocks = list(blocks)
        for l, b in enumerate(blocks):
            if isinstance(b, IrrepFeature) and b.l != l:
                raise ValueError(f"block {l} has degree {b.l}")
        return cls(len(blocks) - 1, np.concatenate([np.asarray(b, dtype=float) for b in blocks]))

    @classmethod
    def random(cls, lmax: int, rng: np.random.Generator) -> "MultiIrrepFeature":
        return cls(lmax, rng.standard_normal((lmax + 1) ** 2))

    def block(self, l: int) -> IrrepFeature:
        return IrrepFeature(l, self.data[l * l:(l + 1) ** 2])

    def padded(self) -> np.ndarray:
        """(lmax+1, 2*lmax+1) array indexed [l, m + lmax], zero for |m| > l."""
        return self.data[_pad_index(self.lmax)] * _pad_mask(self.lmax)


@lru_cache(maxsize=None)
def _pad_index(lmax: int) -> np.ndarray:
    l = np.arange(lmax + 1)[:, None]
    m = np.arange(-lmax, lmax + 1)[None]
    return np.clip(l * l + l + m, 0, (lmax + 1) ** 2 - 1)


@lru_cache(maxsize=None)
def _pad_mask(lmax: int) -> np.ndarray:
    l = np.arange(lmax + 1)[:, None]
    m = np.arange(-lmax, lmax + 1)[None]
    return (np.abs(m) <= l).astype(float)


def _unpad(p: np.ndarray, lmax: int) -> np.ndarray:
    mask = _pad_mask(lmax).astype(bool)
    return p[mask]


# --------------------------------------------------------------------------
# single-path products
# --------------------------------------------------------------------------

def _check(l1: int, l2: int, l3: int) -> Triplet:
    t = Triplet(l1, l2, l3)
    if not t.admissible():
        raise InadmissibleTriplet(f"({l1}, {l2}) cannot couple to {l3}")
    return t


def cgtp(h1: IrrepFeature, h2: IrrepFeature, l3: int) -> IrrepFeature:
    """Exact real CG product; the oracle for every integral method."""
    t = _check(h1.l, h2.l, l3)
    return IrrepFeature(l3, cg_real(t).contract(h1.coeffs, h2.coeffs))


def _grid_for(t: Triplet, grid: QuadratureGrid | None) -> QuadratureGrid:
    need = t.l1 + t.l2 + t.l3
    if grid is None:
        return gauss_product_grid(need + SAFETY_MARGIN)
    if grid.degree < need:
        raise InsufficientDegree(f"grid degree {grid.degree} < {need} for {tuple(t)}")
    return grid


def synthesize(h: IrrepFeature, grid: QuadratureGrid, lmax: int | None = None):
    """Node values of F = <h, Y_l> and its surface gradient (d_theta, d_phi / sin)."""
    tab = basis_table(grid, max(h.l, lmax or 0))
    y, dt, dp = tab.block(h.l)
    c = h.coeffs
    return c @ y, (c @ dt, c @ dp)


def analyze(values: np.ndarray, grid: QuadratureGrid, l3: int, lmax: int | None = None) -> IrrepFeature:
    """Project node values onto Y_{l3 m}."""
    y = basis_table(grid, max(l3, lmax or 0)).block(l3)[0]
    return IrrepFeature(l3, y @ (grid.weights * values))


def _integral_tp(h1, h2, l3, grid, kernel) -> IrrepFeature:
    t = _check(h1.l, h2.l, l3)
    grid = _grid_for(t, grid)
    lm = max(t)
    f1, g1 = synthesize(h1, grid, lm)
    f2, g2 = synthesize(h2, grid, lm)
    return analyze(kernel(f1, g1, f2, g2), grid, l3, lm)


def gtp(h1: IrrepFeature, h2: IrrepFeature, l3: int, grid: QuadratureGrid | None = None) -> IrrepFeature:
    """Gaunt product: project F1 F2 onto degree l3. Equals G * cgtp."""
    return _integral_tp(h1, h2, l3, grid, lambda f1, g1, f2, g2: f1 * f2)


def vstp(h1: IrrepFeature, h2: IrrepFeature, l3: int, grid: QuadratureGrid | None = None) -> IrrepFeature:
    """Antisymmetric product: project (grad F1 x grad F2) . r. Equals V * cgtp."""
    return _integral_tp(h1, h2, l3, grid, lambda f1, g1, f2, g2: cross_kernel(g1, g2))


def combined_tp(h1: IrrepFeature, h2: IrrepFeature, l3: int, grid: QuadratureGrid | None = None) -> IrrepFeature:
    """Single-integral product (F1 r + r x grad F1) . (F2 r + grad F2). Equals (G + V) * cgtp."""
    return _integral_tp(h1, h2, l3, grid, combined_kernel)


# --------------------------------------------------------------------------
# MIMO weights
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DenseWeights:
    """Per-path weights ``w[l3, l1, l2]``."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 3:
            raise ValueError("dense weights must be indexed [l3, l1, l2]")
        object.__setattr__(self, "w", w)

    @property
    def lmax(self) -> tuple[int, int, int]:
        """(lmax_out, lmax_in1, lmax_in2)."""
        return tuple(n - 1 for n in self.w.shape)


@dataclass(frozen=True)
class RankRWeights:
    """Sum of R factorized weight triples, ``w[l3,l1,l2] = sum_r out[r,l3] in1[r,l1] in2[r,l2]``.

    R = 1 is the plain factorized layer.
    """

    out: np.ndarray
    in1: np.ndarray
    in2: np.ndarray

    def __post_init__(self):
        arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.out, self.in1, self.in2)]
        if len({a.shape[0] for a in arrs}) != 1:
            raise ValueError("all factor matrices need the same rank")
        for name, a in zip(("out", "in1", "in2"), arrs):
            object.__setattr__(self, name, a)

    @classmethod
    def factorized(cls, w_out, w_in1, w_in2) -> "RankRWeights":
        return cls(np.asarray(w_out)[None], np.asarray(w_in1)[None], np.asarray(w_in2)[None])

    @classmethod
    def random(cls, rank: int, lmax: int, rng: np.random.Generator) -> "RankRWeights":
        return cls(*(rng.standard_normal((rank, lmax + 1)) for _ in range(3)))

    @property
    def rank(self) -> int:
        return self.out.shape[0]

    @property
    def lmax(self) -> tuple[int, int, int]:
        return self.out.shape[1] - 1, self.in1.shape[1] - 1, self.in2.shape[1] - 1

    def product(self) -> np.ndarray:
        """Unscaled dense weights [l3, l1, l2]."""
        return np.einsum("rc,ra,rb->cab", self.out, self.in1, self.in2)


def effective_dense_weights(w: RankRWeights, mode: str = "combined",
                            table: CouplingScalars | None = None) -> DenseWeights:
    """Dense weights whose CG layer reproduces the integral layer.

    ``mode="gaunt"`` multiplies by G, ``"combined"`` by G + V.
    """
    lo, l1, l2 = w.lmax
    need = max(lo, l1, l2)
    if table is None or table.lmax < need:
        table = build_table(need, source="closed_form")
    t = table.dense("g_tilde")
    if mode == "combined":
        t = t + table.dense("v_tilde")
    elif mode != "gaunt":
        raise ValueError(f"unknown mode {mode!r}")
    t = t.transpose(2, 0, 1)[: lo + 1, : l1 + 1, : l2 + 1]
    return DenseWeights(w.product() * t)


# --------------------------------------------------------------------------
# dense CG layer
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _contract_plan(offsets, path_l, i1, i2, i3, vals, w, x1, x2, out):
    for p in range(len(offsets) - 1):
        wp = w[path_l[p, 2], path_l[p, 0], path_l[p, 1]]
        if wp == 0.0:
            continue
        for k in range(offsets[p], offsets[p + 1]):
            out[i3[k]] += wp * vals[k] * x1[i1[k]] * x2[i2[k]]


@dataclass(frozen=True, eq=False)
class CGTPLayerPlan:
    """All real CG entries of a layer, concatenated path by path.

    Only stored (structurally nonzero) entries are visited, so the cost of
    one path is proportional to its nonzero count.
    """

    lmax_out: int
    lmax_in1: int
    lmax_in2: int
    paths: np.ndarray
    offsets: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    def __call__(self, x1: np.ndarray, x2: np.ndarray, w: np.ndarray) -> np.ndarray:
        out = np.zeros((self.lmax_out + 1) ** 2)
        _contract_plan(self.offsets, self.paths, self.i1, self.i2, self.i3, self.values,
                       np.ascontiguousarray(w), x1, x2, out)
        return out


@lru_cache(maxsize=8)
def cgtp_layer_plan(lmax_out: int, lmax_in1: int, lmax_in2: int, source: str = "auto") -> CGTPLayerPlan:
    """Build the concatenated sparse table.

    ``source="exact"`` uses rational Racah sums; ``"recursion"`` uses the
    float three-term recursion (needed for benchmark-scale l).
    """
    if source == "auto":
        source = "exact" if max(lmax_out, lmax_in1, lmax_in2) <= EXACT_PLAN_LMAX else "recursion"
    idx_t = np.int16 if (max(lmax_out, lmax_in1, lmax_in2) + 1) ** 2 < 2 ** 15 else np.int32
    paths, offs, I1, I2, I3, V = [], [0], [], [], [], []
    for l1 in range(lmax_in1 + 1):
        for l2 in range(lmax_in2 + 1):
            table = cg_complex_table_float(l1, l2) if source == "recursion" else None
            for l3 in range(abs(l1 - l2), min(l1 + l2, lmax_out) + 1):
                if table is None:
                    cg = cg_real(Triplet(l1, l2, l3))
                else:
                    cg = cg_real_from_float_table(l1, l2, l3, table)
                a, b, c = cg.index.T
                I1.append((a + l1 * l1).astype(idx_t))
                I2.append((b + l2 * l2).astype(idx_t))
                I3.append((c + l3 * l3).astype(idx_t))
                V.append(cg.values)
                paths.append((l1, l2, l3))
                offs.append(offs[-1] + cg.nnz)
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    return CGTPLayerPlan(lmax_out, lmax_in1, lmax_in2,
                         np.array(paths, dtype=np.int64).reshape(-1, 3), np.array(offs, dtype=np.int64),
                         cat(I1, idx_t), cat(I2, idx_t), cat(I3, idx_t), cat(V, float))


def mimo_layer_cgtp(h1: MultiIrrepFeature, h2: MultiIrrepFeature, w: DenseWeights,
                    *, plan: CGTPLayerPlan | None = None) -> MultiIrrepFeature:
    """h3^{l3} = sum over admissible (l1, l2) of w[l3, l1, l2] (h1^{l1} (x) h2^{l2})^{l3}."""
    lo, l1, l2 = w.lmax
    if (l1, l2) != (h1.lmax, h2.lmax):
        raise ValueError(f"weights expect inputs of lmax {(l1, l2)}, got {(h1.lmax, h2.lmax)}")
    plan = plan or cgtp_layer_plan(lo, l1, l2)
    if (plan.lmax_out, plan.lmax_in1, plan.lmax_in2) != (lo, l1, l2):
        raise ValueError("plan does not match weight shape")
    return MultiIrrepFeature(lo, plan(h1.data, h2.data, w.w))


# --------------------------------------------------------------------------
# integral layer
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _RingTable:
    ring: np.ndarray
    dring: np.ndarray
    ring_s: np.ndarray
    az: np.ndarray
    daz: np.ndarray
    az_w: np.ndarray


@lru_cache(maxsize=16)
def _ring_table(grid: QuadratureGrid, lmax: int) -> _RingTable:
    ring, dring, ring_s = ring_factors(grid.ring_theta, lmax)
    az, daz = azimuth_factors(grid.azimuths, lmax)
    # analysis weights: ring weight times the uniform longitude weight
    az_w = az * (2 * np.pi / len(grid.azimuths))
    return _RingTable(ring, dring, ring_s, az, daz, az_w)


def _integral_layer_product(c1, c2, out_w, grid, lmax, lo, mode):
    rt = _ring_table(grid, lmax)

    def synth(c):
        a = np.einsum("rlm,lmt->rtm", c, rt.ring)
        f = a @ rt.az
        if mode == "gaunt":
            return f, None
        gt = np.einsum("rlm,lmt->rtm", c, rt.dring) @ rt.az
        gp = np.einsum("rlm,lmt->rtm", c, rt.ring_s) @ rt.daz
        return f, (gt, gp)

    f1, g1 = synth(c1)
    f2, g2 = synth(c2)
    k = f1 * f2 if mode == "gaunt" else combined_kernel(f1, g1, f2, g2)
    p = k @ rt.az_w.T
    cols = slice(lmax - lo, lmax + lo + 1)
    return np.einsum("rl,rtm,lmt,t->lm", out_w, p[:, :, cols], rt.ring[: lo + 1, cols],
                     grid.ring_weights, optimize=True)


def mimo_layer_integral(h1: MultiIrrepFeature, h2: MultiIrrepFeature, w: RankRWeights,
                        grid: QuadratureGrid | None = None, mode: str = "combined") -> MultiIrrepFeature:
    """Factorized / rank-R layer evaluated with one synthesis per input and rank.

    For each rank r the signals S1 = sum_l in1[r,l] F_{h1^l} and
    S2 = sum_l in2[r,l] F_{h2^l} are built on the grid, combined pointwise
    (product for ``gaunt``, the combined kernel otherwise), projected onto
    each Y_{l3} and scaled by out[r, l3]. Product grids use ring-separable
    transforms; other grids use the dense basis table.
    """
    if mode not in ("gaunt", "combined"):
        raise ValueError(f"unknown mode {mode!r}")
    lo, l1, l2 = w.lmax
    if (l1, l2) != (h1.lmax, h2.lmax):
        raise ValueError(f"weights expect inputs of lmax {(l1, l2)}, got {(h1.lmax, h2.lmax)}")
    need = lo + l1 + l2
    if grid is None:
        grid = gauss_product_grid(need + SAFETY_MARGIN)
    elif grid.degree < need:
        raise InsufficientDegree(f"grid degree {grid.degree} < {need}")
    lmax = max(lo, l1, l2)

    if grid.is_product:
        def pad(h, win):
            p = np.zeros((lmax + 1, 2 * lmax + 1))
            p[: h.lmax + 1, lmax - h.lmax: lmax + h.lmax + 1] = h.padded()
            wp = np.zeros((win.shape[0], lmax + 1))
            wp[:, : h.lmax + 1] = win
            return wp[:, :, None] * p[None]
        res = _integral_layer_product(pad(h1, w.in1), pad(h2, w.in2), w.out, grid, lmax, lo, mode)
        return MultiIrrepFeature(lo, _unpad(res, lo))

    tab = basis_table(grid, lmax)
    hv = tab.harmonics

    def synth(h, win):
        n = (h.lmax + 1) ** 2
        ls = np.repeat(np.arange(h.lmax + 1), 2 * np.arange(h.lmax + 1) + 1)
        c = win[:, ls] * h.data[None]
        return c @ hv.value[:n], (c @ hv.dtheta[:n], c @ hv.dphi_over_sin[:n])

    f1, g1 = synth(h1, w.in1)
    f2, g2 = synth(h2, w.in2)
    k = f1 * f2 if mode == "gaunt" else combined_kernel(f1, g1, f2, g2)
    n = (lo + 1) ** 2
    proj = (k * grid.weights) @ hv.value[:n].T
    ls = np.repeat(np.arange(lo + 1), 2 * np.arange(lo + 1) + 1)
    return MultiIrrepFeature(lo, np.einsum("rk,rk->k", w.out[:, ls], proj))
