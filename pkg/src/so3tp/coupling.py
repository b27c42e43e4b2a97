"""Per-triplet coupling scalars relating the integral tensor products to the
exact Clebsch-Gordan product.

For an admissible triplet the Gaunt integral and the cross-gradient integral
are both proportional to the real CG block::

    int Y1 Y2 Y3                      = G(l1, l2, l3) * C
    int ((grad Y1 x grad Y2) . r) Y3  = V(l1, l2, l3) * C

with G vanishing on odd triplets and V on even ones. The scalars are
extracted here by quadrature and cross-checked against the closed forms in
:mod:`so3tp.wigner`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .harmonics import cross_kernel
from .quadrature import (SAFETY_MARGIN, BasisTable, QuadratureGrid, basis_table,
                         gauss_product_grid, grid_from_spec)
from .wigner import (Triplet, _as_triplet, cg_real, gtilde_closed_form,
                     lambda_closed_form, vtilde_closed_form)

__all__ = [
    "CouplingScalars",
    "InconsistentRatio",
    "admissible_triplets",
    "build_table",
    "cross_integral_block",
    "dumps_table",
    "extract_gtilde",
    "extract_vtilde",
    "gaunt_integral_block",
    "read_table",
    "write_table",
]

RATIO_SPREAD_TOL = 1e-9
MIN_COMBOS = 3
TABLE_FORMAT = "so3tp-coupling-table"
BLOCK_LAYOUT = ("cg_block entries are nested lists indexed [m1 + l1][m2 + l2][m3 + l3] "
                "(row-major, m = -l..l, real e3nn basis)")


class InconsistentRatio(ArithmeticError):
    """Integral / CG ratios disagree across m (basis or phase mismatch)."""


def admissible_triplets(lmax: int) -> list[Triplet]:
    """All triangle-admissible (l1, l2, l3) with every l <= lmax, lexicographic."""
    if lmax < 0:
        raise ValueError("lmax must be non-negative")
    return [Triplet(a, b, c)
            for a in range(lmax + 1)
            for b in range(lmax + 1)
            for c in range(abs(a - b), min(a + b, lmax) + 1)]


def _table_for(triplet: Triplet, grid: QuadratureGrid) -> BasisTable:
    need = triplet.l1 + triplet.l2 + triplet.l3
    if grid.degree < need:
        raise ValueError(f"grid degree {grid.degree} < {need} required by {tuple(triplet)}")
    return basis_table(grid, max(triplet))


def gaunt_integral_block(triplet, grid: QuadratureGrid) -> np.ndarray:
    """Dense ``int Y_l1m1 Y_l2m2 Y_l3m3`` indexed [m1+l1, m2+l2, m3+l3]."""
    t = _as_triplet(triplet)
    tab = _table_for(t, grid)
    y1, y2, y3 = (tab.block(l)[0] for l in t)
    return np.einsum("ap,bp,cp,p->abc", y1, y2, y3, grid.weights, optimize=True)


def cross_integral_block(triplet, grid: QuadratureGrid) -> np.ndarray:
    """Dense ``int ((grad Y_l1m1 x grad Y_l2m2) . r) Y_l3m3``."""
    t = _as_triplet(triplet)
    tab = _table_for(t, grid)
    _, d1t, d1p = tab.block(t.l1)
    _, d2t, d2p = tab.block(t.l2)
    y3 = tab.block(t.l3)[0] * grid.weights
    k = cross_kernel((d1t[:, None], d1p[:, None]), (d2t[None], d2p[None]))
    return np.einsum("abp,cp->abc", k, y3, optimize=True)


def _ratio(integral: np.ndarray, triplet: Triplet, what: str) -> float:
    cg = cg_real(triplet)
    c = cg.values
    # ratios are taken only where C is not tiny, so rounding in C cannot dominate
    pick = np.abs(c) > 1e-3 * np.abs(c).max()
    num = integral[tuple(cg.index[pick].T)]
    # every well-conditioned entry is used; small blocks may have fewer than MIN_COMBOS
    r = num / c[pick]
    scale = np.abs(r).max()
    if scale and np.ptp(r) > RATIO_SPREAD_TOL * scale:
        raise InconsistentRatio(
            f"{what}{tuple(triplet)}: integral/CG ratio spread {np.ptp(r) / scale:.3e} "
            f"over {len(r)} m-combinations")
    return float(r.mean())


def extract_gtilde(triplet, grid: QuadratureGrid | None = None) -> float:
    """Gaunt scalar G from the quadrature integral; 0 on odd triplets.

    Raises
    ------
    InconsistentRatio
        If integral / CG differs across the sampled (m1, m2, m3).
    """
    t = _as_triplet(triplet)
    if not t.admissible():
        raise ValueError(f"triplet {tuple(t)} violates the triangle condition")
    if t.parity():
        return 0.0
    grid = grid or gauss_product_grid(sum(t) + SAFETY_MARGIN)
    return _ratio(gaunt_integral_block(t, grid), t, "G")


def extract_vtilde(triplet, grid: QuadratureGrid | None = None) -> float:
    """Antisymmetric scalar V from the cross-gradient integral; 0 on even triplets."""
    t = _as_triplet(triplet)
    if not t.admissible():
        raise ValueError(f"triplet {tuple(t)} violates the triangle condition")
    if not t.parity():
        return 0.0
    grid = grid or gauss_product_grid(sum(t) + SAFETY_MARGIN)
    return _ratio(cross_integral_block(t, grid), t, "V")


@dataclass(frozen=True)
class CouplingScalars:
    """Coupling scalars for every admissible triplet up to ``lmax``.

    Arrays are aligned with ``triplets`` (lexicographic order). Parity masking
    is exact: ``g_tilde`` is 0.0 on odd triplets and ``v_tilde`` on even ones.
    """

    lmax: int
    triplets: tuple[Triplet, ...]
    g_tilde: np.ndarray
    v_tilde: np.ndarray
    lambda_im: np.ndarray
    gamma: np.ndarray
    source: str = "quadrature"
    max_rel_dev_g: float = 0.0
    max_rel_dev_v: float = 0.0
    _pos: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_pos", {t: i for i, t in enumerate(self.triplets)})

    def __len__(self):
        return len(self.triplets)

    def index(self, triplet) -> int:
        return self._pos[_as_triplet(triplet)]

    def g(self, *triplet) -> float:
        return float(self.g_tilde[self.index(triplet)])

    def v(self, *triplet) -> float:
        return float(self.v_tilde[self.index(triplet)])

    def gamma_of(self, *triplet) -> float:
        return float(self.gamma[self.index(triplet)])

    def dense(self, which: str = "g_tilde") -> np.ndarray:
        """Scatter a per-triplet array into an (L+1)^3 tensor, zeros elsewhere."""
        n = self.lmax + 1
        out = np.zeros((n, n, n))
        idx = np.array([tuple(t) for t in self.triplets]).T
        out[tuple(idx)] = getattr(self, which)
        return out


def _rel_dev(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def build_table(lmax: int, grid_policy: str = "gauss", *, source: str = "quadrature") -> CouplingScalars:
    """Tabulate G, V, Im(Lambda) and Gamma = 1 / (G + V) for all triplets.

    Parameters
    ----------
    lmax : int
        Largest l on any leg.
    grid_policy : str
        ``"gauss"`` or ``"design:<path>"``; used at degree 3*lmax + margin.
    source : {"quadrature", "closed_form"}
        ``quadrature`` extracts both scalars by integration and records the
        largest relative deviation from the closed forms. ``closed_form``
        skips integration (useful for large lmax).
    """
    trips = admissible_triplets(lmax)
    n = len(trips)
    g = np.zeros(n)
    v = np.zeros(n)
    lam = np.zeros(n)
    dev_g = dev_v = 0.0
    grid = None
    if source == "quadrature":
        grid = grid_from_spec(grid_policy, 3 * lmax + SAFETY_MARGIN)
    elif source != "closed_form":
        raise ValueError(f"unknown source {source!r}")
    for i, t in enumerate(trips):
        lam[i] = lambda_closed_form(t).imag
        g_cf, v_cf = gtilde_closed_form(t), vtilde_closed_form(t)
        if grid is None:
            g[i], v[i] = g_cf, v_cf
            continue
        try:
            g[i] = extract_gtilde(t, grid)
            v[i] = extract_vtilde(t, grid)
        except InconsistentRatio as exc:
            raise InconsistentRatio(f"while tabulating {tuple(t)}: {exc}") from exc
        dev_g = max(dev_g, _rel_dev(g[i], g_cf))
        dev_v = max(dev_v, _rel_dev(v[i], v_cf))
    total = g + v
    if np.any(total == 0):
        bad = [tuple(t) for t, s in zip(trips, total) if s == 0]
        raise ZeroDivisionError(f"G + V vanishes on {bad}")
    gamma = 1.0 / total
    for a in (g, v, lam, gamma):
        a.flags.writeable = False
    return CouplingScalars(lmax, tuple(trips), g, v, lam, gamma, source, dev_g, dev_v)


# --------------------------------------------------------------------------
# JSON I/O
# --------------------------------------------------------------------------

def table_records(table: CouplingScalars, *, blocks: bool = False) -> list[dict]:
    recs = []
    for i, t in enumerate(table.triplets):
        rec = {"l1": t.l1, "l2": t.l2, "l3": t.l3, "parity": t.parity(),
               "G_tilde": float(table.g_tilde[i]), "V_tilde": float(table.v_tilde[i]),
               "Lambda_im": float(table.lambda_im[i]), "Gamma": float(table.gamma[i])}
        if blocks:
            rec["cg_block"] = cg_real(t).dense().tolist()
        recs.append(rec)
    return recs


def dumps_table(table: CouplingScalars, *, blocks: bool = False) -> str:
    doc = {
        "format": TABLE_FORMAT,
        "version": 1,
        "lmax": table.lmax,
        "source": table.source,
        "max_rel_dev_g": table.max_rel_dev_g,
        "max_rel_dev_v": table.max_rel_dev_v,
        "layout": BLOCK_LAYOUT,
        "records": table_records(table, blocks=blocks),
    }
    return json.dumps(doc, indent=1)


def write_table(table: CouplingScalars, path, *, blocks: bool = False) -> None:
    Path(path).write_text(dumps_table(table, blocks=blocks))


def read_table(path) -> CouplingScalars:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != TABLE_FORMAT:
        raise ValueError(f"{path}: not a coupling table")
    recs = doc["records"]
    trips = tuple(Triplet(r["l1"], r["l2"], r["l3"]) for r in recs)
    cols = [np.array([r[k] for r in recs], dtype=float)
            for k in ("G_tilde", "V_tilde", "Lambda_im", "Gamma")]
    return CouplingScalars(doc["lmax"], trips, *cols, doc.get("source", "quadrature"),
                           doc.get("max_rel_dev_g", math.nan), doc.get("max_rel_dev_v", math.nan))
