"""Self-checks run by ``so3tp verify``: parity masks, integral vs CG blocks,
closed form vs quadrature, the combined-product identity and refinement."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .coupling import (admissible_triplets, build_table, cross_integral_block,
                       gaunt_integral_block)
from .quadrature import SAFETY_MARGIN, QuadratureGrid, gauss_product_grid, grid_from_spec
from .tensorprod import IrrepFeature, cgtp, combined_tp, gtp, vstp
from .wigner import cg_real, vtilde_closed_form

__all__ = ["CheckResult", "run_all"]


@dataclass
class CheckResult:
    name: str
    tolerance: float
    worst: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, triplet, err: float):
        self.worst = max(self.worst, float(err))
        if not err < self.tolerance:
            self.failures.append({"triplet": list(triplet), "error": float(err)})

    def as_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def block_error(integral: np.ndarray, scalar: float, cg: np.ndarray) -> float:
    """max |I - s C| relative to max |s C|; absolute max |I| when s C vanishes."""
    ref = scalar * cg
    scale = np.abs(ref).max()
    diff = np.abs(integral - ref).max()
    return diff / scale if scale else diff


def check_parity(table) -> CheckResult:
    res = CheckResult("parity_masks", 0.5)
    for t, g, v in zip(table.triplets, table.g_tilde, table.v_tilde):
        ok = (g != 0) != (v != 0) and ((g != 0) == (t.parity() == 0))
        res.record(t, 0.0 if ok else 1.0)
    return res


def check_integrals(table, grid: QuadratureGrid, tol: float = 1e-9, zero_tol: float = 1e-10):
    gaunt = CheckResult("gaunt_integral_vs_cg", tol)
    cross = CheckResult("cross_integral_vs_cg", tol)
    gaunt0 = CheckResult("gaunt_integral_vanishes_odd", zero_tol)
    cross0 = CheckResult("cross_integral_vanishes_even", zero_tol)
    for i, t in enumerate(table.triplets):
        cg = cg_real(t).dense()
        ig = gaunt_integral_block(t, grid)
        ic = cross_integral_block(t, grid)
        if t.parity():
            gaunt0.record(t, np.abs(ig).max())
            cross.record(t, block_error(ic, table.v_tilde[i], cg))
        else:
            gaunt.record(t, block_error(ig, table.g_tilde[i], cg))
            cross0.record(t, np.abs(ic).max())
    return [gaunt, gaunt0, cross, cross0]


def check_closed_form(table, tol: float = 1e-8, flip=None) -> CheckResult:
    """Closed-form V against the quadrature table; ``flip`` negates one triplet (negative control)."""
    res = CheckResult("vtilde_closed_form_vs_quadrature", tol)
    for i, t in enumerate(table.triplets):
        if not t.parity():
            continue
        cf = vtilde_closed_form(t)
        if flip is not None and tuple(t) == tuple(flip):
            cf = -cf
        q = table.v_tilde[i]
        res.record(t, abs(cf - q) / abs(q))
    return res


def check_combined(table, grid, n_pairs: int = 5, seed: int = 0, tol: float = 1e-9):
    rng = np.random.default_rng(seed)
    oracle = CheckResult("gamma_combined_vs_cgtp", tol)
    split = CheckResult("combined_equals_gtp_plus_vstp", 1e-11)
    for i, t in enumerate(table.triplets):
        for _ in range(n_pairs):
            h1 = IrrepFeature.random(t.l1, rng)
            h2 = IrrepFeature.random(t.l2, rng)
            ref = cgtp(h1, h2, t.l3).coeffs
            comb = combined_tp(h1, h2, t.l3, grid).coeffs
            parts = gtp(h1, h2, t.l3, grid).coeffs + vstp(h1, h2, t.l3, grid).coeffs
            oracle.record(t, np.linalg.norm(table.gamma[i] * comb - ref) / np.linalg.norm(ref))
            split.record(t, np.abs(comb - parts).max())
    return [oracle, split]


def check_refinement(lmax: int, tol: float = 1e-10) -> CheckResult:
    res = CheckResult("refinement_invariance", tol)
    for t in admissible_triplets(lmax):
        d = sum(t) + SAFETY_MARGIN
        lo, hi = gauss_product_grid(d), gauss_product_grid(d + 4)
        err = max(np.abs(gaunt_integral_block(t, lo) - gaunt_integral_block(t, hi)).max(),
                  np.abs(cross_integral_block(t, lo) - cross_integral_block(t, hi)).max())
        res.record(t, err)
    return res


def run_all(lmax: int = 6, quadrature: str = "gauss", *, flip_vtilde=None, seed: int = 0) -> list[CheckResult]:
    table = build_table(lmax, quadrature)
    grid = grid_from_spec(quadrature, 3 * lmax + SAFETY_MARGIN)
    checks = [check_parity(table)]
    checks += check_integrals(table, grid)
    checks.append(check_closed_form(table, flip=flip_vtilde))
    checks += check_combined(table, grid, seed=seed)
    checks.append(check_refinement(lmax))
    return checks
