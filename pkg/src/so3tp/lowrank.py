"""Low-rank CP approximations of inverse coupling tensors.

The fit minimizes the mean relative squared error

    loss = (1/N) sum_i (y_i - yhat_i)^2 / y_i^2,    yhat = sum_r a[l1,r] b[l2,r] c[l3,r]

over the N selection-rule-admissible nonzero entries. Because the weights
1/y^2 are fixed, every factor row has a closed-form weighted least-squares
update, so alternating least squares descends monotonically.
"""
from __future__ import annotations

import enum
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingScalars
from .tensorprod import RankRWeights

__all__ = [
    "CPFactors",
    "FitReport",
    "RatioSignError",
    "SingularUpdate",
    "SparseTarget",
    "TargetKind",
    "build_target",
    "fit_cp",
    "fit_metrics",
    "normalized_init_weights",
]

MAX_SWEEPS = 300
REL_TOL = 1e-14
# losses below this are rounding noise (relative errors ~1e-12)
LOSS_FLOOR = 1e-24
LOG2 = np.log10(2.0)


class SingularUpdate(np.linalg.LinAlgError):
    """A weighted least-squares row update was rank-deficient."""


class RatioSignError(ArithmeticError):
    """Some reconstructed entries have the wrong sign."""


class TargetKind(enum.Enum):
    INV_VTILDE = "inv_vtilde"
    INV_GTILDE = "inv_gtilde"
    GAMMA = "gamma"
    INV_LAMBDA_IM = "inv_lambda_im"


@dataclass(frozen=True)
class SparseTarget:
    """Nonzero target entries y at integer coordinates (l1, l2, l3)."""

    kind: TargetKind
    lmax: int
    index: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


def build_target(kind, table: CouplingScalars) -> SparseTarget:
    """Reciprocal coupling scalars on the triplets where they are defined.

    ``inv_vtilde`` keeps odd triplets, ``inv_gtilde`` even ones, ``gamma``
    all of them and ``inv_lambda_im`` the odd triplets of 1 / Im(Lambda).
    """
    kind = TargetKind(kind)
    src = {TargetKind.INV_VTILDE: table.v_tilde, TargetKind.INV_GTILDE: table.g_tilde,
           TargetKind.INV_LAMBDA_IM: table.lambda_im, TargetKind.GAMMA: None}[kind]
    idx = np.array([tuple(t) for t in table.triplets], dtype=np.int64).reshape(-1, 3)
    if src is None:
        return SparseTarget(kind, table.lmax, idx, np.array(table.gamma, dtype=float))
    keep = src != 0
    return SparseTarget(kind, table.lmax, idx[keep], 1.0 / src[keep])


@dataclass(frozen=True)
class CPFactors:
    """Factor matrices of shape (lmax+1, R)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    @property
    def lmax(self) -> int:
        return self.a.shape[0] - 1

    def reconstruct(self, index: np.ndarray) -> np.ndarray:
        i = np.asarray(index)
        return np.sum(self.a[i[:, 0]] * self.b[i[:, 1]] * self.c[i[:, 2]], axis=1)

    def dense(self) -> np.ndarray:
        return np.einsum("ir,jr,kr->ijk", self.a, self.b, self.c)


@dataclass(frozen=True)
class FitReport:
    sigma_log: float
    frac_within_2x: float
    r_squared: float
    loss: float
    n_entries: int
    n_sign_errors: int = 0
    rank: int = 0
    history: tuple = ()


def _loss(y, yhat) -> float:
    return float(np.mean(((y - yhat) / y) ** 2))


def fit_metrics(target: SparseTarget, factors: CPFactors, *, strict: bool = False) -> FitReport:
    """Log-ratio spread, factor-of-two coverage and R^2 of a fit.

    Entries whose ratio y / yhat is not positive count as outside the factor
    of two. With ``strict=True`` they raise :class:`RatioSignError`.
    """
    if factors.lmax < target.index.max(initial=0):
        raise ValueError("factors do not cover the target index range")
    y = target.y
    yhat = factors.reconstruct(target.index)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = y / yhat
    bad = ~(ratio > 0)
    n_bad = int(bad.sum())
    if n_bad and strict:
        raise RatioSignError(f"{n_bad} of {len(y)} entries have non-positive y / yhat")
    with np.errstate(divide="ignore"):
        lr = np.log10(np.abs(ratio))
    finite = np.isfinite(lr)
    sigma = float(np.std(lr[finite])) if finite.any() else np.inf
    if not finite.all():
        sigma = np.inf
    # small slack so an exact factor of two lands inside
    within = (~bad) & (np.abs(lr) <= LOG2 * (1 + 1e-12))
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -np.inf)
    return FitReport(sigma, float(within.mean()), r2, _loss(y, yhat), len(y), n_bad, factors.rank)


def _update(F, mode, others, index, y, groups):
    """Closed-form weighted LS update of every row of factor ``F``."""
    z = others[0][index[:, mode[0]]] * others[1][index[:, mode[1]]] / y[:, None]
    R = F.shape[1]
    for row, sel in groups:
        A = z[sel]
        sol, _, rank, _ = np.linalg.lstsq(A, np.ones(len(sel)), rcond=None)
        if rank < min(R, len(sel)):
            raise SingularUpdate(f"row {row}: rank {rank} < {min(R, len(sel))}")
        F[row] = sol


def _groups(col: np.ndarray):
    return [(int(v), np.flatnonzero(col == v)) for v in np.unique(col)]


def _als(target, factors, max_sweeps, tol):
    a, b, c = factors
    idx, y = target.index, target.y
    groups = [_groups(idx[:, k]) for k in range(3)]
    hist = [_loss(y, np.sum(a[idx[:, 0]] * b[idx[:, 1]] * c[idx[:, 2]], axis=1))]
    for _ in range(max_sweeps):
        _update(a, (1, 2), (b, c), idx, y, groups[0])
        _update(b, (0, 2), (a, c), idx, y, groups[1])
        _update(c, (0, 1), (a, b), idx, y, groups[2])
        cur = _loss(y, np.sum(a[idx[:, 0]] * b[idx[:, 1]] * c[idx[:, 2]], axis=1))
        # each block update is an exact minimization, so the loss cannot rise
        assert cur <= hist[-1] * (1 + 1e-12) + LOSS_FLOOR, "ALS loss increased"
        hist.append(cur)
        if cur < LOSS_FLOOR or abs(hist[-2] - cur) <= tol * hist[-2]:
            break
    return hist


def fit_cp(target: SparseTarget, R: int, restarts: int = 5, seed: int = 0, *,
           max_sweeps: int = MAX_SWEEPS, tol: float = REL_TOL,
           workers: int | None = None) -> tuple[CPFactors, FitReport]:
    """Best-of-``restarts`` rank-R CP fit by weighted alternating least squares.

    Parameters
    ----------
    target : SparseTarget
    R : int
        CP rank, at least 1.
    restarts : int
        Independent unit-normal initializations drawn from one seeded generator
        and run concurrently; the result is independent of thread scheduling.
    seed : int
    workers : int, optional
        Thread count for the restarts; defaults to one per restart up to the CPU count.

    Returns
    -------
    factors, report
        The restart with the lowest loss; ``report.history`` holds its per-sweep losses.

    Raises
    ------
    SingularUpdate
        Only if every restart hit a rank-deficient update.
    """
    if R < 1:
        raise ValueError("rank must be at least 1")
    if len(target) == 0:
        raise ValueError("empty target")
    rng = np.random.default_rng(seed)
    n = target.lmax + 1
    # all draws happen up front, so the result does not depend on scheduling
    inits = [[rng.standard_normal((n, R)) for _ in range(3)] for _ in range(restarts)]

    def run(init):
        try:
            return _als(target, init, max_sweeps, tol), None
        except SingularUpdate as exc:
            return None, exc

    workers = workers or min(restarts, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, inits))
    best = None
    last_err = None
    for init, (hist, err) in zip(inits, results):
        if err is not None:
            last_err = err
            continue
        if best is None or hist[-1] < best[1][-1]:
            best = (init, hist)
    if best is None:
        raise SingularUpdate(f"all {restarts} restarts failed: {last_err}")
    factors = CPFactors(*best[0])
    rep = fit_metrics(target, factors)
    if rep.n_sign_errors:
        warnings.warn(f"rank-{R} fit has {rep.n_sign_errors} sign errors", RuntimeWarning, stacklevel=2)
    return factors, FitReport(rep.sigma_log, rep.frac_within_2x, rep.r_squared, rep.loss,
                              rep.n_entries, rep.n_sign_errors, R, tuple(best[1]))


def normalized_init_weights(factors: CPFactors, base: RankRWeights) -> RankRWeights:
    """Scale each rank-k weight triple by the k-th CP columns.

    out[k, l3] *= c[l3, k], in1[k, l1] *= a[l1, k], in2[k, l2] *= b[l2, k], so the
    effective weights become sum_k a b c w w w.
    """
    if base.rank != factors.rank:
        raise ValueError(f"base rank {base.rank} != factor rank {factors.rank}")
    lo, l1, l2 = base.lmax
    if max(lo, l1, l2) > factors.lmax:
        raise ValueError("factors do not cover the layer's l range")
    return RankRWeights(base.out * factors.c[: lo + 1].T,
                        base.in1 * factors.a[: l1 + 1].T,
                        base.in2 * factors.b[: l2 + 1].T)
