"""Wall-clock scaling of the dense CG layer against the integral layers."""
from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .quadrature import SAFETY_MARGIN, gauss_product_grid
from .tensorprod import (DenseWeights, MultiIrrepFeature, RankRWeights, cgtp_layer_plan,
                         mimo_layer_cgtp, mimo_layer_integral)

__all__ = ["BenchRecord", "METHODS", "bench_scaling", "fit_slopes", "records_to_csv"]

METHODS = ("cgtp_dense", "integral_gaunt", "integral_combined")


@dataclass(frozen=True)
class BenchRecord:
    method: str
    L: int
    R: int
    median_seconds: float


def _time(fn, repeats: int) -> float:
    fn()  # warmup, discarded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_scaling(Lvalues, R: int = 1, repeats: int = 5, methods=METHODS, seed: int = 0) -> list[BenchRecord]:
    """Median runtime of one layer call per method and L.

    Table and grid construction happen outside the timed region; the timed
    call is a single forward evaluation on random inputs.
    """
    Lvalues = list(Lvalues)
    if Lvalues != sorted(Lvalues):
        raise ValueError("Lvalues must be ascending")
    rng = np.random.default_rng(seed)
    recs = []
    for L in Lvalues:
        h1 = MultiIrrepFeature.random(L, rng)
        h2 = MultiIrrepFeature.random(L, rng)
        w = RankRWeights.random(R, L, rng)
        for method in methods:
            if method == "cgtp_dense":
                plan = cgtp_layer_plan(L, L, L)
                dense = DenseWeights(w.product())
                fn = lambda: mimo_layer_cgtp(h1, h2, dense, plan=plan)
            else:
                mode = method.split("_", 1)[1]
                grid = gauss_product_grid(3 * L + SAFETY_MARGIN)
                fn = lambda: mimo_layer_integral(h1, h2, w, grid, mode)
            recs.append(BenchRecord(method, L, R, _time(fn, repeats)))
    return recs


def fit_slopes(records) -> dict[str, float]:
    """Least-squares slope of log(time) against log(L) per method."""
    out = {}
    for method in sorted({r.method for r in records}):
        rs = [r for r in records if r.method == method]
        if len(rs) < 2:
            continue
        x = np.log([r.L for r in rs])
        y = np.log([r.median_seconds for r in rs])
        out[method] = float(np.polyfit(x, y, 1)[0])
    return out


def records_to_csv(records, fh=None) -> str:
    buf = fh or io.StringIO()
    wr = csv.writer(buf)
    wr.writerow(["method", "L", "R", "median_seconds"])
    for r in records:
        wr.writerow([r.method, r.L, r.R, f"{r.median_seconds:.6e}"])
    return buf.getvalue() if fh is None else ""
