"""Generate an equal-weight spherical t-design by nonlinear least squares.

Solves sum_i Y_lm(r_i) = 0 for all 1 <= l <= t and writes the points as
unit vectors, one per line, with a ``# degree: t`` header.

    python scripts/make_tdesign.py --degree 12 --points 96 -o src/so3tp/data/des.3.96.12.txt
"""
import argparse

import numpy as np
from scipy.optimize import least_squares

from so3tp.harmonics import eval_harmonics
from so3tp.quadrature import exactness_error, QuadratureGrid, GridKind


def to_angles(x):
    # points are free 3-vectors projected to the sphere, so the solver never meets a pole chart
    v = x.reshape(-1, 3)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return np.arccos(np.clip(v[:, 2], -1, 1)), np.arctan2(v[:, 1], v[:, 0])


def residuals(x, t):
    theta, phi = to_angles(x)
    return eval_harmonics(theta, phi, t).value[1:].sum(axis=1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degree", type=int, required=True)
    ap.add_argument("--points", type=int, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tries", type=int, default=20)
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n, t = args.points, args.degree
    for attempt in range(args.tries):
        x0 = rng.standard_normal(3 * n)
        sol = least_squares(residuals, x0, args=(t,), method="trf",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        theta, phi = to_angles(sol.x)
        phi = np.mod(phi, 2 * np.pi)
        grid = QuadratureGrid(theta, phi, np.full(n, 4 * np.pi / n), t, GridKind.TDESIGN)
        err = exactness_error(grid)
        print(f"attempt {attempt}: exactness error {err:.3e}")
        if err < 1e-13:
            break
    else:
        raise SystemExit("no design found")
    xyz = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
    with open(args.output, "w") as fh:
        fh.write(f"# degree: {t}\n# points: {n}\n# equal-weight spherical design, exactness error {err:.2e}\n")
        for row in xyz:
            fh.write(" ".join(f"{v: .17e}" for v in row) + "\n")


if __name__ == "__main__":
    main()
