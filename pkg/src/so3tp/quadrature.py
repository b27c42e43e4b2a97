"""Spherical quadrature: Gauss-Legendre x equiangular product grids, spherical
t-design loading, and cached basis tables over grid nodes."""
from __future__ import annotations

import enum
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .harmonics import POLE_TOL, HarmonicValues, SphericalPoint, eval_harmonics, ring_factors, azimuth_factors

__all__ = [
    "BasisTable",
    "DesignValidationError",
    "FormatError",
    "GridKind",
    "QuadratureGrid",
    "basis_table",
    "gauss_product_grid",
    "grid_from_spec",
    "integrate",
    "load_tdesign",
    "triplet_degree",
]

DESIGN_DIR_ENV = "SO3TP_DESIGN_DIR"
SAFETY_MARGIN = 2


class FormatError(ValueError):
    pass


class DesignValidationError(ValueError):
    pass


class GridKind(enum.Enum):
    GAUSS_PRODUCT = "gauss"
    TDESIGN = "design"


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes (theta-major for product grids) with positive weights.

    ``degree`` is the exactness guarantee: every spherical polynomial of
    degree <= degree integrates exactly. Product grids also keep their ring
    structure (``ring_theta``, ``ring_weights``, ``azimuths``) so transforms
    can factorize.
    """

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    degree: int
    kind: GridKind
    ring_theta: np.ndarray | None = None
    ring_weights: np.ndarray | None = None
    azimuths: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def nodes(self) -> list[SphericalPoint]:
        return [SphericalPoint(t, p) for t, p in zip(self.theta, self.phi)]

    @property
    def is_product(self) -> bool:
        return self.kind is GridKind.GAUSS_PRODUCT

    def __repr__(self):
        return f"QuadratureGrid(kind={self.kind.value}, degree={self.degree}, size={self.size})"


@lru_cache(maxsize=64)
def gauss_product_grid(t: int) -> QuadratureGrid:
    """Product rule exact through degree t.

    floor(t/2)+1 Gauss-Legendre nodes in cos(theta) times t+1 equispaced
    longitudes. No node lies on a pole.
    """
    if t < 0:
        raise ValueError("degree must be non-negative")
    x, wx = np.polynomial.legendre.leggauss(t // 2 + 1)
    ring_theta = np.arccos(x)[::-1]
    ring_weights = wx[::-1].copy()
    nphi = t + 1
    azimuths = 2 * np.pi * np.arange(nphi) / nphi
    theta = np.repeat(ring_theta, nphi)
    phi = np.tile(azimuths, len(ring_theta))
    weights = np.repeat(ring_weights, nphi) * (2 * np.pi / nphi)
    for a in (theta, phi, weights, ring_theta, ring_weights, azimuths):
        a.flags.writeable = False
    return QuadratureGrid(theta, phi, weights, t, GridKind.GAUSS_PRODUCT,
                          ring_theta, ring_weights, azimuths)


def triplet_degree(l1: int, l2: int, l3: int, margin: int = SAFETY_MARGIN) -> int:
    return l1 + l2 + l3 + margin


def integrate(grid: QuadratureGrid, values) -> np.ndarray | float:
    """Weighted sum over nodes along the last axis."""
    values = np.asarray(values)
    if values.shape[-1] != grid.size:
        raise ValueError(f"expected {grid.size} node values, got {values.shape[-1]}")
    # np.sum over a contiguous axis uses a fixed pairwise tree
    out = np.sum(values * grid.weights, axis=-1)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# t-designs
# --------------------------------------------------------------------------

_DEGREE_HEADER = re.compile(r"#\s*degree\s*[:=]\s*(\d+)", re.IGNORECASE)
_HS_NAME = re.compile(r"des\.3\.(\d+)\.(\d+)\.txt$")

# fixed generic rotation applied when a design point falls on a pole
_TILT = Rotation.from_euler("zyz", [0.3, 0.2, 0.1]).as_matrix()


def _resolve_design(path) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DESIGN_DIR_ENV):
        p = Path(os.environ[DESIGN_DIR_ENV]) / p
    if not p.exists():
        raise FileNotFoundError(f"t-design file not found: {path}")
    return p


def load_tdesign(path, degree: int | None = None, *, atol: float = 1e-8) -> QuadratureGrid:
    """Load unit 3-vectors (one per line) as an equal-weight rule.

    The degree comes from ``degree``, a ``# degree: t`` header, or a
    Hardin-Sloane style filename ``des.3.N.t.txt``. Exactness is re-checked
    for every (l, m) with l <= degree before returning.
    """
    p = _resolve_design(path)
    rows = []
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = _DEGREE_HEADER.match(stripped)
            if m and degree is None:
                degree = int(m.group(1))
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise FormatError(f"{p.name}:{lineno}: expected 3 coordinates, got {len(parts)}")
        try:
            v = np.array([float(x) for x in parts])
        except ValueError as exc:
            raise FormatError(f"{p.name}:{lineno}: {exc}") from None
        if abs(np.linalg.norm(v) - 1) > 1e-8:
            raise FormatError(f"{p.name}:{lineno}: not a unit vector (norm {np.linalg.norm(v):.12g})")
        rows.append(v / np.linalg.norm(v))
    if not rows:
        raise FormatError(f"{p.name}: no points")
    if degree is None:
        m = _HS_NAME.search(p.name)
        if not m:
            raise FormatError(f"{p.name}: degree not declared in header or filename")
        degree = int(m.group(2))
    xyz = np.array(rows)
    if np.any(np.hypot(xyz[:, 0], xyz[:, 1]) < 1e-9):
        xyz = xyz @ _TILT.T
        xyz /= np.linalg.norm(xyz, axis=1, keepdims=True)
    theta = np.arccos(np.clip(xyz[:, 2], -1, 1))
    phi = np.mod(np.arctan2(xyz[:, 1], xyz[:, 0]), 2 * np.pi)
    n = len(theta)
    grid = QuadratureGrid(theta, phi, np.full(n, 4 * np.pi / n), degree, GridKind.TDESIGN)
    err = exactness_error(grid)
    if err > atol:
        raise DesignValidationError(
            f"{p.name}: not a {degree}-design (max exactness error {err:.3e})")
    return grid


def exactness_error(grid: QuadratureGrid, degree: int | None = None) -> float:
    """max |integral of Y_lm - sqrt(4 pi) delta_l0| over l <= degree."""
    degree = grid.degree if degree is None else degree
    if np.any(np.sin(grid.theta) < POLE_TOL):
        raise DesignValidationError("grid has a node on a pole")
    ring, _, _ = ring_factors(grid.theta, degree)
    az, _ = azimuth_factors(grid.phi, degree)
    err = 0.0
    for l in range(degree + 1):
        cols = slice(degree - l, degree + l + 1)
        vals = integrate(grid, ring[l, cols] * az[cols])
        if l == 0:
            vals = vals - np.sqrt(4 * np.pi)
        err = max(err, float(np.abs(vals).max()))
    return err


def grid_from_spec(spec: str, degree: int) -> QuadratureGrid:
    """Parse ``gauss`` or ``design:<path>`` and return a grid of adequate degree."""
    if spec == "gauss":
        return gauss_product_grid(degree)
    if spec.startswith("design:"):
        grid = load_tdesign(spec[len("design:"):])
        if grid.degree < degree:
            raise ValueError(f"design has degree {grid.degree} < required {degree}")
        return grid
    raise ValueError(f"unknown quadrature spec {spec!r} (expected gauss or design:<path>)")


# --------------------------------------------------------------------------
# basis tables
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BasisTable:
    grid: QuadratureGrid
    harmonics: HarmonicValues

    @property
    def lmax(self) -> int:
        return self.harmonics.lmax

    def require(self, l: int) -> None:
        if l > self.lmax:
            raise ValueError(f"basis table holds l <= {self.lmax}, needed {l}")

    def block(self, l: int):
        """(values, dtheta, dphi_over_sin) rows for degree l, shape (2l+1, nodes)."""
        self.require(l)
        s = slice(l * l, (l + 1) ** 2)
        h = self.harmonics
        return h.value[s], h.dtheta[s], h.dphi_over_sin[s]


@lru_cache(maxsize=32)
def basis_table(grid: QuadratureGrid, lmax: int) -> BasisTable:
    return BasisTable(grid, eval_harmonics(grid.theta, grid.phi, lmax))
