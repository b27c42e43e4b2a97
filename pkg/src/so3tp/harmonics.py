"""Real spherical harmonics, their surface derivatives, and the pointwise
kernels used by the integral tensor products.

Harmonics are orthonormal on the sphere (total measure 4 pi) and follow the
real basis ``Y_lm = sum_m' W[m, m'] Y^l_m'`` of :func:`so3tp.wigner.real_basis_rotation`:

    Y_lm    = sqrt2 * N_lm P_l^m(cos t) cos(m p)               m > 0
    Y_l0    = N_l0 P_l(cos t)
    Y_l,-m  = (-1)^m sqrt2 * N_lm P_l^m(cos t) sin(m p)        m > 0

with P_l^m carrying no Condon-Shortley phase. Every Y_lm factorizes as
``ring[l, m](theta) * azimuth[m](phi)``, which is what the ring-based
transforms in :mod:`so3tp.tensorprod` exploit.

Flat coefficient vectors use the index ``l*l + l + m``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HarmonicValues",
    "PoleError",
    "SphericalPoint",
    "azimuth_factors",
    "combined_kernel",
    "cross_kernel",
    "eval_harmonics",
    "lm_index",
    "ring_factors",
]

POLE_TOL = 1e-12


class PoleError(ValueError):
    """Raised when a point sits (numerically) on a pole."""


@dataclass(frozen=True)
class SphericalPoint:
    theta: float
    phi: float

    def __post_init__(self):
        if not np.sin(self.theta) >= POLE_TOL or not 0 < self.theta < np.pi:
            raise PoleError(f"theta={self.theta!r} is not strictly inside (0, pi)")

    @property
    def cartesian(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


def _legendre(x: np.ndarray, s: np.ndarray, lmax: int) -> np.ndarray:
    """Orthonormal N_lm P_l^m(x) for 0 <= m <= l <= lmax, shape (lmax+1, lmax+1, n)."""
    q = np.zeros((lmax + 1, lmax + 1) + x.shape)
    q[0, 0] = 1 / np.sqrt(4 * np.pi)
    for m in range(1, lmax + 1):
        q[m, m] = np.sqrt((2 * m + 1) / (2 * m)) * s * q[m - 1, m - 1]
    for m in range(lmax):
        q[m + 1, m] = np.sqrt(2 * m + 3) * x * q[m, m]
    for m in range(lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            q[l, m] = a * (x * q[l - 1, m] - b * q[l - 2, m])
    return q


def ring_factors(theta, lmax: int):
    """Colatitude factors of the real harmonics.

    Returns ``(ring, dring, ring_over_sin)``, each of shape
    ``(lmax+1, 2*lmax+1, *theta.shape)`` indexed ``[l, m + lmax]`` and zero for
    |m| > l. ``dring`` is the analytic theta-derivative.
    """
    theta = np.asarray(theta, dtype=float)
    s = np.sin(theta)
    if np.any(s < POLE_TOL):
        raise PoleError("ring factors requested at a pole")
    x = np.cos(theta)
    q = _legendre(x, s, lmax + 1)
    dq = np.zeros((lmax + 1, lmax + 1) + theta.shape)
    for l in range(1, lmax + 1):
        dq[l, 0] = -np.sqrt(l * (l + 1)) * q[l, 1]
        for m in range(1, l + 1):
            dq[l, m] = 0.5 * (np.sqrt((l + m) * (l - m + 1)) * q[l, m - 1]
                              - np.sqrt((l + m + 1) * (l - m)) * q[l, m + 1])
    shape = (lmax + 1, 2 * lmax + 1) + theta.shape
    ring = np.zeros(shape)
    dring = np.zeros(shape)
    ring[:, lmax] = q[: lmax + 1, 0]
    dring[:, lmax] = dq[:, 0]
    r2 = np.sqrt(2.0)
    for m in range(1, lmax + 1):
        sign = -1.0 if m % 2 else 1.0
        ring[:, lmax + m] = r2 * q[: lmax + 1, m]
        ring[:, lmax - m] = sign * r2 * q[: lmax + 1, m]
        dring[:, lmax + m] = r2 * dq[:, m]
        dring[:, lmax - m] = sign * r2 * dq[:, m]
    return ring, dring, ring / s


def azimuth_factors(phi, lmax: int):
    """Longitude factors ``(az, daz)`` of shape ``(2*lmax+1, *phi.shape)``.

    az[m] is cos(m phi) for m >= 0 and sin(|m| phi) for m < 0; daz is d/dphi.
    """
    phi = np.asarray(phi, dtype=float)
    m = np.arange(-lmax, lmax + 1).reshape((-1,) + (1,) * phi.ndim)
    am = np.abs(m) * phi
    az = np.where(m >= 0, np.cos(am), np.sin(am))
    daz = np.where(m >= 0, -np.abs(m) * np.sin(am), np.abs(m) * np.cos(am))
    return az, daz


@dataclass(frozen=True)
class HarmonicValues:
    """Y, dY/dtheta and (1/sin theta) dY/dphi for all (l, m), l <= lmax.

    Arrays have shape ``((lmax+1)**2, *points)`` with flat index l*l + l + m.
    """

    lmax: int
    value: np.ndarray
    dtheta: np.ndarray
    dphi_over_sin: np.ndarray

    def block(self, l: int) -> slice:
        return slice(l * l, (l + 1) * (l + 1))

    def gradient(self, lm: int) -> tuple[np.ndarray, np.ndarray]:
        return self.dtheta[lm], self.dphi_over_sin[lm]


def eval_harmonics(theta, phi=None, lmax: int = 0) -> HarmonicValues:
    """Evaluate real harmonics and surface derivatives at one or more points.

    ``theta`` may also be a :class:`SphericalPoint`, in which case ``phi`` is
    taken from it. Derivatives are analytic.
    """
    if isinstance(theta, SphericalPoint):
        theta, phi = theta.theta, theta.phi
    if lmax < 0:
        raise ValueError("lmax must be non-negative")
    theta = np.asarray(theta, dtype=float)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
    ring, dring, ring_s = ring_factors(theta, lmax)
    az, daz = azimuth_factors(phi, lmax)
    n = (lmax + 1) ** 2
    value = np.empty((n,) + theta.shape)
    dtheta = np.empty_like(value)
    dphi = np.empty_like(value)
    for l in range(lmax + 1):
        cols = slice(lmax - l, lmax + l + 1)
        value[l * l:(l + 1) ** 2] = ring[l, cols] * az[cols]
        dtheta[l * l:(l + 1) ** 2] = dring[l, cols] * az[cols]
        dphi[l * l:(l + 1) ** 2] = ring_s[l, cols] * daz[cols]
    return HarmonicValues(lmax, value, dtheta, dphi)


def cross_kernel(grad1, grad2):
    """Radial component of grad F1 x grad F2 for tangential gradients.

    Gradients are ``(d/dtheta, (1/sin theta) d/dphi)`` pairs; in that frame
    theta_hat x phi_hat = r_hat.
    """
    return grad1[0] * grad2[1] - grad1[1] * grad2[0]


def combined_kernel(f1, grad1, f2, grad2):
    """(F1 r + r x grad F1) . (F2 r + grad F2) for tangential gradients.

    The radial/tangential cross terms vanish identically, leaving
    F1 F2 + (r x grad F1) . grad F2 = F1 F2 + (grad F1 x grad F2) . r.
    """
    return f1 * f2 + cross_kernel(grad1, grad2)
