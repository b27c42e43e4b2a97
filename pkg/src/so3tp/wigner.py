"""Clebsch-Gordan coefficients, Wigner-9j special shapes and the closed-form
antisymmetric coupling scalar.

Complex coefficients follow the Condon-Shortley convention and are evaluated
with exact integer/rational arithmetic (Racah summation). Real coefficients use
the basis change ``Y_lm = sum_m' W[m, m'] Y^l_m'`` together with the
``i**(l1 + l2 - l3)`` phase used by e3nn, which makes every block real.

All m-indexed arrays are ordered m = -l..l.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numba
import numpy as np

__all__ = [
    "Basis",
    "CGTensor",
    "DomainError",
    "NonRealResult",
    "NinejDelta",
    "Triplet",
    "Wigner9jShape",
    "cg_complex",
    "cg_complex_block",
    "cg_complex_table_float",
    "cg_m0_closed_form",
    "cg_real",
    "cg_real_block",
    "cg_real_entry",
    "gtilde_closed_form",
    "lambda_closed_form",
    "real_basis_rotation",
    "vtilde_closed_form",
    "wigner9j_special",
]


class DomainError(ValueError):
    """A closed form was evaluated outside its domain."""


class NonRealResult(ArithmeticError):
    """A real-basis block kept an imaginary part (phase convention bug)."""


@dataclass(frozen=True, order=True)
class Triplet:
    l1: int
    l2: int
    l3: int

    def __post_init__(self):
        for name in ("l1", "l2", "l3"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    def admissible(self) -> bool:
        return abs(self.l1 - self.l2) <= self.l3 <= self.l1 + self.l2

    def parity(self) -> int:
        return (self.l1 + self.l2 + self.l3) % 2

    @property
    def antisymmetric(self) -> bool:
        return self.parity() == 1

    def swapped(self) -> "Triplet":
        return Triplet(self.l2, self.l1, self.l3)

    def __iter__(self):
        return iter((self.l1, self.l2, self.l3))


def _as_triplet(t) -> Triplet:
    return t if isinstance(t, Triplet) else Triplet(*t)


# --------------------------------------------------------------------------
# exact complex Clebsch-Gordan coefficients
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _fact(n: int) -> int:
    return math.factorial(n)


def _signed_sqrt(sign: int, square: Fraction) -> float:
    if sign == 0 or square == 0:
        return 0.0
    return math.copysign(math.sqrt(square), sign)


@lru_cache(maxsize=None)
def _cg_exact(l1: int, m1: int, l2: int, m2: int, l3: int, m3: int) -> tuple[int, Fraction]:
    """Return (sign, value**2) of the complex CG coefficient as exact rationals."""
    if m1 + m2 != m3 or abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return 0, Fraction(0)
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        return 0, Fraction(0)
    f = _fact
    pre = Fraction(
        (2 * l3 + 1) * f(l3 + l1 - l2) * f(l3 - l1 + l2) * f(l1 + l2 - l3)
        * f(l3 + m3) * f(l3 - m3) * f(l1 - m1) * f(l1 + m1) * f(l2 - m2) * f(l2 + m2),
        f(l1 + l2 + l3 + 1),
    )
    kmin = max(0, l2 - l3 - m1, l1 - l3 + m2)
    kmax = min(l1 + l2 - l3, l1 - m1, l2 + m2)
    s = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (f(k) * f(l1 + l2 - l3 - k) * f(l1 - m1 - k) * f(l2 + m2 - k)
               * f(l3 - l2 + m1 + k) * f(l3 - l1 - m2 + k))
        s += Fraction(-1 if k % 2 else 1, den)
    if s == 0:
        return 0, Fraction(0)
    return (1 if s > 0 else -1), pre * s * s


def cg_complex(l1: int, m1: int, l2: int, m2: int, l3: int, m3: int) -> float:
    """Condon-Shortley coefficient <l1 m1; l2 m2 | l3 m3>.

    Zero whenever a selection rule fails. Evaluated exactly and rounded once.
    """
    if min(l1, l2, l3) < 0:
        raise ValueError("angular momenta must be non-negative")
    return _signed_sqrt(*_cg_exact(l1, m1, l2, m2, l3, m3))


@lru_cache(maxsize=None)
def cg_complex_block(l1: int, l2: int, l3: int) -> np.ndarray:
    """Dense complex-basis block indexed ``[m1 + l1, m2 + l2, m3 + l3]``."""
    out = np.zeros((2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1))
    if abs(l1 - l2) <= l3 <= l1 + l2:
        for m1 in range(-l1, l1 + 1):
            for m2 in range(max(-l2, -l3 - m1), min(l2, l3 - m1) + 1):
                out[m1 + l1, m2 + l2, m1 + m2 + l3] = cg_complex(l1, m1, l2, m2, l3, m1 + m2)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def _cg_m0_exact(l1: int, l2: int, l3: int) -> tuple[int, Fraction]:
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        return 0, Fraction(0)
    big_j = l1 + l2 + l3
    if big_j % 2:
        return 0, Fraction(0)
    g = big_j // 2
    f = _fact
    root = Fraction(f(g), f(g - l1) * f(g - l2) * f(g - l3))
    square = (2 * l3 + 1) * root * root * Fraction(
        f(2 * g - 2 * l1) * f(2 * g - 2 * l2) * f(2 * g - 2 * l3), f(2 * g + 1))
    return (-1) ** (g - l3), square


def cg_m0_closed_form(l1: int, l2: int, l3: int) -> float:
    """<l1 0; l2 0 | l3 0> from the factorial closed form (zero for odd l1+l2+l3)."""
    return _signed_sqrt(*_cg_m0_exact(l1, l2, l3))


# --------------------------------------------------------------------------
# real basis
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def real_basis_rotation(l: int) -> np.ndarray:
    """Unitary W with ``Y_lm = sum_m' W[m + l, m' + l] Y^l_m'``.

    For m > 0::

        Y_{l m}  = (-1)^m / sqrt2 * (Y^l_m + (-1)^m Y^l_{-m})
        Y_{l -m} = 1 / (sqrt2 i)  * (Y^l_m - (-1)^m Y^l_{-m})
    """
    if l < 0:
        raise ValueError("l must be non-negative")
    w = np.zeros((2 * l + 1, 2 * l + 1), dtype=complex)
    w[l, l] = 1.0
    r = 1 / math.sqrt(2)
    for m in range(1, l + 1):
        sign = -1.0 if m % 2 else 1.0
        w[l + m, l + m] = sign * r
        w[l + m, l - m] = r
        w[l - m, l + m] = -1j * r
        w[l - m, l - m] = sign * 1j * r
    w.flags.writeable = False
    return w


class Basis(enum.Enum):
    COMPLEX_CONDON_SHORTLEY = "complex"
    REAL_E3NN = "real"


@dataclass(frozen=True)
class CGTensor:
    """Sparse CG block: only structurally nonzero entries are stored.

    ``index`` holds (m1 + l1, m2 + l2, m3 + l3) offsets, one row per entry.
    """

    triplet: Triplet
    index: np.ndarray
    values: np.ndarray
    basis: Basis = Basis.REAL_E3NN
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> tuple[int, int, int]:
        l1, l2, l3 = self.triplet
        return 2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1

    @property
    def entries(self) -> dict[tuple[int, int, int], float]:
        l1, l2, l3 = self.triplet
        return {(int(a) - l1, int(b) - l2, int(c) - l3): float(v)
                for (a, b, c), v in zip(self.index, self.values)}

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        out = np.zeros(self.shape)
        out[tuple(self.index.T)] = self.values
        return out

    def contract(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """out[m3] = sum over stored entries of C * x1[m1] * x2[m2]."""
        i1, i2, i3 = self.index.T
        prod = self.values * x1[i1] * x2[i2]
        return np.bincount(i3, weights=prod, minlength=self.shape[2])


def _realify(l1: int, l2: int, l3: int, m1c: np.ndarray, m2c: np.ndarray,
             cvals: np.ndarray, *, tol: float = 1e-12):
    """Rotate complex CG entries (m1', m2', m1'+m2') into the real e3nn basis.

    Each real entry receives contributions from at most a +/- pair of complex
    entries, which either add or cancel exactly; cancelled entries are dropped.
    Returns (index array, real values).
    """
    w1, w2, w3 = (real_basis_rotation(l) for l in (l1, l2, l3))
    m3c = m1c + m2c
    rows, contrib = [], []
    # real row m has nonzeros only at complex columns m' = +-|m|
    # for m' = 0 the flipped row coincides with the unflipped one; count it once
    for f1 in (1, -1):
        r1 = f1 * m1c
        for f2 in (1, -1):
            r2 = f2 * m2c
            for f3 in (1, -1):
                r3 = f3 * m3c
                once = ((f1 == 1) | (m1c != 0)) & ((f2 == 1) | (m2c != 0)) & ((f3 == 1) | (m3c != 0))
                coef = (w1[r1 + l1, m1c + l1] * w2[r2 + l2, m2c + l2]
                        * np.conj(w3[r3 + l3, m3c + l3]) * cvals * once)
                rows.append(np.stack([r1 + l1, r2 + l2, r3 + l3], axis=1))
                contrib.append(coef)
    rows = np.concatenate(rows)
    contrib = np.concatenate(contrib)
    keep = contrib != 0
    rows, contrib = rows[keep], contrib[keep]
    n2, n3 = 2 * l2 + 1, 2 * l3 + 1
    lin = (rows[:, 0] * n2 + rows[:, 1]) * n3 + rows[:, 2]
    uniq, inv = np.unique(lin, return_inverse=True)
    total = np.zeros(len(uniq), dtype=complex)
    np.add.at(total, inv, contrib)
    scale = np.zeros(len(uniq))
    np.add.at(scale, inv, np.abs(contrib))
    total *= 1j ** ((l1 + l2 - l3) % 4)
    if total.size and np.abs(total.imag).max() > tol:
        raise NonRealResult(
            f"real CG block ({l1},{l2},{l3}) has imaginary residual "
            f"{np.abs(total.imag).max():.3e}")
    vals = total.real
    nonzero = np.abs(vals) > 1e-10 * scale
    uniq, vals = uniq[nonzero], vals[nonzero]
    idx = np.stack([uniq // (n2 * n3), (uniq // n3) % n2, uniq % n3], axis=1)
    return idx, vals


def _complex_entries(l1: int, l2: int, l3: int):
    m1, m2 = np.meshgrid(np.arange(-l1, l1 + 1), np.arange(-l2, l2 + 1), indexing="ij")
    m1, m2 = m1.ravel(), m2.ravel()
    ok = np.abs(m1 + m2) <= l3
    m1, m2 = m1[ok], m2[ok]
    vals = np.array([cg_complex(l1, a, l2, b, l3, a + b) for a, b in zip(m1.tolist(), m2.tolist())])
    nz = vals != 0
    return m1[nz], m2[nz], vals[nz]


@lru_cache(maxsize=None)
def cg_real(triplet) -> CGTensor:
    """Exact real-basis (e3nn phase) CG block as a sparse tensor."""
    t = _as_triplet(triplet)
    if not t.admissible():
        raise ValueError(f"triplet {tuple(t)} violates the triangle condition")
    m1, m2, vals = _complex_entries(*t)
    idx, rvals = _realify(t.l1, t.l2, t.l3, m1, m2, vals)
    idx.flags.writeable = False
    rvals.flags.writeable = False
    return CGTensor(t, idx, rvals)


def cg_real_block(l1: int, l2: int, l3: int) -> np.ndarray:
    """Dense real block indexed ``[m1 + l1, m2 + l2, m3 + l3]``."""
    return cg_real(Triplet(l1, l2, l3)).dense()


def cg_real_entry(l1: int, m1: int, l2: int, m2: int, l3: int, m3: int) -> float:
    """A single real-basis entry from at most four complex coefficients."""
    if abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return 0.0
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        return 0.0
    w1, w2, w3 = (real_basis_rotation(l) for l in (l1, l2, l3))
    total = 0j
    for a in {abs(m1), -abs(m1)}:
        for b in {abs(m2), -abs(m2)}:
            c = a + b
            if abs(c) != abs(m3):
                continue
            cg = cg_complex(l1, a, l2, b, l3, c)
            if cg:
                total += w1[m1 + l1, a + l1] * w2[m2 + l2, b + l2] * np.conj(w3[m3 + l3, c + l3]) * cg
    total *= 1j ** ((l1 + l2 - l3) % 4)
    if abs(total.imag) > 1e-12:
        raise NonRealResult(f"entry ({l1},{m1},{l2},{m2},{l3},{m3}) is not real")
    return float(total.real)


# --------------------------------------------------------------------------
# floating-point CG for large l (benchmark-scale tables)
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _threej_over_l3(l1, l2, m1, m2, out):
    """Fill out[l3] with 3j(l3 l1 l2; -M m1 m2), M = m1 + m2, for all l3.

    Two-sided three-term recursion in l3: forward from the lower end and
    backward from the upper end, joined at the top of the classically
    allowed region; then normalized and sign-fixed at l3 = l1 + l2.
    """
    big_m = m1 + m2
    jmin = max(abs(l1 - l2), abs(big_m))
    jmax = l1 + l2
    n = jmax - jmin + 1
    for j in range(out.shape[0]):
        out[j] = 0.0
    if n <= 0:
        return
    x = l1 * (l1 + 1) - l2 * (l2 + 1)
    delta = m2 - m1
    f = np.zeros(n)

    def a_coef(j):
        return np.sqrt(max((j * j - (l1 - l2) ** 2) * ((l1 + l2 + 1) ** 2 - j * j) * (j * j - big_m * big_m), 0.0))

    def b_coef(j):
        return -(2 * j + 1) * (-big_m * x - j * (j + 1) * delta)

    if n == 1:
        f[0] = 1.0
    else:
        # backward from jmax until |g| stops growing
        g = np.zeros(n)
        g[n - 1] = 1.0
        g[n - 2] = -b_coef(jmax) / ((jmax + 1) * a_coef(jmax))
        kb = n - 2
        if abs(g[n - 2]) < abs(g[n - 1]):
            kb = n - 1
        else:
            k = n - 2
            while k > 0:
                j = jmin + k
                # j A(j+1) f(j+1) + B(j) f(j) + (j+1) A(j) f(j-1) = 0
                g[k - 1] = -(b_coef(j) * g[k] + j * a_coef(j + 1) * g[k + 1]) / ((j + 1) * a_coef(j))
                if abs(g[k - 1]) < abs(g[k]):
                    break
                if abs(g[k - 1]) > 1e100:
                    for i in range(k - 1, n):
                        g[i] *= 1e-100
                k -= 1
            kb = k
        # forward from jmin up to kb
        f[0] = 1.0
        if kb > 0:
            if jmin == 0:
                # (l l 1; m -m 0) / (l l 0; m -m 0) = m / sqrt(l(l+1))
                f[1] = m1 / np.sqrt(l1 * (l1 + 1.0))
            else:
                f[1] = -b_coef(jmin) / (jmin * a_coef(jmin + 1))
            for k in range(1, kb):
                j = jmin + k
                f[k + 1] = -(b_coef(j) * f[k] + (j + 1) * a_coef(j) * f[k - 1]) / (j * a_coef(j + 1))
                if abs(f[k + 1]) > 1e100:
                    for i in range(k + 2):
                        f[i] *= 1e-100
        scale = f[kb] / g[kb]
        for k in range(kb + 1, n):
            f[k] = g[k] * scale
    norm = 0.0
    for k in range(n):
        norm += (2 * (jmin + k) + 1) * f[k] * f[k]
    norm = np.sqrt(norm)
    sign = 1.0 if (l1 - l2 + big_m) % 2 == 0 else -1.0
    if f[n - 1] * sign < 0:
        norm = -norm
    for k in range(n):
        out[jmin + k] = f[k] / norm


@numba.njit(cache=True)
def _cg_table_pair(l1, l2, out):
    """out[m1 + l1, m2 + l2, l3] = <l1 m1; l2 m2 | l3 m1+m2> for all l3 <= l1 + l2."""
    buf = np.zeros(l1 + l2 + 1)
    for i in range(2 * l1 + 1):
        m1 = i - l1
        for k in range(2 * l2 + 1):
            m2 = k - l2
            _threej_over_l3(l1, l2, m1, m2, buf)
            big_m = m1 + m2
            phase = 1.0 if (l1 - l2 + big_m) % 2 == 0 else -1.0
            for l3 in range(l1 + l2 + 1):
                out[i, k, l3] = phase * np.sqrt(2 * l3 + 1.0) * buf[l3]


def cg_complex_table_float(l1: int, l2: int) -> np.ndarray:
    """Float complex CG for all l3 at once, indexed ``[m1 + l1, m2 + l2, l3]``.

    Accurate to ~1e-13 well beyond the range where exact Racah sums are
    affordable; used to build benchmark-scale tables.
    """
    out = np.zeros((2 * l1 + 1, 2 * l2 + 1, l1 + l2 + 1))
    _cg_table_pair(l1, l2, out)
    return out


def cg_real_from_float_table(l1: int, l2: int, l3: int, table: np.ndarray) -> CGTensor:
    """Real-basis sparse block from a :func:`cg_complex_table_float` result."""
    m1, m2 = np.meshgrid(np.arange(-l1, l1 + 1), np.arange(-l2, l2 + 1), indexing="ij")
    vals = table[:, :, l3]
    ok = (np.abs(m1 + m2) <= l3) & (vals != 0)
    idx, rvals = _realify(l1, l2, l3, m1[ok], m2[ok], vals[ok], tol=1e-9)
    return CGTensor(Triplet(l1, l2, l3), idx, rvals)


# --------------------------------------------------------------------------
# Wigner-9j special shapes and the antisymmetric coupling scalar
# --------------------------------------------------------------------------

class NinejDelta(enum.Enum):
    C_MINUS_1 = -1
    C_PLUS_1 = 1


@dataclass(frozen=True)
class Wigner9jShape:
    """{a a 1; b b 1; c c+delta 1}."""

    a: int
    b: int
    c: int
    delta: NinejDelta


@lru_cache(maxsize=None)
def _ninej_exact(a: int, b: int, c: int, delta: NinejDelta) -> tuple[int, Fraction]:
    f = _fact
    if delta is NinejDelta.C_PLUS_1:
        args = (2 * a - 1, 2 * b - 1, 2 * c)
        poly = (a + b + c + 2) * (a + b - c) * (a - b + c + 1) * (-a + b + c + 1)
        pref = 2 * (c + 1)
    else:
        args = (2 * a - 1, 2 * b - 1, 2 * c - 2)
        poly = (a + b + c + 1) * (a + b - c + 1) * (a - b + c) * (-a + b + c)
        pref = 2 * c
    if min(args) < 0:
        raise DomainError(f"9j closed form undefined for a={a}, b={b}, c={c}, delta={delta.value}")
    if poly < 0:
        raise DomainError(f"9j shape a={a}, b={b}, c={c}, delta={delta.value} violates a triangle")
    if poly == 0:
        return 0, Fraction(0)
    if delta is NinejDelta.C_PLUS_1:
        den = 3 * f(2 * a + 2) * f(2 * b + 2) * f(2 * c + 3)
    else:
        den = 3 * f(2 * a + 2) * f(2 * b + 2) * f(2 * c + 1)
    square = pref * pref * Fraction(poly * f(args[0]) * f(args[1]) * f(args[2]), den)
    return 1, square


def wigner9j_special(shape: Wigner9jShape) -> float:
    """Closed form of {a a 1; b b 1; c c+-1 1}.

    Both shapes are non-negative. The normalization carries a 1/3 in both
    cases (checked against the generic 6j-sum definition).
    """
    return _signed_sqrt(*_ninej_exact(shape.a, shape.b, shape.c, shape.delta))


@lru_cache(maxsize=None)
def _lambda_im(l1: int, l2: int, l3: int) -> float:
    if (l1 + l2 + l3) % 2 == 0 or l1 == 0 or l2 == 0:
        return 0.0
    common = Fraction(l1 * l2 * (l1 + 1) * (l2 + 1), 2 * l3 + 1)
    total = 0.0
    if l3 >= 1:
        s_c, sq_c = _cg_m0_exact(l1, l2, l3 - 1)
        s_n, sq_n = _ninej_exact(l1, l2, l3, NinejDelta.C_MINUS_1)
        total += _signed_sqrt(s_c * s_n, common * l3 * sq_c * sq_n)
    s_c, sq_c = _cg_m0_exact(l1, l2, l3 + 1)
    s_n, sq_n = _ninej_exact(l1, l2, l3, NinejDelta.C_PLUS_1)
    total -= _signed_sqrt(s_c * s_n, common * (l3 + 1) * sq_c * sq_n)
    return -math.sqrt(3 / (2 * math.pi)) * (2 * l1 + 1) * (2 * l2 + 1) * total


def lambda_closed_form(triplet) -> complex:
    """Complex-basis antisymmetric coupling scalar (purely imaginary)."""
    t = _as_triplet(triplet)
    if not t.admissible():
        raise ValueError(f"triplet {tuple(t)} violates the triangle condition")
    return complex(0.0, _lambda_im(t.l1, t.l2, t.l3))


def vtilde_closed_form(triplet) -> float:
    """Real-basis antisymmetric coupling scalar; zero on even triplets."""
    t = _as_triplet(triplet)
    im = lambda_closed_form(t).imag
    if im == 0.0:
        return 0.0
    sign = -1 if ((t.l1 + t.l2 + t.l3 - 1) // 2 + t.l3) % 2 else 1
    return sign * im


def gtilde_closed_form(triplet) -> float:
    """Real-basis Gaunt scalar from the m = 0 coefficient; zero on odd triplets.

    G = sqrt((2l1+1)(2l2+1) / (4 pi (2l3+1))) <l1 0; l2 0|l3 0> (-1)^((l1+l2-l3)/2)
    """
    t = _as_triplet(triplet)
    if not t.admissible():
        raise ValueError(f"triplet {tuple(t)} violates the triangle condition")
    if t.parity():
        return 0.0
    l1, l2, l3 = t
    s, sq = _cg_m0_exact(l1, l2, l3)
    sign = s * (-1) ** ((l1 + l2 - l3) // 2)
    return _signed_sqrt(sign, sq * Fraction((2 * l1 + 1) * (2 * l2 + 1), 2 * l3 + 1)) / math.sqrt(4 * math.pi)
