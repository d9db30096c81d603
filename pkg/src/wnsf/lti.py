"""Polynomials in the backward-shift operator and rational discrete-time filters.

Conventions: a polynomial ``X(q) = x_0 + x_1 q^-1 + ... + x_m q^-m`` is stored
as the coefficient array ``[x_0, ..., x_m]`` (ascending delay).  All filtering
uses zero initial conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as _signal
from scipy.linalg import toeplitz as _toeplitz

TOL_STAB = 1e-9


class UnstableFilterError(ValueError):
    pass


@dataclass(frozen=True)
class Polynomial:
    """Finite polynomial in q^-1, coefficients ordered by ascending delay.

    Trailing zeros are kept as constructed, so the structural order of a
    model polynomial is ``len(coeffs) - 1`` even if high coefficients are zero.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coefficients must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_monic(self) -> bool:
        return self.coeffs[0] == 1.0

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return poly_mul(self, other)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and np.array_equal(
            self.coeffs, other.coeffs
        )

    def to_json(self):
        return self.coeffs.tolist()

    @classmethod
    def from_json(cls, data) -> "Polynomial":
        return cls(np.asarray(data, dtype=float))


ONE = Polynomial(np.array([1.0]))


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    """Product of two polynomials in q^-1 (coefficient convolution)."""
    return Polynomial(np.convolve(a.coeffs, b.coeffs))


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    n = max(len(a.coeffs), len(b.coeffs))
    out = np.zeros(n)
    out[: len(a.coeffs)] += a.coeffs
    out[: len(b.coeffs)] += b.coeffs
    return Polynomial(out)


def poly_roots(p: Polynomial) -> np.ndarray:
    """Roots of the forward-variable polynomial z^m X(z^-1).

    Uses the balanced companion-matrix eigenvalues (np.roots).
    """
    c = np.trim_zeros(p.coeffs, "b")
    if len(c) <= 1:
        return np.array([])
    return np.roots(c)


def is_stable(p: Polynomial, tol: float = TOL_STAB):
    """Whether all roots of a monic polynomial lie strictly inside the unit circle.

    Returns ``(stable, roots)``.
    """
    if not p.is_monic:
        raise ValueError("stability test requires a monic polynomial")
    roots = poly_roots(p)
    stable = bool(np.all(np.abs(roots) < 1.0 - tol)) if roots.size else True
    return stable, roots


def toeplitz_matrix(p: Polynomial, n: int, m: int) -> np.ndarray:
    """The n-by-m lower-triangular Toeplitz matrix with first column
    ``[x_0, ..., x_{n-1}]`` and first row ``[x_0, 0, ..., 0]``."""
    col = np.zeros(n)
    k = min(n, len(p.coeffs))
    col[:k] = p.coeffs[:k]
    row = np.zeros(m)
    row[0] = col[0]
    return _toeplitz(col, row)


@dataclass(frozen=True)
class RationalFilter:
    """Rational filter num/den in q^-1 with a monic denominator."""

    num: Polynomial
    den: Polynomial = field(default=ONE)

    def __post_init__(self):
        if not self.den.is_monic:
            raise ValueError("denominator must be monic")

    @property
    def is_stable(self) -> bool:
        return is_stable(self.den)[0]

    def __mul__(self, other: "RationalFilter") -> "RationalFilter":
        return RationalFilter(self.num * other.num, self.den * other.den)

    def inverse(self) -> "RationalFilter":
        num = self.num
        if num.coeffs[0] == 0.0:
            raise ZeroDivisionError("cannot invert a filter with a delay")
        if num.coeffs[0] != 1.0:
            raise ValueError("inverse only defined for monic numerator")
        return RationalFilter(self.den, num)

    def to_json(self):
        return {"num": self.num.to_json(), "den": self.den.to_json()}

    @classmethod
    def from_json(cls, data) -> "RationalFilter":
        return cls(Polynomial.from_json(data["num"]), Polynomial.from_json(data["den"]))


CONST_ONE = RationalFilter(ONE, ONE)
CONST_ZERO = RationalFilter(Polynomial(np.array([0.0])), ONE)


def filter_signal(f: RationalFilter, x: np.ndarray) -> np.ndarray:
    """Apply num/den to a signal as a direct-form difference equation with
    zero initial state.  Output length equals input length."""
    x = np.asarray(x, dtype=float)
    return _signal.lfilter(f.num.coeffs, f.den.coeffs, x)


def impulse_response(f: RationalFilter, length: int) -> np.ndarray:
    """First ``length`` coefficients of the power-series expansion of f."""
    if length < 1:
        raise ValueError("length must be >= 1")
    imp = np.zeros(length)
    imp[0] = 1.0
    return filter_signal(f, imp)


def freq_response(f: RationalFilter, omega) -> complex | np.ndarray:
    """Evaluate num/den at q^-1 = e^{-i omega}."""
    omega = np.asarray(omega, dtype=float)
    z = np.exp(-1j * omega)
    num = np.polyval(f.num.coeffs[::-1], z)
    den = np.polyval(f.den.coeffs[::-1], z)
    if np.any(np.abs(den) == 0.0):
        raise ZeroDivisionError("pole on the unit circle at the requested frequency")
    return num / den


@dataclass(frozen=True)
class BjModel:
    """Box-Jenkins model: plant L/F and noise model C/D.

    F, C, D are monic; L has zero constant term.  Orders are structural
    (taken from the stored coefficient lengths, trailing zeros included).
    """

    L: Polynomial
    F: Polynomial
    C: Polynomial = field(default=ONE)
    D: Polynomial = field(default=ONE)

    def __post_init__(self):
        for name in ("F", "C", "D"):
            if not getattr(self, name).is_monic:
                raise ValueError(f"{name} must be monic")
        if self.L.coeffs[0] != 0.0:
            raise ValueError("L must have zero constant term")

    @property
    def m_f(self) -> int:
        return self.F.degree

    @property
    def m_l(self) -> int:
        return self.L.degree

    @property
    def m_c(self) -> int:
        return self.C.degree

    @property
    def m_d(self) -> int:
        return self.D.degree

    @property
    def G(self) -> RationalFilter:
        return RationalFilter(self.L, self.F)

    @property
    def H(self) -> RationalFilter:
        return RationalFilter(self.C, self.D)

    @property
    def theta(self) -> np.ndarray:
        """Flattened parameter vector [f; l; c; d]."""
        return np.concatenate(
            [self.F.coeffs[1:], self.L.coeffs[1:], self.C.coeffs[1:], self.D.coeffs[1:]]
        )

    @classmethod
    def from_theta(cls, theta, m_f: int, m_l: int, m_c: int = 0, m_d: int = 0) -> "BjModel":
        theta = np.asarray(theta, dtype=float)
        if len(theta) != m_f + m_l + m_c + m_d:
            raise ValueError("theta length does not match the given orders")
        f, l, c, d = np.split(theta, np.cumsum([m_f, m_l, m_c]))
        return cls(
            L=Polynomial(np.concatenate([[0.0], l])),
            F=Polynomial(np.concatenate([[1.0], f])),
            C=Polynomial(np.concatenate([[1.0], c])),
            D=Polynomial(np.concatenate([[1.0], d])),
        )

    def to_json(self):
        return {
            "L": self.L.to_json(),
            "F": self.F.to_json(),
            "C": self.C.to_json(),
            "D": self.D.to_json(),
        }

    @classmethod
    def from_json(cls, data) -> "BjModel":
        return cls(
            L=Polynomial.from_json(data["L"]),
            F=Polynomial.from_json(data["F"]),
            C=Polynomial.from_json(data.get("C", [1.0])),
            D=Polynomial.from_json(data.get("D", [1.0])),
        )
