"""Classical Hamiltonians and their extended-phase-space operators.

Hamiltonians are sympy expressions in the real symbols ``p, q, t``. The
extended operator is stored as a finite list of terms
``coeff(p, q, t) * d^a/dq^a d^b/dp^b`` obtained from the Taylor form

    sum_n (-i hbar)^n / n! * (d^nH/dp^n d^n/dq^n - d^nH/dq^n d^n/dp^n).

The uniform drive enters through two opaque time functions, ``E(t)`` and
its damped integral ``I(t) = int_0^t exp(alpha s) E(s) ds``, which are bound
to closed-form numpy implementations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import sympy as sp
from sympy.utilities.lambdify import implemented_function

from .phase_space_grid import Grid, spectral_derivative

p, q, t = sp.symbols("p q t", real=True)

QUADRATURES = ("phasor", "re", "im")


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.c > 0):
            raise ValueError(f"hbar and c must be positive, got hbar={self.hbar}, c={self.c}")


@dataclass(frozen=True)
class ChargedParticleMedium:
    m: float = 1.0
    e_charge: float = 1.0
    alpha: float = 1.0
    n_particles: int = 1

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got {self.m}")
        if self.e_charge == 0:
            raise ValueError("charge must be nonzero")
        if self.alpha < 0:
            raise ValueError(f"damping constant must be >= 0, got {self.alpha}")
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError(f"n_particles must be an integer >= 1, got {self.n_particles}")


def exp_integral(s: complex, tt):
    """int_0^tt exp(s x) dx, stable as s -> 0."""
    tt = np.asarray(tt, dtype=float)
    if s == 0:
        return tt.astype(complex)
    if abs(s) * np.max(np.abs(tt), initial=0.0) < 1e-6:
        x = s * tt
        return tt * (1 + x / 2 + x * x / 6 + x**3 / 24)
    return np.expm1(s * tt) / s


@dataclass(frozen=True)
class DriveSpec:
    """Uniform field E(t) = E0 exp(i omega t).

    ``quadrature`` selects the phasor itself or its real/imaginary part; every
    time integral of the field is real-linear in E, so the quadratures take
    Re/Im of the phasor closed forms.
    """

    E0: complex = 1.0
    omega: float = 1.0
    quadrature: str = "phasor"

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}, got {self.quadrature!r}")

    def with_quadrature(self, quadrature: str) -> "DriveSpec":
        return DriveSpec(self.E0, self.omega, quadrature)

    def project(self, value):
        if self.quadrature == "re":
            return np.real(value)
        if self.quadrature == "im":
            return np.imag(value)
        return value

    @property
    def is_real(self) -> bool:
        return self.quadrature != "phasor" or self.E0 == 0

    def phasor(self, tt):
        return self.E0 * np.exp(1j * self.omega * np.asarray(tt, dtype=float))

    def field(self, tt):
        return self.project(self.phasor(tt))

    def damped_integral(self, alpha: float, tt):
        """I(t) = int_0^t exp(alpha s) E(s) ds."""
        return self.project(self.E0 * exp_integral(alpha + 1j * self.omega, tt))


@dataclass(frozen=True)
class GaugePotentials:
    """Potentials A(q, t), phi(q, t) as sympy expressions."""

    A: sp.Expr
    phi: sp.Expr
    tag: str = "custom"

    def __post_init__(self):
        if self.tag not in ("a_gauge", "phi_gauge", "custom"):
            raise ValueError(f"unknown gauge tag {self.tag!r}")
        A, phi = sp.sympify(self.A), sp.sympify(self.phi)
        extra = (A.free_symbols | phi.free_symbols) - {q, t}
        if extra:
            raise ValueError(f"potentials may depend on q and t only, found {extra}")
        if self.tag == "a_gauge" and (phi != 0 or sp.diff(A, q) != 0):
            raise ValueError("a_gauge requires phi == 0 and A independent of q")
        if self.tag == "phi_gauge" and (A != 0 or sp.diff(phi, q, 2) != 0):
            raise ValueError("phi_gauge requires A == 0 and phi linear in q")

    @classmethod
    def a_gauge(cls, medium: ChargedParticleMedium, drive: DriveSpec, constants: PhysicalConstants):
        """A(t) = -c I(t), phi = 0."""
        return cls(-_num(constants.c) * drive_symbols(medium, drive)[1], sp.Integer(0), "a_gauge")

    @classmethod
    def phi_gauge(cls, medium: ChargedParticleMedium, drive: DriveSpec, constants: PhysicalConstants):
        """A = 0, phi(q, t) = -q E(t)."""
        return cls(sp.Integer(0), -q * drive_symbols(medium, drive)[0], "phi_gauge")

    @classmethod
    def for_tag(cls, tag, medium, drive, constants):
        if tag == "a_gauge":
            return cls.a_gauge(medium, drive, constants)
        if tag == "phi_gauge":
            return cls.phi_gauge(medium, drive, constants)
        raise ValueError(f"no built-in potentials for gauge {tag!r}")


_DRIVE_CACHE: dict = {}


def drive_symbols(medium: ChargedParticleMedium, drive: DriveSpec):
    """Return sympy applications ``(E(t), I(t))`` bound to the closed forms."""
    key = (medium.alpha, drive)
    if key not in _DRIVE_CACHE:
        n = len(_DRIVE_CACHE)
        alpha = medium.alpha
        E_fn = implemented_function(sp.Function(f"E_{n}", real=drive.is_real), lambda x: drive.field(x))
        I_fn = implemented_function(
            sp.Function(f"I_{n}", real=drive.is_real), lambda x: drive.damped_integral(alpha, x)
        )
        _DRIVE_CACHE[key] = (E_fn(t), I_fn(t))
    return _DRIVE_CACHE[key]


def vector_potential(tt, medium: ChargedParticleMedium, drive: DriveSpec, constants: PhysicalConstants):
    """A(t) = -c int_0^t exp(alpha s) E(s) ds (lower limit fixed at 0)."""
    if np.any(np.asarray(tt) < 0):
        raise ValueError("vector potential defined for t >= 0")
    return -constants.c * drive.damped_integral(medium.alpha, tt)


def build_kanai(
    medium: ChargedParticleMedium, potentials: GaugePotentials, constants: PhysicalConstants
) -> sp.Expr:
    """Damped (Caldirola-Kanai) Hamiltonian for a charge in the given potentials."""
    m, e, alpha, c = (_num(x) for x in (medium.m, medium.e_charge, medium.alpha, constants.c))
    kinetic = sp.exp(-alpha * t) / (2 * m) * (p - e / c * potentials.A) ** 2
    return kinetic + sp.exp(alpha * t) * e * potentials.phi


def _num(x):
    # exact integers stay exact so that symbolic cancellations are clean
    return sp.Integer(int(x)) if float(x).is_integer() else sp.Float(x)


TermKey = tuple[int, int]


def _lambdify(expr: sp.Expr) -> Callable:
    fn = sp.lambdify((p, q, t), expr, modules="numpy")

    def evaluate(P, Q, tt):
        out = fn(P, Q, tt)
        return np.broadcast_to(np.asarray(out, dtype=complex), np.broadcast(P, Q).shape)

    return evaluate


@dataclass(frozen=True, eq=False)
class ExtendedHamiltonianOp:
    """Finite sum of ``coeff(p, q, t) * d^a/dq^a d^b/dp^b`` terms.

    ``truncation_order`` is None when the Taylor series terminated exactly.
    """

    terms: Mapping[TermKey, sp.Expr]
    truncation_order: int | None = None
    _compiled: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for (a, b) in self.terms:
            if a < 0 or b < 0:
                raise ValueError(f"negative derivative order in term {(a, b)}")

    @property
    def keys(self) -> list[TermKey]:
        return sorted(self.terms)

    def coefficient(self, a: int, b: int) -> Callable:
        key = (a, b)
        if key not in self._compiled:
            self._compiled[key] = _lambdify(self.terms.get(key, sp.Integer(0)))
        return self._compiled[key]

    def evaluate_coefficients(self, P, Q, tt) -> dict[TermKey, np.ndarray]:
        return {key: self.coefficient(*key)(P, Q, tt) for key in self.keys}

    def __add__(self, other: "ExtendedHamiltonianOp") -> "ExtendedHamiltonianOp":
        terms = dict(self.terms)
        for key, expr in other.terms.items():
            terms[key] = terms.get(key, sp.Integer(0)) + expr
        orders = [o for o in (self.truncation_order, other.truncation_order) if o is not None]
        return ExtendedHamiltonianOp(_drop_zeros(terms), min(orders) if orders else None)

    def apply(self, values: np.ndarray, grid: Grid, tt: float, p_offset: float = 0.0) -> np.ndarray:
        """Act on sampled chi with spectral derivatives."""
        P = grid.P + p_offset
        out = np.zeros(grid.shape, dtype=complex)
        for (a, b) in self.keys:
            coeff = self.coefficient(a, b)(P, grid.Q, tt)
            deriv = values if (a, b) == (0, 0) else spectral_derivative(values, grid, a, b)
            out += coeff * deriv
        return out

    def max_rate(self, grid: Grid, tt: float, hbar: float, p_offset: float = 0.0) -> float:
        """Upper bound on |generator eigenvalue| over the grid's modes."""
        kq = np.max(np.abs(grid.k_q))
        kp = np.max(np.abs(grid.k_p))
        P = grid.P + p_offset
        total = 0.0
        for (a, b) in self.keys:
            coeff = np.max(np.abs(self.coefficient(a, b)(P, grid.Q, tt)))
            total += coeff * kq**a * kp**b
        return total / hbar


def _drop_zeros(terms):
    out = {}
    for key, expr in terms.items():
        expr = sp.simplify(sp.expand(expr))
        if expr != 0:
            out[key] = expr
    return out


def extend_hamiltonian(
    H: sp.Expr, constants: PhysicalConstants, truncation_order: int | None = None
) -> ExtendedHamiltonianOp:
    """Build the extended operator of a Hamiltonian polynomial in p.

    The q-series stops exactly when H is polynomial in q; otherwise a
    ``truncation_order`` must be given.
    """
    H = sp.sympify(H)
    if not H.is_polynomial(p):
        raise ValueError("Hamiltonian must be polynomial in p")
    hbar = _num(constants.hbar)
    factor = lambda n: (-sp.I * hbar) ** n / sp.factorial(n)

    terms: dict[TermKey, sp.Expr] = {}
    deriv = H
    n = 0
    while True:
        n += 1
        deriv = sp.diff(deriv, p)
        if deriv == 0:
            break
        terms[(n, 0)] = factor(n) * deriv

    deriv = H
    n = 0
    exact = True
    while True:
        n += 1
        deriv = sp.simplify(sp.diff(deriv, q))
        if deriv == 0:
            break
        if truncation_order is not None and n > truncation_order:
            exact = False
            break
        if truncation_order is None and n > 32:
            raise ValueError("q-series does not terminate; pass truncation_order")
        terms[(0, n)] = -factor(n) * deriv

    return ExtendedHamiltonianOp(_drop_zeros(terms), None if exact else truncation_order)


def kanai_operator(tag: str, medium, drive, constants) -> ExtendedHamiltonianOp:
    """Extended operator of the built-in damped system in one of the two gauges."""
    potentials = GaugePotentials.for_tag(tag, medium, drive, constants)
    return extend_hamiltonian(build_kanai(medium, potentials, constants), constants)


def hamiltonian_function(H: sp.Expr) -> Callable:
    """Numeric H(p, q, t)."""
    return _lambdify(sp.sympify(H))


__all__ = [
    "PhysicalConstants",
    "ChargedParticleMedium",
    "DriveSpec",
    "GaugePotentials",
    "ExtendedHamiltonianOp",
    "build_kanai",
    "vector_potential",
    "extend_hamiltonian",
    "kanai_operator",
    "drive_symbols",
    "exp_integral",
    "p",
    "q",
    "t",
]

