"""Gauge transformations on the extended phase space.

A gauge pair (f(q, t), g(p, t)) defines the unitary phase

    Gamma = exp(-i e / (hbar c) * (f(q, t) - g(p, t)))

acting on state functions. Conjugating an extended operator with Gamma
replaces each derivative by a covariant one,

    Gamma d/dq Gamma^dagger = d/dq + (i e / hbar c) df/dq
    Gamma d/dp Gamma^dagger = d/dp - (i e / hbar c) dg/dp

and adds the scalar (e/c)(df/dt - dg/dt) from the explicit time dependence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .hamiltonians import (
    ChargedParticleMedium,
    ExtendedHamiltonianOp,
    GaugePotentials,
    PhysicalConstants,
    _drop_zeros,
    _num,
    build_kanai,
    extend_hamiltonian,
    p,
    q,
    t,
)
from .phase_space_grid import StateFunction

FD_TOL = 1e-8


def _numeric(expr, *args) -> Callable:
    fn = sp.lambdify(args, expr, modules="numpy")
    return lambda *x: np.broadcast_to(np.asarray(fn(*x), dtype=float), np.broadcast(*x).shape)


def _check_gradient(name, fn, grad, var_index, rng):
    pts = rng.uniform(-2.0, 2.0, size=(16, 2))
    pts[:, 1] = np.abs(pts[:, 1])
    h = 1e-5
    for x, tt in pts:
        args = [x, tt]
        lo, hi = list(args), list(args)
        lo[var_index] -= h
        hi[var_index] += h
        fd = (fn(*hi) - fn(*lo)) / (2 * h)
        exact = grad(x, tt)
        if abs(fd - exact) > FD_TOL * max(1.0, abs(exact)):
            raise ValueError(f"supplied gradient of {name} disagrees with finite differences at {args}: "
                             f"{exact} vs {fd}")


@dataclass(frozen=True, eq=False)
class GaugeFunctions:
    """Separable gauge pair f(q, t), g(p, t) with analytic gradients.

    Gradients default to the symbolic derivatives; explicitly supplied ones
    are checked against central differences at construction. A general
    non-separable ``gamma(q, p, t)`` may be given instead; it can be applied
    to states but not to operators.
    """

    f: sp.Expr = sp.Integer(0)
    g: sp.Expr = sp.Integer(0)
    grad_f: sp.Expr | None = None
    grad_g: sp.Expr | None = None
    gamma: sp.Expr | None = None

    def __post_init__(self):
        f, g = sp.sympify(self.f), sp.sympify(self.g)
        if f.free_symbols - {q, t}:
            raise ValueError(f"f must depend on (q, t) only, got {f.free_symbols}")
        if g.free_symbols - {p, t}:
            raise ValueError(f"g must depend on (p, t) only, got {g.free_symbols}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        rng = np.random.default_rng(0)
        for name, fn_expr, var, supplied in (("f", f, q, self.grad_f), ("g", g, p, self.grad_g)):
            grad_name = f"grad_{name}"
            if supplied is None:
                object.__setattr__(self, grad_name, sp.diff(fn_expr, var))
                continue
            supplied = sp.sympify(supplied)
            object.__setattr__(self, grad_name, supplied)
            _check_gradient(name, _numeric(fn_expr, var, t), _numeric(supplied, var, t), 0, rng)
        if self.gamma is not None:
            object.__setattr__(self, "gamma", sp.sympify(self.gamma))

    @property
    def is_separable(self) -> bool:
        return self.gamma is None

    @property
    def is_identity(self) -> bool:
        return self.is_separable and self.f == 0 and self.g == 0

    def phase_function(self) -> Callable:
        """gamma(P, Q, t) as a numpy callable."""
        expr = self.f - self.g if self.gamma is None else self.gamma
        fn = sp.lambdify((p, q, t), expr, modules="numpy")
        return lambda P, Q, tt: np.broadcast_to(np.asarray(fn(P, Q, tt), dtype=float), np.broadcast(P, Q).shape)

    def negated(self) -> "GaugeFunctions":
        if self.gamma is not None:
            return GaugeFunctions(gamma=-self.gamma)
        return GaugeFunctions(-self.f, -self.g, -self.grad_f, -self.grad_g)


def apply_gauge(chi: StateFunction, gf: GaugeFunctions, constants: PhysicalConstants, charge: float) -> StateFunction:
    """chi' = Gamma chi, a pointwise phase at the state's time."""
    gamma = gf.phase_function()(chi.P, chi.grid.Q, chi.time)
    phase = np.exp(-1j * charge / (constants.hbar * constants.c) * gamma)
    return chi.with_values(phase * chi.values)


def _covariant_power(beta: sp.Expr, var: sp.Symbol, n: int) -> dict[int, sp.Expr]:
    """Coefficients C_j of (d/dvar + beta)^n = sum_j C_j d^j/dvar^j."""
    ops: dict[int, sp.Expr] = {0: sp.Integer(1)}
    for _ in range(n):
        new: dict[int, sp.Expr] = {}
        for j, coeff in ops.items():
            new[j] = new.get(j, 0) + sp.diff(coeff, var) + beta * coeff
            new[j + 1] = new.get(j + 1, 0) + coeff
        ops = new
    return ops


def transform_hamiltonian(
    op: ExtendedHamiltonianOp, gf: GaugeFunctions, constants: PhysicalConstants, charge: float
) -> ExtendedHamiltonianOp:
    """Gamma H Gamma^dagger - i hbar Gamma d(Gamma^dagger)/dt as a term list."""
    if not gf.is_separable:
        raise NotImplementedError("operator transformation needs a separable gauge pair f(q,t) - g(p,t)")
    if gf.is_identity:
        return ExtendedHamiltonianOp(dict(op.terms), op.truncation_order)
    ratio = _num(charge) / (_num(constants.hbar) * _num(constants.c))
    beta_q = sp.I * ratio * gf.grad_f
    beta_p = -sp.I * ratio * gf.grad_g
    terms: dict = {}
    for (a, b), coeff in op.terms.items():
        q_part = _covariant_power(beta_q, q, a)
        p_part = _covariant_power(beta_p, p, b)
        for j, cq in q_part.items():
            for l, cp in p_part.items():
                terms[(j, l)] = terms.get((j, l), 0) + coeff * cq * cp
    scalar = _num(charge) / _num(constants.c) * (sp.diff(gf.f, t) - sp.diff(gf.g, t))
    terms[(0, 0)] = terms.get((0, 0), 0) + scalar
    return ExtendedHamiltonianOp(_drop_zeros(terms), op.truncation_order)


def canonical_shift(point, gf: GaugeFunctions, tt: float, constants: PhysicalConstants, charge: float):
    """(p, q, pi_p, pi_q) -> (p, q, pi_p + (e/c) dg/dp, pi_q - (e/c) df/dq)."""
    pp, qq, pi_p, pi_q = point
    ratio = charge / constants.c
    dg = _numeric(gf.grad_g, p, t)(pp, tt)
    df = _numeric(gf.grad_f, q, t)(qq, tt)
    return (pp, qq, pi_p + ratio * dg, pi_q - ratio * df)


_PI_P, _PI_Q = sp.symbols("pi_p pi_q")


def extend_then_substitute(
    medium: ChargedParticleMedium, potentials: GaugePotentials, constants: PhysicalConstants
) -> ExtendedHamiltonianOp:
    """Extend the damped Hamiltonian with generic A(q,t), phi(q,t), then insert the potentials.

    Works on the closed form H(p + pi_q, q) - H(p, q + pi_p) with symbolic
    momenta and converts pi^n to (-i hbar)^n d^n afterwards, so it does not
    share the Taylor-series route of :func:`extend_hamiltonian`.
    """
    A_gen, phi_gen = sp.Function("A_generic"), sp.Function("phi_generic")
    generic = GaugePotentials(A_gen(q, t), phi_gen(q, t), "custom")
    H = build_kanai(medium, generic, constants)
    extended = H.subs(p, p + _PI_Q) - H.subs(q, q + _PI_P)

    def insert(expr):
        return lambda qq, tt: expr.subs({q: qq, t: tt}, simultaneous=True)

    extended = extended.replace(A_gen, insert(sp.sympify(potentials.A)))
    extended = extended.replace(phi_gen, insert(sp.sympify(potentials.phi)))
    poly = sp.Poly(sp.expand(extended), _PI_Q, _PI_P)
    hbar = _num(constants.hbar)
    terms = {}
    for (a, b), coeff in poly.terms():
        terms[(a, b)] = coeff * (-sp.I * hbar) ** (a + b)
    terms = _drop_zeros(terms)
    if (0, 0) in terms:
        raise ArithmeticError("extended operator has a non-vanishing zeroth-order term")
    return ExtendedHamiltonianOp(terms)


def substitute_then_extend(
    medium: ChargedParticleMedium, potentials: GaugePotentials, constants: PhysicalConstants
) -> ExtendedHamiltonianOp:
    return extend_hamiltonian(build_kanai(medium, potentials, constants), constants)
