import numpy as np
import pytest
import sympy as sp

from epsdyn.evolution import gaussian_packet
from epsdyn.gauge import (
    GaugeFunctions,
    apply_gauge,
    canonical_shift,
    extend_then_substitute,
    substitute_then_extend,
    transform_hamiltonian,
)
from epsdyn.hamiltonians import (
    ChargedParticleMedium,
    DriveSpec,
    GaugePotentials,
    PhysicalConstants,
    extend_hamiltonian,
    kanai_operator,
    p,
    q,
    t,
)
from epsdyn.phase_space_grid import GridSpec, make_grid

L_Q, L_P = 16.0, 12.0
GRID = make_grid(GridSpec(-L_Q / 2, L_Q / 2, -L_P / 2, L_P / 2, 128, 128))
# periodic on the box so the transformed state stays band-limited
F_PER = sp.Rational(3, 10) * sp.sin(2 * sp.pi * q / L_Q) * (1 + t)
G_PER = sp.Rational(1, 5) * sp.cos(2 * sp.pi * p / L_P) * t**2


def test_validation_of_arguments():
    with pytest.raises(ValueError, match="f must depend"):
        GaugeFunctions(f=p * q)
    with pytest.raises(ValueError, match="g must depend"):
        GaugeFunctions(g=q)


def test_supplied_gradients_are_checked():
    GaugeFunctions(f=q**3 * t, grad_f=3 * q**2 * t)
    with pytest.raises(ValueError, match="finite differences"):
        GaugeFunctions(f=q**3 * t, grad_f=2 * q**2 * t)
    with pytest.raises(ValueError, match="finite differences"):
        GaugeFunctions(g=sp.sin(p), grad_g=sp.sin(p))


def test_default_gradients():
    gf = GaugeFunctions(f=sp.sin(q) * t, g=p**2)
    assert sp.simplify(gf.grad_f - sp.cos(q) * t) == 0
    assert sp.simplify(gf.grad_g - 2 * p) == 0
    assert gf.is_separable and not gf.is_identity
    assert GaugeFunctions().is_identity


@pytest.mark.parametrize("charge", [1.0, -0.7])
def test_apply_gauge_is_unitary_phase(charge, constants):
    chi = gaussian_packet(GRID, 0.5, -0.3, time=0.8)
    gf = GaugeFunctions(F_PER, G_PER)
    out = apply_gauge(chi, gf, constants, charge)
    np.testing.assert_allclose(np.abs(out.values), np.abs(chi.values), atol=1e-15)
    back = apply_gauge(out, gf.negated(), constants, charge)
    np.testing.assert_allclose(back.values, chi.values, atol=1e-15)


def test_general_gamma_applies_but_does_not_transform(constants):
    gf = GaugeFunctions(gamma=p * q * t)
    chi = gaussian_packet(GRID, time=1.0)
    out = apply_gauge(chi, gf, constants, 1.0)
    np.testing.assert_allclose(out.values, np.exp(-1j * GRID.P * GRID.Q) * chi.values, atol=1e-15)
    with pytest.raises(NotImplementedError):
        transform_hamiltonian(extend_hamiltonian(p**2 / 2, constants), gf, constants, 1.0)


def test_identity_transform_is_noop(constants):
    op = extend_hamiltonian(p**2 / 2 + q**2 / 2, constants)
    out = transform_hamiltonian(op, GaugeFunctions(), constants, 1.0)
    assert out.keys == op.keys


@pytest.mark.parametrize("hbar,charge", [(1.0, 1.0), (0.7, -1.3)])
@pytest.mark.parametrize("tag", ["a_gauge", "phi_gauge"])
def test_transformed_operator_intertwines(tag, hbar, charge):
    # H'(Gamma chi) = Gamma (H chi) + (e/c)(f_t - g_t) Gamma chi, checked
    # numerically with spectral derivatives on a band-limited state
    constants = PhysicalConstants(hbar=hbar, c=1.0)
    medium = ChargedParticleMedium(alpha=0.6, e_charge=charge)
    drive = DriveSpec(1.0, 1.1, "re")
    op = kanai_operator(tag, medium, drive, constants)
    gf = GaugeFunctions(F_PER, G_PER)
    new = transform_hamiltonian(op, gf, constants, charge)
    tt = 0.9
    chi = gaussian_packet(GRID, 0.3, -0.2, 1.0, 0.9, time=tt)
    gchi = apply_gauge(chi, gf, constants, charge)
    lhs = new.apply(gchi.values, GRID, tt)
    phase = gchi.values / chi.values
    f_t = sp.lambdify((p, q, t), sp.diff(F_PER, t) - sp.diff(G_PER, t))(GRID.P, GRID.Q, tt)
    rhs = phase * op.apply(chi.values, GRID, tt) + charge * f_t * gchi.values
    scale = np.max(np.abs(rhs))
    assert np.max(np.abs(lhs - rhs)) / scale < 1e-9


def test_transform_adds_expected_terms(constants):
    op = extend_hamiltonian(p**2 / 2, constants)
    new = transform_hamiltonian(op, GaugeFunctions(f=q**2 * t), constants, 1.0)
    # (d + 2 i q t)^2 acting with coefficient -1/2, plus scalar f_t = q^2
    assert sp.simplify(new.terms[(2, 0)] + sp.Rational(1, 2)) == 0
    assert sp.simplify(new.terms[(1, 0)] - (-sp.I * p - 2 * sp.I * q * t)) == 0
    expected_00 = -sp.Rational(1, 2) * (2 * sp.I * t + (2 * sp.I * q * t) ** 2) + 2 * q * t * p + q**2
    assert sp.simplify(new.terms[(0, 0)] - expected_00) == 0


def test_canonical_shift_values(constants):
    gf = GaugeFunctions(f=sp.sin(q) * t, g=p**3)
    out = canonical_shift((0.5, 1.2, 0.1, -0.4), gf, 2.0, PhysicalConstants(c=2.0), 3.0)
    assert out[0] == 0.5 and out[1] == 1.2
    assert out[2] == pytest.approx(0.1 + 1.5 * 3 * 0.25)
    assert out[3] == pytest.approx(-0.4 - 1.5 * np.cos(1.2) * 2.0)


def test_ordering_commutes_for_custom_potentials(constants):
    medium = ChargedParticleMedium(alpha=0.3, e_charge=1.5, m=0.8)
    pots = GaugePotentials(q**2 * t / 3, sp.sin(t) * q**3, "custom")
    one = extend_then_substitute(medium, pots, constants)
    two = substitute_then_extend(medium, pots, constants)
    assert set(one.keys) == set(two.keys)
    for key in one.keys:
        assert sp.simplify(sp.expand(one.terms[key] - two.terms[key])) == 0, key
