"""End-to-end acceptance criteria A1-A9.

Each test reports through the ``criterion`` fixture; a summary with one
PASS/FAIL line per criterion is printed at the end of the session.
"""

import numpy as np
import pytest
import sympy as sp

from epsdyn.analytic_oracle import (
    CharacteristicMap,
    PlaneWaveSolution,
    classical_trajectory,
    plane_wave_solution,
)
from epsdyn.cli_experiments import config_from_dict, run_experiment
from epsdyn.evolution import PropagatorConfig, gaussian_packet, propagate
from epsdyn.gauge import GaugeFunctions, canonical_shift, extend_then_substitute, substitute_then_extend
from epsdyn.hamiltonians import ChargedParticleMedium, DriveSpec, GaugePotentials, PhysicalConstants, kanai_operator
from epsdyn.hamiltonians import p as P_SYM
from epsdyn.hamiltonians import q as Q_SYM
from epsdyn.hamiltonians import t as T_SYM
from epsdyn.observables import modulus_equivalence_residual
from epsdyn.phase_space_grid import GridSpec, StateFunction, make_grid

PARAMS = [(a, w) for a in (0.5, 1.0, 2.0) for w in (0.5, 1.0, 2.0)]
UNIT = PhysicalConstants()


def _experiment(alpha, omega, gauges, packet=None):
    cfg = {
        "gauges": gauges,
        "medium": {"alpha": alpha},
        "drive": {"omega": omega},
        "propagator": {"dt": 1e-3, "t_final": 10.0 / alpha, "record_every": 10},
    }
    if packet:
        cfg["packet"] = packet
    return run_experiment(config_from_dict(cfg))


@pytest.mark.parametrize("alpha,omega", PARAMS)
def test_a1_conductivity_matches_drude(alpha, omega, criterion):
    report = _experiment(alpha, omega, ["a_gauge"])
    res = report.runs["a_gauge"].result
    if (alpha, omega) == (1.0, 1.0):
        assert res.sigma_theory == pytest.approx(0.5 - 0.5j, abs=1e-15)
    criterion(
        "A1",
        res.relative_error <= 1e-3,
        f"alpha={alpha} omega={omega}: sigma={res.sigma:.8g} theory={res.sigma_theory:.8g} rel={res.relative_error:.3e}",
    )


def test_a1_packet_independence(criterion):
    packets = [
        {"q0": 0.0, "p0": 0.0, "s_q": 1.0, "s_p": 1.0},
        {"q0": 2.0, "p0": 0.0, "s_q": 0.7, "s_p": 1.3},
        {"q0": -1.5, "p0": 0.0, "s_q": 1.5, "s_p": 0.8},
    ]
    sigmas = [_experiment(1.0, 1.0, ["a_gauge"], pk).runs["a_gauge"].result.sigma for pk in packets]
    spread = max(abs(s - sigmas[0]) / abs(sigmas[0]) for s in sigmas)
    criterion("A1", spread <= 1e-6, f"packet spread {spread:.3e}")


@pytest.mark.parametrize("alpha,omega", PARAMS)
def test_a2_gauge_invariance(alpha, omega, criterion):
    report = _experiment(alpha, omega, ["a_gauge", "phi_gauge"])
    delta = report.cross_gauge["delta_sigma_rel"]
    criterion("A2", delta <= 1e-6, f"alpha={alpha} omega={omega}: |dsigma|/|sigma|={delta:.3e}")


@pytest.mark.parametrize("n", [128, 256])
def test_a3_modulus_equivalence(n, criterion):
    medium = ChargedParticleMedium(alpha=1.0)
    drive = DriveSpec(1.0, 1.0, "re")
    grid = make_grid(GridSpec(-20.0, 20.0, -10.0, 10.0, n, n))
    chi0 = gaussian_packet(grid, 0.5, 0.3, 1.0, 1.0)
    cfg_a = PropagatorConfig(1e-3, 1.0, record_every=1000)
    cfg_phi = PropagatorConfig(1e-3, 1.0, record_every=1000, p_frame="fixed")
    chi_a = propagate(chi0, cfg_a, "a_gauge", medium, drive, UNIT).final
    chi_phi = propagate(chi0, cfg_phi, "phi_gauge", medium, drive, UNIT).final
    assert chi_phi.p_offset == 0.0
    res = modulus_equivalence_residual(chi_a, chi_phi, medium, drive)
    criterion("A3", res <= 1e-7, f"{n}x{n}: max modulus residual {res:.3e}")


def _plane_wave_setup():
    medium = ChargedParticleMedium(alpha=1.0)
    drive = DriveSpec(1.0, 1.0, "re")
    # q box of length 8 pi makes k = 1 a grid mode
    grid = make_grid(GridSpec(-4 * np.pi, 4 * np.pi, -10.0, 10.0, 128, 64))
    cmap = CharacteristicMap(medium, drive, "a_gauge")
    sol = PlaneWaveSolution(k=1.0, c_plus=0.6, c_minus=0.4 - 0.2j)
    return medium, drive, grid, cmap, sol


def test_a4_plane_wave_oracle(criterion):
    medium, drive, grid, cmap, sol = _plane_wave_setup()
    exact = lambda tt: plane_wave_solution(sol, grid.Q, grid.P, tt, cmap, medium, UNIT)
    chi0 = StateFunction(exact(0.0), 0.0, grid)
    t_end = 1.0 / medium.alpha
    final = propagate(chi0, PropagatorConfig(1e-3, t_end, record_every=1000), "a_gauge", medium, drive, UNIT).final
    err = float(np.max(np.abs(final.values - exact(final.time))))
    criterion("A4", err <= 1e-10, f"max |chi - chi_exact| at t={final.time}: {err:.3e}")


def test_a5_pde_residual(criterion):
    medium, drive, grid, cmap, sol = _plane_wave_setup()
    op = kanai_operator("a_gauge", medium, drive, UNIT)
    exact = lambda tt: plane_wave_solution(sol, grid.Q, grid.P, tt, cmap, medium, UNIT)
    h = 1e-3
    weights = {1: 45 / 60, 2: -9 / 60, 3: 1 / 60}
    worst = 0.0
    for tt in (0.3, 1.0, 2.5):
        dchi = sum(w * (exact(tt + j * h) - exact(tt - j * h)) for j, w in weights.items()) / h
        chi = exact(tt)
        residual = 1j * UNIT.hbar * dchi - op.apply(chi, grid, tt)
        worst = max(worst, float(np.max(np.abs(residual)) / np.max(np.abs(chi))))
    criterion("A5", worst <= 1e-9, f"relative residual sup-norm {worst:.3e}")


@pytest.mark.parametrize("gauge", ["a_gauge", "phi_gauge"])
def test_a6_norm_conservation(gauge, default_grid, criterion):
    medium = ChargedParticleMedium(alpha=1.0)
    drive = DriveSpec(1.0, 1.0, "re")
    chi0 = gaussian_packet(default_grid, 0.5, 0.3)
    traj = propagate(chi0, PropagatorConfig(1e-3, 10.0, record_every=1), gauge, medium, drive, UNIT)
    assert len(traj.records) == 10001
    norms = np.array([r.norm for r in traj.records])
    drift = float(np.max(np.abs(norms - norms[0])))
    criterion("A6", drift <= 1e-12, f"{gauge}: <1> drift over 1e4 steps {drift:.3e}")


def test_a6_strang_second_order(default_grid, criterion):
    medium = ChargedParticleMedium(alpha=1.0)
    drive = DriveSpec(1.0, 1.0, "re")
    cmap = CharacteristicMap(medium, drive, "phi_gauge")
    chi0 = gaussian_packet(default_grid, 0.5, 0.3)
    t_end = 5.0
    q_exact, _ = classical_trajectory(0.5, 0.3, t_end, "phi_gauge", cmap, medium)
    dts = np.array([1e-2, 5e-3, 2.5e-3])
    errs = []
    for dt in dts:
        rec = propagate(chi0, PropagatorConfig(dt, t_end, record_every=10**6), "phi_gauge", medium, drive, UNIT).records[-1]
        errs.append(abs(rec.mean_q - q_exact))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    criterion("A6", abs(slope - 2.0) <= 0.1, f"Strang slope {slope:.4f}, errors {[f'{e:.3e}' for e in errs]}")


def _random_gauge_pair(rng):
    a, b, c, d, e = rng.uniform(-1.5, 1.5, size=5)
    f = a * sp.sin(b * Q_SYM + c * T_SYM) + d * Q_SYM**3 * T_SYM + e * sp.exp(-(Q_SYM**2) / 4)
    a, b, c, d = rng.uniform(-1.5, 1.5, size=4)
    g = a * sp.cos(b * P_SYM) * T_SYM + c * P_SYM**4 / 12 + d * sp.tanh(P_SYM + T_SYM)
    return GaugeFunctions(f, g)


def _fd_jacobian(fn, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    J = np.empty((4, 4))
    for j in range(4):
        dx = np.zeros(4)
        dx[j] = h
        J[:, j] = (np.array(fn(x + dx)) - np.array(fn(x - dx))) / (2 * h)
    return J


def test_a7_canonical_shift_is_symplectic(criterion):
    rng = np.random.default_rng(7)
    omega = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    worst = 0.0
    for _ in range(100):
        gf = _random_gauge_pair(rng)
        tt = rng.uniform(0.0, 3.0)
        charge = rng.uniform(0.5, 2.0)
        point = rng.uniform(-2.0, 2.0, size=4)
        J = _fd_jacobian(lambda x: [float(v) for v in canonical_shift(tuple(x), gf, tt, UNIT, charge)], point)
        worst = max(worst, float(np.max(np.abs(J.T @ omega @ J - omega))))
    criterion("A7", worst <= 1e-8, f"max |J^T Omega J - Omega| over 100 pairs {worst:.3e}")


@pytest.mark.parametrize("gauge,dt", [("a_gauge", 1e-3), ("phi_gauge", 2.5e-4)])
def test_a8_ehrenfest_centroid(gauge, dt, default_grid, criterion):
    medium = ChargedParticleMedium(alpha=1.0)
    drive = DriveSpec(1.0, 1.0, "re")
    cmap = CharacteristicMap(medium, drive, gauge)
    chi0 = gaussian_packet(default_grid, 0.5, 0.3)
    every = int(round(0.05 / dt))
    traj = propagate(chi0, PropagatorConfig(dt, 5.0 / medium.alpha, record_every=every), gauge, medium, drive, UNIT)
    ts = traj.times
    q_cl, _ = classical_trajectory(0.5, 0.3, ts, gauge, cmap, medium)
    err = float(np.max(np.abs(np.array([r.mean_q for r in traj.records]) - q_cl)))
    criterion("A8", err <= 1e-8, f"{gauge} dt={dt}: max |<q> - q_cl| {err:.3e}")


@pytest.mark.parametrize("gauge", ["a_gauge", "phi_gauge"])
def test_a9_ordering_commutes(gauge, criterion):
    medium = ChargedParticleMedium(alpha=0.7)
    drive = DriveSpec(1.0 + 0.5j, 1.3)
    pots = GaugePotentials.for_tag(gauge, medium, drive, UNIT)
    one = extend_then_substitute(medium, pots, UNIT)
    two = substitute_then_extend(medium, pots, UNIT)
    assert set(one.keys) == set(two.keys)
    rng = np.random.default_rng(9)
    P, Q, T = rng.uniform(-5, 5, 200), rng.uniform(-5, 5, 200), rng.uniform(0, 5, 200)
    worst = 0.0
    for key in one.keys:
        a, b = one.coefficient(*key)(P, Q, T), two.coefficient(*key)(P, Q, T)
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))))
    criterion("A9", worst <= 1e-12, f"{gauge}: max coefficient mismatch {worst:.3e}")
