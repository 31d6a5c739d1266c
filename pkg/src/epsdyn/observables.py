"""Averages over the state function and conductivity extraction."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .analytic_oracle import CharacteristicMap, ConductivityResult, steady_state_conductivity
from .hamiltonians import ChargedParticleMedium, DriveSpec
from .phase_space_grid import StateFunction, integrate_phase_space, shift_p

NORM_WARN = 1e-8


class NormalizationWarning(UserWarning):
    pass


class TransientWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    mean_p: complex
    mean_qdot: complex
    norm: complex
    sigma_instant: complex
    mean_q: complex = complex("nan")


def _raw_average(O, chi: StateFunction) -> complex:
    weight = np.conj(chi.values)
    if callable(O):
        weight = np.asarray(O(chi.P, chi.grid.Q)) * weight
    elif O != 1:
        weight = O * weight
    return integrate_phase_space(weight, chi.grid)


def average(O: Callable | complex, chi: StateFunction, check_norm: bool = True) -> complex:
    """<O> = integral of O(p, q) conj(chi) over the grid."""
    if check_norm:
        norm = _raw_average(1, chi)
        if abs(norm - 1) > NORM_WARN:
            warnings.warn(f"state normalization drifted: <1> = {norm}", NormalizationWarning, stacklevel=2)
    return _raw_average(O, chi)


def mean_qdot(chi: StateFunction, tt: float, medium: ChargedParticleMedium, drive: DriveSpec, cmap: CharacteristicMap,
              mean_p: complex | None = None) -> complex:
    """Mean velocity from the canonical momentum of the map's gauge.

    In the A-gauge the kinetic momentum is p + e I(t); in the phi-gauge the
    canonical p already is kinetic, so the field term is not added again.
    """
    if mean_p is None:
        mean_p = average(lambda P, Q: P, chi, check_norm=False)
    damp = np.exp(-medium.alpha * tt) / medium.m
    out = damp * mean_p
    if cmap.gauge_tag == "a_gauge":
        out = out + damp * medium.e_charge * cmap.I(tt)
    return complex(out)


def composite_shift(tt: float, medium: ChargedParticleMedium, drive: DriveSpec) -> tuple[float, float]:
    """(dq, dp) such that chi_phi(q + dq, p + dp) = chi_A(q, p) at time tt.

    Obtained by equating the characteristic coordinates of the two gauges;
    dq vanishes identically and is returned as a consistency diagnostic.
    """
    if not drive.is_real:
        raise ValueError("composite shift needs a real drive quadrature")
    ca = CharacteristicMap(medium, drive, "a_gauge")
    dp = medium.e_charge * complex(ca.I(tt))
    dq = dp * ca.u(tt) / medium.m - complex(ca.w_phi(tt)) - complex(ca.w_a(tt))
    return float(dq.real), float(dp.real)


def modulus_equivalence_residual(chi_a: StateFunction, chi_phi: StateFunction, medium: ChargedParticleMedium,
                                 drive: DriveSpec) -> float:
    """max | |chi_A(q, p)| - |chi_phi(q + dq, p + dp)| | over the A-gauge grid.

    chi_phi is resampled spectrally, so both states must be band-limited on
    their grids and share the same grid spacing.
    """
    if chi_a.time != chi_phi.time:
        raise ValueError(f"states at different times: {chi_a.time} vs {chi_phi.time}")
    if chi_a.values.shape != chi_phi.values.shape:
        raise ValueError("states live on different grids")
    dq, dp = composite_shift(chi_a.time, medium, drive)
    delta_p = chi_a.p_offset + dp - chi_phi.p_offset
    resampled = shift_p(chi_phi.values, chi_phi.grid, -delta_p)
    if dq != 0.0:
        phase = np.exp(1j * chi_phi.grid.k_q * dq)
        resampled = np.fft.ifft(np.fft.fft(resampled, axis=1) * phase[None, :], axis=1)
    return float(np.max(np.abs(np.abs(chi_a.values) - np.abs(resampled))))


def _ratio(num, den):
    return num / den if abs(den) > 1e-300 else complex("nan")


def record(chi: StateFunction, medium: ChargedParticleMedium, drive: DriveSpec, cmap: CharacteristicMap) -> ObservableRecord:
    tt = chi.time
    norm = _raw_average(1, chi)
    mp = _raw_average(lambda P, Q: P, chi)
    mq = _raw_average(lambda P, Q: Q, chi)
    qd = mean_qdot(chi, tt, medium, drive, cmap, mean_p=mp)
    sigma = _ratio(medium.n_particles * medium.e_charge * qd, complex(drive.field(tt)))
    return ObservableRecord(tt, mp, qd, norm, sigma, mq)


def combine_quadratures(
    base: Sequence[ObservableRecord],
    re: Sequence[ObservableRecord],
    im: Sequence[ObservableRecord],
    medium: ChargedParticleMedium,
    drive: DriveSpec,
) -> list[ObservableRecord]:
    """Phasor response X0 + (X_re - X0) + i (X_im - X0) from three real-drive runs.

    Valid for observables affine in the drive, which holds for <1>, <p>, <q>
    and <qdot> with the damped uniform field.
    """
    if not (len(base) == len(re) == len(im)):
        raise ValueError("quadrature trajectories must have equal length")
    phasor = drive.with_quadrature("phasor")
    out = []
    for r0, rr, ri in zip(base, re, im):
        if not (r0.t == rr.t == ri.t):
            raise ValueError("quadrature trajectories sampled at different times")
        comb = lambda a, b, c: a + (b - a) + 1j * (c - a)
        qd = comb(r0.mean_qdot, rr.mean_qdot, ri.mean_qdot)
        sigma = _ratio(medium.n_particles * medium.e_charge * qd, complex(phasor.field(r0.t)))
        out.append(ObservableRecord(
            r0.t,
            comb(r0.mean_p, rr.mean_p, ri.mean_p),
            qd,
            r0.norm,
            sigma,
            comb(r0.mean_q, rr.mean_q, ri.mean_q),
        ))
    return out


def _window(records, window):
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty averaging window {window}")
    sel = [r for r in records if t0 - 1e-9 <= r.t <= t1 + 1e-9]
    if len(sel) < 2:
        raise ValueError(f"fewer than two records inside window {window}")
    return sel


def _check_transient(medium, t_start, threshold):
    if medium.alpha > 0 and t_start < threshold / medium.alpha - 1e-9:
        warnings.warn(
            f"window starts at t={t_start} before {threshold}/alpha; "
            f"transient magnitude ~ exp(-alpha t) = {np.exp(-medium.alpha * t_start):.3g}",
            TransientWarning,
            stacklevel=3,
        )


def conductivity(
    records: Sequence[ObservableRecord],
    medium: ChargedParticleMedium,
    drive: DriveSpec,
    window: tuple[float, float],
    transient_threshold: float = 5.0,
) -> ConductivityResult:
    """Trapezoid time-average of the instantaneous ratio N e <qdot> / E(t)."""
    _check_transient(medium, window[0], transient_threshold)
    sel = _window(records, window)
    ts = np.array([r.t for r in sel])
    vals = np.array([r.sigma_instant for r in sel])
    sigma = trapezoid(vals, ts) / (ts[-1] - ts[0])
    return ConductivityResult(complex(sigma), steady_state_conductivity(medium, drive), (float(window[0]), float(window[1])))


def lockin_conductivity(
    records: Sequence[ObservableRecord],
    medium: ChargedParticleMedium,
    drive: DriveSpec,
    window: tuple[float, float],
    transient_threshold: float = 5.0,
) -> ConductivityResult:
    """Demodulate a real-drive run: sigma = 2 N e <qdot e^{-i w t}> / E0.

    The window is trimmed to a whole number of drive periods.
    """
    if drive.omega <= 0:
        raise ValueError("lock-in extraction needs omega > 0")
    if drive.quadrature != "re":
        raise ValueError("lock-in extraction expects the 're' quadrature")
    _check_transient(medium, window[0], transient_threshold)
    period = 2 * np.pi / drive.omega
    n_periods = np.floor((window[1] - window[0]) / period + 1e-9)
    if n_periods < 1:
        raise ValueError("window shorter than one drive period")
    sel = _window(records, (window[0], window[0] + n_periods * period))
    ts = np.array([r.t for r in sel])
    vals = np.array([r.mean_qdot for r in sel]) * np.exp(-1j * drive.omega * ts)
    demod = trapezoid(vals, ts) / (ts[-1] - ts[0])
    sigma = 2 * medium.n_particles * medium.e_charge * demod / drive.E0
    return ConductivityResult(complex(sigma), steady_state_conductivity(medium, drive), (float(ts[0]), float(ts[-1])))
