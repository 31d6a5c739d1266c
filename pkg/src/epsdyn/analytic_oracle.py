"""Closed-form solutions of the damped, driven system.

All time integrals start at t = 0. For the phasor drive E(t) = E0 exp(i w t)
with z = alpha + i w they reduce to combinations of ``J(s, t) = int_0^t
exp(s x) dx``:

    u(t)   = int exp(-alpha s) ds                  = J(-alpha, t)
    I(t)   = int exp(alpha s) E(s) ds              = E0 J(z, t)
    w_A(t) = (e/m) int exp(-alpha s) I(s) ds       = (e/m) E0/z  (J(iw, t) - u(t))
    w_phi(t) = (e/m) int exp(alpha s) E(s) u(s) ds

Each has an adaptive-quadrature twin (``quad_*``) used as the independent
check on the closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .hamiltonians import ChargedParticleMedium, DriveSpec, PhysicalConstants, exp_integral

GAUGES = ("a_gauge", "phi_gauge")
ALPHA_ZERO = 1e-12


def _as_complex(x):
    x = np.asarray(x)
    return complex(x) if x.ndim == 0 else x


def _t_moment(s: complex, tt):
    """int_0^tt x exp(s x) dx."""
    tt = np.asarray(tt, dtype=float)
    if abs(s) * np.max(np.abs(tt), initial=0.0) < 1e-4:
        x = s * tt
        return tt**2 * (0.5 + x / 3 + x * x / 8 + x**3 / 30)
    return (tt * np.exp(s * tt) - exp_integral(s, tt)) / s


CANCEL_LIMIT = 1e-3


def _gauss_integral(f, tt):
    """int_0^tt f(s) ds by panelled Gauss-Legendre, one value per entry of tt.

    Used where the closed forms divide a near-cancelling difference by a
    small rate; f must be smooth with oscillation period >~ 1.
    """
    nodes, weights = np.polynomial.legendre.leggauss(20)
    tt = np.asarray(tt, dtype=float)
    out = np.empty(tt.shape, dtype=complex)
    for idx, x in np.ndenumerate(tt):
        panels = int(np.ceil(abs(x) / 2.0)) + 1
        edges = np.linspace(0.0, x, panels + 1)
        half = np.diff(edges) / 2
        mids = edges[:-1] + half
        s = mids[:, None] + half[:, None] * nodes[None, :]
        out[idx] = np.sum(half[:, None] * weights[None, :] * f(s))
    return out


@dataclass(frozen=True)
class CharacteristicMap:
    """Time integrals and coordinate maps of the characteristic reduction."""

    medium: ChargedParticleMedium
    drive: DriveSpec
    gauge_tag: str = "a_gauge"

    def __post_init__(self):
        if self.gauge_tag not in GAUGES:
            raise ValueError(f"gauge_tag must be one of {GAUGES}, got {self.gauge_tag!r}")

    def with_gauge(self, gauge_tag: str) -> "CharacteristicMap":
        return CharacteristicMap(self.medium, self.drive, gauge_tag)

    @property
    def _z(self) -> complex:
        return self.medium.alpha + 1j * self.drive.omega

    def u(self, tt):
        return np.real(exp_integral(-self.medium.alpha, tt))

    def I(self, tt):  # noqa: E743
        return _as_complex(self.drive.damped_integral(self.medium.alpha, tt))

    def w_a(self, tt):
        med, z, alpha = self.medium, self._z, self.medium.alpha
        tt = np.asarray(tt, dtype=float)
        if z == 0:
            raw = self.drive.E0 * tt**2 / 2 + 0j
        else:
            with np.errstate(all="ignore"):
                raw = np.asarray(self.drive.E0 / z * (exp_integral(1j * self.drive.omega, tt) - self.u(tt)))
            small = abs(z) * np.abs(tt) < CANCEL_LIMIT
            if np.any(small):
                inner = lambda s: np.exp(-alpha * s) * self.drive.E0 * exp_integral(z, s)
                raw = np.where(small, _gauss_integral(inner, np.where(small, tt, 0.0)), raw)
        return _as_complex(med.e_charge / med.m * self.drive.project(raw))

    def w_phi(self, tt):
        med, alpha = self.medium, self.medium.alpha
        tt = np.asarray(tt, dtype=float)
        if alpha < ALPHA_ZERO:
            raw = self.drive.E0 * _t_moment(1j * self.drive.omega, tt)
        else:
            raw = np.asarray(self.drive.E0 / alpha * (exp_integral(self._z, tt) - exp_integral(1j * self.drive.omega, tt)))
            small = alpha * np.abs(tt) < CANCEL_LIMIT
            if np.any(small):
                inner = lambda s: np.exp(self._z * s) * self.drive.E0 * np.real(exp_integral(-alpha, s))
                raw = np.where(small, _gauss_integral(inner, np.where(small, tt, 0.0)), raw)
        return _as_complex(med.e_charge / med.m * self.drive.project(raw))

    def drift(self, tt):
        """Field-driven part of the q characteristic, w_A or -w_phi."""
        return self.w_a(tt) if self.gauge_tag == "a_gauge" else -self.w_phi(tt)

    def eta(self, p, tt):
        if self.gauge_tag == "a_gauge":
            return np.asarray(p) + 0.0
        return np.asarray(p) - self.medium.e_charge * self.I(tt)

    def xi(self, q, p, tt):
        return np.asarray(q) - np.asarray(p) / self.medium.m * self.u(tt) - self.drift(tt)


def xi(q, p, tt, cmap: CharacteristicMap):
    """Characteristic coordinates (xi, eta, tau) at phase-space point (p, q)."""
    return cmap.xi(q, p, tt), cmap.eta(p, tt), tt


def _quad_complex(f, a, b, rtol=1e-10):
    re = integrate.quad(lambda x: np.real(f(x)), a, b, epsrel=rtol, epsabs=0, limit=200)[0]
    im = integrate.quad(lambda x: np.imag(f(x)), a, b, epsrel=rtol, epsabs=0, limit=200)[0]
    return re + 1j * im


def quad_u(alpha, tt, rtol=1e-10):
    return integrate.quad(lambda s: np.exp(-alpha * s), 0, tt, epsrel=rtol, epsabs=0)[0]


def quad_I(medium, drive, tt, rtol=1e-10):
    return _quad_complex(lambda s: np.exp(medium.alpha * s) * drive.field(s), 0, tt, rtol)


def quad_w_a(medium, drive, tt, rtol=1e-10):
    inner = lambda lam: quad_I(medium, drive, lam, rtol)
    val = _quad_complex(lambda lam: np.exp(-medium.alpha * lam) * inner(lam), 0, tt, rtol)
    return medium.e_charge / medium.m * val


def quad_w_phi(medium, drive, tt, rtol=1e-10):
    f = lambda lam: np.exp(medium.alpha * lam) * drive.field(lam) * quad_u(medium.alpha, lam, rtol)
    return medium.e_charge / medium.m * _quad_complex(f, 0, tt, rtol)


@dataclass(frozen=True)
class PlaneWaveSolution:
    k: float
    c_plus: complex = 0.5
    c_minus: complex = 0.5


def plane_wave_solution(
    sol: PlaneWaveSolution,
    q,
    p,
    tt,
    cmap: CharacteristicMap,
    medium: ChargedParticleMedium,
    constants: PhysicalConstants,
):
    """Standing-wave solution C+ exp(+i k xi + phase) + C- exp(-i k xi + phase).

    The time phase is hbar k^2 exp(-alpha t) / (2 m alpha); for alpha below
    1e-12 the undamped phase -hbar k^2 t / (2 m) is used instead.
    """
    if medium.alpha < 0:
        raise ValueError("alpha must be non-negative")
    k, m, hbar = sol.k, medium.m, constants.hbar
    if medium.alpha < ALPHA_ZERO:
        phase = -hbar * k**2 * np.asarray(tt, dtype=float) / (2 * m)
    else:
        phase = hbar * k**2 * np.exp(-medium.alpha * np.asarray(tt, dtype=float)) / (2 * m * medium.alpha)
    x = cmap.xi(q, p, tt)
    return sol.c_plus * np.exp(1j * (k * x + phase)) + sol.c_minus * np.exp(1j * (-k * x + phase))


def classical_trajectory(q0, p0, tt, gauge_tag: str, cmap: CharacteristicMap, medium: ChargedParticleMedium):
    """Centroid motion (q(t), p(t)) in the requested gauge.

    A-gauge: p is conserved and q follows the xi characteristic.
    phi-gauge: p follows the eta' characteristic and q the xi' one.
    """
    cm = cmap.with_gauge(gauge_tag)
    u = cm.u(tt)
    if gauge_tag == "a_gauge":
        pt = p0 + 0.0 * u
    else:
        pt = p0 + medium.e_charge * cm.I(tt)
    qt = q0 + pt * u / medium.m + cm.drift(tt)
    return qt, pt


def steady_state_conductivity(medium: ChargedParticleMedium, drive: DriveSpec) -> complex:
    """Drude form N e^2 / (m (alpha + i omega))."""
    z = medium.alpha + 1j * drive.omega
    if z == 0:
        raise ValueError("alpha = omega = 0: DC conductivity of an undamped medium diverges")
    return medium.n_particles * medium.e_charge**2 / (medium.m * z)


@dataclass
class ConductivityResult:
    sigma: complex
    sigma_theory: complex
    transient_window: tuple[float, float]
    relative_error: float = float("nan")

    def __post_init__(self):
        self.relative_error = float(abs(self.sigma - self.sigma_theory) / abs(self.sigma_theory))
