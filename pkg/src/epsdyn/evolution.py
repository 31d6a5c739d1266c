"""Time propagation of the state function in the two gauges.

Both gauge generators are diagonal in (p, k_q) apart from the phi-gauge
p-advection, so every factor below is an exact phase or translation:

* A-gauge: one diagonal phase per step, exact for any dt.
* phi-gauge: Strang composition p-advection(dt/2) . q-sector(dt) .
  p-advection(dt/2). The p-advection is a uniform translation and can be
  carried either spectrally (``p_frame="fixed"``) or as a relabelling of the
  momentum axis (``p_frame="moving"``), which keeps packets on the grid while
  the translation grows like exp(alpha t).
* ``generic_series``: RK4 on an arbitrary :class:`ExtendedHamiltonianOp`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .analytic_oracle import GAUGES, CharacteristicMap
from .hamiltonians import (
    ChargedParticleMedium,
    DriveSpec,
    ExtendedHamiltonianOp,
    PhysicalConstants,
    kanai_operator,
)
from .observables import ObservableRecord, record
from .phase_space_grid import Grid, StateFunction, shift_p

log = logging.getLogger(__name__)

SCHEMES = ("exact_diagonal", "strang", "generic_series")
DEFAULT_SCHEME = {"a_gauge": "exact_diagonal", "phi_gauge": "strang"}
RK4_STABILITY = 2.8


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    t_final: float
    scheme: str | None = None
    record_every: int = 1
    p_frame: str = "moving"
    splitting_tol: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0:
            raise ValueError(f"t_final must be >= 0, got {self.t_final}")
        if self.t_final and self.dt > self.t_final:
            raise ValueError(f"dt={self.dt} exceeds t_final={self.t_final}")
        if self.scheme is not None and self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every}")
        if self.p_frame not in ("moving", "fixed"):
            raise ValueError(f"p_frame must be 'moving' or 'fixed', got {self.p_frame!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def scheme_for(self, gauge_tag: str) -> str:
        scheme = self.scheme or DEFAULT_SCHEME[gauge_tag]
        if scheme == "exact_diagonal" and gauge_tag != "a_gauge":
            raise ValueError("exact_diagonal stepping only applies to the A-gauge")
        if scheme == "strang" and gauge_tag != "phi_gauge":
            raise ValueError("strang stepping is defined for the phi-gauge")
        return scheme


def gaussian_packet(grid: Grid, q0=0.0, p0=0.0, s_q=1.0, s_p=1.0, time=0.0) -> StateFunction:
    """Real positive Gaussian with unit integral."""
    if not (s_q > 0 and s_p > 0):
        raise ValueError("packet widths must be positive")
    norm = 1.0 / (2 * np.pi * s_q * s_p)
    values = norm * np.exp(-((grid.Q - q0) ** 2) / (2 * s_q**2) - ((grid.P - p0) ** 2) / (2 * s_p**2))
    return StateFunction(values.astype(complex), float(time), grid)


def _guard(values, step, tt, grid):
    if np.all(np.isfinite(values)):
        return
    spec = np.abs(fft.fft(np.nan_to_num(values, nan=0.0, posinf=0.0, neginf=0.0), axis=1))
    mode_norms = np.sqrt(np.sum(spec**2, axis=0))
    worst = np.argsort(mode_norms)[-5:][::-1]
    detail = ", ".join(f"k_q={grid.k_q[i]:.3g}: {mode_norms[i]:.3g}" for i in worst)
    raise PropagationError(f"non-finite state at step {step}, t={tt:.6g}; largest finite mode norms: {detail}")


def _q_sector(values, grid: Grid, p_axis, s_u, s_c, hbar, m):
    """Multiply each (p, k_q) mode by exp(-i [s_u (hbar k^2/2m + k p/m) + s_c k])."""
    K = grid.k_q[None, :]
    theta = s_u * (hbar / (2 * m)) * K**2 + (s_u / m) * (np.asarray(p_axis)[:, None] * K) + s_c * K
    return fft.ifft(fft.fft(values, axis=1) * np.exp(-1j * theta), axis=1)


def step_a_gauge(chi: StateFunction, tt: float, dt: float, medium: ChargedParticleMedium, drive: DriveSpec,
                 constants: PhysicalConstants) -> StateFunction:
    """One exact step of the A-gauge evolution (any sign of dt)."""
    cmap = CharacteristicMap(medium, drive, "a_gauge")
    s_u = cmap.u(tt + dt) - cmap.u(tt)
    s_c = cmap.w_a(tt + dt) - cmap.w_a(tt)
    out = _q_sector(chi.values, chi.grid, chi.p, s_u, s_c, constants.hbar, medium.m)
    _guard(out, 1, tt + dt, chi.grid)
    return chi.with_values(out, time=tt + dt)


def advect_p(chi: StateFunction, shift: complex, p_frame: str = "moving") -> StateFunction:
    """Translate chi(p) -> chi(p - shift).

    In the moving frame the real part of the shift relabels the momentum axis
    and only an imaginary remainder is applied spectrally.
    """
    if p_frame == "moving":
        values = chi.values
        if np.imag(shift) != 0:
            values = shift_p(values, chi.grid, 1j * np.imag(shift))
        return chi.with_values(values, p_offset=chi.p_offset + float(np.real(shift)))
    return chi.with_values(shift_p(chi.values, chi.grid, shift))


def step_phi_gauge(chi: StateFunction, tt: float, dt: float, medium: ChargedParticleMedium, drive: DriveSpec,
                   constants: PhysicalConstants, p_frame: str = "moving") -> StateFunction:
    """One Strang step: half p-advection, full q-sector, half p-advection."""
    cmap = CharacteristicMap(medium, drive, "phi_gauge")
    e = medium.e_charge
    i0, ih, i1 = cmap.I(tt), cmap.I(tt + dt / 2), cmap.I(tt + dt)
    half = advect_p(chi, e * (ih - i0), p_frame)
    s_u = cmap.u(tt + dt) - cmap.u(tt)
    mid = _q_sector(half.values, half.grid, half.p, s_u, 0.0, constants.hbar, medium.m)
    out = advect_p(half.with_values(mid), e * (i1 - ih), p_frame)
    _guard(out.values, 1, tt + dt, chi.grid)
    return out.with_values(out.values, time=tt + dt)


def generic_series_step(chi: StateFunction, tt: float, dt: float, op: ExtendedHamiltonianOp,
                        constants: PhysicalConstants, order: int = 4) -> StateFunction:
    """Classical RK4 step of d chi/dt = -(i/hbar) op(chi)."""
    if order != 4:
        raise ValueError("only the fourth-order Runge-Kutta step is implemented")
    grid, hbar, off = chi.grid, constants.hbar, chi.p_offset
    rate = op.max_rate(grid, tt, hbar, off)
    if rate * abs(dt) > RK4_STABILITY:
        raise ValueError(f"dt={dt} unstable: max generator rate {rate:.4g} gives {rate * abs(dt):.3g} > {RK4_STABILITY}")

    def f(s, v):
        return (-1j / hbar) * op.apply(v, grid, s, off)

    v = chi.values
    k1 = f(tt, v)
    k2 = f(tt + dt / 2, v + dt / 2 * k1)
    k3 = f(tt + dt / 2, v + dt / 2 * k2)
    k4 = f(tt + dt, v + dt * k3)
    out = v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    _guard(out, 1, tt + dt, grid)
    return chi.with_values(out, time=tt + dt)


def strang_splitting_error(chi: StateFunction, tt: float, dt: float, medium, drive, constants,
                           p_frame: str = "moving") -> float:
    """Step-doubling estimate: max |one dt step - two dt/2 steps|."""
    one = step_phi_gauge(chi, tt, dt, medium, drive, constants, p_frame)
    two = step_phi_gauge(chi, tt, dt / 2, medium, drive, constants, p_frame)
    two = step_phi_gauge(two, tt + dt / 2, dt / 2, medium, drive, constants, p_frame)
    if p_frame == "moving" and one.p_offset != two.p_offset:
        two = two.with_values(shift_p(two.values, two.grid, two.p_offset - one.p_offset), p_offset=one.p_offset)
    return float(np.max(np.abs(one.values - two.values)))


@dataclass
class Trajectory:
    gauge_tag: str
    records: list[ObservableRecord]
    final: StateFunction
    states: list[StateFunction] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


def _record_steps(n_steps: int, every: int) -> list[int]:
    marks = list(range(every, n_steps + 1, every))
    if not marks or marks[-1] != n_steps:
        marks.append(n_steps)
    return [m for m in marks if m > 0]


def propagate(
    chi0: StateFunction,
    config: PropagatorConfig,
    gauge_tag: str,
    medium: ChargedParticleMedium,
    drive: DriveSpec,
    constants: PhysicalConstants,
    op: ExtendedHamiltonianOp | None = None,
    keep_states: bool = False,
) -> Trajectory:
    """Run from chi0 to t_final, recording observables every ``record_every`` steps.

    Runs of commuting diagonal steps between two records are fused into a
    single phase whose parameters are the per-step sums; this is algebraically
    the same product of step factors.
    """
    if gauge_tag not in GAUGES:
        raise ValueError(f"unknown gauge {gauge_tag!r}")
    scheme = config.scheme_for(gauge_tag)
    cmap = CharacteristicMap(medium, drive, gauge_tag)
    t0, dt = chi0.time, config.dt
    n_steps = config.n_steps

    if scheme == "strang" and config.splitting_tol is not None and n_steps:
        err = strang_splitting_error(chi0, t0, dt, medium, drive, constants, config.p_frame)
        if err > config.splitting_tol:
            raise ValueError(f"dt={dt} splitting error {err:.3g} exceeds tolerance {config.splitting_tol:.3g}")

    traj = Trajectory(gauge_tag, [record(chi0, medium, drive, cmap)], chi0)
    if keep_states:
        traj.states.append(chi0)
    if n_steps == 0:
        return traj

    fused = scheme == "exact_diagonal" or (scheme == "strang" and config.p_frame == "moving" and drive.is_real)
    if scheme == "generic_series" and op is None:
        op = kanai_operator(gauge_tag, medium, drive, constants)

    chi, done = chi0, 0
    for mark in _record_steps(n_steps, int(config.record_every)):
        if fused:
            chi = _fused_block(chi, t0, dt, done, mark, scheme, cmap, medium, constants)
        else:
            for n in range(done, mark):
                tt = t0 + n * dt
                if scheme == "strang":
                    chi = step_phi_gauge(chi, tt, dt, medium, drive, constants, config.p_frame)
                elif scheme == "exact_diagonal":
                    chi = step_a_gauge(chi, tt, dt, medium, drive, constants)
                else:
                    chi = generic_series_step(chi, tt, dt, op, constants)
        done = mark
        traj.records.append(record(chi, medium, drive, cmap))
        if keep_states:
            traj.states.append(chi)
    traj.final = chi
    log.debug("propagated %s to t=%g in %d steps", gauge_tag, chi.time, n_steps)
    return traj


def _fused_block(chi, t0, dt, n0, n1, scheme, cmap: CharacteristicMap, medium, constants):
    n = np.arange(n0, n1)
    t_lo = t0 + n * dt
    t_hi = t0 + (n + 1) * dt
    s_u_steps = cmap.u(t_hi) - cmap.u(t_lo)
    s_u = float(np.sum(s_u_steps))
    if scheme == "exact_diagonal":
        s_c = np.sum(np.asarray(cmap.w_a(t_hi)) - np.asarray(cmap.w_a(t_lo)))
        offset = chi.p_offset
        p_axis = chi.p
    else:
        e = medium.e_charge
        i_lo, i_mid, i_hi = (np.real(np.asarray(cmap.I(x))) for x in (t_lo, t_lo + dt / 2, t_hi))
        first, second = e * (i_mid - i_lo), e * (i_hi - i_mid)
        before = chi.p_offset + np.concatenate(([0.0], np.cumsum(first + second)[:-1]))
        mid_offsets = before + first
        s_c = float(np.sum(s_u_steps * mid_offsets)) / medium.m
        offset = float(before[-1] + first[-1] + second[-1])
        p_axis = chi.grid.p
    values = _q_sector(chi.values, chi.grid, p_axis, s_u, s_c, constants.hbar, medium.m)
    _guard(values, n1, t0 + n1 * dt, chi.grid)
    return chi.with_values(values, time=t0 + n1 * dt, p_offset=offset)
