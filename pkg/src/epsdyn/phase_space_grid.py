"""Uniform periodic grid on the extended phase space (p, q).

Arrays are laid out with shape ``(n_p, n_q)``: axis 0 runs over momentum
samples, axis 1 over coordinate samples. Derivatives are spectral, using the
standard DFT wavenumber ordering (Nyquist mode on the negative branch).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft


@dataclass(frozen=True)
class GridSpec:
    q_min: float
    q_max: float
    p_min: float
    p_max: float
    n_q: int
    n_p: int
    boundary: str = "periodic"

    def validate(self) -> None:
        if self.boundary != "periodic":
            raise ValueError(f"unsupported boundary {self.boundary!r}; only 'periodic'")
        if not self.q_max > self.q_min:
            raise ValueError(f"inverted q bounds: q_min={self.q_min}, q_max={self.q_max}")
        if not self.p_max > self.p_min:
            raise ValueError(f"inverted p bounds: p_min={self.p_min}, p_max={self.p_max}")
        for name in ("n_q", "n_p"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or (int(n) & (int(n) - 1)):
                raise ValueError(f"{name}={n} must be a power of two >= 8")


@dataclass(frozen=True, eq=False)
class Grid:
    """Sampled axes and wavenumbers for a :class:`GridSpec`."""

    spec: GridSpec
    q: np.ndarray
    p: np.ndarray
    k_q: np.ndarray
    k_p: np.ndarray
    dq: float
    dp: float
    Q: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    KQ: np.ndarray = field(repr=False)
    KP: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec.n_p, self.spec.n_q)

    @property
    def length_q(self) -> float:
        return self.spec.q_max - self.spec.q_min

    @property
    def length_p(self) -> float:
        return self.spec.p_max - self.spec.p_min


def make_grid(spec: GridSpec) -> Grid:
    spec.validate()
    n_q, n_p = int(spec.n_q), int(spec.n_p)
    dq = (spec.q_max - spec.q_min) / n_q
    dp = (spec.p_max - spec.p_min) / n_p
    q = spec.q_min + dq * np.arange(n_q)
    p = spec.p_min + dp * np.arange(n_p)
    k_q = 2.0 * np.pi * np.fft.fftfreq(n_q, d=dq)
    k_p = 2.0 * np.pi * np.fft.fftfreq(n_p, d=dp)
    Q, P = np.meshgrid(q, p)
    KQ, KP = np.meshgrid(k_q, k_p)
    for arr in (q, p, k_q, k_p, Q, P, KQ, KP):
        arr.setflags(write=False)
    return Grid(spec, q, p, k_q, k_p, dq, dp, Q, P, KQ, KP)


@dataclass(frozen=True, eq=False)
class StateFunction:
    """Complex state function chi(p, q, t) sampled on a grid.

    ``p_offset`` labels a co-moving momentum frame: column ``i`` of ``values``
    sits at physical momentum ``grid.p[i] + p_offset``. It stays 0 unless a
    propagator tracks a uniform momentum drift by relabelling the axis.
    """

    values: np.ndarray
    time: float
    grid: Grid
    p_offset: float = 0.0

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state function has non-finite entries")

    @property
    def p(self) -> np.ndarray:
        """Physical momentum axis."""
        return self.grid.p + self.p_offset

    @property
    def P(self) -> np.ndarray:
        return self.grid.P + self.p_offset

    def with_values(self, values, time=None, p_offset=None) -> "StateFunction":
        return replace(
            self,
            values=values,
            time=self.time if time is None else time,
            p_offset=self.p_offset if p_offset is None else p_offset,
        )


def _values(chi, grid):
    if isinstance(chi, StateFunction):
        return chi.values, chi.grid
    if grid is None:
        raise TypeError("grid is required when passing a bare array")
    return np.asarray(chi), grid


def _multiplier(k: np.ndarray, order: int) -> np.ndarray:
    mult = (1j * k) ** order
    if order % 2 == 1 and k.size % 2 == 0:
        mult = mult.copy()
        mult[k.size // 2] = 0.0
    return mult


def spectral_derivative(values: np.ndarray, grid: Grid, order_q: int = 0, order_p: int = 0) -> np.ndarray:
    """Mixed spectral derivative d^order_q/dq^order_q d^order_p/dp^order_p."""
    if order_q < 0 or order_p < 0:
        raise ValueError("derivative orders must be non-negative")
    out = np.asarray(values, dtype=complex)
    if order_q:
        out = fft.ifft(fft.fft(out, axis=1) * _multiplier(grid.k_q, order_q)[None, :], axis=1)
    if order_p:
        out = fft.ifft(fft.fft(out, axis=0) * _multiplier(grid.k_p, order_p)[:, None], axis=0)
    return out


def d_dq(chi, order: int = 1, grid: Grid | None = None) -> np.ndarray:
    if order <= 0:
        raise ValueError(f"derivative order must be positive, got {order}")
    values, grid = _values(chi, grid)
    return spectral_derivative(values, grid, order_q=order)


def d_dp(chi, order: int = 1, grid: Grid | None = None) -> np.ndarray:
    if order <= 0:
        raise ValueError(f"derivative order must be positive, got {order}")
    values, grid = _values(chi, grid)
    return spectral_derivative(values, grid, order_p=order)


def integrate_phase_space(field_values, grid: Grid) -> complex:
    """Rectangle-rule integral over the periodic box."""
    arr = np.asarray(field_values)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot integrate a non-finite field")
    # row sums then a single reduction keep the summation order fixed
    return complex(np.sum(np.sum(arr, axis=1)) * grid.dp * grid.dq)


def shift_p(values: np.ndarray, grid: Grid, shift: complex) -> np.ndarray:
    """Band-limited translation chi(p) -> chi(p - shift) along the p axis.

    A complex ``shift`` gives the analytic continuation of the translation.
    """
    phase = np.exp(-1j * grid.k_p * shift)
    return fft.ifft(fft.fft(values, axis=0) * phase[:, None], axis=0)
