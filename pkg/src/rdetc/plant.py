"""Finite-difference simulator of the reaction-diffusion plant

    u_t = eps u_xx + lambda(x) u,   u_x(0) = 0,   u_x(1) + q u(1) = U(t)

Explicit Euler in time, second-order central differences with ghost nodes
at both boundaries.  The boundary input is held constant over a step
(zero-order hold), which is exactly the sampled-control semantics the
event-triggered driver needs.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DivergenceError, ValidationError
from .kernels import GainTable
from .profiles import ReactionProfile

BLOWUP_THRESHOLD = 1e12


@dataclass(frozen=True)
class PlantConfig:
    eps: float
    q: float
    profile: ReactionProfile
    nx: int
    dt: float

    def __post_init__(self):
        if self.eps <= 0:
            raise ValidationError("eps must be positive")
        if self.q <= 0:
            raise ValidationError("q must be positive")
        if self.nx < 3:
            raise ValidationError("nx must be at least 3")
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.cfl > 0.5:
            raise ValidationError(
                f"CFL number eps*dt/dx^2 = {self.cfl:.3f} exceeds 1/2; "
                "the explicit scheme would be unstable")

    @property
    def dx(self):
        return 1.0 / (self.nx - 1)

    @property
    def cfl(self):
        return self.eps * self.dt / self.dx ** 2

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.nx)

    @cached_property
    def lambda_on_grid(self):
        lam = self.profile(self.grid)
        lam.setflags(write=False)
        return lam


@dataclass(frozen=True, eq=False)
class PlantState:
    t: float
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "u", u)
        u.setflags(write=False)

    @property
    def nx(self):
        return self.u.size


def initial_state(config: PlantConfig, u0) -> PlantState:
    """State at t = 0 from samples or a callable over [0, 1]."""
    if callable(u0):
        u = np.asarray(u0(config.grid), dtype=float)
    else:
        u = np.asarray(u0, dtype=float)
    if u.size != config.nx:
        raise ValidationError(f"initial condition needs {config.nx} samples")
    return PlantState(t=0.0, u=u)


def step_plant(state: PlantState, config: PlantConfig, U: float) -> PlantState:
    """One explicit-Euler step under boundary input U (zero-order hold).

    Ghost nodes realize u_x(0) = 0 and u_x(1) + q u(1) = U to second
    order.  Raises DivergenceError when the state exceeds the blow-up
    threshold; growth below it is legitimate open-loop instability.
    """
    if not np.isfinite(U):
        raise ValidationError("boundary input must be finite")
    u = state.u
    if u.size != config.nx:
        raise ValidationError("state size does not match config")
    dx, dt, eps = config.dx, config.dt, config.eps
    lam = config.lambda_on_grid
    un = np.empty_like(u)
    un[1:-1] = u[1:-1] + dt * (eps * (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx ** 2
                               + lam[1:-1] * u[1:-1])
    un[0] = u[0] + dt * (eps * (2.0 * u[1] - 2.0 * u[0]) / dx ** 2 + lam[0] * u[0])
    un[-1] = u[-1] + dt * (eps * (2.0 * u[-2] - 2.0 * u[-1]
                                  + 2.0 * dx * (U - config.q * u[-1])) / dx ** 2
                           + lam[-1] * u[-1])
    t_new = state.t + dt
    if not np.all(np.isfinite(un)) or np.max(np.abs(un)) > BLOWUP_THRESHOLD:
        raise DivergenceError(f"state blew up at t = {t_new:.6f}", time=t_new)
    return PlantState(t=t_new, u=un)


def l2_norm(state_or_values, dx=None) -> float:
    """Trapezoid-rule L2 norm over [0, 1]."""
    if isinstance(state_or_values, PlantState):
        u = state_or_values.u
    else:
        u = np.asarray(state_or_values, dtype=float)
    if dx is None:
        dx = 1.0 / (u.size - 1)
    return float(np.sqrt(np.trapezoid(u * u, dx=dx)))


def continuous_control(gain: GainTable, state: PlantState) -> float:
    """Continuous-in-time feedback int_0^1 K(y) u(y) dy by trapezoid.

    The gain is resampled by cubic interpolation when its grid differs
    from the plant's (subsampling when the grids nest).
    """
    K = resample_gain(gain, state.nx)
    dx = 1.0 / (state.nx - 1)
    return float(np.trapezoid(K * state.u, dx=dx))


def resample_gain(gain: GainTable, nx: int) -> np.ndarray:
    """Gain samples on an nx-point grid; exact subsample when commensurate."""
    if gain.n == nx:
        return gain.samples
    if (gain.n - 1) % (nx - 1) == 0:
        stride = (gain.n - 1) // (nx - 1)
        return gain.samples[::stride]
    from scipy.interpolate import CubicSpline
    return CubicSpline(gain.grid, gain.samples)(np.linspace(0.0, 1.0, nx))
