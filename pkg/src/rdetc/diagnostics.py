"""Backstepping transforms, Lyapunov functionals, decay fitting, and event
statistics over simulation traces.  The CLI turns these into CSV files;
plotting lives with the CLI, not here.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kernels import KernelGrid
from .plant import PlantState, l2_norm
from .trigger import LoopResult


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransformedState:
    w_hat: np.ndarray
    t: float


def _volterra_apply(kernel_values, u, h):
    """v_i = trapezoid over [0, x_i] of k(x_i, y) u(y); rows above the
    diagonal are zero so plain partial sums give the triangle integral."""
    n = u.size
    T = kernel_values[:n, :n] * u[None, :]
    csum = np.cumsum(T, axis=1)
    diag = np.diagonal(T)
    out = h * (csum[np.arange(n), np.arange(n)] - 0.5 * (T[:, 0] + diag))
    out[0] = 0.0
    return out


def transform_matrix(kernel: KernelGrid, nx: int) -> np.ndarray:
    """Dense matrix of the forward transform u -> u - int k u on an
    nx-grid (kernel subsampled when the grids nest)."""
    vals = resample_kernel_values(kernel, nx)
    h = 1.0 / (nx - 1)
    W = np.tril(np.full((nx, nx), h))
    W[:, 0] *= 0.5
    W[np.arange(nx), np.arange(nx)] *= 0.5
    W[0, 0] = 0.0
    return np.eye(nx) - vals * W


def resample_kernel_values(kernel: KernelGrid, nx: int) -> np.ndarray:
    """Kernel values on an nx-grid triangle.

    Exact subsample when (kernel.n - 1) is a multiple of (nx - 1);
    otherwise two-stage cubic interpolation along rows then columns,
    clipped to the triangle.
    """
    if kernel.n == nx:
        return kernel.values
    if (kernel.n - 1) % (nx - 1) == 0:
        s = (kernel.n - 1) // (nx - 1)
        return kernel.values[::s, ::s]
    from scipy.interpolate import CubicSpline
    gk = kernel.grid
    gx = np.linspace(0.0, 1.0, nx)
    # stage 1: interpolate along y within each kernel row's triangle part
    mid = np.zeros((kernel.n, nx))
    for i in range(kernel.n):
        yi = np.clip(gx, 0.0, gk[i])
        if i == 0:
            mid[i, :] = kernel.values[0, 0]
        elif i < 3:  # too few nodes for a cubic; linear is fine this close to 0
            mid[i, :] = np.interp(yi, gk[: i + 1], kernel.values[i, : i + 1])
        else:
            row = CubicSpline(gk[: i + 1], kernel.values[i, : i + 1])
            mid[i, :] = row(yi)
    # stage 2: interpolate along x within each target column
    out = np.zeros((nx, nx))
    for j in range(nx):
        col = CubicSpline(gk, mid[:, j])
        out[:, j] = col(gx)
    out[np.triu_indices(nx, 1)] = 0.0
    return out


def backstepping_transform(state: PlantState, kernel: KernelGrid) -> TransformedState:
    """w(x) = u(x) - int_0^x k(x, y) u(y) dy by trapezoid."""
    if kernel.kind != "direct":
        raise ValidationError("forward transform expects the direct kernel")
    vals = resample_kernel_values(kernel, state.nx)
    h = 1.0 / (state.nx - 1)
    w = state.u - _volterra_apply(vals, state.u, h)
    return TransformedState(w_hat=w, t=state.t)


def inverse_transform(w: TransformedState, kernel: KernelGrid) -> PlantState:
    """u(x) = w(x) + int_0^x l(x, y) w(y) dy by trapezoid."""
    if kernel.kind != "inverse":
        raise ValidationError("inverse transform expects the inverse kernel")
    vals = resample_kernel_values(kernel, w.w_hat.size)
    h = 1.0 / (w.w_hat.size - 1)
    u = w.w_hat + _volterra_apply(vals, w.w_hat, h)
    return PlantState(t=w.t, u=u)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def lyapunov_value(w: TransformedState, m: float, r0: float) -> float:
    """V = (r0/2) ||w||^2 - m; meaningful when m < 0, not enforced."""
    h = 1.0 / (w.w_hat.size - 1)
    return 0.5 * r0 * float(np.trapezoid(w.w_hat ** 2, dx=h)) - m


def omega(state: PlantState, m: float) -> float:
    """Omega = ||u||^2 + |m|, the convergence functional."""
    return l2_norm(state) ** 2 + abs(m)


def fit_decay_rate(times, values, window) -> float:
    """Negated least-squares slope of log(value) over the window.

    window is (t_min, t_max); values must be positive there.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (times >= lo) & (times <= hi)
    if int(np.count_nonzero(sel)) < 2:
        raise ValidationError("decay window selects fewer than 2 samples")
    if np.any(values[sel] <= 0):
        raise ValidationError("decay fit needs positive values on the window")
    slope = np.polyfit(times[sel], np.log(values[sel]), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

TRACE_FIELDS = ("t", "norm_u", "u_at_0", "u_at_1", "U_d", "U_no",
                "d", "m", "V", "Omega", "event")


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Per-step records of a closed-loop run plus run metadata."""
    t: np.ndarray
    norm_u: np.ndarray
    u_at_0: np.ndarray
    u_at_1: np.ndarray
    U_d: np.ndarray
    U_no: np.ndarray
    d: np.ndarray
    m: np.ndarray
    V: np.ndarray
    Omega: np.ndarray
    event: np.ndarray
    event_times: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValidationError("trace times must be strictly increasing")
        ev = self.t[self.event]
        if ev.size != self.event_times.size or (
                ev.size and float(np.max(np.abs(ev - self.event_times))) > 1e-12):
            raise ValidationError("event flags inconsistent with event times")

    @property
    def nsteps(self):
        return self.t.size

    def strided(self, stride: int) -> "SimTrace":
        """Every stride-th record (events keep their exact times in
        event_times regardless of the stride)."""
        if stride <= 1:
            return self
        sel = np.zeros(self.t.size, dtype=bool)
        sel[::stride] = True
        sel[-1] = True
        sel |= self.event  # keep event rows so V-at-events survives striding
        return SimTrace(t=self.t[sel], norm_u=self.norm_u[sel],
                        u_at_0=self.u_at_0[sel], u_at_1=self.u_at_1[sel],
                        U_d=self.U_d[sel], U_no=self.U_no[sel],
                        d=self.d[sel], m=self.m[sel], V=self.V[sel],
                        Omega=self.Omega[sel], event=self.event[sel],
                        event_times=self.event_times,
                        metadata=dict(self.metadata))

    # -- file output ----------------------------------------------------

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_FIELDS)
            for i in range(self.t.size):
                w.writerow([repr(float(self.t[i])), repr(float(self.norm_u[i])),
                            repr(float(self.u_at_0[i])), repr(float(self.u_at_1[i])),
                            repr(float(self.U_d[i])), repr(float(self.U_no[i])),
                            repr(float(self.d[i])), repr(float(self.m[i])),
                            repr(float(self.V[i])), repr(float(self.Omega[i])),
                            int(bool(self.event[i]))])

    def write_events_csv(self, path):
        ev_rows = np.flatnonzero(self.event)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("j", "t_j", "U_d"))
            for j, row in enumerate(ev_rows):
                w.writerow([j, repr(float(self.t[row])), repr(float(self.U_d[row]))])


def build_trace(result: LoopResult, direct_kernel: KernelGrid | None,
                r0: float | None, metadata: dict | None = None) -> SimTrace:
    """Attach V and Omega to a raw loop result.

    V needs the direct kernel (for w) and the Lyapunov weight r0; when
    either is missing (open-loop runs without a kernel source) V is NaN.
    """
    n = result.t.size
    Omega_arr = result.norm_u ** 2 + np.abs(result.m)
    if direct_kernel is not None and r0 is not None:
        nx = result.states.shape[1]
        T = transform_matrix(direct_kernel, nx)
        W = result.states @ T.T
        h = 1.0 / (nx - 1)
        wq = np.full(nx, h)
        wq[0] = wq[-1] = 0.5 * h
        V_arr = 0.5 * r0 * ((W * W) @ wq) - result.m
    else:
        V_arr = np.full(n, np.nan)
    return SimTrace(t=result.t, norm_u=result.norm_u, u_at_0=result.u0,
                    u_at_1=result.u1, U_d=result.U_d, U_no=result.U_no,
                    d=result.d, m=result.m, V=V_arr, Omega=Omega_arr,
                    event=result.event, event_times=result.event_times,
                    metadata=dict(metadata or {}))


def event_stats(trace: SimTrace):
    """(event count, min dwell, mean dwell, update fraction).

    Dwell statistics need two events; with fewer they are NaN sentinels.
    """
    if trace.event_times.size == 0:
        raise ValidationError("trace has no events")
    count = int(trace.event_times.size)
    steps = int(trace.nsteps)
    frac = count / steps
    if count < 2:
        return count, float("nan"), float("nan"), frac
    gaps = np.diff(trace.event_times)
    return count, float(np.min(gaps)), float(np.mean(gaps)), frac
