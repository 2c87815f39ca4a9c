"""Backstepping gain-kernel machinery.

Solves the Goursat problem for the transformation kernel

    k_xx(x,y) - k_yy(x,y) = lambda(y)/eps * k(x,y)   on  0 <= y <= x <= 1
    k_y(x,0) = 0
    k(x,x)   = -(1/(2 eps)) int_0^x lambda

by mapping to characteristic coordinates xi = x+y, eta = x-y, where the
problem becomes an equivalent double-integral equation

    G(xi,eta) = phi(xi) + phi(eta)
              + int_0^eta [ int_0^s F(s,r) G(s,r) dr
                          + int_s^xi F(t,s) G(t,s) dt ] ds

with F(xi,eta) = lambda((xi-eta)/2)/(4 eps) and
phi(z) = -(1/(4 eps)) int_0^z lambda(t/2) dt, solved by Picard iteration
with composite trapezoid quadrature on a uniform lattice.  The converged
iterate also yields k_x analytically:

    k_x = G_xi + G_eta,
    G_xi (xi,eta) = phi'(xi)  + int_0^eta F(xi,s) G(xi,s) ds
    G_eta(xi,eta) = phi'(eta) + int_0^eta F(eta,s) G(eta,s) ds
                              + int_eta^xi F(t,eta) G(t,eta) dt

so boundary-gain derivatives never rely on one-sided grid stencils that
degenerate near the triangle corner.  By default two solves (h, h/2) are
combined by Richardson extrapolation; trapezoid alone is second order,
which is not enough for the residual targets at n = 201.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError, ConvergenceError, ValidationError
from .profiles import ReactionProfile

DEFAULT_TOL = 1e-12
MAX_ITER = 200


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelGrid:
    """Kernel sampled on the triangle 0 <= y_j <= x_i <= 1.

    values[i, j] is the kernel at (x_i, y_j); entries above the diagonal
    (j > i) are zero.  kx_values, when present, holds k_x on the same
    triangle (solver-produced grids carry it; file-loaded ones do not).
    """

    n: int
    values: np.ndarray
    kind: str  # "direct" | "inverse"
    eps: float
    lambda_samples: np.ndarray
    kx_values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("direct", "inverse"):
            raise ValidationError(f"kernel kind must be direct|inverse, got {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.n, self.n):
            raise ValidationError("values must be an n-by-n array")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lambda_samples",
                           np.asarray(self.lambda_samples, dtype=float))
        values.setflags(write=False)
        if self.kx_values is not None:
            kx = np.asarray(self.kx_values, dtype=float)
            kx.setflags(write=False)
            object.__setattr__(self, "kx_values", kx)

    @property
    def h(self):
        return 1.0 / (self.n - 1)

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.n)

    def sup(self):
        return float(np.max(np.abs(self.values)))

    def diagonal(self):
        return np.diagonal(self.values).copy()


@dataclass(frozen=True, eq=False)
class GainTable:
    """Boundary gain K(y) = wp*k(1,y) + k_x(1,y) plus the derivative data
    the trigger constants need (K', K'' and the endpoint slopes)."""

    samples: np.ndarray
    wp: float
    dK: np.ndarray
    d2K: np.ndarray

    @property
    def n(self):
        return self.samples.size

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.n)

    @property
    def K_at_1(self):
        return float(self.samples[-1])

    @property
    def dK_at_0(self):
        return float(self.dK[0])

    @property
    def dK_at_1(self):
        return float(self.dK[-1])


@dataclass(frozen=True)
class ResidualReport:
    interior_sup: float
    interior_argmax: tuple
    diagonal_sup: float
    diagonal_argmax: tuple
    neumann_sup: float
    neumann_argmax: tuple

    def max_residual(self):
        return max(self.interior_sup, self.diagonal_sup, self.neumann_sup)


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    margin: float
    message: str


# ---------------------------------------------------------------------------
# characteristic-lattice solve
# ---------------------------------------------------------------------------

def _char_lattice(profile, eps, n):
    """Lattice data shared by the solve and the derivative extraction."""
    h = 1.0 / (n - 1)
    nxi = 2 * n - 1
    xi = np.arange(nxi) * h
    eta = np.arange(n) * h
    mask = (eta[None, :] <= xi[:, None] + 1e-14) & \
           (xi[:, None] + eta[None, :] <= 2.0 + 1e-14)
    y_half = np.clip((xi[:, None] - eta[None, :]) / 2.0, 0.0, 1.0)
    F = np.where(mask, profile(y_half) / (4.0 * eps), 0.0)
    lam_half = profile(np.clip(xi / 2.0, 0.0, 1.0))
    phi = -profile.integral(np.clip(xi / 2.0, 0.0, 1.0)) / (2.0 * eps)
    phip = -lam_half / (4.0 * eps)
    return h, nxi, mask, F, phi, phip


def _picard(profile, eps, n, tol, max_iter):
    """Picard iteration on the characteristic lattice; returns G and F."""
    h, nxi, mask, F, phi, phip = _char_lattice(profile, eps, n)
    base = np.where(mask, phi[:, None] + phi[None, :n], 0.0)
    G = base.copy()
    scale = max(1.0, float(np.max(np.abs(base))))
    last = np.inf
    diag = np.arange(n)
    for _ in range(max_iter):
        W = F * G
        # P[a] = int_0^{xi_a} W(xi_a, r) dr  (up to the diagonal, xi <= 1)
        cum_eta = cumulative_trapezoid(W, dx=h, initial=0.0, axis=1)
        P = cum_eta[diag, diag]
        # T1(eta) = int_0^eta P(s) ds
        T1 = cumulative_trapezoid(P, dx=h, initial=0.0)
        # Q[a, b] = int_{eta_b}^{xi_a} W(t, eta_b) dt; the masked W vanishes
        # above the diagonal, so the full cumulative from 0 minus its value
        # at the diagonal reproduces the from-the-diagonal trapezoid sums
        Q = _cum_from_diagonal(W, h, n)
        T2 = cumulative_trapezoid(Q, dx=h, initial=0.0, axis=1)
        G_new = np.where(mask, base + T1[None, :n] + T2, 0.0)
        last = float(np.max(np.abs(G_new - G)))
        G = G_new
        scale = max(scale, float(np.max(np.abs(G))))
        if last <= max(tol, 8.0 * np.finfo(float).eps * scale):
            break
    else:
        raise ConvergenceError(
            f"kernel Picard iteration stalled at sup-change {last:.3e} "
            f"after {max_iter} iterations",
            last_change=last, iterations=max_iter)
    return G, F, phip, h, nxi


def _cum_from_diagonal(W, h, n):
    """Per column b: cumulative trapezoid of W[., b] along xi starting at
    the diagonal row a = b (zero below it)."""
    C = cumulative_trapezoid(W, dx=h, initial=0.0, axis=0)
    diag = np.arange(n)
    Q = C - C[diag, diag][None, :]
    # rows above the start of each column carry meaningless negatives
    a_idx = np.arange(W.shape[0])[:, None]
    return np.where(a_idx >= diag[None, :], Q, 0.0)


def _extract_triangle(G, n):
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    tri = J <= I
    out = np.zeros((n, n))
    out[tri] = G[(I + J)[tri], (I - J)[tri]]
    return out


def _char_solve_with_kx(profile, eps, n, tol, max_iter):
    """One Picard solve; returns (k, kx) on the (x, y) triangle."""
    G, F, phip, h, nxi = _picard(profile, eps, n, tol, max_iter)
    W = F * G
    cum_eta = cumulative_trapezoid(W, dx=h, initial=0.0, axis=1)
    G_xi = phip[:, None] + cum_eta[:, :n]
    # int_0^eta F(eta, s) G(eta, s) ds evaluated on the diagonal xi = eta
    P_diag = cum_eta[np.arange(n), np.arange(n)]
    Q = _cum_from_diagonal(W, h, n)
    G_eta = phip[None, :n] + P_diag[None, :] + Q
    k = _extract_triangle(G, n)
    kx = _extract_triangle(G_xi + G_eta, n)
    return k, kx


def solve_kernel(profile: ReactionProfile, eps: float, n: int, *,
                 tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                 richardson: bool = True) -> KernelGrid:
    """Solve the direct Goursat kernel on an n-by-n triangle grid.

    richardson=True (default) combines the solves at steps h and h/2,
    eliminating the trapezoid h^2 term; richardson=False exposes the raw
    second-order Picard solve (used by the refinement-order property).
    Deterministic for fixed inputs.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if n < 3:
        raise ValidationError("n must be at least 3")
    k1, kx1 = _char_solve_with_kx(profile, eps, n, tol, max_iter)
    if richardson:
        k2, kx2 = _char_solve_with_kx(profile, eps, 2 * n - 1, tol, max_iter)
        k1 = (4.0 * k2[::2, ::2] - k1) / 3.0
        kx1 = (4.0 * kx2[::2, ::2] - kx1) / 3.0
    return KernelGrid(n=n, values=k1, kind="direct", eps=eps,
                      lambda_samples=profile(np.linspace(0, 1, n)),
                      kx_values=kx1)


# ---------------------------------------------------------------------------
# inverse kernel (Volterra relation)
# ---------------------------------------------------------------------------

def solve_inverse_kernel(kernel: KernelGrid, *, tol: float = DEFAULT_TOL,
                         max_iter: int = MAX_ITER) -> KernelGrid:
    """Inverse kernel from l(x,y) = k(x,y) + int_y^x k(x,xi) l(xi,y) dxi.

    Neumann iteration with the same trapezoid rule the transforms use;
    the converged grid satisfies the discrete relation to iteration
    tolerance, so an independent trapezoid residual check sits at the
    round-off floor.
    """
    if kernel.kind != "direct":
        raise ValidationError("inverse solve expects a direct kernel")
    k = kernel.values
    n = kernel.n
    h = kernel.h
    l = k.copy()
    last = np.inf
    for _ in range(max_iter):
        l_new = k.copy()
        for i in range(1, n):
            # trapezoid over xi in [y_j, x_i] of k(x_i, xi) l(xi, y_j);
            # entries of l above its diagonal are zero, so a plain column
            # sum already restricts the summation to xi >= y_j.
            T = k[i, : i + 1, None] * l[: i + 1, : i + 1]
            col = T.sum(axis=0)
            endpoints = 0.5 * (np.diagonal(T) + T[i, :])
            l_new[i, :i] = k[i, :i] + h * (col - endpoints)[:i]
        last = float(np.max(np.abs(l_new - l)))
        l = l_new
        if last <= max(tol, 8.0 * np.finfo(float).eps * float(np.max(np.abs(l)))):
            break
    else:
        raise ConvergenceError(
            f"inverse-kernel Neumann iteration stalled at {last:.3e}",
            last_change=last, iterations=max_iter)
    return KernelGrid(n=n, values=l, kind="inverse", eps=kernel.eps,
                      lambda_samples=kernel.lambda_samples.copy())


def volterra_residual(direct: KernelGrid, inverse: KernelGrid) -> float:
    """Independent trapezoid check of the Volterra relation on all nodes."""
    if direct.n != inverse.n:
        raise ValidationError("grids must share n")
    k, l, n, h = direct.values, inverse.values, direct.n, direct.h
    worst = 0.0
    for i in range(n):
        for j in range(i + 1):
            seg = k[i, j: i + 1] * l[j: i + 1, j]
            integral = np.trapezoid(seg, dx=h) if seg.size > 1 else 0.0
            r = l[i, j] - k[i, j] - integral
            worst = max(worst, abs(r))
    return worst


# ---------------------------------------------------------------------------
# residual report
# ---------------------------------------------------------------------------

_C2 = np.array([1.0, -2.0, 1.0])
_C4 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_C6 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0


def kernel_residual(kernel: KernelGrid, profile: ReactionProfile,
                    eps: float) -> ResidualReport:
    """Sup-norms of the three Goursat defect fields with their locations.

    Interior PDE residual uses centred second-difference stencils of the
    highest order whose full footprint fits inside the triangle (6th for
    n >= 31, 4th for n >= 9, else 2nd); the diagonal check compares
    against the profile's closed-form integral; the y = 0 check applies a
    one-sided first-derivative stencil along each row (6th order when the
    row is deep enough, 4th otherwise).
    """
    n = kernel.n
    if n < 5:
        raise ValidationError("residual stencils need n >= 5")
    h = kernel.h
    k = kernel.values
    x = kernel.grid
    sign = -1.0 if kernel.kind == "inverse" else 1.0

    if n >= 31:
        coeff, half = _C6, 3
    elif n >= 9:
        coeff, half = _C4, 2
    else:
        coeff, half = _C2, 1
    c = coeff / (h * h)

    from scipy.ndimage import convolve1d
    kxx = convolve1d(k, c[::-1], axis=0, mode="constant")
    kyy = convolve1d(k, c[::-1], axis=1, mode="constant")
    lam = profile(x)
    # inverse kernel satisfies the mirrored equation with -lambda(x)
    rc = lam[:, None] if kernel.kind == "inverse" else lam[None, :]
    res = kxx - kyy - sign * rc / eps * k
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    valid = (J >= half) & (J <= I - half) & (I >= half) & (I <= n - 1 - half)
    res = np.where(valid, np.abs(res), 0.0)
    flat = int(np.argmax(res))
    interior_arg = (flat // n, flat % n)
    interior_sup = float(res[interior_arg])

    diag_exact = -profile.integral(x) / (2.0 * eps)
    diag_err = np.abs(np.diagonal(k) - diag_exact)
    di = int(np.argmax(diag_err))
    diagonal_sup, diagonal_arg = float(diag_err[di]), (di, di)

    neumann_sup, neumann_arg = 0.0, (0, 0)
    c6 = np.array([-49.0 / 20.0, 6.0, -15.0 / 2.0, 20.0 / 3.0,
                   -15.0 / 4.0, 6.0 / 5.0, -1.0 / 6.0]) / h
    c4 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
    for i in range(4, n):
        if i >= 6:
            d = float(c6 @ k[i, 0:7])
        else:
            d = float(c4 @ k[i, 0:5])
        if abs(d) > neumann_sup:
            neumann_sup, neumann_arg = abs(d), (i, 0)

    return ResidualReport(interior_sup, interior_arg,
                          diagonal_sup, diagonal_arg,
                          neumann_sup, neumann_arg)


# ---------------------------------------------------------------------------
# boundary gain
# ---------------------------------------------------------------------------

def _deriv1_samples(f, h):
    """First derivative of 1-D samples: 4th-order central interior,
    3rd-order one-sided at the ends."""
    n = f.size
    d = np.empty(n)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    for i in (0, 1):
        d[i] = (-11 * f[i] + 18 * f[i + 1] - 9 * f[i + 2] + 2 * f[i + 3]) / (6 * h)
    for i in (n - 2, n - 1):
        d[i] = (11 * f[i] - 18 * f[i - 1] + 9 * f[i - 2] - 2 * f[i - 3]) / (6 * h)
    return d


def _deriv2_samples(f, h):
    """Second derivative of 1-D samples: 4th-order central interior,
    3rd-order one-sided at the ends."""
    n = f.size
    d = np.empty(n)
    d[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h * h)
    for i in (0, 1):
        d[i] = (35 * f[i] - 104 * f[i + 1] + 114 * f[i + 2]
                - 56 * f[i + 3] + 11 * f[i + 4]) / (12 * h * h)
    for i in (n - 2, n - 1):
        d[i] = (35 * f[i] - 104 * f[i - 1] + 114 * f[i - 2]
                - 56 * f[i - 3] + 11 * f[i - 4]) / (12 * h * h)
    return d


def _kx_top_row_fd(k, profile, eps, n, h):
    """k_x(1, y) from grid values only (file-loaded kernels).

    4-point one-sided x-stencils where the column depth allows, a
    PDE-corrected two-point scheme at y = 1-h, and the diagonal identity
    d/dx k(x,x) = -lambda/(2 eps) at the (1, 1) corner.
    """
    y = np.linspace(0.0, 1.0, n)
    kx = np.empty(n)
    for j in range(0, n - 3):
        kx[j] = (11 * k[n - 1, j] - 18 * k[n - 2, j]
                 + 9 * k[n - 3, j] - 2 * k[n - 4, j]) / (6 * h)
    j = n - 3
    kx[j] = (3 * k[n - 1, j] - 4 * k[n - 2, j] + k[n - 3, j]) / (2 * h)
    j = n - 2
    kyy = (k[n - 1, j - 1] - 2 * k[n - 1, j] + k[n - 1, j + 1]) / (h * h)
    kxx = kyy + float(profile(y[j])) / eps * k[n - 1, j]
    kx[j] = (k[n - 1, j] - k[n - 2, j]) / h + 0.5 * h * kxx
    ky11 = (11 * k[n - 1, n - 1] - 18 * k[n - 1, n - 2]
            + 9 * k[n - 1, n - 3] - 2 * k[n - 1, n - 4]) / (6 * h)
    kx[n - 1] = -float(profile(1.0)) / (2 * eps) - ky11
    return kx


def gain_from_kernel(kernel: KernelGrid, q: float, eps: float,
                     profile: ReactionProfile) -> GainTable:
    """Boundary gain K(y) = wp*k(1,y) + k_x(1,y) with endpoint derivatives.

    Solver-produced kernels carry k_x from the characteristic-coordinate
    representation; grids without it (e.g. loaded from file) fall back to
    one-sided stencils with corner corrections.
    """
    if kernel.kind != "direct":
        raise ValidationError("gain requires a direct kernel")
    n, h = kernel.n, kernel.h
    if n < 5:
        raise ValidationError("gain stencils need n >= 5")
    wp = q - float(profile.integral(1.0)) / (2.0 * eps)
    if kernel.kx_values is not None:
        kx_top = kernel.kx_values[n - 1, :].copy()
    else:
        kx_top = _kx_top_row_fd(kernel.values, profile, eps, n, h)
    K = wp * kernel.values[n - 1, :] + kx_top
    return GainTable(samples=K, wp=wp,
                     dK=_deriv1_samples(K, h), d2K=_deriv2_samples(K, h))


# ---------------------------------------------------------------------------
# scalar checks
# ---------------------------------------------------------------------------

def check_assumption1(profile: ReactionProfile, q: float, eps: float) -> ValidationReport:
    """Heat-exchange condition q > lambda_max/(2 eps) + 1/2; advisory only,
    the reference scenario itself violates it."""
    margin = q - profile.lambda_max / (2.0 * eps) - 0.5
    passed = margin > 0
    msg = ("heat-exchange condition satisfied" if passed else
           "heat-exchange condition violated (advisory): "
           f"q = {q} <= lambda_max/(2 eps) + 1/2 = {q - margin}")
    return ValidationReport(passed=passed, margin=float(margin), message=msg)


def kernel_sup_bound(lambda_bar: float, eps: float):
    """Growth bound sup|k| <= (2 lambda_bar/eps) exp(4 lambda_bar/eps).

    Returns (log_bound, linear_bound); the linear value is inf when not
    representable, and the log is -inf for lambda_bar = 0.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if lambda_bar < 0:
        raise ValidationError("lambda_bar is a sup-norm, must be >= 0")
    if lambda_bar == 0.0:
        return float("-inf"), 0.0
    log_bound = np.log(2.0 * lambda_bar / eps) + 4.0 * lambda_bar / eps
    linear = float(np.exp(log_bound)) if log_bound < 700.0 else float("inf")
    return float(log_bound), linear


# ---------------------------------------------------------------------------
# .kgrid exchange format
# ---------------------------------------------------------------------------

KGRID_VERSION = 1


def write_kgrid(path, kernel: KernelGrid, q: float):
    """Write the structured-text kernel-exchange document.

    Floats are serialized with repr (shortest round-trip form), so a
    write/read cycle reproduces the values array bit for bit.
    """
    doc = {
        "format_version": KGRID_VERSION,
        "kind": kernel.kind,
        "n": kernel.n,
        "eps": kernel.eps,
        "q": q,
        "lambda_samples": [float(v) for v in kernel.lambda_samples],
        "values": [float(v) for v in kernel.values.reshape(-1)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_kgrid(path):
    """Read a .kgrid document; returns (KernelGrid, q)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read kernel file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"kernel file {path} does not parse: {exc}") from exc
    for key in ("format_version", "kind", "n", "eps", "q", "lambda_samples", "values"):
        if key not in doc:
            raise ConfigError(f"kernel file {path} missing field {key!r}", field=key)
    if doc["format_version"] != KGRID_VERSION:
        raise ConfigError(
            f"unsupported kgrid format_version {doc['format_version']}",
            field="format_version")
    n = int(doc["n"])
    values = np.asarray(doc["values"], dtype=float)
    if values.size != n * n:
        raise ConfigError("values length does not match n*n", field="values")
    lam = np.asarray(doc["lambda_samples"], dtype=float)
    if lam.size != n:
        raise ConfigError("lambda_samples length does not match n", field="lambda_samples")
    grid = KernelGrid(n=n, values=values.reshape(n, n), kind=doc["kind"],
                      eps=float(doc["eps"]), lambda_samples=lam)
    return grid, float(doc["q"])
