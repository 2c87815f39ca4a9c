"""Uniform source of gain kernels for the controller.

A KernelSource names where the direct kernel comes from: the exact Goursat
solve, a grid file written by an external approximator, or the exact
kernel plus a fixed smooth perturbation of amplitude iota (a stand-in for
approximation error with a known shape).  Whatever the source, the
inverse kernel is recomputed from the direct grid and the boundary gain
is derived from it, so the controller downstream never cares who produced
the kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .kernels import (GainTable, KernelGrid, gain_from_kernel, read_kgrid,
                      solve_inverse_kernel, solve_kernel)
from .profiles import ReactionProfile


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSource:
    """kind: exact | file | perturbed; path for file, iota/seed for perturbed.

    The seed is reserved for future randomized perturbation families; the
    current perturbation shape is deterministic.
    """
    kind: str = "exact"
    path: str | None = None
    iota: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("exact", "file", "perturbed"):
            raise ValidationError(f"unknown kernel source kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValidationError("file source needs a path")
        if self.kind == "perturbed" and self.iota < 0:
            raise ValidationError("iota must be >= 0")


def perturbation_shape(x, y):
    """Fixed smooth bump phi(x, y) = sin(2 pi x) cos(pi y), sup-norm 1 on the
    triangle (attained at (1/4, 0)); sign-indefinite and nonzero both on the
    diagonal and at y = 0 so every term of the approximation metric reacts."""
    return np.sin(2.0 * np.pi * np.asarray(x)) * np.cos(np.pi * np.asarray(y))


def _perturbation_grid(n):
    g = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    phi = perturbation_shape(X, Y)
    phi[Y > X] = 0.0
    # analytic x-derivative, matching the solver's stored k_x convention
    phi_x = 2.0 * np.pi * np.cos(2.0 * np.pi * X) * np.cos(np.pi * Y)
    phi_x[Y > X] = 0.0
    return phi, phi_x


@dataclass(frozen=True)
class ProvidedKernels:
    direct: KernelGrid
    inverse: KernelGrid
    gain: GainTable
    iota_estimate: float  # 0 for the exact source
    source: KernelSource


def provide_kernel(source: KernelSource, profile: ReactionProfile,
                   eps: float, n: int, q: float) -> ProvidedKernels:
    """Direct kernel, recomputed inverse, and gain table for one scenario.

    File kernels must match the scenario (n, eps and the lambda samples)
    to 1e-9; their iota_estimate is measured against a fresh exact solve.
    """
    if source.kind == "exact":
        direct = solve_kernel(profile, eps, n)
        iota_est = 0.0
    elif source.kind == "perturbed":
        exact = solve_kernel(profile, eps, n)
        phi, phi_x = _perturbation_grid(n)
        direct = KernelGrid(n=n, values=exact.values + source.iota * phi,
                            kind="direct", eps=eps,
                            lambda_samples=exact.lambda_samples.copy(),
                            kx_values=exact.kx_values + source.iota * phi_x)
        iota_est = approximation_metrics(exact, direct, profile, eps).iota_estimate
    else:
        direct, q_file = read_kgrid(source.path)
        if direct.kind != "direct":
            raise ConfigError(f"{source.path} holds an inverse kernel", field="kind")
        if direct.n != n:
            raise ConfigError(
                f"kernel file n = {direct.n} does not match scenario n = {n}",
                field="n")
        if abs(direct.eps - eps) > 1e-9:
            raise ConfigError(
                f"kernel file eps = {direct.eps} does not match scenario eps = {eps}",
                field="eps")
        lam_scn = profile(np.linspace(0.0, 1.0, n))
        if float(np.max(np.abs(direct.lambda_samples - lam_scn))) > 1e-9:
            raise ConfigError(
                "kernel file lambda samples do not match the scenario profile",
                field="lambda_samples")
        del q_file  # informational in the file; the scenario's q governs
        exact = solve_kernel(profile, eps, n)
        iota_est = approximation_metrics(exact, direct, profile, eps).iota_estimate
    inverse = solve_inverse_kernel(direct)
    gain = gain_from_kernel(direct, q, eps, profile)
    return ProvidedKernels(direct=direct, inverse=inverse, gain=gain,
                           iota_estimate=iota_est, source=source)


# ---------------------------------------------------------------------------
# approximation metrics (kernel error and its derivative defects)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApproxReport:
    sup_err: float
    sup_delta_k0: float
    sup_delta_k1: float
    lemma1_composite: float

    @property
    def iota_estimate(self):
        """Sup over grid nodes of the composite defect sum; discrete
        derivatives make this a lower bound on the true sup."""
        return self.lemma1_composite


def _diag_derivative(diag, h):
    n = diag.size
    d = np.empty(n)
    d[2:-2] = (diag[:-4] - 8 * diag[1:-3] + 8 * diag[3:-1] - diag[4:]) / (12 * h)
    for i in (0, 1):
        d[i] = (-11 * diag[i] + 18 * diag[i + 1] - 9 * diag[i + 2]
                + 2 * diag[i + 3]) / (6 * h)
    for i in (n - 2, n - 1):
        d[i] = (11 * diag[i] - 18 * diag[i - 1] + 9 * diag[i - 2]
                - 2 * diag[i - 3]) / (6 * h)
    return d


def approximation_metrics(k_exact: KernelGrid, k_hat: KernelGrid,
                          profile: ReactionProfile, eps: float) -> ApproxReport:
    """Error fields between an exact and an approximated kernel.

    sup_err      : sup |k - k_hat| over the triangle
    sup_delta_k0 : sup |2 eps d/dx (k_hat - k)(x, x)|
    sup_delta_k1 : sup |eps (dxx - dyy)(k_hat - k) + lambda(y)(k - k_hat)|
    lemma1_composite: sup over nodes of the three-term defect sum
                   |ktil| + |2 d/dx ktil(x,x)| + |(dxx-dyy)ktil - lam(y)/eps... |

    Derivative terms are evaluated where centred stencils fit; the
    composite is the pointwise sum restricted to those nodes.
    """
    if k_exact.n != k_hat.n:
        raise ValidationError("grids must share n to compare")
    if abs(k_exact.eps - k_hat.eps) > 1e-12:
        raise ValidationError("grids must share eps to compare")
    n, h = k_exact.n, k_exact.h
    if n < 9:
        raise ValidationError("approximation metrics need n >= 9")
    ktil = k_exact.values - k_hat.values
    x = k_exact.grid
    lam = profile(x)

    sup_err = float(np.max(np.abs(ktil)))

    ddiag = _diag_derivative(np.diagonal(ktil).copy(), h)
    delta_k0 = 2.0 * eps * ddiag  # delta_k0(x) = -2 eps d/dx ktil(x,x); sign irrelevant
    sup_delta_k0 = float(np.max(np.abs(delta_k0)))

    # centred 4th-order second differences where the footprint fits
    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    half = 2
    sup_delta_k1 = 0.0
    composite = sup_err  # nodes without stencils still contribute |ktil| alone
    for i in range(half, n - half):
        for j in range(half, i - half + 1):
            wave = float(c @ ktil[i - half: i + half + 1, j]
                         - c @ ktil[i, j - half: j + half + 1])
            d1 = abs(eps * wave - lam[j] * ktil[i, j])
            sup_delta_k1 = max(sup_delta_k1, d1)
            # Lemma-style composite: |ktil| + |2 d/dx ktil(x,x)| + |wave - lam*ktil|
            comp = abs(ktil[i, j]) + abs(2.0 * ddiag[i]) + abs(wave - lam[j] * ktil[i, j])
            composite = max(composite, comp)
    return ApproxReport(sup_err=sup_err, sup_delta_k0=sup_delta_k0,
                        sup_delta_k1=sup_delta_k1, lemma1_composite=composite)


# ---------------------------------------------------------------------------
# theoretical constants (log-domain where they explode)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TheoryConstants:
    log_M: float
    M: float
    log_Upsilon: float
    Upsilon: float
    delta_star: float
    sigma_star: float
    sigma: float
    q0: float
    q1: float
    log_inverse_bound: float
    inverse_bound: float
    vacuous: bool  # sigma_star <= 0: the decay bound carries no information


def _exp_or_inf(logv):
    return float(math.exp(logv)) if logv < 700.0 else float("inf")


def theoretical_constants(iota: float, lambda_bar: float, eps: float, q: float,
                          inverse_kernel: KernelGrid, eta: float) -> TheoryConstants:
    """Stability-theory constants for reporting.

    B = (2 lambda_bar/eps) exp(4 lambda_bar/eps) is the kernel growth
    bound; M, Upsilon and the inverse-kernel bound stack exponentials of B
    and are kept in log form (their logs themselves reach ~1e88 at
    lambda_bar = 50).  q is part of the call contract for interface
    stability but none of the constants depends on it.
    """
    if iota < 0:
        raise ValidationError("iota must be >= 0")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    del q
    n, h = inverse_kernel.n, inverse_kernel.h
    l = inverse_kernel.values
    q0 = 2.0 * float(np.trapezoid(l[n - 1, :] ** 2, dx=h))
    rows = np.array([np.trapezoid(l[i, : i + 1] ** 2, dx=h) if i else 0.0
                     for i in range(n)])
    q1 = (1.0 + math.sqrt(float(np.trapezoid(rows, dx=h)))) ** 2

    if lambda_bar == 0.0:
        B = 0.0
        logB = float("-inf")
    else:
        logB = math.log(2.0 * lambda_bar / eps) + 4.0 * lambda_bar / eps
        B = _exp_or_inf(logB)

    # log((B + iota) * exp(B + iota)) = log(B + iota) + B + iota
    Bi = B + iota
    if Bi == 0.0:
        log_tail = float("-inf")     # the (B+iota)e^{B+iota} term vanishes
    elif math.isinf(Bi):
        log_tail = float("inf")
    else:
        log_tail = math.log(Bi) + Bi
    log_inverse_bound = log_tail

    # M = (1 + iota + B) * (1 + (B+iota) e^{B+iota})
    log_first = math.log1p(iota + B) if not math.isinf(B) else float("inf")
    log_second = _log1p_exp(log_tail)
    log_M = log_first + log_second

    # Upsilon = (1 + (iota+B)^2) * (1 + (B+iota)^2 e^{2(B+iota)})
    log_u1 = math.log1p(Bi * Bi) if not math.isinf(Bi) else float("inf")
    log_u2 = _log1p_exp(2.0 * log_tail if not math.isinf(log_tail) else log_tail)
    log_Upsilon = log_u1 + log_u2

    # delta_star = 2 iota (1 + (B+iota)e^{B+iota}) + eps iota (q0/2 + 5/4)
    # sigma_star = eps/8 - 4 iota (1 + tail) - eps iota (2 tail^2 + 5/2)
    # both collapse analytically at iota = 0 (0 * inf otherwise, for large B)
    if iota == 0.0:
        delta_star = 0.0
        sigma_star = eps / 8.0
    else:
        tail = _exp_or_inf(log_tail) if log_tail > float("-inf") else 0.0
        tail2 = _exp_or_inf(2.0 * log_tail) if log_tail > float("-inf") else 0.0
        delta_star = 2.0 * iota * (1.0 + tail) + eps * iota * (q0 / 2.0 + 1.25)
        sigma_star = (eps / 8.0 - 4.0 * iota * (1.0 + tail)
                      - eps * iota * (2.0 * tail2 + 2.5))
    sigma = min(eta, sigma_star)

    return TheoryConstants(
        log_M=float(log_M), M=_exp_or_inf(log_M),
        log_Upsilon=float(log_Upsilon), Upsilon=_exp_or_inf(log_Upsilon),
        delta_star=float(delta_star), sigma_star=float(sigma_star),
        sigma=float(sigma), q0=q0, q1=q1,
        log_inverse_bound=float(log_inverse_bound),
        inverse_bound=_exp_or_inf(log_inverse_bound) if log_inverse_bound > float("-inf") else 0.0,
        vacuous=bool(sigma_star <= 0.0))


def _log1p_exp(logv):
    """log(1 + exp(logv)) without overflow."""
    if logv == float("-inf"):
        return 0.0
    if math.isinf(logv):
        return float("inf")
    if logv > 36.0:  # exp(logv) dominates 1 beyond double precision
        return logv
    return math.log1p(math.exp(logv))
