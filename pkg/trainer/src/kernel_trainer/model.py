"""DeepONet surrogate for the profile-to-kernel operator.

A convolutional branch network encodes the reaction-profile samples; an
MLP trunk with sinusoidal features encodes evaluation points (x, y); the
kernel prediction is the branch-trunk inner product times a learned
per-profile magnitude:

    k_hat(lambda)(x, y) = [ b(lambda) . t(x, y) / sqrt(p) + c ] * exp(s(lambda))

Kernels across the training family span two orders of magnitude in sup
norm while their shapes stay O(1), so the shape net and the log-magnitude
head factorize what would otherwise be a badly conditioned regression.
"""
from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

LAMBDA_SCALE = 60.0   # family amplitude bound; branch sees lambda / scale
FOURIER_MODES = 16


def _warp_matrix(m_sensors, m_theta):
    """Fixed linear map from profile samples on the uniform x-grid to
    samples on a theta-uniform grid (x = cos(theta), theta in [0, pi/2]).

    Cubic-spline interpolation is linear in the data, so the map is a
    matrix, assembled by interpolating the unit basis vectors.  On the
    warped grid the training family c cos(g acos x) becomes the plain
    sinusoid c cos(g theta), which the convolutional encoder resolves far
    better than its x-clustered form.
    """
    from scipy.interpolate import CubicSpline
    xs = np.linspace(0.0, 1.0, m_sensors)
    theta = np.linspace(0.0, np.pi / 2.0, m_theta)
    targets = np.cos(theta)
    W = np.empty((m_theta, m_sensors))
    for i in range(m_sensors):
        e = np.zeros(m_sensors)
        e[i] = 1.0
        W[:, i] = CubicSpline(xs, e)(targets)
    return torch.as_tensor(W.astype(np.float32))


def _filter_bank(m_theta, omega_lo=0.0, omega_hi=12.0, n_omega=61):
    """Matched-filter features: mean inner products of the warped profile
    with cos/sin(omega theta) over a fine omega grid.  For the training
    family c cos(g theta) the cosine response is a smooth peak centred at
    omega = g with height ~c/2, so amplitude and frequency are read off
    to high precision by the MLP head.  A fixed linear map, like the warp.."""
    theta = np.linspace(0.0, np.pi / 2.0, m_theta)
    omega = np.linspace(omega_lo, omega_hi, n_omega)
    C = np.cos(omega[:, None] * theta[None, :]) / m_theta
    S = np.sin(omega[:, None] * theta[None, :]) / m_theta
    return torch.as_tensor(np.vstack([C, S]).astype(np.float32))


class BranchCNN(nn.Module):
    """Profile encoder: a small CNN over the theta-warped samples plus a
    fixed spectral filter bank, feeding MLP heads for the basis
    coefficients and the log magnitude."""

    def __init__(self, m_sensors, p, width=32, m_theta=128):
        super().__init__()
        self.register_buffer("warp", _warp_matrix(m_sensors, m_theta))
        self.register_buffer("bank", _filter_bank(m_theta))
        self.conv = nn.Sequential(
            nn.Conv1d(1, width, kernel_size=7, padding=3), nn.GELU(),
            nn.Conv1d(width, 2 * width, kernel_size=5, stride=2, padding=2), nn.GELU(),
            nn.Conv1d(2 * width, 2 * width, kernel_size=5, stride=2, padding=2), nn.GELU(),
        )
        with torch.no_grad():
            conv_feat = self.conv(torch.zeros(1, 1, m_theta)).numel()
        self.feat = conv_feat + self.bank.shape[0]
        self.head = nn.Sequential(
            nn.Linear(self.feat, 512), nn.GELU(),
            nn.Linear(512, 512), nn.GELU(),
            nn.Linear(512, p),
        )
        self.scale_head = nn.Sequential(
            nn.Linear(self.feat, 64), nn.GELU(),
            nn.Linear(64, 1),
        )

    def features(self, lam):
        warped = lam @ self.warp.T / LAMBDA_SCALE
        z = self.conv(warped.unsqueeze(1)).flatten(1)
        spectral = warped @ self.bank.T
        return torch.cat([z, spectral], dim=1)

    def forward(self, lam):
        z = self.features(lam)
        return self.head(z), self.scale_head(z).squeeze(-1)


def fourier_features(pts):
    """Sinusoids of (x, y) and of (acos x, acos y).

    The profile family oscillates uniformly in theta = acos(x), so its
    kernels cluster oscillations near x = 1; warped features hand the
    trunk that geometry instead of asking an MLP to discover it.
    """
    theta = torch.arccos(torch.clamp(pts, 0.0, 1.0)) * (2.0 / math.pi)
    cols = [pts, theta]
    for k in range(1, FOURIER_MODES + 1):
        w = math.pi * k
        cols.append(torch.sin(w * pts))
        cols.append(torch.cos(w * pts))
        cols.append(torch.sin(w * theta))
        cols.append(torch.cos(w * theta))
    return torch.cat(cols, dim=-1)


class TrunkMLP(nn.Module):
    def __init__(self, p, width=160, depth=4):
        super().__init__()
        in_dim = 4 * (1 + 2 * FOURIER_MODES)
        layers = [nn.Linear(in_dim, width), nn.GELU()]
        for _ in range(depth - 1):
            layers += [nn.Linear(width, width), nn.GELU()]
        layers.append(nn.Linear(width, p))
        self.net = nn.Sequential(*layers)

    def forward(self, pts):
        return self.net(fourier_features(pts))


class OperatorModel(nn.Module):
    """Shape net (branch . trunk) times a learned per-profile magnitude."""

    def __init__(self, m_sensors, p=128):
        super().__init__()
        self.m_sensors = m_sensors
        self.p = p
        self.branch = BranchCNN(m_sensors, p)
        self.trunk = TrunkMLP(p)
        self.bias = nn.Parameter(torch.zeros(1))

    def shape_and_scale(self, lam, pts):
        """(B, P) normalized-shape predictions and (B,) log magnitudes."""
        b, log_s = self.branch(lam)
        t = self.trunk(pts)
        shape = b @ t.T / math.sqrt(self.p) + self.bias
        return shape, log_s

    def forward(self, lam, pts):
        shape, log_s = self.shape_and_scale(lam, pts)
        return shape * torch.exp(log_s)[:, None]

    # -- grid evaluation -------------------------------------------------

    @torch.no_grad()
    def predict_grid(self, lam_sensors, n):
        """Lower-triangular n-by-n kernel grid for one profile.

        lam_sensors must be sampled on the model's own sensor grid; use
        resample_sensors when the caller has a different resolution.
        """
        self.eval()
        lam = torch.as_tensor(np.asarray(lam_sensors, dtype=np.float32)).unsqueeze(0)
        pts, (ii, jj) = triangle_points(n)
        vals = self(lam, torch.as_tensor(pts)).squeeze(0).numpy().astype(float)
        grid = np.zeros((n, n))
        grid[ii, jj] = vals
        return grid


def triangle_points(n):
    """Points (x_i, y_j), j <= i, on the uniform n-grid, float32, plus the
    integer index arrays to scatter predictions back into a grid."""
    g = np.linspace(0.0, 1.0, n, dtype=np.float32)
    ii, jj = np.tril_indices(n)
    pts = np.stack([g[ii], g[jj]], axis=1)
    return pts, (ii, jj)


def resample_sensors(lam_values, from_n, to_n):
    """Cubic-resample profile samples between uniform grids (exact
    subsample when the grids nest)."""
    lam_values = np.asarray(lam_values, dtype=float)
    if from_n == to_n:
        return lam_values
    if (from_n - 1) % (to_n - 1) == 0:
        return lam_values[:: (from_n - 1) // (to_n - 1)]
    from scipy.interpolate import CubicSpline
    xs = np.linspace(0.0, 1.0, from_n)
    return CubicSpline(xs, lam_values)(np.linspace(0.0, 1.0, to_n))
