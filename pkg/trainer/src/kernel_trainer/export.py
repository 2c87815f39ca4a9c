"""Export learned kernels as .kgrid files for the controller."""
from __future__ import annotations

import numpy as np

from .kgrid import write_kgrid
from .model import OperatorModel, resample_sensors


def export_kernel_grid(model: OperatorModel, lambda_samples, n, eps, q, path):
    """Predict the kernel for one profile and write it as a direct .kgrid.

    lambda_samples are the profile's values on the uniform n-grid (the
    same samples are embedded in the file so the controller can check the
    scenario match); the branch network sees them resampled onto its own
    sensor grid.
    """
    lam = np.asarray(lambda_samples, dtype=float)
    if lam.size != n:
        raise ValueError(f"need lambda on the n={n} grid, got {lam.size}")
    sensors = resample_sensors(lam, n, model.m_sensors)
    grid = model.predict_grid(sensors, n)
    write_kgrid(path, grid, kind="direct", eps=eps, q=q, lambda_samples=lam)
    return grid
