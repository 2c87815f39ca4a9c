import numpy as np
import pytest
import torch

from kernel_trainer.model import OperatorModel, resample_sensors, triangle_points
from kernel_trainer.train import (Hyperparams, load_model, rel_linf_errors,
                                  save_model, train_operator)


def test_triangle_points_cover_lower_triangle():
    pts, (ii, jj) = triangle_points(11)
    assert pts.shape == (66, 2)
    assert np.all(pts[:, 1] <= pts[:, 0] + 1e-9)


def test_untrained_model_error_is_at_family_scale(single_function_dataset):
    # sanity floor: a fresh model is nowhere near the data
    ds = single_function_dataset
    torch.manual_seed(123)
    model = OperatorModel(m_sensors=ds.spec.n_train, p=32)
    pts, (ii, jj) = triangle_points(ds.spec.n_train)
    lam = torch.as_tensor(ds.lam.astype(np.float32))
    targets = torch.as_tensor(ds.kernels[:, ii, jj].astype(np.float32))
    errs = rel_linf_errors(model, lam, targets, torch.as_tensor(pts))
    assert np.min(errs) > 0.5


def test_overfit_single_function(single_function_dataset):
    # identical pairs: the model must drive the sup error to <= 1e-3
    hp = Hyperparams(p=64, lr=2e-3, epochs=800, batch=8, seed=1,
                     val_fraction=0.0, target_val_rel=None)
    model, report = train_operator(single_function_dataset, hp)
    assert report.train_rel_linf <= 1e-3


def test_model_save_load_round_trip(tmp_path, single_function_dataset):
    ds = single_function_dataset
    hp = Hyperparams(p=16, lr=2e-3, epochs=5, batch=8, seed=2, val_fraction=0.0)
    model, _ = train_operator(ds, hp)
    p = tmp_path / "model.pt"
    save_model(model, p)
    back = load_model(p)
    sensors = ds.lam[0]
    a = model.predict_grid(sensors, 51)
    b = back.predict_grid(sensors, 51)
    assert np.array_equal(a, b)


def test_resample_sensors_subsample_and_cubic():
    x101 = np.linspace(0, 1, 101)
    vals = np.sin(2 * np.pi * x101)
    sub = resample_sensors(vals, 101, 51)
    assert np.array_equal(sub, vals[::2])
    x61 = np.linspace(0, 1, 61)
    cub = resample_sensors(vals, 101, 61)
    assert np.max(np.abs(cub - np.sin(2 * np.pi * x61))) < 1e-5


def test_predict_grid_masks_triangle(single_function_dataset):
    ds = single_function_dataset
    torch.manual_seed(0)
    model = OperatorModel(m_sensors=ds.spec.n_train, p=16)
    grid = model.predict_grid(ds.lam[0], 31)
    iu = np.triu_indices(31, 1)
    assert np.all(grid[iu] == 0.0)
