import numpy as np
import pytest

from kernel_trainer.dataset import (RESIDUAL_GATE, FamilySpec, KernelDataset,
                                    generate_dataset, solve_via_cli)


def test_family_spec_grid_compatibility():
    with pytest.raises(ValueError):
        FamilySpec(n_solve=150, n_train=101)


def test_dataset_entries_pass_residual_gate(tiny_dataset):
    assert tiny_dataset.count == 8
    assert len(tiny_dataset.skipped) == 0
    assert np.all(tiny_dataset.residuals <= RESIDUAL_GATE)


def test_dataset_shapes_and_triangle(tiny_dataset):
    ds = tiny_dataset
    n = ds.spec.n_train
    assert ds.lam.shape == (8, n)
    assert ds.kernels.shape == (8, n, n)
    iu = np.triu_indices(n, 1)
    assert np.all(ds.kernels[:, iu[0], iu[1]] == 0.0)


def test_zero_amplitude_entry_is_zero_kernel():
    spec = FamilySpec(c_range=(50.0, 50.0), gamma_range=(8.0, 8.0),
                      n_solve=201, n_train=51)
    ds = generate_dataset(spec, count=1, seed=0, workers=1, include_zero=True)
    assert ds.count == 2
    assert ds.params[0].tolist() == [0.0, 0.0]
    assert np.max(np.abs(ds.kernels[0])) == 0.0


def test_inprocess_matches_cli_sample():
    spec = FamilySpec(n_solve=101, n_train=51)
    # validate_against_cli=1 raises if the in-process grid deviates from
    # the CLI output; the residual gate may still skip entries at this
    # coarse gate resolution
    ds = generate_dataset(spec, count=2, seed=5, workers=1,
                          validate_against_cli=1)
    assert ds.count + len(ds.skipped) == 2


def test_cli_solver_path_roundtrip():
    spec = FamilySpec(n_solve=101, n_train=51)
    values, residual = solve_via_cli(30.0, 7.0, spec)
    assert values.shape == (101, 101)
    assert residual <= RESIDUAL_GATE


def test_save_load_round_trip(tmp_path, tiny_dataset):
    tiny_dataset.save(tmp_path / "ds")
    back = KernelDataset.load(tmp_path / "ds")
    assert back.count == tiny_dataset.count
    assert np.array_equal(back.kernels, tiny_dataset.kernels)
    assert back.spec == tiny_dataset.spec


def test_generation_deterministic():
    spec = FamilySpec(n_solve=101, n_train=51)
    a = generate_dataset(spec, count=3, seed=9, workers=1)
    b = generate_dataset(spec, count=3, seed=9, workers=2)
    assert np.array_equal(a.kernels, b.kernels)
    assert np.array_equal(a.params, b.params)
