import os
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def tiny_dataset():
    """A small in-process dataset for fast structural tests."""
    from kernel_trainer.dataset import FamilySpec, generate_dataset
    spec = FamilySpec(n_solve=201, n_train=51)
    return generate_dataset(spec, count=8, seed=11, workers=2,
                            validate_against_cli=0)


@pytest.fixture(scope="session")
def single_function_dataset():
    """Identical (lambda, kernel) pairs of the reference profile."""
    from kernel_trainer.dataset import FamilySpec, generate_dataset
    spec = FamilySpec(c_range=(50.0, 50.0), gamma_range=(8.0, 8.0),
                      n_solve=201, n_train=51)
    return generate_dataset(spec, count=8, seed=0, workers=1,
                            validate_against_cli=0)
