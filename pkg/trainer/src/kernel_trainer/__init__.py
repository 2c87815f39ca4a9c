"""DeepONet surrogate trainer for backstepping gain-kernel operators;
talks to the controller package only through .kgrid files and its CLI."""

from .dataset import FamilySpec, KernelDataset, generate_dataset
from .export import export_kernel_grid
from .kgrid import read_kgrid, write_kgrid
from .model import OperatorModel, resample_sensors, triangle_points
from .train import (Hyperparams, TrainReport, composite_iota, load_model,
                    rel_linf_errors, save_model, train_operator)

__version__ = "0.1.0"
