"""Neural solver for the delayed-control Riccati kernel system."""

__version__ = "0.1.0"

from .export import GridLayout, evaluate_on_grid, export_kernels, export_loss_history
from .losses import Batch, Problem, losses, sample_batch
from .nets import KERNEL_KEYS, KernelNet, NetBank
from .training import Hyper, TrainingError, TrainResult, train
