"""Neural-network Lyapunov functions with a compositional architecture."""
from ._accel import BACKEND
from .dynamics import VectorField, builtin, eval_field, parse_vector_field
from .loss import BoundSpec, LossSpec, batch_loss, loss_param_gradient, loss_pointwise
from .network import LyapunovNet, NetShape, forward, grad_x, init, param_count
from .trainer import TrainConfig, TrainReport, adam_step, sample_dataset, train
from .verifier import check_decrease, export_slice, integrate, verify_samples

__version__ = "0.1.0"
