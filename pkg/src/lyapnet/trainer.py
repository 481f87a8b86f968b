"""Minibatch Adam training of a LyapunovNet on uniform samples of [-1, 1]^n."""
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .dynamics import eval_field
from .errors import NonFinite, ShapeMismatch
from .loss import batch_loss
from .network import identity_first_layer, init


@dataclass(frozen=True)
class AdamParams:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    m: int = 200_000
    batch_size: int = 32
    max_epochs: int = 30
    tol: float = 1e-6
    seed: int = 0
    adam: AdamParams = field(default_factory=AdamParams)
    shuffle_each_epoch: bool = True
    resample_each_epoch: bool = False
    freeze_first_layer: bool = False

    def __post_init__(self):
        if not (self.m >= self.batch_size >= 1):
            raise ValueError(f"need m >= batch_size >= 1, got m={self.m}, batch_size={self.batch_size}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state, params, grad, hp=AdamParams()):
    """Bias-corrected Adam update. Mutates ``state`` and ``params`` in place
    and returns them."""
    if not (state.m.shape == state.v.shape == params.shape == grad.shape):
        raise ShapeMismatch("Adam state, parameters and gradient must have equal length")
    state.t += 1
    kernels.adam(params, grad, state.m, state.v, state.t, hp.lr, hp.beta1, hp.beta2, hp.eps)
    return state, params


@dataclass
class TrainReport:
    epochs_run: int = 0
    converged: bool = False
    history: List[Tuple[float, float]] = field(default_factory=list)
    wall_time: float = 0.0
    checkpoint: Optional[str] = None

    def to_dict(self):
        return {
            "epochs_run": self.epochs_run,
            "converged": self.converged,
            "history": [{"epoch": i + 1, "err1": e1, "err_inf": ei} for i, (e1, ei) in enumerate(self.history)],
            "checkpoint": self.checkpoint,
        }


def sample_dataset(n, m, seed):
    """``m`` i.i.d. uniform points in [-1, 1]^n from a Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.uniform(-1.0, 1.0, size=(m, n))


def _streams(seed):
    data_ss, shuffle_ss = np.random.SeedSequence([seed, 1]), np.random.SeedSequence([seed, 2])
    return data_ss, np.random.Generator(np.random.Philox(shuffle_ss))


def steps_per_epoch(m, batch_size):
    return math.ceil(m / batch_size)


def train(cfg, shape, vf, spec, progress=None, net=None):
    """Fit a network to the Lyapunov loss; returns ``(net, report)``.

    ``progress(epoch, err1, err_inf)`` is called after every epoch. An
    explicit ``net`` overrides the seeded initialization.
    """
    if vf.n != shape.n:
        raise ShapeMismatch(f"field dimension {vf.n} differs from network input {shape.n}")
    start = time.perf_counter()
    if net is None:
        net = init(shape, cfg.seed)
        if cfg.freeze_first_layer:
            identity_first_layer(net)
    theta = net.theta
    dims = shape.dims
    largs = spec.kernel_args
    hp = cfg.adam
    state = AdamState.zeros(theta.size)
    frozen = shape.n_sub * shape.d_max * (shape.n + 1) if cfg.freeze_first_layer else 0
    report = TrainReport()

    data_ss, shuffle_rng = _streams(cfg.seed)
    epoch_seeds = data_ss.spawn(cfg.max_epochs + 1)
    X = sample_dataset(shape.n, cfg.m, epoch_seeds[0])
    FX = eval_field(vf, X)

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.resample_each_epoch and epoch > 1:
            X = sample_dataset(shape.n, cfg.m, epoch_seeds[epoch - 1])
            FX = eval_field(vf, X)
        if cfg.shuffle_each_epoch:
            perm = shuffle_rng.permutation(cfg.m)
            Xe, FXe = X[perm], FX[perm]
        else:
            Xe, FXe = X, FX
        for b, lo in enumerate(range(0, cfg.m, cfg.batch_size)):
            hi = lo + cfg.batch_size
            loss, grad = kernels.loss_grad(theta, Xe[lo:hi], FXe[lo:hi], *dims, *largs)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NonFinite(f"non-finite loss or gradient at epoch {epoch}, batch {b}")
            if frozen:
                grad[:frozen] = 0.0
            state.t += 1
            kernels.adam(theta, grad, state.m, state.v, state.t, hp.lr, hp.beta1, hp.beta2, hp.eps)
        err1, err_inf = batch_loss(spec, net, vf, X, FX)
        report.history.append((err1, err_inf))
        report.epochs_run = epoch
        if progress is not None:
            progress(epoch, err1, err_inf)
        if err1 < cfg.tol and err_inf < cfg.tol:
            report.converged = True
            break

    report.wall_time = time.perf_counter() - start
    return net, report
