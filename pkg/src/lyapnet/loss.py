"""Pointwise and batch losses for the Lyapunov conditions.

For a point ``x`` with network value ``w``, state gradient ``p`` and field
value ``f(x)`` the residual is ``r = p . f(x) + |x|^2``. The PDE loss
penalizes ``r**2``, the PDI loss only ``max(r, 0)**2``. Both add

    nu * (min(w - alpha1(|x|), 0)**2 + max(w - alpha2(|x|), 0)**2)

with ``alpha_i(r) = c_i * r**power``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import eval_field
from .errors import NonFinite, ShapeMismatch

KINDS = {"pde": kernels.PDE, "pdi": kernels.PDI}


@dataclass(frozen=True)
class BoundSpec:
    c1: float = 0.1
    c2: float = 10.0
    power: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2):
            raise ValueError(f"bounds need 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")
        if not self.power >= 1.0:
            raise ValueError(f"bound power must be >= 1, got {self.power}")

    def alpha1(self, r):
        return self.c1 * np.asarray(r, dtype=np.float64) ** self.power

    def alpha2(self, r):
        return self.c2 * np.asarray(r, dtype=np.float64) ** self.power

    def from_squared_norm(self, xx):
        """``(alpha1, alpha2)`` at ``|x|`` given ``|x|^2``; exact for power 2."""
        xx = np.asarray(xx, dtype=np.float64)
        r_pow = xx if self.power == 2.0 else xx ** (0.5 * self.power)
        return self.c1 * r_pow, self.c2 * r_pow


@dataclass(frozen=True)
class LossSpec:
    kind: str = "pdi"
    nu: float = 1.0
    bounds: BoundSpec = field(default_factory=BoundSpec)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"loss kind must be 'pde' or 'pdi', got {self.kind!r}")
        if not (np.isfinite(self.nu) and self.nu >= 0.0):
            raise ValueError(f"nu must be finite and >= 0, got {self.nu}")

    @property
    def kernel_args(self):
        b = self.bounds
        return KINDS[self.kind], float(self.nu), float(b.c1), float(b.c2), float(b.power)


def loss_pointwise(spec, w, p, x, fx):
    x = np.asarray(x, dtype=np.float64)
    xx = float(x @ x)
    res = float(np.dot(p, fx)) + xx
    if spec.kind == "pdi":
        res = max(res, 0.0)
    lo, hi = spec.bounds.from_squared_norm(xx)
    below = min(w - float(lo), 0.0)
    above = max(w - float(hi), 0.0)
    return res * res + spec.nu * (below * below + above * above)


def _prepare(net, vf, points, fx=None):
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("points must be a non-empty (m, n) array")
    if X.shape[1] != net.shape.n or vf.n != net.shape.n:
        raise ShapeMismatch(f"network n={net.shape.n}, field n={vf.n}, points have {X.shape[1]} columns")
    FX = eval_field(vf, X) if fx is None else np.ascontiguousarray(fx, dtype=np.float64)
    return X, FX


def pointwise_terms(spec, net, vf, points, fx=None):
    """Per-point ``(loss, W, DW.f)`` arrays."""
    X, FX = _prepare(net, vf, points, fx)
    return kernels.loss_terms(net.theta, X, FX, *net.shape.dims, *spec.kernel_args)


def batch_loss(spec, net, vf, points, fx=None):
    """``(err_1, err_inf)``: mean and max of the pointwise loss."""
    losses, _, _ = pointwise_terms(spec, net, vf, points, fx)
    mean, worst = float(np.mean(losses)), float(np.max(losses))
    if not (np.isfinite(mean) and np.isfinite(worst)):
        raise NonFinite("loss evaluated to a non-finite value")
    return mean, worst


def loss_param_gradient(spec, net, vf, points, fx=None):
    """Mean loss over ``points`` and its gradient with respect to ``net.theta``."""
    X, FX = _prepare(net, vf, points, fx)
    return kernels.loss_grad(net.theta, X, FX, *net.shape.dims, *spec.kernel_args)
