"""Compositional Lyapunov network.

A linear first layer maps ``x`` to ``n_sub * d_max`` features. Feature block
``i`` feeds sublayer ``i`` of ``m_per`` softplus neurons, and all neurons are
summed with weights ``a`` plus a bias ``c``::

    W(x) = sum_i sum_k a_ik * softplus(w2_ik . (w1 x + b1)_i + b2_ik) + c
"""
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SchemaError, ShapeMismatch

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class NetShape:
    n: int
    n_sub: int
    d_max: int
    m_per: int

    def __post_init__(self):
        for name in ("n", "n_sub", "d_max", "m_per"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"NetShape.{name} must be a positive integer, got {value!r}")
        if self.n_sub > self.n:
            warnings.warn(f"n_sub={self.n_sub} exceeds the state dimension n={self.n}", stacklevel=3)

    @property
    def hidden_neurons(self):
        return self.n_sub * self.d_max + self.n_sub * self.m_per

    @property
    def dims(self):
        return self.n, self.n_sub, self.d_max, self.m_per


def param_count(shape):
    n, s, d, m = shape.dims
    return s * d * (n + 1) + s * m * (d + 1) + s * m + 1


class LyapunovNet:
    """Shape plus a flat parameter vector; the named blocks are views into it."""

    def __init__(self, shape, theta=None):
        self.shape = shape
        size = param_count(shape)
        if theta is None:
            theta = np.zeros(size)
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.shape != (size,):
            raise ShapeMismatch(f"expected {size} parameters for {shape}, got {theta.shape}")
        self.theta = theta

    @property
    def blocks(self):
        return kernels.unpack(self.theta, *self.shape.dims)

    @property
    def w1(self):
        return self.blocks[0]

    @property
    def b1(self):
        return self.blocks[1]

    @property
    def w2(self):
        return self.blocks[2]

    @property
    def b2(self):
        return self.blocks[3]

    @property
    def a(self):
        return self.blocks[4]

    @property
    def c(self):
        return float(self.theta[-1])

    def copy(self):
        return LyapunovNet(self.shape, self.theta.copy())

    def __call__(self, x):
        return forward(self, x)

    def __repr__(self):
        return f"LyapunovNet({self.shape}, params={self.theta.size})"


def glorot_limit(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def init(shape, seed):
    """Glorot-uniform weights, zero biases. Deterministic in ``seed``."""
    rng = np.random.Generator(np.random.Philox(seed))
    n, s, d, m = shape.dims
    net = LyapunovNet(shape)
    w1, b1, w2, b2, a, c = net.blocks
    w1[:] = rng.uniform(-1.0, 1.0, w1.shape) * glorot_limit(n, s * d)
    # each sublayer is a d -> m dense layer
    w2[:] = rng.uniform(-1.0, 1.0, w2.shape) * glorot_limit(d, m)
    a[:] = rng.uniform(-1.0, 1.0, a.shape) * glorot_limit(s * m, 1)
    return net


def identity_first_layer(net):
    """Set ``w1`` to identity slices and ``b1`` to zero, in place.

    Row ``r`` of ``w1`` picks coordinate ``r`` (rows beyond ``n`` stay zero).
    Combined with a frozen first layer this is the one-hidden-layer network
    for known subsystem coordinates.
    """
    w1, b1 = net.blocks[:2]
    w1[:] = 0.0
    b1[:] = 0.0
    k = min(w1.shape)
    w1[np.arange(k), np.arange(k)] = 1.0
    return net


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.ascontiguousarray(x.reshape(1, -1) if single else x)
    if X.ndim != 2 or X.shape[1] != net.shape.n:
        raise ShapeMismatch(f"states must have length {net.shape.n}, got shape {x.shape}")
    return X, single


def forward(net, x):
    """``W(x)`` for one state (returns float) or a batch (returns array)."""
    X, single = _as_batch(net, x)
    out = kernels.forward(net.theta, X, *net.shape.dims)
    return float(out[0]) if single else out


def grad_x(net, x):
    """Gradient of ``W`` with respect to the state."""
    X, single = _as_batch(net, x)
    out = kernels.grad_x(net.theta, X, *net.shape.dims)
    return out[0] if single else out


def sublayer_outputs(net, x):
    """Contribution of each sublayer to ``W(x) - c``, shape ``(m, n_sub)``."""
    X, _ = _as_batch(net, x)
    n, s, d, m = net.shape.dims
    w1, b1, w2, b2, a, _ = net.blocks
    z = (X @ w1.T + b1).reshape(-1, s, d)
    u = np.einsum("bij,ikj->bik", z, w2) + b2
    h = np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))
    return np.einsum("bik,ik->bi", h, a)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

_FIELDS = ("w1", "b1", "w2", "b2", "a", "c")


def to_document(net):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "shape": {"n": net.shape.n, "n_sub": net.shape.n_sub, "d_max": net.shape.d_max, "m_per": net.shape.m_per},
    }
    w1, b1, w2, b2, a, _ = net.blocks
    doc["w1"] = w1.tolist()
    doc["b1"] = b1.tolist()
    doc["w2"] = w2.tolist()
    doc["b2"] = b2.tolist()
    doc["a"] = a.ravel().tolist()
    doc["c"] = net.c
    return doc


def serialize(net):
    """JSON checkpoint text. Floats use shortest round-trip repr, so loading
    restores every parameter bit for bit."""
    return json.dumps(to_document(net), indent=1) + "\n"


def from_document(doc):
    if not isinstance(doc, dict):
        raise SchemaError("checkpoint must be a JSON object")
    for key in ("schema_version", "shape") + _FIELDS:
        if key not in doc:
            raise SchemaError(f"checkpoint is missing field {key!r}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc['schema_version']!r}")
    sh = doc["shape"]
    try:
        shape = NetShape(int(sh["n"]), int(sh["n_sub"]), int(sh["d_max"]), int(sh["m_per"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad shape block: {exc}") from None
    n, s, d, m = shape.dims
    expected = {"w1": (s * d, n), "b1": (s * d,), "w2": (s, m, d), "b2": (s, m), "a": (s * m,), "c": ()}
    parts = []
    for key in _FIELDS:
        try:
            arr = np.array(doc[key], dtype=np.float64)
        except (TypeError, ValueError):
            raise SchemaError(f"field {key!r} is not numeric") from None
        if arr.shape != expected[key]:
            raise ShapeMismatch(f"field {key!r} has shape {arr.shape}, expected {expected[key]}")
        if not np.all(np.isfinite(arr)):
            raise SchemaError(f"field {key!r} has non-finite entries")
        parts.append(arr.ravel())
    return LyapunovNet(shape, np.concatenate(parts))


def deserialize(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"checkpoint is not valid JSON: {exc}") from None
    return from_document(doc)


def save(net, path):
    with open(path, "w") as fh:
        fh.write(serialize(net))


def load(path):
    with open(path) as fh:
        return deserialize(fh.read())
