"""A-posteriori checks for a trained network: sampled bound and decrease
checks, RK4 trajectories, and planar slices for plotting."""
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dynamics import eval_field
from .errors import NonFinite
from .loss import pointwise_terms
from .network import forward, grad_x


@dataclass
class VerifyReport:
    points_checked: int
    exclusion_radius: float
    violation_slack: float
    bound_violations: int
    worst_bound_margin: float
    bound_witness: Optional[list]
    residual_violations: int
    worst_residual: float
    residual_witness: Optional[list]
    err1: float
    err_inf: float

    @property
    def ok(self):
        return self.bound_violations == 0 and self.residual_violations == 0

    def to_dict(self):
        return asdict(self)


def verify_samples(net, vf, spec, points, r0=0.05, slack=0.0):
    """Check ``alpha1 <= W <= alpha2`` at every point and ``DW.f + |x|^2 <= 0``
    at points with ``|x| >= r0``.

    Bound margins are ``min(W - alpha1, alpha2 - W)``. A point counts as a
    violation when its margin is below ``-slack`` or its residual above
    ``slack``; ``slack = sqrt(tol)`` accepts exactly what a pointwise loss
    below ``tol`` allows. The worst margin and worst residual come with the
    point where they occur.
    """
    if not r0 >= 0:
        raise ValueError("r0 must be >= 0")
    if not slack >= 0:
        raise ValueError("slack must be >= 0")
    X = np.ascontiguousarray(points, dtype=np.float64)
    losses, w, q = pointwise_terms(spec, net, vf, X)
    if not (np.all(np.isfinite(losses)) and np.all(np.isfinite(q))):
        raise NonFinite("non-finite values while verifying")
    xx = np.einsum("bj,bj->b", X, X)
    r = np.sqrt(xx)
    lo, hi = spec.bounds.from_squared_norm(xx)
    margin = np.minimum(w - lo, hi - w)
    ib = int(np.argmin(margin))
    residual = q + xx
    active = r >= r0
    n_res = int(np.count_nonzero(residual[active] > slack))
    if np.any(active):
        cand = np.where(active, residual, -np.inf)
        ir = int(np.argmax(cand))
        worst_res, res_witness = float(residual[ir]), X[ir].tolist()
    else:
        worst_res, res_witness = -math.inf, None
    return VerifyReport(
        points_checked=int(X.shape[0]),
        exclusion_radius=float(r0),
        violation_slack=float(slack),
        bound_violations=int(np.count_nonzero(margin < -slack)),
        worst_bound_margin=float(margin[ib]),
        bound_witness=X[ib].tolist(),
        residual_violations=n_res,
        worst_residual=worst_res,
        residual_witness=res_witness,
        err1=float(np.mean(losses)),
        err_inf=float(np.max(losses)),
    )


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    w_values: Optional[np.ndarray] = field(default=None)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,W\n")
        w = self.w_values if self.w_values is not None else np.full(self.times.shape, np.nan)
        for t, wv in zip(self.times, w):
            buf.write(f"{float(t)!r},{float(wv)!r}\n")
        return buf.getvalue()


def rk4_step(fn, x, h):
    k1 = fn(x)
    k2 = fn(x + 0.5 * h * k1)
    k3 = fn(x + 0.5 * h * k2)
    k4 = fn(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(vf, x0, t_end, dt=1e-3, net=None):
    """Fixed-step classical RK4 from ``x0`` over ``[0, t_end]``.

    If ``t_end`` is not a multiple of ``dt`` the last step is shortened.
    ``vf`` may be a VectorField or any callable mapping a state to its
    derivative.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_end >= dt:
        raise ValueError(f"t_end must be at least dt, got t_end={t_end}, dt={dt}")
    fn = (lambda x: eval_field(vf, x)) if hasattr(vf, "components") else vf
    steps = int(math.ceil(t_end / dt - 1e-9))
    x = np.array(x0, dtype=np.float64)
    times = np.empty(steps + 1)
    states = np.empty((steps + 1, x.size))
    times[0] = 0.0
    states[0] = x
    for k in range(1, steps + 1):
        t_next = min(k * dt, t_end)
        x = rk4_step(fn, x, t_next - times[k - 1])
        if not np.all(np.isfinite(x)):
            raise NonFinite(f"trajectory blew up at t={t_next}")
        times[k] = t_next
        states[k] = x
    w = forward(net, states) if net is not None else None
    return Trajectory(times, states, w)


def check_decrease(traj, slack=1e-9):
    """``(True, None)`` if ``W`` never rises by more than ``slack`` between
    consecutive samples, else ``(False, k)`` for the first offending ``k``."""
    w = np.asarray(traj.w_values if isinstance(traj, Trajectory) else traj, dtype=np.float64)
    if w.size < 2:
        raise ValueError("need at least two samples")
    bad = np.flatnonzero(w[1:] > w[:-1] + slack)
    if bad.size:
        return False, int(bad[0])
    return True, None


def slice_grid(net, vf, axis_i, axis_j, half_width, resolution):
    """Grid values on the plane spanned by coordinates ``axis_i`` and
    ``axis_j`` (1-based), all other coordinates zero.

    Returns an array with columns ``(x_i, x_j, W, DW.f)``, x_i varying slowest.
    """
    n = net.shape.n
    if axis_i == axis_j:
        raise ValueError("axes must differ")
    if not (1 <= axis_i <= n and 1 <= axis_j <= n):
        raise ValueError(f"axes must lie in 1..{n}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    ticks = np.linspace(-half_width, half_width, resolution)
    gi, gj = np.meshgrid(ticks, ticks, indexing="ij")
    X = np.zeros((resolution * resolution, n))
    X[:, axis_i - 1] = gi.ravel()
    X[:, axis_j - 1] = gj.ravel()
    w = forward(net, X)
    dwf = np.einsum("bj,bj->b", grad_x(net, X), eval_field(vf, X))
    return np.column_stack([X[:, axis_i - 1], X[:, axis_j - 1], w, dwf])


def export_slice(net, vf, axis_i, axis_j, half_width, resolution):
    """CSV text of :func:`slice_grid` with a header row."""
    rows = slice_grid(net, vf, axis_i, axis_j, half_width, resolution)
    buf = io.StringIO()
    buf.write(f"x{axis_i},x{axis_j},W,DWf\n")
    for a, b, w, d in rows:
        buf.write(",".join(repr(float(v)) for v in (a, b, w, d)) + "\n")
    return buf.getvalue()
