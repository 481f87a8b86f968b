import math

import numpy as np
import pytest

from conftest import random_net
from lyapnet.dynamics import builtin, parse_vector_field
from lyapnet.errors import NonFinite
from lyapnet.loss import BoundSpec, LossSpec, batch_loss
from lyapnet.network import LyapunovNet, NetShape, forward, grad_x
from lyapnet.verifier import Trajectory, check_decrease, export_slice, integrate, slice_grid, verify_samples

PDI = LossSpec("pdi", 1.0, BoundSpec(0.1, 10.0))
DECAY = parse_vector_field("-x1", 1)


def test_zero_net_violates_lower_bound(rng):
    X = rng.uniform(0.2, 1.0, (50, 2)) * rng.choice([-1, 1], (50, 2))
    rep = verify_samples(LyapunovNet(NetShape(2, 2, 1, 4)), builtin("example_2d"), PDI, X, 0.05)
    assert rep.bound_violations == 50
    assert rep.worst_bound_margin < 0
    assert not rep.ok


def test_exclusion_radius(rng):
    X = rng.uniform(-0.01, 0.01, (30, 2))
    rep = verify_samples(LyapunovNet(NetShape(2, 2, 1, 4)), builtin("example_2d"), PDI, X, 0.05)
    assert rep.residual_violations == 0
    assert rep.residual_witness is None


def test_infinite_radius_means_no_residual_violations(rng):
    net = random_net(NetShape(2, 2, 1, 4), 0)
    rep = verify_samples(net, builtin("example_2d"), PDI, rng.uniform(-1, 1, (100, 2)), math.inf)
    assert rep.residual_violations == 0


def test_report_metrics_and_witnesses(rng):
    net = random_net(NetShape(2, 2, 1, 4), 1, scale=0.5)
    vf = builtin("example_2d")
    X = rng.uniform(-1, 1, (200, 2))
    rep = verify_samples(net, vf, PDI, X, 0.0)
    e1, einf = batch_loss(PDI, net, vf, X)
    assert (rep.err1, rep.err_inf) == (e1, einf)
    assert rep.err1 <= rep.err_inf
    assert rep.residual_violations <= rep.points_checked and rep.bound_violations <= rep.points_checked
    xw = np.array(rep.residual_witness)
    fw = vf(xw)
    assert grad_x(net, xw) @ fw + xw @ xw == pytest.approx(rep.worst_residual, rel=1e-12)
    xb = np.array(rep.bound_witness)
    w = forward(net, xb)
    assert min(w - 0.1 * (xb @ xb), 10 * (xb @ xb) - w) == pytest.approx(rep.worst_bound_margin, rel=1e-12)


def test_rk4_exponential_decay():
    traj = integrate(DECAY, [1.0], 1.0, 1e-3)
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.0
    assert len(traj.times) == len(traj.states) == 1001
    assert abs(traj.states[-1, 0] - math.exp(-1.0)) < 1e-9


def test_rk4_order():
    errors = [abs(integrate(DECAY, [1.0], 1.0, dt).states[-1, 0] - math.exp(-1.0)) for dt in (0.1, 0.05, 0.025)]
    assert errors[0] / errors[1] >= 12
    assert errors[1] / errors[2] >= 12


def test_rk4_constant_field():
    traj = integrate(parse_vector_field("0; 0", 2), [0.3, -0.2], 0.5, 0.1)
    assert np.all(traj.states == [0.3, -0.2])


def test_rk4_uneven_final_step():
    traj = integrate(DECAY, [1.0], 0.25, 0.1)
    np.testing.assert_allclose(traj.times, [0.0, 0.1, 0.2, 0.25])
    assert np.all(np.diff(traj.times) > 0)


def test_integrate_argument_checks():
    with pytest.raises(ValueError):
        integrate(DECAY, [1.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate(DECAY, [1.0], 1e-4, 1e-3)


def test_integrate_blow_up():
    with pytest.raises(NonFinite):
        integrate(parse_vector_field("x1^2", 1), [10.0], 5.0, 0.1)


def test_example_10d_decays():
    traj = integrate(builtin("example_10d"), np.ones(10), 10.0, 1e-2)
    assert np.linalg.norm(traj.states[-1]) < np.linalg.norm(traj.states[0])


def test_integrate_attaches_w():
    net = random_net(NetShape(1, 1, 1, 3), 2)
    traj = integrate(DECAY, [0.5], 0.1, 0.01, net=net)
    np.testing.assert_array_equal(traj.w_values, forward(net, traj.states))


def test_check_decrease():
    assert check_decrease(np.array([3.0, 2.0, 1.0])) == (True, None)
    assert check_decrease(np.array([1.0, 2.0])) == (False, 0)
    assert check_decrease(np.array([1.0, 1.0 + 1e-10]), slack=1e-9) == (True, None)
    assert check_decrease(np.array([3.0, 2.0, 2.5, 1.0])) == (False, 1)
    with pytest.raises(ValueError):
        check_decrease(np.array([1.0]))
    traj = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), np.array([1.0, 0.5]))
    assert check_decrease(traj) == (True, None)


def test_trajectory_csv():
    traj = Trajectory(np.array([0.0, 0.5]), np.zeros((2, 1)), np.array([1.0, 0.25]))
    assert traj.to_csv() == "t,W\n0.0,1.0\n0.5,0.25\n"


def test_slice_row_count():
    net = random_net(NetShape(3, 1, 2, 3), 3)
    vf = parse_vector_field("-x1; -x2; -x3", 3)
    text = export_slice(net, vf, 1, 3, 1.0, 7)
    lines = text.splitlines()
    assert lines[0] == "x1,x3,W,DWf"
    assert len(lines) == 7 * 7 + 1
    assert text.endswith("\n")


def test_slice_matches_direct_evaluation():
    net = random_net(NetShape(3, 1, 2, 3), 4)
    vf = parse_vector_field("-x1 + x2; -x2; -x3 + x1^2", 3)
    rows = slice_grid(net, vf, 2, 3, 0.5, 5)
    for xi, xj, w, dwf in rows:
        x = np.array([0.0, xi, xj])
        assert w == forward(net, x)
        assert dwf == pytest.approx(grad_x(net, x) @ vf(x), rel=1e-13, abs=1e-15)


def test_slice_symmetry():
    # W depends on x1 only through x1^2-symmetric pairs of neurons: w1 rows (1,0) and (-1,0)
    net = LyapunovNet(NetShape(2, 2, 1, 2))
    w1, b1, w2, b2, a, c = net.blocks
    w1[0] = [1.0, 0.0]
    w1[1] = [-1.0, 0.0]
    w2[:, :, 0] = [[0.7, -1.3], [0.7, -1.3]]
    b2[:] = [[0.1, 0.2], [0.1, 0.2]]
    a[:] = [[0.5, 1.5], [0.5, 1.5]]
    rows = slice_grid(net, parse_vector_field("-x1; -x2", 2), 1, 2, 1.0, 9).reshape(9, 9, 4)
    np.testing.assert_allclose(rows[:, :, 2], rows[::-1, :, 2], rtol=1e-14)


def test_slice_argument_checks():
    net = random_net(NetShape(2, 1, 1, 1), 0)
    vf = builtin("example_2d")
    with pytest.raises(ValueError):
        slice_grid(net, vf, 1, 1, 1.0, 5)
    with pytest.raises(ValueError):
        slice_grid(net, vf, 1, 2, 1.0, 1)
    with pytest.raises(ValueError):
        slice_grid(net, vf, 1, 3, 1.0, 5)


def test_slack_tolerates_small_violations():
    net = LyapunovNet(NetShape(1, 1, 1, 1))
    net.theta[-1] = 0.1 - 1e-4  # W just below alpha1 = 0.1 at |x| = 1
    X = np.array([[1.0]])
    spec = LossSpec("pdi", 1.0, BoundSpec(0.1, 10.0))
    vf = parse_vector_field("-x1", 1)
    assert verify_samples(net, vf, spec, X, math.inf).bound_violations == 1
    assert verify_samples(net, vf, spec, X, math.inf, slack=1e-3).bound_violations == 0
    with pytest.raises(ValueError):
        verify_samples(net, vf, spec, X, 0.0, slack=-1.0)
