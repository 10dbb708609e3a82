import numpy as np
import pytest

from hslfusion import autograd as ag
from hslfusion.autograd import ShapeError, Tensor
from hslfusion.optim import Adam


def test_first_step_moves_by_lr_times_sign():
    p = Tensor(np.array([1.0, -2.0, 0.5], dtype=np.float32), requires_grad=True)
    start = p.data.copy()
    p.grad = np.array([0.3, -1.7, 4.0], dtype=np.float32)
    opt = Adam([p], lr=0.001)
    opt.step()
    delta = p.data - start
    np.testing.assert_allclose(delta, -0.001 * np.sign(p.grad), atol=1e-6)


def test_zero_gradient_leaves_parameter_unchanged():
    p = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
    start = p.data.copy()
    p.grad = np.zeros(2, dtype=np.float32)
    Adam([p]).step()
    np.testing.assert_array_equal(p.data, start)


def test_missing_gradient_is_skipped():
    p = Tensor(np.array([3.0], dtype=np.float32), requires_grad=True)
    Adam([p]).step()
    np.testing.assert_array_equal(p.data, [3.0])


def test_step_counter_increments():
    p = Tensor(np.zeros(2, dtype=np.float32), requires_grad=True)
    opt = Adam([p])
    for expected in (1, 2, 3):
        opt.step()
        assert opt.t == expected


def test_gradient_shape_mismatch():
    p = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    p.grad = np.zeros(4, dtype=np.float32)
    with pytest.raises(ShapeError):
        Adam([p]).step()


def test_duplicate_parameter_rejected():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(ValueError):
        Adam([p, p])


def test_converges_on_scalar_quadratic():
    # minimize (x - 3)^2 from x = 0
    x = Tensor(np.array([0.0], dtype=np.float32), requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(200):
        diff = ag.add(x, Tensor(np.array([-3.0], dtype=np.float32)))
        ag.tensor_sum(ag.mul(diff, diff)).backward()
        opt.step()
        opt.zero_grad()
    assert abs(x.data[0] - 3.0) < 0.5


def test_moment_buffers_match_parameter_shapes():
    shapes = [(2, 3), (4,), (1, 2, 2)]
    params = [Tensor(np.zeros(s, dtype=np.float32), requires_grad=True) for s in shapes]
    opt = Adam(params)
    assert [m.shape for m in opt.m] == shapes
    assert [v.shape for v in opt.v] == shapes
