import math

import pytest
import torch

from app.errors import NonFiniteError, ShapeMismatchError
from app.grad import GradientTape, ParamSet, as_tensor, backward
from app.grad import ops
from gradcheck_utils import check_inputs


def _rand(gen, *shape, offset=0.0):
    return torch.rand(*shape, generator=gen, dtype=torch.float64) + offset


class TestElementwiseGradients:
    def test_binary_ops(self, rng):
        a, b = _rand(rng, 1, 2, 3, 3), _rand(rng, 1, 2, 3, 3, offset=0.5)
        for op in (ops.add, ops.sub, ops.mul, ops.div):
            check_inputs(lambda x, y: ops.reduce_sum(ops.square(op(x, y))), a, b)

    def test_channel_broadcast(self, rng):
        x, m = _rand(rng, 2, 3, 4, 4), _rand(rng, 2, 1, 4, 4)
        check_inputs(lambda x, m: ops.reduce_mean(ops.mul(x, m)), x, m)

    def test_unary_ops(self, rng):
        x = _rand(rng, 1, 2, 3, 3, offset=-0.5)
        check_inputs(lambda t: ops.reduce_sum(ops.leaky_relu(t)), x)
        check_inputs(lambda t: ops.reduce_sum(ops.sigmoid(t)), x)
        check_inputs(lambda t: ops.reduce_sum(ops.softplus(t)), x)
        check_inputs(lambda t: ops.reduce_mean(ops.scale(ops.square(t), 3.0)), x)
        check_inputs(lambda t: ops.rms(t), x)

    def test_abs_and_sqrt_away_from_kinks(self, rng):
        x = _rand(rng, 1, 1, 4, 4, offset=0.2)
        check_inputs(lambda t: ops.reduce_sum(ops.absolute(t)), x)
        check_inputs(lambda t: ops.reduce_sum(ops.sqrt(t)), x)
        check_inputs(lambda t: ops.reduce_sum(ops.absolute(ops.scale(t, -1.0))), x)


class TestStructuralGradients:
    def test_conv2d(self, rng):
        x, w, b = _rand(rng, 1, 2, 5, 5), _rand(rng, 3, 2, 3, 3), _rand(rng, 3)
        check_inputs(lambda x, w, b: ops.reduce_sum(ops.square(ops.conv2d(x, w, b, padding=1))), x, w, b)
        check_inputs(lambda x, w: ops.reduce_sum(ops.conv2d(x, w, stride=2, padding=1)), x, w)

    def test_conv_transpose2d(self, rng):
        x, w = _rand(rng, 1, 2, 3, 3), _rand(rng, 2, 3, 4, 4)
        check_inputs(lambda x, w: ops.reduce_sum(ops.square(ops.conv_transpose2d(x, w, stride=2, padding=1))), x, w)

    def test_upsample_concat_crop(self, rng):
        x, y = _rand(rng, 1, 2, 3, 3), _rand(rng, 1, 1, 6, 6)
        check_inputs(
            lambda x, y: ops.reduce_sum(ops.square(ops.crop(ops.concat_channels([ops.upsample_nearest(x, 2), y]), (1, 2, 3, 3)))),
            x,
            y,
        )


class TestShapeChecks:
    def test_add_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ops.add(torch.zeros(1, 3, 4, 4, dtype=torch.float64), torch.zeros(1, 3, 4, 5, dtype=torch.float64))

    def test_broadcast_needs_single_channel(self):
        with pytest.raises(ShapeMismatchError):
            ops.mul(torch.zeros(1, 3, 4, 4, dtype=torch.float64), torch.zeros(1, 2, 4, 4, dtype=torch.float64))

    def test_conv_channel_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ops.conv2d(torch.zeros(1, 2, 4, 4, dtype=torch.float64), torch.zeros(1, 3, 3, 3, dtype=torch.float64))

    def test_conv_kernel_larger_than_input(self):
        with pytest.raises(ShapeMismatchError):
            ops.conv2d(torch.zeros(1, 1, 2, 2, dtype=torch.float64), torch.zeros(1, 1, 5, 5, dtype=torch.float64))

    def test_crop_outside(self):
        with pytest.raises(ShapeMismatchError):
            ops.crop(torch.zeros(1, 1, 4, 4, dtype=torch.float64), (2, 2, 3, 3))

    def test_requires_nchw(self):
        with pytest.raises(ShapeMismatchError):
            ops.upsample_nearest(torch.zeros(3, 4, 4, dtype=torch.float64), 2)


def test_non_finite_forward_raises():
    with pytest.raises(NonFiniteError) as info:
        ops.div(as_tensor([[[[1.0]]]]), as_tensor([[[[0.0]]]]))
    assert info.value.op == "div"
    with pytest.raises(FloatingPointError):
        ops.sqrt(as_tensor([-1.0]))


def test_rms_zero_subgradient():
    x = torch.zeros(1, 1, 3, 3, dtype=torch.float64, requires_grad=True)
    params = ParamSet({"x": x})
    result = backward(ops.rms(x), params)
    assert float(ops.rms(x)) == 0.0
    assert torch.equal(result.grads["x"], torch.zeros_like(x))


def test_rms_value():
    x = as_tensor([3.0, -4.0])
    assert float(ops.rms(x)) == pytest.approx(math.sqrt(12.5), abs=1e-15)


def test_tape_records_only_tracked_ops():
    x = as_tensor([[[[1.0, 2.0]]]], requires_grad=True)
    const = as_tensor([[[[3.0, 4.0]]]])
    with GradientTape() as tape:
        y = ops.mul(x, const)
        ops.add(const, const)
        ops.reduce_sum(y)
    assert [record.op for record in tape.records] == ["mul", "sum"]
    assert tape.records[0].shape == (1, 1, 1, 2)
