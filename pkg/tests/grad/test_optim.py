import math

import pytest
import torch

from app.errors import NonFiniteError
from app.grad import AdamState, ParamSet, adam_step, as_tensor, backward
from app.grad import ops


def test_first_step_moves_by_lr_times_sign():
    params = ParamSet({"x": as_tensor([1.0, -2.0], requires_grad=True)})
    grads = ParamSet({"x": as_tensor([0.3, -5.0])})
    new, state = adam_step(params, grads, AdamState.zeros(params), lr=0.01, eps=0.0)
    assert state.step == 1
    assert torch.allclose(new["x"], as_tensor([0.99, -1.99]), atol=1e-12)
    assert new["x"].requires_grad


def test_matches_closed_form_second_step():
    beta1, beta2, lr, eps = 0.5, 0.999, 0.1, 1e-8
    params = ParamSet({"x": as_tensor([0.0], requires_grad=True)})
    state = AdamState.zeros(params)
    g1, g2 = 1.0, 3.0
    params, state = adam_step(params, ParamSet({"x": as_tensor([g1])}), state, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    params, state = adam_step(params, ParamSet({"x": as_tensor([g2])}), state, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    m = (1 - beta1) * (beta1 * g1 + g2)
    v = (1 - beta2) * (beta2 * g1 ** 2 + g2 ** 2)
    second = lr * (m / (1 - beta1 ** 2)) / (math.sqrt(v / (1 - beta2 ** 2)) + eps)
    first = lr * 1.0 / (1.0 + eps)
    assert float(params["x"]) == pytest.approx(-first - second, abs=1e-12)
    assert state.step == 2


def test_input_state_is_not_mutated():
    params = ParamSet({"x": as_tensor([1.0], requires_grad=True)})
    state = AdamState.zeros(params)
    adam_step(params, ParamSet({"x": as_tensor([1.0])}), state, lr=0.1)
    assert state.step == 0
    assert float(state.exp_avg["x"]) == 0.0


def test_rejects_non_positive_lr():
    params = ParamSet({"x": as_tensor([1.0], requires_grad=True)})
    with pytest.raises(ValueError):
        adam_step(params, ParamSet({"x": as_tensor([1.0])}), AdamState.zeros(params), lr=0.0)


def test_non_finite_update_raises():
    params = ParamSet({"x": as_tensor([1.0], requires_grad=True)})
    with pytest.raises(NonFiniteError):
        adam_step(params, ParamSet({"x": as_tensor([float("nan")])}), AdamState.zeros(params), lr=0.1)


def test_zero_gradient_leaves_params_unchanged():
    params = ParamSet({"x": as_tensor([1.0, -2.0], requires_grad=True)})
    new, state = adam_step(params, ParamSet({"x": as_tensor([0.0, 0.0])}), AdamState.zeros(params), lr=0.1)
    assert torch.equal(new["x"].detach(), params["x"].detach())
    assert state.step == 1


def test_two_steps_on_quadratic_decrease_monotonically():
    params = ParamSet({"theta": as_tensor([1.0], requires_grad=True)})
    state = AdamState.zeros(params)
    values = [1.0]
    for _ in range(2):
        loss = ops.reduce_sum(ops.square(params["theta"]))
        grads = backward(loss, params).grads
        params, state = adam_step(params, grads, state, lr=0.1)
        values.append(float(params["theta"].detach()) ** 2)
    assert values[0] > values[1] > values[2]
