import pytest
import torch

from app.errors import ShapeMismatchError
from app.grad import ParamSet, as_tensor, backward
from app.grad import ops


def _params():
    return ParamSet({"w": as_tensor([[1.0, 2.0]], requires_grad=True), "b": as_tensor([0.5], requires_grad=True)})


def test_shifted_is_functional():
    params = _params()
    before = params.checksum()
    grads = ParamSet({"w": as_tensor([[1.0, 1.0]]), "b": as_tensor([2.0])})
    moved = params.shifted(grads, 0.1)
    assert params.checksum() == before
    assert torch.allclose(moved["w"], as_tensor([[0.9, 1.9]]), atol=1e-15)
    assert float(moved["b"]) == pytest.approx(0.3, abs=1e-15)


def test_shifted_keeps_graph_to_original():
    params = _params()
    moved = params.shifted(ParamSet({"w": as_tensor([[0.0, 0.0]]), "b": as_tensor([0.0])}), 0.1)
    loss = ops.reduce_sum(ops.square(moved["w"]))
    grads = backward(loss, params).grads
    assert torch.allclose(grads["w"], as_tensor([[2.0, 4.0]]))


def test_shifted_rejects_mismatched_names():
    with pytest.raises(ShapeMismatchError):
        _params().shifted(ParamSet({"w": as_tensor([[1.0, 1.0]])}), 0.1)


def test_shifted_rejects_mismatched_shapes():
    with pytest.raises(ShapeMismatchError):
        _params().shifted(ParamSet({"w": as_tensor([1.0]), "b": as_tensor([1.0])}), 0.1)


def test_combine_and_split_are_inverse():
    groups = {"srnet": _params(), "masknet": ParamSet({"conv.0.weight": as_tensor([1.0])})}
    merged = ParamSet.combine(groups)
    assert list(merged.keys()) == ["srnet/w", "srnet/b", "masknet/conv.0.weight"]
    split = merged.split()
    assert split["srnet"].checksum() == groups["srnet"].checksum()
    assert list(split["masknet"].keys()) == ["conv.0.weight"]


def test_num_parameters_and_norm():
    params = _params()
    assert params.num_parameters() == 3
    assert params.norm() == pytest.approx((1 + 4 + 0.25) ** 0.5)


def test_leaves_are_fresh_leaf_tensors():
    params = _params()
    leaves = params.leaves()
    assert all(t.is_leaf and t.requires_grad for t in leaves.values())
    assert leaves["w"] is not params["w"]
