from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Tuple

import torch

from ..errors import NonFiniteError, ShapeMismatchError
from .params import ParamSet


@dataclass(slots=True)
class AdamState:
    """Adam 优化器状态（一阶/二阶矩估计与时间步）"""
    step: int
    exp_avg: ParamSet
    exp_avg_sq: ParamSet

    @classmethod
    def zeros(cls, params: ParamSet) -> "AdamState":
        return cls(step=0, exp_avg=params.zeros_like(), exp_avg_sq=params.zeros_like())


def adam_step(
    params: ParamSet,
    grads: Mapping[str, torch.Tensor],
    state: AdamState,
    *,
    lr: float,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[ParamSet, AdamState]:
    """带偏差修正的 Adam 更新（函数式，不修改输入）

    Returns:
        (更新后的参数叶子, 新状态)；状态时间步加一
    """
    if lr <= 0:
        raise ValueError(f"学习率必须为正数，实际 {lr}")
    if list(state.exp_avg.keys()) != list(params.keys()):
        raise ShapeMismatchError("Adam 状态与参数名称不一致")

    step = state.step + 1
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    new_params, new_m, new_v = {}, {}, {}
    with torch.no_grad():
        for name, param in params.items():
            grad = grads[name].detach()
            if grad.shape != param.shape:
                raise ShapeMismatchError(f"参数 {name} 与梯度形状不一致")
            m = beta1 * state.exp_avg[name] + (1.0 - beta1) * grad
            v = beta2 * state.exp_avg_sq[name] + (1.0 - beta2) * grad * grad
            update = lr * (m / bias1) / (torch.sqrt(v / bias2) + eps)
            value = param.detach() - update
            if not bool(torch.isfinite(value).all()):
                raise NonFiniteError(f"Adam 更新后参数 {name} 非有限", op="adam_step", name=name)
            new_params[name] = value.clone().requires_grad_(True)
            new_m[name] = m
            new_v[name] = v

    return ParamSet(new_params), AdamState(step=step, exp_avg=ParamSet(new_m), exp_avg_sq=ParamSet(new_v))
