from __future__ import annotations

import logging
from contextvars import Token
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch

from ..errors import NonFiniteError, ShapeMismatchError
from .ops import ACTIVE_TAPE
from .params import ParamSet

logger = logging.getLogger(__name__)

FIRST_ORDER = "first-order"
CREATE_GRAPH = "create-graph"


@dataclass(slots=True, frozen=True)
class OpRecord:
    """一次前向算子调用的记录"""
    op: str  # 算子标识
    shape: Tuple[int, ...]  # 输出形状


@dataclass(slots=True, frozen=True)
class GradientResult:
    """反向传播结果

    grads 与 wrt 同名同序；unreachable 列出从损失不可达（梯度按 0 返回）的参数名。
    """
    grads: ParamSet
    unreachable: Tuple[str, ...] = ()


@dataclass(slots=True)
class GradientTape:
    """梯度带：记录前向算子，并决定反向是否构建可再次求导的图

    用法::

        with GradientTape(create_graph=True) as tape:
            loss = ...
        result = tape.gradient(loss, params)
    """
    create_graph: bool = False
    records: List[OpRecord] = field(default_factory=list)
    _token: Optional[Token] = None

    @property
    def mode(self) -> str:
        return CREATE_GRAPH if self.create_graph else FIRST_ORDER

    def record(self, op: str, shape: Tuple[int, ...]) -> None:
        self.records.append(OpRecord(op, shape))

    def __enter__(self) -> "GradientTape":
        self._token = ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        if self._token is not None:
            ACTIVE_TAPE.reset(self._token)
            self._token = None

    def gradient(self, loss: torch.Tensor, wrt: ParamSet, *, retain_graph: Optional[bool] = None) -> GradientResult:
        return backward(loss, wrt, create_graph=self.create_graph, retain_graph=retain_graph)


def backward(
    loss: torch.Tensor,
    wrt: ParamSet,
    *,
    create_graph: bool = False,
    retain_graph: Optional[bool] = None,
) -> GradientResult:
    """计算 ∂loss/∂p（p ∈ wrt）

    Args:
        loss: 标量损失
        wrt: 求导对象
        create_graph: 为 True 时返回的梯度本身带计算图，可再次求导
        retain_graph: 是否保留前向图；默认与 create_graph 相同

    Returns:
        GradientResult，不可达参数返回零梯度并在 unreachable 中标记
    """
    if loss.numel() != 1:
        raise ShapeMismatchError(f"backward: 损失必须为标量，实际形状 {tuple(loss.shape)}")

    names = list(wrt.keys())
    diff_names = [n for n in names if wrt[n].requires_grad]
    computed: dict = {}
    if loss.requires_grad and diff_names:
        grads = torch.autograd.grad(
            loss,
            [wrt[n] for n in diff_names],
            create_graph=create_graph,
            retain_graph=create_graph if retain_graph is None else retain_graph,
            allow_unused=True,
        )
        computed = {n: g for n, g in zip(diff_names, grads) if g is not None}

    unreachable: List[str] = []
    result = {}
    for name in names:
        grad = computed.get(name)
        if grad is None:
            unreachable.append(name)
            grad = torch.zeros_like(wrt[name], requires_grad=False)
        elif not bool(torch.isfinite(grad).all()):
            raise NonFiniteError(f"参数 {name} 的梯度包含非有限值", op="backward", name=name)
        result[name] = grad

    if unreachable:
        logger.warning(f"{len(unreachable)} 个参数从损失不可达，梯度置零: {unreachable[:5]}")
    return GradientResult(grads=ParamSet(result), unreachable=tuple(unreachable))
