from __future__ import annotations

import hashlib
from typing import Callable, Dict, Iterable, Iterator, Mapping, Tuple, Union

import torch

from ..errors import ShapeMismatchError
from . import ops

GROUP_SEPARATOR = "/"


class ParamSet(Mapping[str, torch.Tensor]):
    """一个网络的可训练参数集合（有序、按名称索引）

    ParamSet 本身不可变：``shifted`` 等操作均返回新的集合，
    原集合中的张量不会被原地修改，从而支持 θ − αg 的函数式求值。
    """

    __slots__ = ("_tensors",)

    def __init__(self, tensors: Union[Mapping[str, torch.Tensor], Iterable[Tuple[str, torch.Tensor]]] = ()) -> None:
        self._tensors: Dict[str, torch.Tensor] = dict(tensors)

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{n}{tuple(t.shape)}" for n, t in self._tensors.items())
        return f"ParamSet({shapes})"

    def _check_names(self, other: Mapping[str, torch.Tensor]) -> None:
        if list(other.keys()) != list(self._tensors.keys()):
            raise ShapeMismatchError("参数名称/顺序不一致")
        for name, tensor in self._tensors.items():
            if other[name].shape != tensor.shape:
                raise ShapeMismatchError(
                    f"参数 {name} 形状不一致 {tuple(tensor.shape)} vs {tuple(other[name].shape)}"
                )

    def shifted(self, grads: Mapping[str, torch.Tensor], alpha: float) -> "ParamSet":
        """返回 θ − α·g；若 g 带计算图，结果同样保留到 θ 的图边"""
        self._check_names(grads)
        return ParamSet(
            (name, ops.sub(param, ops.scale(grads[name], alpha)))
            for name, param in self._tensors.items()
        )

    def map(self, fn: Callable[[torch.Tensor], torch.Tensor]) -> "ParamSet":
        return ParamSet((name, fn(t)) for name, t in self._tensors.items())

    def leaves(self) -> "ParamSet":
        """断开计算图，得到需要梯度的新叶子张量"""
        return self.map(lambda t: t.detach().clone().requires_grad_(True))

    def detached(self) -> "ParamSet":
        return self.map(lambda t: t.detach())

    def zeros_like(self) -> "ParamSet":
        return self.map(lambda t: torch.zeros_like(t, requires_grad=False))

    def num_parameters(self) -> int:
        return sum(t.numel() for t in self._tensors.values())

    def norm(self) -> float:
        with torch.no_grad():
            total = sum(float(torch.sum(t.detach() * t.detach())) for t in self._tensors.values())
        return total ** 0.5

    def checksum(self) -> str:
        """参数名称与数值的 sha256，用于校验参数未被修改"""
        digest = hashlib.sha256()
        for name, tensor in self._tensors.items():
            digest.update(name.encode("utf-8"))
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()

    @classmethod
    def combine(cls, groups: Mapping[str, "ParamSet"]) -> "ParamSet":
        """将多个参数集合并为一个，名称加上 ``组名/`` 前缀"""
        merged: Dict[str, torch.Tensor] = {}
        for group, params in groups.items():
            for name, tensor in params.items():
                merged[f"{group}{GROUP_SEPARATOR}{name}"] = tensor
        return cls(merged)

    def split(self) -> Dict[str, "ParamSet"]:
        """combine 的逆操作"""
        groups: Dict[str, Dict[str, torch.Tensor]] = {}
        for full_name, tensor in self._tensors.items():
            group, _, name = full_name.partition(GROUP_SEPARATOR)
            groups.setdefault(group, {})[name] = tensor
        return {group: ParamSet(tensors) for group, tensors in groups.items()}
