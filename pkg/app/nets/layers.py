"""函数式网络层：参数保存在 ParamSet 中，前向只读取参数。"""

from __future__ import annotations

import math
from typing import Dict, Tuple

import torch

from ..errors import ShapeMismatchError
from ..grad import DTYPE, ParamSet
from ..grad import ops

LEAKY_SLOPE = 0.2


def generator(seed: int) -> torch.Generator:
    return torch.Generator().manual_seed(int(seed))


def conv_params(
    gen: torch.Generator,
    name: str,
    in_channels: int,
    out_channels: int,
    kernel_size: int,
    *,
    gain: float = 1.0,
    zero: bool = False,
) -> Dict[str, torch.Tensor]:
    """Kaiming 正态初始化（按 leaky-relu 斜率），偏置为 0

    Args:
        gen: 随机数发生器，决定初始化数值
        name: 层名，参数名为 ``{name}.weight`` / ``{name}.bias``
        gain: 额外缩放（残差分支常用 0.1）
        zero: 为 True 时权重与偏置全部为 0
    """
    shape = (out_channels, in_channels, kernel_size, kernel_size)
    if zero:
        weight = torch.zeros(shape, dtype=DTYPE)
    else:
        fan_in = in_channels * kernel_size * kernel_size
        std = gain * math.sqrt(2.0 / ((1.0 + LEAKY_SLOPE ** 2) * fan_in))
        weight = torch.randn(shape, generator=gen, dtype=DTYPE) * std
    return {
        f"{name}.weight": weight.requires_grad_(True),
        f"{name}.bias": torch.zeros(out_channels, dtype=DTYPE).requires_grad_(True),
    }


def conv(x: torch.Tensor, params: ParamSet, name: str, *, stride: int = 1, padding: int | None = None) -> torch.Tensor:
    weight = params[f"{name}.weight"]
    if padding is None:
        padding = weight.shape[-1] // 2
    return ops.conv2d(x, weight, params[f"{name}.bias"], stride=stride, padding=padding)


def as_batch(image: torch.Tensor, label: str) -> torch.Tensor:
    """(C, H, W) 补成 (1, C, H, W)；四维输入原样返回"""
    if image.ndim == 3:
        return image[None]
    if image.ndim != 4:
        raise ShapeMismatchError(f"{label}: 需要 (C, H, W) 或 (N, C, H, W)，实际 {tuple(image.shape)}")
    return image


def conv_shapes(name: str, in_channels: int, out_channels: int, kernel_size: int) -> Dict[str, Tuple[int, ...]]:
    return {
        f"{name}.weight": (out_channels, in_channels, kernel_size, kernel_size),
        f"{name}.bias": (out_channels,),
    }


def check_params(params: ParamSet, shapes: Dict[str, Tuple[int, ...]], label: str) -> None:
    """参数名与形状须与配置推出的结构一致"""
    if list(params.keys()) != list(shapes.keys()):
        missing = [n for n in shapes if n not in params]
        extra = [n for n in params if n not in shapes]
        raise ShapeMismatchError(f"{label}: 参数与配置不符，缺少 {missing[:3]}，多余 {extra[:3]}")
    for name, shape in shapes.items():
        if tuple(params[name].shape) != shape:
            raise ShapeMismatchError(f"{label}: 参数 {name} 形状 {tuple(params[name].shape)}，配置要求 {shape}")
