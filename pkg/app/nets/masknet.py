"""MaskNet f_m：由 (退化人脸, 复原人脸) 预测逐像素损失权重 m。

- degraded-reference：输入为 face_lr 最近邻放大后与 face_bfr 的通道拼接（6 通道）
- no-reference：只输入 face_bfr（3 通道），完全不读取 face_lr
- none：不含参数，m ≡ 1

输出头 m = softplus(raw + c0) / softplus(c0)，c0 = ln(e − 1)。
softplus(c0) 数学上等于 1，除以同形状张量上算出的 softplus(c0) 使 raw ≡ 0 时 m 精确为 1.0。
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Tuple

import torch

from ..config import MaskNetConfig
from ..errors import MaskInputError, ShapeMismatchError
from ..grad import DTYPE, ParamSet
from ..grad import ops
from .layers import LEAKY_SLOPE, as_batch, check_params, conv, conv_params, conv_shapes, generator

C0 = math.log(math.e - 1.0)

DEGRADED_REFERENCE = "degraded-reference"
NO_REFERENCE = "no-reference"
NO_MASK = "none"


def _in_channels(mode: str) -> int:
    return 6 if mode == DEGRADED_REFERENCE else 3


def _layers(config: MaskNetConfig) -> List[Tuple[str, int, int]]:
    if config.mode == NO_MASK:
        return []
    width = config.width
    layers = [("conv.0", _in_channels(config.mode), width)]
    for i in range(1, config.layers - 1):
        layers.append((f"conv.{i}", width, width))
    layers.append((f"conv.{config.layers - 1}", width, 1))
    return layers


def param_shapes(config: MaskNetConfig) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for name, cin, cout in _layers(config):
        shapes.update(conv_shapes(name, cin, cout, config.kernel_size))
    return shapes


def init_masknet(config: MaskNetConfig, seed: int) -> ParamSet:
    gen = generator(seed)
    layers = _layers(config)
    tensors: Dict[str, torch.Tensor] = {}
    for index, (name, cin, cout) in enumerate(layers):
        is_head = index == len(layers) - 1
        tensors.update(
            conv_params(gen, name, cin, cout, config.kernel_size, zero=is_head and config.zero_head)
        )
    return ParamSet(tensors)


def mask_head(raw: torch.Tensor) -> torch.Tensor:
    offset = torch.full_like(raw, C0, dtype=DTYPE)
    return ops.div(ops.softplus(ops.add(raw, offset)), ops.softplus(offset))


def masknet_forward(
    params: ParamSet,
    face_lr: Optional[torch.Tensor],
    face_bfr: torch.Tensor,
    config: MaskNetConfig,
) -> torch.Tensor:
    """m = f_m(I_face_LR, I_face_BFR; θ_m)

    Args:
        params: MaskNet 参数 θ_m
        face_lr: (3, h, w) 或 (N, 3, h, w) 退化人脸；no-reference 模式下忽略
        face_bfr: (3, H, W) 或 (N, 3, H, W) 复原人脸，H = h·s
        config: 结构与模式

    Returns:
        (…, 1, H, W) 非负权重图，阶数与 face_bfr 相同
    """
    squeeze = face_bfr.ndim == 3
    bfr = as_batch(face_bfr, "masknet")
    if config.mode == NO_MASK:
        ones = torch.ones((bfr.shape[0], 1, *bfr.shape[2:]), dtype=DTYPE)
        return ones[0] if squeeze else ones

    check_params(params, param_shapes(config), "masknet")
    if config.mode == DEGRADED_REFERENCE:
        if face_lr is None:
            raise MaskInputError("degraded-reference 模式需要退化人脸 face_lr")
        lr = as_batch(face_lr, "masknet")
        factor = bfr.shape[-1] // lr.shape[-1] if lr.shape[-1] else 0
        if factor < 1 or lr.shape[-2] * factor != bfr.shape[-2] or lr.shape[-1] * factor != bfr.shape[-1]:
            raise ShapeMismatchError(
                f"masknet: face_lr {tuple(lr.shape)} 不能整数倍放大到 face_bfr {tuple(bfr.shape)}"
            )
        x = ops.concat_channels([ops.upsample_nearest(lr, factor), bfr])
    else:
        x = bfr

    last = config.layers - 1
    for i in range(last):
        x = ops.leaky_relu(conv(x, params, f"conv.{i}"), LEAKY_SLOPE)
    m = mask_head(conv(x, params, f"conv.{last}"))
    return m[0] if squeeze else m
