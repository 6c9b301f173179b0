"""超分网络 f：缩小版残差 CNN。

结构：head 卷积 → B 个残差块（conv-lrelu-conv + 跳连）→ body 卷积 + 长跳连 →
每个上采样阶段（最近邻 ×2 或 ×s）后接卷积与 lrelu → tail 卷积，
最后加上输入的最近邻放大（全局残差）。
"""

from __future__ import annotations

import math
from typing import Dict, List, Tuple

import torch

from ..config import SRNetConfig
from ..grad import ParamSet
from ..grad import ops
from .layers import LEAKY_SLOPE, as_batch, check_params, conv, conv_params, conv_shapes, generator

KERNEL = 3
RESIDUAL_GAIN = 0.1


def upsample_factors(scale: int) -> List[int]:
    """2 的幂分解为若干 ×2 阶段，否则一次 ×s"""
    if scale == 1:
        return []
    if scale & (scale - 1) == 0:
        return [2] * int(math.log2(scale))
    return [scale]


def _layers(config: SRNetConfig) -> List[Tuple[str, int, int, float]]:
    c = config.width
    layers = [("head", 3, c, 1.0)]
    for i in range(config.blocks):
        layers.append((f"body.{i}.conv1", c, c, RESIDUAL_GAIN))
        layers.append((f"body.{i}.conv2", c, c, RESIDUAL_GAIN))
    layers.append(("body_tail", c, c, RESIDUAL_GAIN))
    for j, _ in enumerate(upsample_factors(config.scale)):
        layers.append((f"up.{j}", c, c, 1.0))
    layers.append(("tail", c, 3, RESIDUAL_GAIN))
    return layers


def param_shapes(config: SRNetConfig) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for name, cin, cout, _ in _layers(config):
        shapes.update(conv_shapes(name, cin, cout, KERNEL))
    return shapes


def init_srnet(config: SRNetConfig, seed: int) -> ParamSet:
    """按 (config, seed) 确定性初始化"""
    gen = generator(seed)
    tensors: Dict[str, torch.Tensor] = {}
    for name, cin, cout, gain in _layers(config):
        tensors.update(conv_params(gen, name, cin, cout, KERNEL, gain=gain))
    return ParamSet(tensors)


def num_parameters(config: SRNetConfig) -> int:
    return sum(math.prod(shape) for shape in param_shapes(config).values())


def srnet_forward(params: ParamSet, lr_image: torch.Tensor, config: SRNetConfig) -> torch.Tensor:
    """I_SR = f(I_LR; θ)

    Args:
        params: SR 网络参数 θ（可以是带计算图的 θ_n）
        lr_image: (3, h, w) 或 (N, 3, h, w)
        config: 网络结构配置

    Returns:
        与输入同阶的 (…, 3, h·s, w·s) 输出；训练期间不截断
    """
    check_params(params, param_shapes(config), "srnet")
    squeeze = lr_image.ndim == 3
    x = as_batch(lr_image, "srnet")

    feat = conv(x, params, "head")
    body = feat
    for i in range(config.blocks):
        branch = ops.leaky_relu(conv(body, params, f"body.{i}.conv1"), LEAKY_SLOPE)
        body = ops.add(body, conv(branch, params, f"body.{i}.conv2"))
    feat = ops.add(feat, conv(body, params, "body_tail"))

    for j, factor in enumerate(upsample_factors(config.scale)):
        feat = ops.leaky_relu(conv(ops.upsample_nearest(feat, factor), params, f"up.{j}"), LEAKY_SLOPE)

    out = ops.add(conv(feat, params, "tail"), ops.upsample_nearest(x, config.scale))
    return out[0] if squeeze else out


def export_image(sr: torch.Tensor) -> torch.Tensor:
    """导出时才截断到 [0, 1]"""
    return torch.clamp(sr.detach(), 0.0, 1.0)
