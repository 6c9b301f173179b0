"""判别器 D：步长卷积堆叠，输出 patch 级 logit 图（末层零初始化）。"""

from __future__ import annotations

from typing import Dict, List, Tuple

import torch

from ..config import DiscriminatorConfig
from ..grad import ParamSet
from ..grad import ops
from .layers import LEAKY_SLOPE, as_batch, check_params, conv, conv_params, conv_shapes, generator

STEM_KERNEL = 3
DOWN_KERNEL = 4
MAX_WIDTH_FACTOR = 8


def _layers(config: DiscriminatorConfig) -> List[Tuple[str, int, int, int]]:
    width = config.width
    layers = [("stem", 3, width, STEM_KERNEL)]
    cin = width
    for i in range(config.depth):
        cout = width * min(2 ** (i + 1), MAX_WIDTH_FACTOR)
        layers.append((f"down.{i}", cin, cout, DOWN_KERNEL))
        cin = cout
    layers.append(("head", cin, 1, STEM_KERNEL))
    return layers


def param_shapes(config: DiscriminatorConfig) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for name, cin, cout, k in _layers(config):
        shapes.update(conv_shapes(name, cin, cout, k))
    return shapes


def init_discriminator(config: DiscriminatorConfig, seed: int) -> ParamSet:
    gen = generator(seed)
    tensors: Dict[str, torch.Tensor] = {}
    for name, cin, cout, k in _layers(config):
        tensors.update(conv_params(gen, name, cin, cout, k, zero=name == "head"))
    return ParamSet(tensors)


def stride_product(config: DiscriminatorConfig) -> int:
    return 2 ** config.depth


def discriminator_forward(params: ParamSet, image: torch.Tensor, config: DiscriminatorConfig) -> torch.Tensor:
    """返回 (N, 1, H / 2^depth, W / 2^depth) 的 logit 图"""
    check_params(params, param_shapes(config), "discriminator")
    x = ops.leaky_relu(conv(as_batch(image, "discriminator"), params, "stem"), LEAKY_SLOPE)
    for i in range(config.depth):
        x = ops.leaky_relu(conv(x, params, f"down.{i}", stride=2, padding=1), LEAKY_SLOPE)
    return conv(x, params, "head")
