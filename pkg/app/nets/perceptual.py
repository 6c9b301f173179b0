"""冻结随机特征感知距离（代替预训练特征的 LPIPS 形式）。

三级卷积金字塔（第 1 级步长 1，其后步长 2），权重由固定种子生成且不参与训练。
每一级特征在每个空间位置按通道向量做单位化，距离为各级
“通道平方差之和”的空间均值再求和。
"""

from __future__ import annotations

from functools import lru_cache
from typing import List, Tuple

import torch

from ..config import PerceptualConfig
from ..errors import ShapeMismatchError
from ..grad import ParamSet
from ..grad import ops
from .layers import LEAKY_SLOPE, as_batch, conv, conv_params, generator

KERNEL = 3
NORM_EPS = 1e-10


@lru_cache(maxsize=4)
def _frozen_params(widths: Tuple[int, int, int], seed: int) -> ParamSet:
    gen = generator(seed)
    tensors = {}
    cin = 3
    for i, width in enumerate(widths):
        tensors.update(conv_params(gen, f"stage.{i}", cin, width, KERNEL))
        cin = width
    return ParamSet(tensors).detached()


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    energy = ops.reduce_sum(ops.square(feat), dim=(1,), keepdim=True)
    norm = ops.sqrt(ops.add(energy, torch.full_like(energy, NORM_EPS)))
    return ops.div(feat, norm)


def perceptual_features(image: torch.Tensor, config: PerceptualConfig = PerceptualConfig()) -> List[torch.Tensor]:
    """返回各级单位化特征；对 image 可求导"""
    params = _frozen_params(tuple(config.widths), config.seed)
    x = as_batch(image, "perceptual")
    if x.shape[1] != 3:
        raise ShapeMismatchError(f"perceptual: 需要 RGB 输入，实际 {tuple(x.shape)}")
    x = ops.sub(x, torch.full_like(x, 0.5))
    features = []
    for i in range(len(config.widths)):
        x = ops.leaky_relu(conv(x, params, f"stage.{i}", stride=1 if i == 0 else 2), LEAKY_SLOPE)
        features.append(_unit_normalize(x))
    return features


def perceptual_distance(a: torch.Tensor, b: torch.Tensor, config: PerceptualConfig = PerceptualConfig()) -> torch.Tensor:
    """对称的标量距离，相同输入为 0"""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"perceptual: 形状不一致 {tuple(a.shape)} vs {tuple(b.shape)}")
    total = None
    for fa, fb in zip(perceptual_features(a, config), perceptual_features(b, config)):
        per_location = ops.reduce_sum(ops.square(ops.sub(fa, fb)), dim=(1,))
        term = ops.reduce_mean(per_location)
        total = term if total is None else ops.add(total, term)
    return total
