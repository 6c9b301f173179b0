"""两阶段退化流程：blur → resample → noise → compression（顺序可由阶段指定）。

流程是 (spec, image) 的纯函数：噪声由 spec.seed 与 noise_key 决定，
同一 spec 可分别作用于自然图像与人脸图像。
"""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import DegradationError, ShapeMismatchError
from ..grad import DTYPE
from ..models import DegradationSpec, NoiseKind, NoiseSpec, ResampleFilter, StageSpec
from .jpeg import compress
from .kernels import build_kernel

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _as_batch(image: torch.Tensor) -> torch.Tensor:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatchError(f"需要 (3, H, W) 图像，实际 {tuple(image.shape)}")
    return image.detach().to(DTYPE)[None]


def blur(batch: torch.Tensor, kernel: np.ndarray) -> torch.Tensor:
    """逐通道卷积，反射填充"""
    size = kernel.shape[0]
    height, width = batch.shape[-2:]
    if size > height or size > width:
        raise DegradationError(f"模糊核 {size}×{size} 大于图像 {height}×{width}")
    if size == 1:
        return batch * float(kernel[0, 0])
    pad = size // 2
    channels = batch.shape[1]
    weight = torch.as_tensor(kernel, dtype=DTYPE).expand(channels, 1, size, size).contiguous()
    padded = F.pad(batch, (pad, pad, pad, pad), mode="reflect")
    return F.conv2d(padded, weight, groups=channels)


def resize(batch: torch.Tensor, size: Tuple[int, int], filter: ResampleFilter) -> torch.Tensor:
    """缩放到指定尺寸；坐标映射只依赖输入/输出尺寸之比"""
    if tuple(batch.shape[-2:]) == tuple(size):
        return batch
    if filter is ResampleFilter.AREA:
        return F.adaptive_avg_pool2d(batch, size)
    if filter is ResampleFilter.NEAREST:
        return F.interpolate(batch, size=size, mode="nearest")
    return F.interpolate(batch, size=size, mode=filter.value, align_corners=False)


def add_noise(batch: torch.Tensor, noise: NoiseSpec, rng: np.random.Generator) -> torch.Tensor:
    n, c, h, w = batch.shape
    field_shape = (n, 1, h, w) if noise.gray else (n, c, h, w)
    gaussian = torch.as_tensor(rng.standard_normal(field_shape), dtype=DTYPE)
    if noise.kind is NoiseKind.GAUSSIAN:
        return batch + gaussian * (noise.strength / 255.0)
    if noise.kind is NoiseKind.POISSON:
        # 信号相关高斯：方差与强度成正比
        weights = torch.as_tensor(LUMA_WEIGHTS, dtype=DTYPE).view(1, 3, 1, 1)
        intensity = (batch * weights).sum(dim=1, keepdim=True) if noise.gray else batch
        sigma = torch.sqrt(torch.clamp(intensity, min=0.0) * (noise.strength / 255.0))
        return batch + gaussian * sigma
    return batch + batch * gaussian * noise.strength


def _final_resample_index(spec: DegradationSpec) -> int:
    indices = [i for i, stage in enumerate(spec.stages) if stage.resample is not None]
    if not indices:
        raise DegradationError("退化描述中没有任何重采样环节，无法得到 HR/s 的输出")
    return indices[-1]


def _run_stage(
    batch: torch.Tensor,
    stage: StageSpec,
    *,
    is_final: bool,
    target: Tuple[int, int],
    rng: np.random.Generator,
) -> torch.Tensor:
    for op in stage.order:
        if op == "blur" and stage.blur is not None:
            batch = blur(batch, build_kernel(stage.blur))
        elif op == "resample" and stage.resample is not None:
            if is_final:
                size = target
            else:
                h, w = batch.shape[-2:]
                size = (max(1, round(h * stage.resample.factor)), max(1, round(w * stage.resample.factor)))
            batch = resize(batch, size, stage.resample.filter)
        elif op == "noise" and stage.noise is not None:
            batch = torch.clamp(add_noise(batch, stage.noise, rng), 0.0, 1.0)
        elif op == "compression" and stage.compression is not None:
            batch = compress(batch, stage.compression.quality)
        elif op not in ("blur", "resample", "noise", "compression"):
            raise DegradationError(f"未知的退化环节：{op}")
    return batch


def apply(spec: DegradationSpec, hr: torch.Tensor, *, noise_key: int = 0) -> torch.Tensor:
    """对 HR 图像施加退化，返回尺寸为 HR/s 的 LR 图像

    Args:
        spec: 退化描述
        hr: (3, H, W) 图像，H、W 须能被 s 整除
        noise_key: 噪声子流编号；同一 spec 下不同图像可用不同编号得到独立噪声
    """
    batch = _as_batch(hr)
    height, width = batch.shape[-2:]
    s = spec.scale
    if height % s or width % s:
        raise DegradationError(f"HR 尺寸 {height}×{width} 不能被缩放倍数 {s} 整除")
    target = (height // s, width // s)
    final_index = _final_resample_index(spec)

    for index, stage in enumerate(spec.stages):
        rng = np.random.default_rng([spec.seed, index, noise_key])
        batch = _run_stage(batch, stage, is_final=index == final_index, target=target, rng=rng)

    if tuple(batch.shape[-2:]) != target:
        raise DegradationError(f"复合重采样未落在 {target}，实际 {tuple(batch.shape[-2:])}")
    return torch.clamp(batch[0], 0.0, 1.0)


def bicubic_downscale(hr: torch.Tensor, scale: int) -> torch.Tensor:
    """普通双三次 ÷s（不含其他退化）"""
    batch = _as_batch(hr)
    height, width = batch.shape[-2:]
    return resize(batch, (height // scale, width // scale), ResampleFilter.BICUBIC)[0]
