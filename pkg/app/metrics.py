"""图像质量指标：PSNR、L1、拉普拉斯方差清晰度、Pearson 相关。"""

from __future__ import annotations

import math

import numpy as np
import torch
from scipy import ndimage

from .errors import ShapeMismatchError

PSNR_CAP = 99.0  # 两图完全相同时的返回值（dB）
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])  # ITU-R BT.601


def _pair(a: torch.Tensor, b: torch.Tensor, label: str) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{label}: 形状不一致 {tuple(a.shape)} vs {tuple(b.shape)}")
    return (
        a.detach().cpu().numpy().astype(np.float64),
        b.detach().cpu().numpy().astype(np.float64),
    )


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """10·log10(1 / MSE)，峰值为 1；MSE 为 0 时返回 99 dB"""
    x, y = _pair(a, b, "psnr")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def l1_distance(a: torch.Tensor, b: torch.Tensor) -> float:
    x, y = _pair(a, b, "l1")
    return float(np.mean(np.abs(x - y)))


def luma(image: torch.Tensor) -> np.ndarray:
    array = image.detach().cpu().numpy().astype(np.float64)
    if array.ndim == 2:
        return array
    if array.ndim != 3 or array.shape[0] not in (1, 3):
        raise ShapeMismatchError(f"luma: 需要 (3, H, W) 或 (H, W)，实际 {array.shape}")
    if array.shape[0] == 1:
        return array[0]
    return np.tensordot(LUMA_WEIGHTS, array, axes=1)


def sharpness_score(image: torch.Tensor) -> float:
    """亮度通道 3×3 拉普拉斯响应的方差；越大越清晰"""
    response = ndimage.laplace(luma(image), mode="reflect")
    return float(np.var(response))


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson 相关系数；任一侧方差为 0 时返回 0"""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeMismatchError(f"pearson: 长度不一致 {x.shape} vs {y.shape}")
    x = x - x.mean()
    y = y - y.mean()
    denom = math.sqrt(float(np.dot(x, x)) * float(np.dot(y, y)))
    if denom == 0.0:
        return 0.0
    return float(np.dot(x, y)) / denom
