"""模糊核生成。所有核均非负且归一化为和 1。"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegradationError
from ..models import BlurKind, BlurSpec


def _check_size(size: int) -> None:
    if size < 1 or size % 2 == 0:
        raise DegradationError(f"模糊核尺寸必须为正奇数，实际 {size}")


def _normalize(kernel: np.ndarray) -> np.ndarray:
    kernel = np.clip(kernel, 0.0, None)
    total = kernel.sum()
    if total <= 0:
        raise DegradationError("模糊核权重和为 0")
    return kernel / total


def delta_kernel(size: int = 1) -> np.ndarray:
    _check_size(size)
    kernel = np.zeros((size, size), dtype=np.float64)
    kernel[size // 2, size // 2] = 1.0
    return kernel


def gaussian_kernel(size: int, sigma_x: float, sigma_y: float, angle: float = 0.0) -> np.ndarray:
    """(各向异性) 高斯核

    Args:
        size: 奇数核尺寸
        sigma_x, sigma_y: 两个主轴方向的标准差（像素）
        angle: 主轴旋转角（弧度）
    """
    _check_size(size)
    if sigma_x <= 0 or sigma_y <= 0:
        raise DegradationError(f"高斯核 sigma 必须为正，实际 ({sigma_x}, {sigma_y})")
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    cov = rot @ np.diag([sigma_x ** 2, sigma_y ** 2]) @ rot.T
    inv_cov = np.linalg.inv(cov)
    half = size // 2
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    grid = np.stack([xs, ys], axis=-1)
    expo = np.einsum("...i,ij,...j->...", grid, inv_cov, grid)
    return _normalize(np.exp(-0.5 * expo))


def motion_kernel(size: int, length: float, angle: float) -> np.ndarray:
    """线性运动模糊核：以中心为中点、长度 length、方向 angle 的线段，双线性光栅化"""
    _check_size(size)
    if length <= 0:
        raise DegradationError(f"运动模糊长度必须为正，实际 {length}")
    half = size // 2
    length = min(length, float(size - 1)) if size > 1 else 0.0
    kernel = np.zeros((size, size), dtype=np.float64)
    samples = max(4 * size, 2)
    for t in np.linspace(-0.5, 0.5, samples):
        x = half + t * length * math.cos(angle)
        y = half + t * length * math.sin(angle)
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        for dy, wy in ((0, 1.0 - fy), (1, fy)):
            for dx, wx in ((0, 1.0 - fx), (1, fx)):
                yy, xx = y0 + dy, x0 + dx
                if 0 <= yy < size and 0 <= xx < size:
                    kernel[yy, xx] += wy * wx
    return _normalize(kernel)


def build_kernel(blur: BlurSpec) -> np.ndarray:
    if blur.kind is BlurKind.MOTION_LINEAR:
        return motion_kernel(blur.size, blur.length, blur.angle)
    if blur.kind is BlurKind.GAUSSIAN_ISO:
        return gaussian_kernel(blur.size, blur.sigma_x, blur.sigma_x, 0.0)
    return gaussian_kernel(blur.size, blur.sigma_x, blur.sigma_y, blur.angle)
