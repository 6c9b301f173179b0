"""简化 JPEG 压缩：亮度通道 8×8 分块 DCT + 量化，色度直通。

与任何外部 JPEG 编码器不保证比特兼容。DC 系数按原精度保留，
因此常数块是压缩的不动点；块效应来自 AC 系数的量化。
"""

from __future__ import annotations

import numpy as np
import torch
from scipy.fft import dctn, idctn

from ..errors import QualityRangeError, ShapeMismatchError
from ..grad import DTYPE

BLOCK = 8

# 标准亮度量化表
LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

# JFIF 全范围 RGB -> YCbCr，及其精确逆矩阵
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ],
    dtype=np.float64,
)
_YCC_TO_RGB = np.linalg.inv(_RGB_TO_YCC)


def quantization_table(quality: int) -> np.ndarray:
    """按 IJG 规则缩放亮度量化表"""
    if not 10 <= quality <= 100:
        raise QualityRangeError(f"压缩质量必须位于 [10, 100]，实际 {quality}")
    factor = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((LUMA_TABLE * factor + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """(3, H, W) -> (3, H, W)，色度以 0 为中心"""
    return np.einsum("ij,jhw->ihw", _RGB_TO_YCC, rgb)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jhw->ihw", _YCC_TO_RGB, ycc)


def _code_luma(luma: np.ndarray, table: np.ndarray) -> np.ndarray:
    height, width = luma.shape
    pad_h = (-height) % BLOCK
    pad_w = (-width) % BLOCK
    plane = np.pad(luma * 255.0 - 128.0, ((0, pad_h), (0, pad_w)), mode="edge")
    ph, pw = plane.shape
    blocks = plane.reshape(ph // BLOCK, BLOCK, pw // BLOCK, BLOCK).transpose(0, 2, 1, 3)

    coeffs = dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    quantized = np.round(coeffs / table) * table
    quantized[..., 0, 0] = coeffs[..., 0, 0]
    restored = idctn(quantized, type=2, norm="ortho", axes=(-2, -1))

    plane = restored.transpose(0, 2, 1, 3).reshape(ph, pw)[:height, :width]
    return (plane + 128.0) / 255.0


def compress(image: torch.Tensor, quality: int) -> torch.Tensor:
    """对 (3, H, W) 或 (N, 3, H, W) 图像做有损压缩，输出截断到 [0, 1]"""
    table = quantization_table(int(quality))
    batched = image.ndim == 4
    batch = image if batched else image[None]
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise ShapeMismatchError(f"compress: 需要 RGB 图像，实际形状 {tuple(image.shape)}")

    outputs = []
    for frame in batch.detach().cpu().numpy().astype(np.float64):
        ycc = rgb_to_ycbcr(frame)
        ycc[0] = _code_luma(ycc[0], table)
        outputs.append(np.clip(ycbcr_to_rgb(ycc), 0.0, 1.0))
    result = torch.as_tensor(np.stack(outputs), dtype=DTYPE)
    return result if batched else result[0]
