"""PNG 读写（8 位 RGB / 灰度）。只在边界处量化，内部保持实数。"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import ShapeMismatchError
from .grad import DTYPE


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """(3, H, W) -> (H, W, 3)，(1, H, W) 或 (H, W) -> (H, W)"""
    array = image.detach().cpu().numpy().astype(np.float64)
    if array.ndim == 3 and array.shape[0] == 1:
        array = array[0]
    if array.ndim == 3:
        if array.shape[0] != 3:
            raise ShapeMismatchError(f"需要 RGB 或单通道图像，实际 {array.shape}")
        array = array.transpose(1, 2, 0)
    elif array.ndim != 2:
        raise ShapeMismatchError(f"无法保存形状为 {array.shape} 的图像")
    return np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(array: np.ndarray) -> torch.Tensor:
    values = np.asarray(array, dtype=np.float64) / 255.0
    if values.ndim == 2:
        values = values[None]
    else:
        values = values.transpose(2, 0, 1)
    return torch.as_tensor(np.ascontiguousarray(values), dtype=DTYPE)


def png_bytes(image: torch.Tensor) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buffer, format="PNG")
    return buffer.getvalue()


def save_png(path: Path, image: torch.Tensor) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png_bytes(image))
    return path


def load_png(path: Path) -> torch.Tensor:
    """读取为 (3, H, W) float64，[0, 1]；灰度图扩展为三通道"""
    with Image.open(Path(path)) as handle:
        array = np.asarray(handle.convert("RGB"))
    return from_uint8(array)


def quantize(image: torch.Tensor) -> torch.Tensor:
    """等价于写出再读回"""
    return from_uint8(to_uint8(image))
