"""伪人脸复原器：由 (退化人脸, 真值人脸) 生成带有已知局部误差的 I_face_BFR。

复原结果在误差支撑之外与真值逐像素相同；支撑内部按
``bfr = gt + strength · (corrupted − gt)`` 混合，corrupted 由误差类型决定。
误差支撑以二值图返回，供评估 MaskNet 使用。
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import torch
from scipy import ndimage

from .errors import RestorerError, ShapeMismatchError
from .grad import DTYPE
from .imageio import save_png
from .models import CorruptionKind, RestorerSpec

logger = logging.getLogger(__name__)

BLUR_SIGMA = 2.5  # local-blur 的高斯标准差（HR 像素）
WARP_AMPLITUDE = 3.0  # local-warp 的最大位移（HR 像素）


def _check_pair(face_lr: torch.Tensor, face_gt: torch.Tensor) -> None:
    if face_gt.ndim != 3 or face_lr.ndim != 3 or face_gt.shape[0] != 3 or face_lr.shape[0] != 3:
        raise ShapeMismatchError(f"复原器需要 (3, H, W) 输入，实际 {tuple(face_lr.shape)} / {tuple(face_gt.shape)}")
    h, w = face_lr.shape[1:]
    big_h, big_w = face_gt.shape[1:]
    if h == 0 or big_h % h or big_w % w or big_h // h != big_w // w:
        raise ShapeMismatchError(f"face_gt {big_h}×{big_w} 不是 face_lr {h}×{w} 的整数倍")


def _regions(spec: RestorerSpec, rng: np.random.Generator, height: int, width: int) -> List[Tuple[int, int, int, int]]:
    low, high = spec.region_size
    if low < 1 or low > high:
        raise RestorerError(f"区域尺寸区间非法：{spec.region_size}")
    rects = []
    for _ in range(spec.regions):
        side = int(rng.integers(low, high + 1))
        if side > height or side > width:
            raise RestorerError(f"误差区域边长 {side} 超出人脸图像 {height}×{width}")
        top = int(rng.integers(0, height - side + 1))
        left = int(rng.integers(0, width - side + 1))
        rects.append((top, left, side, side))
    return rects


def _local_blur(gt: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(gt, sigma=(0.0, BLUR_SIGMA, BLUR_SIGMA), mode="reflect")


def _texture(gt: np.ndarray, face_lr: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # 以退化人脸平均色为底色的条纹纹理，模拟“编造”的细节
    _, height, width = gt.shape
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    angle = rng.uniform(0.0, np.pi)
    period = rng.uniform(3.0, 6.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = np.sin(2.0 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period + phase)
    base = face_lr.mean(axis=(1, 2))[:, None, None]
    return np.clip(base + 0.35 * wave[None], 0.0, 1.0)


def _warp(gt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    _, height, width = gt.shape
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    fy, fx = rng.uniform(0.1, 0.3, size=2)
    dy = WARP_AMPLITUDE * np.sin(fx * xx)
    dx = WARP_AMPLITUDE * np.sin(fy * yy)
    coords = np.stack([yy + dy, xx + dx])
    return np.stack([ndimage.map_coordinates(channel, coords, order=1, mode="reflect") for channel in gt])


def restore(spec: RestorerSpec, face_lr: torch.Tensor, face_gt: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """生成伪复原人脸

    Args:
        spec: 复原器参数
        face_lr: (3, h, w) 退化人脸
        face_gt: (3, h·s, w·s) 真值人脸

    Returns:
        (face_bfr (3, H, W), support (H, W) bool)
    """
    _check_pair(face_lr, face_gt)
    gt = face_gt.detach().cpu().numpy().astype(np.float64)
    _, height, width = gt.shape
    support = np.zeros((height, width), dtype=bool)
    if spec.strength == 0 or spec.regions == 0:
        return face_gt.detach().to(DTYPE).clone(), torch.as_tensor(support)

    rng = np.random.default_rng(spec.seed)
    for top, left, h, w in _regions(spec, rng, height, width):
        support[top:top + h, left:left + w] = True

    if spec.kind is CorruptionKind.LOCAL_BLUR:
        corrupted = _local_blur(gt)
    elif spec.kind is CorruptionKind.TEXTURE_SUBSTITUTION:
        corrupted = _texture(gt, face_lr.detach().cpu().numpy(), rng)
    else:
        corrupted = _warp(gt, rng)

    bfr = gt.copy()
    inside = support[None].repeat(3, axis=0)
    bfr[inside] = gt[inside] + spec.strength * (corrupted[inside] - gt[inside])
    return torch.as_tensor(bfr, dtype=DTYPE), torch.as_tensor(support)


def error_map(face_gt: torch.Tensor, face_bfr: torch.Tensor) -> torch.Tensor:
    """EM = |I_face − I_face_BFR| 通道均值 / 全图最大值；两图相同时为全零

    Returns:
        (H, W)，取值 [0, 1]
    """
    if face_gt.shape != face_bfr.shape:
        raise ShapeMismatchError(f"error_map: 形状不一致 {tuple(face_gt.shape)} vs {tuple(face_bfr.shape)}")
    diff = torch.abs(face_gt.detach().to(DTYPE) - face_bfr.detach().to(DTYPE))
    if diff.ndim == 3:
        diff = diff.mean(dim=0)
    peak = diff.max()
    if float(peak) == 0.0:
        return torch.zeros_like(diff)
    return diff / peak


# ------------------------------ 支撑编码与夹具 ------------------------------

def encode_support(support: torch.Tensor) -> Dict[str, Any]:
    """行优先游程编码，runs 从 False 段开始交替"""
    flat = support.detach().cpu().numpy().astype(bool).ravel()
    runs: List[int] = []
    current, length = False, 0
    for value in flat:
        if value == current:
            length += 1
        else:
            runs.append(length)
            current, length = bool(value), 1
    runs.append(length)
    return {"shape": list(support.shape), "runs": runs}


def decode_support(payload: Dict[str, Any]) -> torch.Tensor:
    shape = tuple(payload["shape"])
    values: List[bool] = []
    current = False
    for length in payload["runs"]:
        values.extend([current] * int(length))
        current = not current
    if len(values) != int(np.prod(shape)):
        raise ShapeMismatchError(f"游程长度之和 {len(values)} 与形状 {shape} 不符")
    return torch.as_tensor(np.array(values, dtype=bool).reshape(shape))


def write_fixture(stem: Path, spec: RestorerSpec, face_bfr: torch.Tensor, support: torch.Tensor) -> Tuple[Path, Path]:
    """写出 PNG + JSON 旁注（参数回显与支撑游程编码）"""
    stem = Path(stem)
    png_path = save_png(stem.with_suffix(".png"), face_bfr)
    sidecar = {"restorer": spec.to_dict(), "support": encode_support(support)}
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps(sidecar, ensure_ascii=False, indent=2, sort_keys=True), encoding="utf-8")
    logger.debug(f"复原夹具已写入 {png_path}")
    return png_path, json_path
