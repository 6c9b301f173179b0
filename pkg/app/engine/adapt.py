"""推理期自适应：在图像自身的人脸上做 n 步加权内循环更新，再对整幅 LR 图像超分。"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from ..config import RunConfig
from ..errors import NoAdaptationSignalError, ShapeMismatchError
from ..grad import GradientTape, ParamSet
from ..models import FaceRect
from ..nets import masknet_forward, srnet_forward
from .losses import inner_loss
from .tasks import FacePatches, face_patches, split_face_pair

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class AdaptResult:
    """自适应结果"""
    image: torch.Tensor  # 超分输出 (3, H·s, W·s)，未截断
    params: ParamSet  # 自适应后的 θ_n
    inner_losses: List[float] = field(default_factory=list)  # 第 k 项为第 k 次更新前的内循环损失，末项为更新后


def superresolve(params: ParamSet, image_lr: torch.Tensor, config: RunConfig) -> torch.Tensor:
    """不建图的前向超分"""
    with torch.no_grad():
        return srnet_forward(params.detached(), image_lr, config.srnet)


def _mask(masknet: ParamSet, patches: FacePatches, config: RunConfig) -> torch.Tensor:
    if config.masknet.mode == "none" or not len(masknet):
        return torch.ones((patches.bfr.shape[0], 1, *patches.bfr.shape[2:]), dtype=patches.bfr.dtype)
    with torch.no_grad():
        return masknet_forward(masknet.detached(), patches.lr, patches.bfr, config.masknet)


def adapt_and_superresolve(
    theta: ParamSet,
    theta_m: ParamSet,
    image_lr: torch.Tensor,
    face_rects: Sequence[FaceRect],
    n: int,
    alpha: float,
    *,
    bfr_faces: Sequence[torch.Tensor],
    config: RunConfig,
    seed: int = 0,
) -> AdaptResult:
    """自适应后超分

    Args:
        theta: 元训练得到的 SR 参数 θ
        theta_m: MaskNet 参数 θ_m
        image_lr: (3, h, w) 待超分图像
        face_rects: LR 坐标下的人脸矩形
        n: 内循环步数（≥ 0），各步学习率恒为 alpha
        alpha: 内循环学习率
        bfr_faces: 每张人脸对应的复原结果（HR 尺寸）
        config: 运行配置（网络结构与块采样方式）
        seed: 人脸块采样种子

    Returns:
        AdaptResult；n = 0 时输出与基础模型逐位相同
    """
    if n < 0:
        raise ValueError(f"自适应步数必须 ≥ 0，实际 {n}")
    base = theta.detached()
    if n == 0:
        return AdaptResult(image=superresolve(base, image_lr, config), params=base)
    if not face_rects:
        raise NoAdaptationSignalError("图像中没有人脸，无法自适应（n > 0）")
    if len(bfr_faces) != len(face_rects):
        raise ShapeMismatchError(f"人脸数 {len(face_rects)} 与复原结果数 {len(bfr_faces)} 不一致")

    faces_lr, _ = split_face_pair(image_lr, face_rects)
    patches = face_patches(
        faces_lr,
        bfr_faces,
        scale=config.scale,
        mode=config.adapt.patch_mode,
        patch=config.train.inner_patch,
        count=config.adapt.patches_per_face,
        budget=config.adapt.patch_budget,
        rng=np.random.default_rng(seed),
    )
    m = _mask(theta_m, patches, config)

    params = base.leaves()
    losses: List[float] = []
    for step in range(n):
        with GradientTape() as tape:
            loss = inner_loss(params, patches.lr, patches.bfr, m, config.srnet)
        losses.append(float(loss.detach()))
        grads = tape.gradient(loss, params).grads
        params = params.shifted(grads, alpha).leaves()
        logger.debug(f"自适应第 {step + 1} 步：{len(tape.records)} 个算子，L_in {losses[-1]:.6f}")
    with torch.no_grad():
        losses.append(float(inner_loss(params.detached(), patches.lr, patches.bfr, m, config.srnet)))
    logger.info(f"自适应 {n} 步：L_in {losses[0]:.6f} -> {losses[-1]:.6f}")
    return AdaptResult(image=superresolve(params, image_lr, config), params=params.detached(), inner_losses=losses)
