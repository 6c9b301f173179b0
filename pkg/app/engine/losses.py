"""内循环与外循环损失。

- 内循环：L_in = mean(|m · (f(I_face_LR; θ) − target)|)，m 按通道广播
- 外循环：L = λ1·L1 + λ2·感知距离 + λ3·L_adv + λ4·L_reg
- 判别器：L_D = mean(softplus(−D(I))) + mean(softplus(D(I_SR)))（logistic 形式）
"""

from __future__ import annotations

from typing import Dict, Mapping, Optional, Sequence, Tuple

import torch

from ..config import RunConfig, SRNetConfig
from ..errors import NonFiniteError, ShapeMismatchError
from ..grad import DTYPE, ParamSet
from ..grad import ops
from ..nets import discriminator_forward, perceptual_distance, srnet_forward

COMPONENTS = ("l1", "perceptual", "adv", "reg")


def _batched(x: torch.Tensor) -> torch.Tensor:
    return x[None] if x.ndim == 3 else x


def masked_l1(pred: torch.Tensor, target: torch.Tensor, m: Optional[torch.Tensor] = None) -> torch.Tensor:
    """均值归约的加权 L1；m 为 None 时按全 1 处理"""
    pred, target = _batched(pred), _batched(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"masked_l1: 预测 {tuple(pred.shape)} 与目标 {tuple(target.shape)} 不一致")
    if m is None:
        m = torch.ones((pred.shape[0], 1, *pred.shape[2:]), dtype=DTYPE)
    m = _batched(m)
    if m.shape[1] != 1 or m.shape[0] != pred.shape[0] or m.shape[2:] != pred.shape[2:]:
        raise ShapeMismatchError(f"masked_l1: 权重图 {tuple(m.shape)} 与目标 {tuple(target.shape)} 不匹配")
    return ops.reduce_mean(ops.absolute(ops.mul(m, ops.sub(pred, target))))


def inner_loss(
    theta: ParamSet,
    face_lr: torch.Tensor,
    face_bfr: torch.Tensor,
    m: Optional[torch.Tensor],
    config: SRNetConfig,
) -> torch.Tensor:
    """L_in(θ)：人脸块上的加权 L1"""
    return masked_l1(srnet_forward(theta, face_lr, config), face_bfr, m)


def adversarial_loss(logits: torch.Tensor) -> torch.Tensor:
    """−E[log σ(D(I_SR))] = mean(softplus(−logit))"""
    return ops.reduce_mean(ops.softplus(ops.scale(logits, -1.0)))


def mask_regularizer(m: torch.Tensor) -> torch.Tensor:
    """‖m − 1‖₂ 的均值归约形式（RMS），m ≡ 1 时梯度为 0"""
    return ops.rms(ops.sub(m, torch.ones_like(m)))


def weighted_objective(components: Mapping[str, torch.Tensor], weights: Sequence[float]) -> torch.Tensor:
    """按 COMPONENTS 顺序求 Σ λ_k · component_k"""
    total = None
    for key, weight in zip(COMPONENTS, weights):
        term = ops.scale(torch.as_tensor(components[key], dtype=DTYPE), weight)
        total = term if total is None else ops.add(total, term)
    return total


def outer_loss(
    theta_n: ParamSet,
    image_lr: torch.Tensor,
    image: torch.Tensor,
    disc_params: ParamSet,
    m: torch.Tensor,
    config: RunConfig,
) -> Tuple[torch.Tensor, Dict[str, torch.Tensor], torch.Tensor]:
    """外循环损失

    Returns:
        (加权总损失 L, 各分量, 超分输出 I_SR)
    """
    sr = srnet_forward(theta_n, image_lr, config.srnet)
    sr_b, image_b = _batched(sr), _batched(image)
    if sr_b.shape != image_b.shape:
        raise ShapeMismatchError(f"outer_loss: I_SR {tuple(sr_b.shape)} 与 I {tuple(image_b.shape)} 尺寸不一致")
    components = {
        "l1": masked_l1(sr_b, image_b),
        "perceptual": perceptual_distance(sr_b, image_b, config.perceptual),
        "adv": adversarial_loss(discriminator_forward(disc_params, sr_b, config.discriminator)),
        "reg": mask_regularizer(m),
    }
    for key, value in components.items():
        if not bool(torch.isfinite(value).all()):
            raise NonFiniteError(f"外循环损失分量 {key} 非有限", op=key)
    return weighted_objective(components, config.train.weights), components, sr


def discriminator_loss(disc_params: ParamSet, image: torch.Tensor, sr: torch.Tensor, config: RunConfig) -> torch.Tensor:
    """L_D；I_SR 先与 SR 网络的计算图断开"""
    real, fake = _batched(image), _batched(sr).detach()
    if real.shape != fake.shape:
        raise ShapeMismatchError(f"discriminator_loss: I {tuple(real.shape)} 与 I_SR {tuple(fake.shape)} 不一致")
    return logistic_discriminator_loss(
        discriminator_forward(disc_params, real, config.discriminator),
        discriminator_forward(disc_params, fake, config.discriminator),
    )


def logistic_discriminator_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    return ops.add(
        ops.reduce_mean(ops.softplus(ops.scale(real_logits, -1.0))),
        ops.reduce_mean(ops.softplus(fake_logits)),
    )
