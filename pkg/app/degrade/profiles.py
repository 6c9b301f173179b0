"""退化分布配置与采样。

配置键（TOML 中 ``[degradation.stage1]`` / ``[degradation.stage2]`` 下）：

- ``blur_prob``            该阶段执行模糊的概率
- ``blur_kinds``           模糊类型权重表，如 ``{"gaussian-iso" = 0.7, "gaussian-aniso" = 0.3}``
- ``kernel_size``          核尺寸区间 [min, max]（取其中奇数）
- ``sigma``                高斯标准差区间（像素）
- ``motion_length``        运动模糊长度区间（像素）
- ``resize_range``         中间阶段缩放倍率区间（仅非最终阶段生效）
- ``resize_filters``       插值方式权重表
- ``noise_prob``           加噪概率
- ``noise_kinds``          噪声类型权重表
- ``gaussian_sigma``       高斯噪声标准差区间（8 位单位）
- ``poisson_scale``        泊松近似噪声强度区间
- ``speckle_sigma``        散斑噪声相对标准差区间
- ``gray_noise_prob``      灰度噪声概率
- ``compression_prob``     压缩概率
- ``quality``              压缩质量区间 ⊂ [10, 100]
- ``compress_first_prob``  最终阶段先压缩再缩放的概率

以上区间的默认值均为可编辑的工程默认值。
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import InvalidProfileError
from ..models import (
    BlurKind,
    BlurSpec,
    CompressionSpec,
    DegradationSpec,
    NoiseKind,
    NoiseSpec,
    ResampleFilter,
    ResampleSpec,
    StageSpec,
)

FloatRange = Tuple[float, float]
IntRange = Tuple[int, int]

FINAL_COMPRESS_FIRST = ("blur", "noise", "compression", "resample")


class StageProfile(BaseModel):
    """单个退化阶段的采样分布"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    blur_prob: float = 1.0
    blur_kinds: Dict[str, float] = Field(
        default_factory=lambda: {"gaussian-iso": 0.7, "gaussian-aniso": 0.3}
    )
    kernel_size: IntRange = (7, 21)
    sigma: FloatRange = (0.2, 3.0)
    motion_length: FloatRange = (3.0, 11.0)
    resize_range: FloatRange = (0.5, 1.5)
    resize_filters: Dict[str, float] = Field(
        default_factory=lambda: {"area": 0.2, "bilinear": 0.4, "bicubic": 0.4}
    )
    noise_prob: float = 1.0
    noise_kinds: Dict[str, float] = Field(default_factory=lambda: {"gaussian": 0.5, "poisson": 0.5})
    gaussian_sigma: FloatRange = (1.0, 25.0)
    poisson_scale: FloatRange = (0.05, 2.0)
    speckle_sigma: FloatRange = (0.02, 0.15)
    gray_noise_prob: float = 0.4
    compression_prob: float = 1.0
    quality: IntRange = (30, 95)
    compress_first_prob: float = 0.5

    def check(self, label: str) -> None:
        ranges = {
            "kernel_size": self.kernel_size,
            "sigma": self.sigma,
            "motion_length": self.motion_length,
            "resize_range": self.resize_range,
            "gaussian_sigma": self.gaussian_sigma,
            "poisson_scale": self.poisson_scale,
            "speckle_sigma": self.speckle_sigma,
            "quality": self.quality,
        }
        for key, (low, high) in ranges.items():
            if low > high:
                raise InvalidProfileError(f"{label}.{key}: 区间下界 {low} 大于上界 {high}")
        for key in ("blur_prob", "noise_prob", "gray_noise_prob", "compression_prob", "compress_first_prob"):
            value = getattr(self, key)
            if not 0.0 <= value <= 1.0:
                raise InvalidProfileError(f"{label}.{key}: 概率 {value} 不在 [0, 1]")
        if self.quality[0] < 10 or self.quality[1] > 100:
            raise InvalidProfileError(f"{label}.quality: 必须位于 [10, 100]")
        if self.kernel_size[0] < 1 or self.kernel_size[1] < 1:
            raise InvalidProfileError(f"{label}.kernel_size: 必须为正")
        if not any(size % 2 == 1 for size in range(self.kernel_size[0], self.kernel_size[1] + 1)):
            raise InvalidProfileError(f"{label}.kernel_size: 区间内没有奇数")
        if self.sigma[0] <= 0 or self.motion_length[0] <= 0 or self.resize_range[0] <= 0:
            raise InvalidProfileError(f"{label}: sigma/motion_length/resize_range 必须为正")
        _check_weights(f"{label}.blur_kinds", self.blur_kinds, BlurKind)
        _check_weights(f"{label}.resize_filters", self.resize_filters, ResampleFilter)
        _check_weights(f"{label}.noise_kinds", self.noise_kinds, NoiseKind)


class DistributionProfile(BaseModel):
    """两阶段退化的参数分布（iid / ood 预设 + 可编辑覆盖）"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "iid"
    stage1: StageProfile = Field(default_factory=StageProfile)
    stage2: StageProfile = Field(
        default_factory=lambda: StageProfile(
            blur_prob=0.8,
            sigma=(0.2, 1.5),
            kernel_size=(7, 15),
            gaussian_sigma=(1.0, 15.0),
            poisson_scale=(0.05, 1.0),
        )
    )
    resize_grid: int = 16  # 中间缩放倍率量化到 1/resize_grid 的整数倍

    def check(self) -> None:
        self.stage1.check("stage1")
        self.stage2.check("stage2")
        if self.resize_grid < 1:
            raise InvalidProfileError(f"resize_grid 必须 ≥ 1，实际 {self.resize_grid}")


def _check_weights(label: str, weights: Dict[str, float], enum_cls) -> None:
    valid = {member.value for member in enum_cls}
    if not weights:
        raise InvalidProfileError(f"{label}: 权重表为空")
    for key, value in weights.items():
        if key not in valid:
            raise InvalidProfileError(f"{label}: 未知取值 {key}")
        if value < 0:
            raise InvalidProfileError(f"{label}: 权重 {value} 为负")
    if sum(weights.values()) <= 0:
        raise InvalidProfileError(f"{label}: 权重之和必须为正")


def _ood_stage(stage: StageProfile) -> StageProfile:
    # 高斯模糊 -> 运动模糊；高斯/泊松噪声 -> 散斑噪声
    return stage.model_copy(update={"blur_kinds": {"motion-linear": 1.0}, "noise_kinds": {"speckle": 1.0}})


def preset(name: str) -> DistributionProfile:
    """内置预设：``iid``（训练分布）与 ``ood``（替换模糊与噪声类型）"""
    base = DistributionProfile()
    if name == "iid":
        return base
    if name == "ood":
        return base.model_copy(
            update={"name": "ood", "stage1": _ood_stage(base.stage1), "stage2": _ood_stage(base.stage2)}
        )
    raise InvalidProfileError(f"未知的退化预设：{name}")


def with_overrides(profile: DistributionProfile, overrides: Dict[str, Dict]) -> DistributionProfile:
    """按阶段覆盖部分字段，返回新的 profile"""
    update = {}
    for stage_name in ("stage1", "stage2"):
        if stage_name in overrides:
            stage = getattr(profile, stage_name)
            merged = {**stage.model_dump(), **overrides[stage_name]}
            update[stage_name] = StageProfile.model_validate(merged)
    unknown = set(overrides) - {"stage1", "stage2", "resize_grid"}
    if unknown:
        raise InvalidProfileError(f"未知的覆盖键：{sorted(unknown)}")
    if "resize_grid" in overrides:
        update["resize_grid"] = int(overrides["resize_grid"])
    return profile.model_copy(update=update)


# ------------------------------ 采样 ------------------------------

def _choice(rng: np.random.Generator, weights: Dict[str, float]) -> str:
    keys = sorted(weights)
    probs = np.array([weights[k] for k in keys], dtype=np.float64)
    return keys[int(rng.choice(len(keys), p=probs / probs.sum()))]


def _odd_size(rng: np.random.Generator, bounds: IntRange) -> int:
    sizes = [s for s in range(bounds[0], bounds[1] + 1) if s % 2 == 1]
    return sizes[int(rng.integers(len(sizes)))]


def _sample_blur(rng: np.random.Generator, stage: StageProfile) -> Optional[BlurSpec]:
    if rng.random() >= stage.blur_prob:
        return None
    kind = BlurKind(_choice(rng, stage.blur_kinds))
    size = _odd_size(rng, stage.kernel_size)
    angle = float(rng.uniform(0.0, math.pi))
    if kind is BlurKind.MOTION_LINEAR:
        return BlurSpec(kind=kind, size=size, angle=angle, length=float(rng.uniform(*stage.motion_length)))
    sigma_x = float(rng.uniform(*stage.sigma))
    if kind is BlurKind.GAUSSIAN_ISO:
        return BlurSpec(kind=kind, size=size, sigma_x=sigma_x, sigma_y=sigma_x)
    sigma_y = float(rng.uniform(*stage.sigma))
    return BlurSpec(kind=kind, size=size, sigma_x=sigma_x, sigma_y=sigma_y, angle=angle)


def _sample_noise(rng: np.random.Generator, stage: StageProfile) -> Optional[NoiseSpec]:
    if rng.random() >= stage.noise_prob:
        return None
    kind = NoiseKind(_choice(rng, stage.noise_kinds))
    bounds = {
        NoiseKind.GAUSSIAN: stage.gaussian_sigma,
        NoiseKind.POISSON: stage.poisson_scale,
        NoiseKind.SPECKLE: stage.speckle_sigma,
    }[kind]
    gray = bool(rng.random() < stage.gray_noise_prob)
    return NoiseSpec(kind=kind, strength=float(rng.uniform(*bounds)), gray=gray)


def _sample_compression(rng: np.random.Generator, stage: StageProfile) -> Optional[CompressionSpec]:
    if rng.random() >= stage.compression_prob:
        return None
    return CompressionSpec(int(rng.integers(stage.quality[0], stage.quality[1] + 1)))


def sample_spec(profile: DistributionProfile, seed: int, *, scale: int = 4) -> DegradationSpec:
    """从分布中采样一个任务的退化参数，对 seed 完全确定

    第一阶段缩放倍率量化到 1/resize_grid 网格；第二阶段倍率由
    ``(1/s) / r1`` 决定，使复合缩放恰好为 1/s。
    """
    profile.check()
    if scale < 1:
        raise InvalidProfileError(f"缩放倍数必须 ≥ 1，实际 {scale}")
    rng = np.random.default_rng(seed)

    s1 = profile.stage1
    grid = profile.resize_grid
    low = max(1, math.ceil(s1.resize_range[0] * grid - 1e-9))
    high = max(low, math.floor(s1.resize_range[1] * grid + 1e-9))
    factor1 = int(rng.integers(low, high + 1)) / grid
    stage1 = StageSpec(
        blur=_sample_blur(rng, s1),
        resample=ResampleSpec(factor=factor1, filter=ResampleFilter(_choice(rng, s1.resize_filters))),
        noise=_sample_noise(rng, s1),
        compression=_sample_compression(rng, s1),
    )

    s2 = profile.stage2
    blur2 = _sample_blur(rng, s2)
    final = ResampleSpec(factor=(1.0 / scale) / factor1, filter=ResampleFilter(_choice(rng, s2.resize_filters)))
    noise2 = _sample_noise(rng, s2)
    compression2 = _sample_compression(rng, s2)
    compress_first = bool(rng.random() < s2.compress_first_prob)
    stage2 = StageSpec(
        blur=blur2,
        resample=final,
        noise=noise2,
        compression=compression2,
        order=FINAL_COMPRESS_FIRST if compress_first else StageSpec().order,
    )
    noise_seed = int(rng.integers(0, 2 ** 31 - 1))
    return DegradationSpec(stages=(stage1, stage2), scale=scale, seed=noise_seed)
