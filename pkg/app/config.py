"""运行配置：TOML 文件 + pydantic 校验 + .env 环境变量。

一次运行完全由（配置文件，代码版本）决定。所有键见 ``configs/default.toml``。
"""

from __future__ import annotations

import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

import torch
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .degrade.profiles import DistributionProfile, preset, with_overrides
from .errors import ConfigError, InvalidProfileError
from .models import CorruptionKind, RestorerSpec

logger = logging.getLogger(__name__)

MaskMode = Literal["degraded-reference", "no-reference", "none"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SRNetConfig(_Section):
    """超分网络 f：缩小版残差 CNN"""
    width: int = Field(16, ge=1)
    blocks: int = Field(4, ge=0)
    scale: int = Field(4, ge=1)


class MaskNetConfig(_Section):
    """MaskNet f_m：8 层 3×3 卷积"""
    mode: MaskMode = "degraded-reference"
    width: int = Field(32, ge=1)
    layers: int = Field(8, ge=2)
    kernel_size: int = 3
    zero_head: bool = True  # 末层零初始化 => 初始 m ≡ 1

    @field_validator("kernel_size")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError("kernel_size 必须为正奇数")
        return value


class DiscriminatorConfig(_Section):
    width: int = Field(16, ge=1)
    depth: int = Field(2, ge=0)  # stride-2 卷积层数，logit 图缩小 2^depth


class PerceptualConfig(_Section):
    """冻结随机特征感知距离"""
    widths: Tuple[int, int, int] = (8, 16, 32)
    seed: int = 42


class DegradationConfig(_Section):
    preset: Literal["iid", "ood"] = "iid"
    stage1: Dict[str, Any] = Field(default_factory=dict)
    stage2: Dict[str, Any] = Field(default_factory=dict)
    resize_grid: Optional[int] = None

    def profile(self, name: Optional[str] = None) -> DistributionProfile:
        overrides: Dict[str, Any] = {}
        if self.stage1:
            overrides["stage1"] = self.stage1
        if self.stage2:
            overrides["stage2"] = self.stage2
        if self.resize_grid is not None:
            overrides["resize_grid"] = self.resize_grid
        profile = with_overrides(preset(name or self.preset), overrides)
        profile.check()
        return profile


class RestorerConfig(_Section):
    strength: float = Field(0.5, ge=0.0, le=1.0)
    regions: int = Field(3, ge=0)
    region_size: Tuple[int, int] = (8, 24)
    kind: Literal["local-blur", "texture-substitution", "local-warp"] = "local-blur"

    def spec(self, seed: int, strength: Optional[float] = None, max_side: Optional[int] = None) -> RestorerSpec:
        """max_side 给定时把区域边长上限收紧到人脸尺寸以内"""
        low, high = self.region_size
        if max_side is not None:
            low, high = min(low, max_side), min(high, max_side)
        return RestorerSpec(
            strength=self.strength if strength is None else strength,
            regions=self.regions,
            region_size=(low, high),
            kind=CorruptionKind(self.kind),
            seed=seed,
        )


class SceneConfig(_Section):
    """合成场景生成参数"""
    size: Tuple[int, int] = (128, 128)  # HR (高, 宽)
    face_fraction: float = Field(0.10, gt=0.0, lt=0.5)  # 人脸面积占比目标
    max_faces: int = Field(2, ge=1)
    pool: int = Field(64, ge=1)  # 训练场景池大小
    data_dir: Optional[str] = None  # 若给定则从目录读取场景


class TrainConfig(_Section):
    """训练超参数（α, β, γ, η 与各损失权重 λ）"""
    inner_lr: float = Field(1e-2, gt=0)  # α
    outer_lr: float = Field(3e-5, gt=0)  # β
    mask_lr: float = Field(1e-4, gt=0)  # γ
    disc_lr: float = Field(1e-4, gt=0)  # η
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_l1: float = Field(1.0, ge=0)
    lambda_lpips: float = Field(0.5, ge=0)
    lambda_adv: float = Field(0.1, ge=0)
    lambda_reg: float = Field(0.002, ge=0)
    inner_patch: int = Field(32, ge=4)  # 内循环 LR 人脸块边长
    outer_patch: int = Field(64, ge=4)  # 外循环 HR 图像块边长
    tasks_per_step: int = Field(4, ge=1)
    inner_steps: int = 1
    steps: int = Field(1000, ge=0)
    log_every: int = Field(10, ge=1)
    first_order: bool = False
    mask_inner_path: bool = True  # θ_m 是否经由内循环更新路径获得梯度
    inner_supervision: Literal["oracle-bfr", "gt"] = "oracle-bfr"
    faces_per_task: int = Field(1, ge=1)
    patches_per_face: int = Field(1, ge=1)
    patch_mode: Literal["patches", "full"] = "patches"
    patch_budget: Literal["per-face", "total"] = "per-face"
    face_source: Literal["scene", "separate"] = "scene"

    @field_validator("inner_steps")
    @classmethod
    def _one_inner_step(cls, value: int) -> int:
        if value != 1:
            raise ValueError("训练阶段内循环步数固定为 1")
        return value

    @property
    def weights(self) -> Tuple[float, float, float, float]:
        return (self.lambda_l1, self.lambda_lpips, self.lambda_adv, self.lambda_reg)


class AdaptConfig(_Section):
    steps: int = Field(1, ge=0)
    presets: Tuple[int, ...] = (1, 10, 20)
    inner_lr: Optional[float] = Field(None, gt=0)  # 为空时沿用训练 α（各步恒定）
    patches_per_face: int = Field(32, ge=1)
    patch_budget: Literal["per-face", "total"] = "per-face"
    patch_mode: Literal["patches", "full"] = "patches"


class EvalConfig(_Section):
    tasks: int = Field(100, ge=1)
    seed_offset: int = 1_000_003  # 留出任务与训练任务种子错开
    steps: Tuple[int, ...] = (0, 1, 10, 20)
    mask_faces: int = Field(50, ge=1)
    mask_strength: float = Field(0.8, ge=0.0, le=1.0)


class RunConfig(_Section):
    """一次运行的全部配置"""
    seed: int = 0
    output_dir: str = "runs/default"
    scale: int = Field(4, ge=1)
    workers: int = Field(1, ge=1)  # gen-data / eval 跨场景并行的线程数
    srnet: SRNetConfig = Field(default_factory=SRNetConfig)
    masknet: MaskNetConfig = Field(default_factory=MaskNetConfig)
    discriminator: DiscriminatorConfig = Field(default_factory=DiscriminatorConfig)
    perceptual: PerceptualConfig = Field(default_factory=PerceptualConfig)
    degradation: DegradationConfig = Field(default_factory=DegradationConfig)
    restorer: RestorerConfig = Field(default_factory=RestorerConfig)
    scenes: SceneConfig = Field(default_factory=SceneConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    adapt: AdaptConfig = Field(default_factory=AdaptConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def _consistent_scale(self) -> "RunConfig":
        if self.srnet.scale != self.scale:
            raise ValueError(f"srnet.scale={self.srnet.scale} 与 scale={self.scale} 不一致")
        height, width = self.scenes.size
        if height % self.scale or width % self.scale:
            raise ValueError("scenes.size 必须能被 scale 整除")
        if self.train.outer_patch % self.scale:
            raise ValueError("train.outer_patch 必须能被 scale 整除")
        return self

    @property
    def adapt_lr(self) -> float:
        return self.adapt.inner_lr if self.adapt.inner_lr is not None else self.train.inner_lr

    def echo(self) -> Dict[str, Any]:
        """可 JSON 序列化的完整配置回显"""
        return self.model_dump(mode="json")


def parse_run_config(payload: Dict[str, Any]) -> RunConfig:
    try:
        config = RunConfig.model_validate(payload)
        config.degradation.profile()
    except (ValidationError, InvalidProfileError) as exc:
        raise ConfigError(f"配置校验失败：{exc}") from exc
    return config


def load_run_config(path: Optional[Path]) -> RunConfig:
    """读取 TOML 配置；path 为空时使用全部默认值"""
    if path is None:
        return parse_run_config({})
    try:
        with Path(path).open("rb") as handle:
            payload = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"配置文件不存在：{path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"配置文件解析失败：{path}: {exc}") from exc
    logger.debug(f"已读取配置 {path}")
    return parse_run_config(payload)


def load_environment() -> None:
    """读取 .env 并应用进程级设置（线程数、确定性算法）"""
    load_dotenv()
    threads = int(os.getenv("FSR_NUM_THREADS", "1"))
    torch.set_num_threads(max(1, threads))
    torch.use_deterministic_algorithms(True)
