from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import torch


class BlurKind(Enum):
    """模糊核类型"""
    GAUSSIAN_ISO = "gaussian-iso"  # 各向同性高斯
    GAUSSIAN_ANISO = "gaussian-aniso"  # 各向异性高斯
    MOTION_LINEAR = "motion-linear"  # 线性运动模糊


class ResampleFilter(Enum):
    """重采样插值方式"""
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"
    AREA = "area"


class NoiseKind(Enum):
    """噪声类型"""
    GAUSSIAN = "gaussian"  # 加性高斯噪声，strength 为 8 位标准差
    POISSON = "poisson"  # 信号相关高斯近似，方差 = strength · I / 255
    SPECKLE = "speckle"  # 乘性噪声，I · (1 + n)，n 标准差为 strength


class CorruptionKind(Enum):
    """伪复原器在人脸局部区域注入的误差类型"""
    LOCAL_BLUR = "local-blur"
    TEXTURE_SUBSTITUTION = "texture-substitution"
    LOCAL_WARP = "local-warp"


class Provenance(Enum):
    """场景来源"""
    SYNTHETIC = "synthetic"
    FOLDER = "folder"


STAGE_OPS = ("blur", "resample", "noise", "compression")
DEFAULT_ORDER: Tuple[str, ...] = STAGE_OPS


# ------------------------------ 退化描述 ------------------------------

@dataclass(slots=True, frozen=True)
class BlurSpec:
    kind: BlurKind
    size: int  # 奇数核尺寸（像素）
    sigma_x: float = 0.0  # 高斯主轴标准差
    sigma_y: float = 0.0  # 高斯次轴标准差（各向异性时有效）
    angle: float = 0.0  # 旋转角/运动方向（弧度）
    length: float = 0.0  # 运动模糊长度（像素）


@dataclass(slots=True, frozen=True)
class ResampleSpec:
    factor: float  # 名义缩放倍率；最后一次重采样总是精确落到 HR/s
    filter: ResampleFilter


@dataclass(slots=True, frozen=True)
class NoiseSpec:
    kind: NoiseKind
    strength: float
    gray: bool = False  # True 时各通道共享同一噪声场


@dataclass(slots=True, frozen=True)
class CompressionSpec:
    quality: int  # [10, 100]


@dataclass(slots=True, frozen=True)
class StageSpec:
    """一个退化阶段；缺省的环节视为恒等"""
    blur: Optional[BlurSpec] = None
    resample: Optional[ResampleSpec] = None
    noise: Optional[NoiseSpec] = None
    compression: Optional[CompressionSpec] = None
    order: Tuple[str, ...] = DEFAULT_ORDER  # 环节执行顺序


@dataclass(slots=True, frozen=True)
class DegradationSpec:
    """一个任务 T_i 的完整退化参数

    同一个 DegradationSpec 同时作用于自然图像与人脸区域。
    """
    stages: Tuple[StageSpec, ...]
    scale: int = 4  # 最终缩放倍数 s
    seed: int = 0  # 噪声随机种子

    def to_dict(self) -> Dict[str, Any]:
        return _enum_values(asdict(self))

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "DegradationSpec":
        stages = []
        for stage in payload["stages"]:
            blur = stage.get("blur")
            resample = stage.get("resample")
            noise = stage.get("noise")
            compression = stage.get("compression")
            stages.append(
                StageSpec(
                    blur=None if blur is None else BlurSpec(**{**blur, "kind": BlurKind(blur["kind"])}),
                    resample=None if resample is None else ResampleSpec(
                        factor=float(resample["factor"]), filter=ResampleFilter(resample["filter"])
                    ),
                    noise=None if noise is None else NoiseSpec(
                        kind=NoiseKind(noise["kind"]), strength=float(noise["strength"]), gray=bool(noise["gray"])
                    ),
                    compression=None if compression is None else CompressionSpec(int(compression["quality"])),
                    order=tuple(stage.get("order", DEFAULT_ORDER)),
                )
            )
        return cls(stages=tuple(stages), scale=int(payload["scale"]), seed=int(payload["seed"]))


def _enum_values(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _enum_values(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_enum_values(v) for v in value]
    return value


# ------------------------------ 场景与任务 ------------------------------

@dataclass(slots=True, frozen=True)
class FaceRect:
    """人脸矩形（像素坐标，左上角 + 宽高）"""
    x: int
    y: int
    w: int
    h: int

    def inside(self, height: int, width: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.w > 0 and self.h > 0 \
            and self.x + self.w <= width and self.y + self.h <= height

    def scaled(self, factor: float) -> "FaceRect":
        return FaceRect(
            int(round(self.x * factor)), int(round(self.y * factor)),
            int(round(self.w * factor)), int(round(self.h * factor)),
        )

    def as_crop(self) -> Tuple[int, int, int, int]:
        """转换为 ops.crop 使用的 (top, left, height, width)"""
        return (self.y, self.x, self.h, self.w)

    def to_dict(self) -> Dict[str, int]:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(slots=True)
class SceneSample:
    """一张高清自然图像及其中的人脸

    所有人脸矩形均位于图像内部；合成场景中人脸约占 10% 面积。
    """
    name: str  # 场景名称（文件名主干）
    image: torch.Tensor  # HR 图像 (3, H, W)，[0, 1]
    faces: List[FaceRect]  # HR 坐标下的人脸矩形
    provenance: Provenance = Provenance.SYNTHETIC
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def face_images(self) -> List[torch.Tensor]:
        return [self.image[:, f.y:f.y + f.h, f.x:f.x + f.w] for f in self.faces]

    def face_area_fraction(self) -> float:
        _, height, width = self.image.shape
        return sum(f.w * f.h for f in self.faces) / float(height * width)


@dataclass(slots=True)
class TaskSample:
    """一个训练任务 T_i

    人脸对（内循环）与自然图像对（外循环）共享同一个 DegradationSpec。
    """
    spec: DegradationSpec  # 本任务的退化参数
    image: torch.Tensor  # 外循环 HR 图像块 I (3, H, W)
    image_lr: torch.Tensor  # 外循环 LR 图像块 I_LR
    face: torch.Tensor  # 内循环 HR 人脸块 I_face
    face_lr: torch.Tensor  # 内循环 LR 人脸块 I_face_LR
    face_bfr: torch.Tensor  # 伪复原人脸 I_face_BFR
    support: torch.Tensor  # 复原误差真实支撑 (H, W) bool


@dataclass(slots=True, frozen=True)
class RestorerSpec:
    """伪人脸复原器参数；strength = 0 时输出与真值完全一致"""
    strength: float = 0.5  # 误差强度 [0, 1]
    regions: int = 3  # 误差区域个数
    region_size: Tuple[int, int] = (8, 24)  # 区域边长范围（HR 像素）
    kind: CorruptionKind = CorruptionKind.LOCAL_BLUR
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return _enum_values(asdict(self))
