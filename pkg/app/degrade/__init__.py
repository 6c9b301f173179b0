"""随机两阶段退化：采样退化描述并作用于 HR 图像"""

from .jpeg import compress
from .kernels import build_kernel, delta_kernel, gaussian_kernel, motion_kernel
from .pipeline import apply, bicubic_downscale
from .profiles import DistributionProfile, StageProfile, preset, sample_spec, with_overrides

__all__ = [
    "DistributionProfile",
    "StageProfile",
    "apply",
    "bicubic_downscale",
    "build_kernel",
    "compress",
    "delta_kernel",
    "gaussian_kernel",
    "motion_kernel",
    "preset",
    "sample_spec",
    "with_overrides",
]
