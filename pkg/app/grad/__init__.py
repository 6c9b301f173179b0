"""可高阶求导的张量计算核心（基于 PyTorch autograd，float64）"""

from .ops import DTYPE, as_tensor
from .optim import AdamState, adam_step
from .params import ParamSet
from .tape import GradientResult, GradientTape, backward

__all__ = [
    "DTYPE",
    "AdamState",
    "GradientResult",
    "GradientTape",
    "ParamSet",
    "adam_step",
    "as_tensor",
    "backward",
]
