"""前向算子。

每个算子都会：
1. 校验输入形状；
2. 调用 torch 完成计算（float64，零填充卷积）；
3. 检查输出是否全部有限；
4. 若存在激活的 GradientTape 且任一输入需要梯度，则记录一条算子记录。
"""

from __future__ import annotations

from contextvars import ContextVar
from typing import TYPE_CHECKING, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from ..errors import NonFiniteError, ShapeMismatchError

if TYPE_CHECKING:
    from .tape import GradientTape

DTYPE = torch.float64

# 当前线程/上下文中激活的 tape
ACTIVE_TAPE: ContextVar[Optional["GradientTape"]] = ContextVar("active_tape", default=None)

Rect = Tuple[int, int, int, int]  # (top, left, height, width)


def as_tensor(values, *, requires_grad: bool = False) -> torch.Tensor:
    """将任意数值转为 float64 张量"""
    tensor = torch.as_tensor(values, dtype=DTYPE).clone()
    if requires_grad:
        tensor.requires_grad_(True)
    return tensor


def _finish(op: str, out: torch.Tensor, *inputs: torch.Tensor) -> torch.Tensor:
    if not bool(torch.isfinite(out).all()):
        raise NonFiniteError(f"算子 {op} 输出包含非有限值", op=op)
    if any(isinstance(t, torch.Tensor) and t.requires_grad for t in inputs):
        tape = ACTIVE_TAPE.get()
        if tape is not None:
            tape.record(op, tuple(out.shape))
    return out


def _same_shape(op: str, a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: 形状不一致 {tuple(a.shape)} vs {tuple(b.shape)}")


def _channel_broadcastable(op: str, a: torch.Tensor, b: torch.Tensor) -> None:
    # 仅允许完全相同，或 NCHW 中一侧通道数为 1（掩码按通道广播）
    if a.shape == b.shape:
        return
    if a.ndim == b.ndim == 4 and a.shape[0] == b.shape[0] and a.shape[2:] == b.shape[2:]:
        if a.shape[1] == 1 or b.shape[1] == 1:
            return
    raise ShapeMismatchError(f"{op}: 无法按通道广播 {tuple(a.shape)} vs {tuple(b.shape)}")


def _require_4d(op: str, x: torch.Tensor) -> None:
    if x.ndim != 4:
        raise ShapeMismatchError(f"{op}: 需要 NCHW 四维输入，实际 {tuple(x.shape)}")


# ------------------------------ 逐元素算子 ------------------------------

def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _channel_broadcastable("add", a, b)
    return _finish("add", a + b, a, b)


def sub(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _channel_broadcastable("sub", a, b)
    return _finish("sub", a - b, a, b)


def scale(a: torch.Tensor, factor: float) -> torch.Tensor:
    return _finish("scale", a * float(factor), a)


def mul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _channel_broadcastable("mul", a, b)
    return _finish("mul", a * b, a, b)


def div(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _channel_broadcastable("div", a, b)
    return _finish("div", a / b, a, b)


def leaky_relu(x: torch.Tensor, slope: float = 0.2) -> torch.Tensor:
    return _finish("leaky_relu", F.leaky_relu(x, negative_slope=slope), x)


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    return _finish("sigmoid", torch.sigmoid(x), x)


def softplus(x: torch.Tensor) -> torch.Tensor:
    return _finish("softplus", F.softplus(x), x)


def absolute(x: torch.Tensor) -> torch.Tensor:
    return _finish("abs", torch.abs(x), x)


def square(x: torch.Tensor) -> torch.Tensor:
    return _finish("square", x * x, x)


def sqrt(x: torch.Tensor) -> torch.Tensor:
    return _finish("sqrt", torch.sqrt(x), x)


def rms(x: torch.Tensor) -> torch.Tensor:
    """均方根 sqrt(mean(x²))；x ≡ 0 时取值 0 且梯度为 0（次梯度）"""
    ms = torch.mean(x * x)
    positive = ms > 0
    safe = torch.where(positive, ms, torch.ones_like(ms))
    out = torch.where(positive, torch.sqrt(safe), torch.zeros_like(ms))
    return _finish("rms", out, x)


# ------------------------------ 归约 ------------------------------

def reduce_mean(x: torch.Tensor, dim: Optional[Sequence[int]] = None, keepdim: bool = False) -> torch.Tensor:
    out = torch.mean(x) if dim is None else torch.mean(x, dim=tuple(dim), keepdim=keepdim)
    return _finish("mean", out, x)


def reduce_sum(x: torch.Tensor, dim: Optional[Sequence[int]] = None, keepdim: bool = False) -> torch.Tensor:
    out = torch.sum(x) if dim is None else torch.sum(x, dim=tuple(dim), keepdim=keepdim)
    return _finish("sum", out, x)


# ------------------------------ 卷积与重采样 ------------------------------

def conv2d(
    x: torch.Tensor,
    weight: torch.Tensor,
    bias: Optional[torch.Tensor] = None,
    *,
    stride: int = 1,
    padding: int = 0,
) -> torch.Tensor:
    _require_4d("conv2d", x)
    _require_4d("conv2d", weight)
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"conv2d: 输入通道 {x.shape[1]} 与卷积核通道 {weight.shape[1]} 不一致"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatchError(f"conv2d: 偏置形状 {tuple(bias.shape)} 非法")
    kh, kw = weight.shape[2:]
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise ShapeMismatchError(f"conv2d: 输入 {tuple(x.shape)} 小于卷积核 {kh}×{kw}")
    out = F.conv2d(x, weight, bias, stride=stride, padding=padding)
    return _finish("conv2d", out, x, weight, *(() if bias is None else (bias,)))


def conv_transpose2d(
    x: torch.Tensor,
    weight: torch.Tensor,
    bias: Optional[torch.Tensor] = None,
    *,
    stride: int = 1,
    padding: int = 0,
) -> torch.Tensor:
    _require_4d("conv_transpose2d", x)
    _require_4d("conv_transpose2d", weight)
    if x.shape[1] != weight.shape[0]:
        raise ShapeMismatchError(
            f"conv_transpose2d: 输入通道 {x.shape[1]} 与卷积核 {weight.shape[0]} 不一致"
        )
    out = F.conv_transpose2d(x, weight, bias, stride=stride, padding=padding)
    return _finish("conv_transpose2d", out, x, weight, *(() if bias is None else (bias,)))


def upsample_nearest(x: torch.Tensor, factor: int) -> torch.Tensor:
    _require_4d("upsample_nearest", x)
    if factor < 1:
        raise ShapeMismatchError(f"upsample_nearest: 放大倍数必须 ≥ 1，实际 {factor}")
    out = x.repeat_interleave(factor, dim=2).repeat_interleave(factor, dim=3)
    return _finish("upsample_nearest", out, x)


# ------------------------------ 结构算子 ------------------------------

def concat_channels(tensors: Sequence[torch.Tensor]) -> torch.Tensor:
    if not tensors:
        raise ShapeMismatchError("concat_channels: 输入为空")
    ref = tensors[0]
    for t in tensors:
        _require_4d("concat_channels", t)
        if t.shape[0] != ref.shape[0] or t.shape[2:] != ref.shape[2:]:
            raise ShapeMismatchError(
                f"concat_channels: 形状不一致 {tuple(ref.shape)} vs {tuple(t.shape)}"
            )
    return _finish("concat_channels", torch.cat(list(tensors), dim=1), *tensors)


def crop(x: torch.Tensor, rect: Rect) -> torch.Tensor:
    """按 (top, left, height, width) 裁剪最后两个维度"""
    top, left, height, width = rect
    h, w = x.shape[-2:]
    if top < 0 or left < 0 or height <= 0 or width <= 0 or top + height > h or left + width > w:
        raise ShapeMismatchError(f"crop: 区域 {rect} 超出 {h}×{w}")
    out = x[..., top:top + height, left:left + width]
    return _finish("crop", out, x)
