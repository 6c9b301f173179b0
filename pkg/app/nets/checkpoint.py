"""参数检查点：小端二进制容器。

布局::

    magic      8 字节  b"FSRCKPT\\x01"
    header_len uint32（小端）
    header     UTF-8 JSON {"config": ..., "meta": ..., "tensors": [{"name", "shape", "offset", "nbytes"}]}
    payload    按表顺序排列的 <f8 原始数据，offset 相对 payload 起点

读取后再写出得到完全相同的字节。
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping

import numpy as np
import torch

from ..errors import CheckpointFormatError
from ..grad import DTYPE, ParamSet

logger = logging.getLogger(__name__)

MAGIC = b"FSRCKPT\x01"
_LENGTH = struct.Struct("<I")


@dataclass(slots=True)
class Checkpoint:
    """检查点内容：配置回显、元信息与按名称排列的张量"""
    config: Dict[str, Any]  # 运行配置回显
    meta: Dict[str, Any] = field(default_factory=dict)  # 步数、Adam 时间步等
    tensors: ParamSet = field(default_factory=ParamSet)  # 带网络/优化器前缀的全部张量

    def group(self, prefix: str) -> ParamSet:
        """取出名称以 ``prefix/`` 开头的张量，并去掉前缀"""
        head = prefix.rstrip("/") + "/"
        return ParamSet((name[len(head):], t) for name, t in self.tensors.items() if name.startswith(head))


def _dump_json(payload: Dict[str, Any]) -> bytes:
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    table: List[Dict[str, Any]] = []
    chunks: List[bytes] = []
    offset = 0
    for name, tensor in checkpoint.tensors.items():
        data = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = _dump_json({"config": checkpoint.config, "meta": checkpoint.meta, "tensors": table})
    return MAGIC + _LENGTH.pack(len(header)) + header + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError("检查点魔数不匹配")
    start = len(MAGIC)
    if len(blob) < start + _LENGTH.size:
        raise CheckpointFormatError("检查点文件被截断（缺少头长度）")
    (header_len,) = _LENGTH.unpack_from(blob, start)
    body = start + _LENGTH.size
    try:
        header = json.loads(blob[body:body + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"检查点头部无法解析：{exc}") from exc

    payload = blob[body + header_len:]
    tensors: Dict[str, torch.Tensor] = {}
    for entry in header.get("tensors", []):
        shape = tuple(entry["shape"])
        begin, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if begin + nbytes > len(payload) or nbytes != 8 * int(np.prod(shape, dtype=np.int64)):
            raise CheckpointFormatError(f"张量 {entry['name']} 的数据范围非法")
        values = np.frombuffer(payload, dtype="<f8", count=nbytes // 8, offset=begin).reshape(shape)
        tensors[entry["name"]] = torch.as_tensor(values.copy(), dtype=DTYPE)
    return Checkpoint(config=header.get("config", {}), meta=header.get("meta", {}), tensors=ParamSet(tensors))


def save_checkpoint(path: Path, groups: Mapping[str, ParamSet], *, config: Dict[str, Any], meta: Dict[str, Any]) -> Path:
    """将若干参数组写成一个检查点文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint = Checkpoint(config=config, meta=meta, tensors=ParamSet.combine(groups))
    path.write_bytes(encode_checkpoint(checkpoint))
    logger.info(f"检查点已写入 {path}（{len(checkpoint.tensors)} 个张量）")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointFormatError(f"检查点不存在：{path}")
    return decode_checkpoint(path.read_bytes())
