import struct

import pytest
import torch

from app.config import MaskNetConfig, SRNetConfig
from app.errors import CheckpointFormatError
from app.nets import init_masknet, init_srnet, load_checkpoint, save_checkpoint
from app.nets.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint


def _groups():
    return {"srnet": init_srnet(SRNetConfig(width=4, blocks=1), 0), "masknet": init_masknet(MaskNetConfig(width=4, layers=3), 1)}


def test_save_load_is_bit_exact(tmp_path):
    path = save_checkpoint(tmp_path / "ckpt.bin", _groups(), config={"seed": 0}, meta={"step": 3})
    checkpoint = load_checkpoint(path)
    assert checkpoint.meta == {"step": 3}
    assert checkpoint.config == {"seed": 0}
    for name, params in _groups().items():
        restored = checkpoint.group(name)
        assert list(restored.keys()) == list(params.keys())
        assert restored.checksum() == params.checksum()
    assert encode_checkpoint(decode_checkpoint(path.read_bytes())) == path.read_bytes()


def test_layout(tmp_path):
    blob = save_checkpoint(tmp_path / "c.bin", {"g": _groups()["srnet"]}, config={}, meta={}).read_bytes()
    assert blob[:8] == MAGIC
    (length,) = struct.unpack("<I", blob[8:12])
    header = blob[12:12 + length].decode("utf-8")
    assert header.startswith('{"config":{}')
    assert '"name":"g/head.weight"' in header


def test_values_are_little_endian_doubles(tmp_path):
    tensor = torch.tensor([1.5, -2.0], dtype=torch.float64)
    from app.grad import ParamSet

    blob = save_checkpoint(tmp_path / "c.bin", {"x": ParamSet({"v": tensor})}, config={}, meta={}).read_bytes()
    assert blob[-16:] == struct.pack("<2d", 1.5, -2.0)


def test_bad_magic():
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(b"NOTACKPT" + b"\x00" * 8)


def test_truncated_payload(tmp_path):
    blob = save_checkpoint(tmp_path / "c.bin", _groups(), config={}, meta={}).read_bytes()
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(blob[:-8])


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "absent.bin")
