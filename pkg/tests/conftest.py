from __future__ import annotations

import sys
from pathlib import Path
from typing import Callable

import pytest
import torch

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))
if str(Path(__file__).parent) not in sys.path:
    sys.path.insert(0, str(Path(__file__).parent))

from app.config import parse_run_config  # noqa: E402
from app.scenes import bundled_test_scene  # noqa: E402
from golden_utils import compare_golden  # noqa: E402

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行需要训练的慢速测试")
    parser.addoption("--update-golden", action="store_true", default=False, help="重新生成 tests/golden 下的 golden 文件")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 需要完整小规模训练的行为测试")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _deterministic():
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    yield


@pytest.fixture
def bundled_scene():
    return bundled_test_scene()


@pytest.fixture
def bundled_image(bundled_scene):
    return bundled_scene.image


@pytest.fixture
def rng():
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def tiny_config():
    """单元测试用的极小网络配置"""
    return parse_run_config(
        {
            "seed": 3,
            "scale": 2,
            "srnet": {"width": 4, "blocks": 1, "scale": 2},
            "masknet": {"width": 4, "layers": 3},
            "discriminator": {"width": 4, "depth": 1},
            "perceptual": {"widths": [3, 4, 4]},
            "scenes": {"size": [48, 48], "face_fraction": 0.2, "max_faces": 1, "pool": 4},
            "restorer": {"region_size": [4, 8]},
            "train": {"inner_patch": 6, "outer_patch": 16, "tasks_per_step": 2, "steps": 2, "log_every": 1},
            "adapt": {"patches_per_face": 2},
            "eval": {"tasks": 2, "steps": [0, 1], "mask_faces": 2},
        }
    )


@pytest.fixture
def golden(request) -> Callable[[str, bytes], None]:
    """与 tests/golden 下已提交的文件逐字节比较；只有 --update-golden 才会写文件"""
    update = request.config.getoption("--update-golden")

    def check(name: str, payload: bytes) -> None:
        compare_golden(GOLDEN_DIR / name, payload, update=update)

    return check
