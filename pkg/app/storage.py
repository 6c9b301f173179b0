"""
运行目录存储模块

一个运行目录由单个进程独占（.lock 文件），包含：

- ``config.json``     生效配置回显
- ``train_log.csv``   训练日志（带 schema 注释行）
- ``checkpoint.bin``  参数与优化器状态
- ``report/``         汇总 CSV 与 PNG 拼图
"""

from __future__ import annotations

import csv
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from .errors import RunLockedError
from .grad import ParamSet
from .nets.checkpoint import Checkpoint, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

LOG_SCHEMA = "# schema: train-log v1"
LOG_COLUMNS = (
    "step",
    "loss",
    "l1",
    "perceptual",
    "adv",
    "reg",
    "inner_loss",
    "disc_loss",
    "mask_mean",
    "grad_norm_sr",
    "grad_norm_mask",
    "grad_norm_disc",
)


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def _format(value: Any) -> str:
    # repr 保证浮点数写出后可逐位读回
    return repr(float(value)) if isinstance(value, float) else str(value)


class RunStorage:
    """运行目录读写类

    用法::

        with RunStorage(Path("runs/tiny")) as storage:
            storage.write_config(config.echo())
            ...
    """

    CONFIG_FILE = "config.json"
    LOG_FILE = "train_log.csv"
    CHECKPOINT_FILE = "checkpoint.bin"
    LOCK_FILE = ".lock"
    REPORT_DIR = "report"

    def __init__(self, root: Path):
        """
        初始化运行目录

        Args:
            root: 运行目录路径，不存在时自动创建
        """
        self.root = Path(root)
        self._locked = False

    # ==================== 目录锁 ====================

    @property
    def lock_path(self) -> Path:
        return self.root / self.LOCK_FILE

    def acquire(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        if self.lock_path.exists():
            try:
                owner = int(self.lock_path.read_text(encoding="utf-8").strip() or "0")
            except ValueError:
                owner = 0
            if owner and owner != os.getpid() and _pid_alive(owner):
                raise RunLockedError(f"运行目录 {self.root} 正被进程 {owner} 占用")
            logger.warning(f"发现过期的锁文件 {self.lock_path}（进程 {owner}），已接管")
            self.lock_path.unlink()
        fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(str(os.getpid()))
        self._locked = True

    def release(self) -> None:
        if self._locked and self.lock_path.exists():
            self.lock_path.unlink()
        self._locked = False

    def __enter__(self) -> "RunStorage":
        self.acquire()
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        self.release()

    # ==================== 配置 ====================

    @property
    def config_path(self) -> Path:
        return self.root / self.CONFIG_FILE

    def write_config(self, config: Mapping[str, Any]) -> Path:
        self.config_path.write_text(json.dumps(config, ensure_ascii=False, indent=2, sort_keys=True), encoding="utf-8")
        return self.config_path

    def read_config(self) -> Dict[str, Any]:
        return json.loads(self.config_path.read_text(encoding="utf-8"))

    # ==================== 训练日志 ====================

    @property
    def log_path(self) -> Path:
        return self.root / self.LOG_FILE

    def start_log(self) -> Path:
        """新建日志文件：schema 注释行 + 表头"""
        with self.log_path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(LOG_SCHEMA + "\n")
            csv.writer(handle).writerow(LOG_COLUMNS)
        return self.log_path

    def append_log(self, row: Mapping[str, Any]) -> None:
        with self.log_path.open("a", encoding="utf-8", newline="") as handle:
            csv.writer(handle).writerow([_format(row[column]) for column in LOG_COLUMNS])

    def read_log(self) -> List[Dict[str, float]]:
        return read_train_log(self.log_path)

    # ==================== 检查点 ====================

    @property
    def checkpoint_path(self) -> Path:
        return self.root / self.CHECKPOINT_FILE

    def save_checkpoint(self, groups: Mapping[str, ParamSet], *, config: Dict[str, Any], meta: Dict[str, Any]) -> Path:
        return save_checkpoint(self.checkpoint_path, groups, config=config, meta=meta)

    def load_checkpoint(self) -> Checkpoint:
        return load_checkpoint(self.checkpoint_path)

    # ==================== 报告 ====================

    @property
    def report_dir(self) -> Path:
        path = self.root / self.REPORT_DIR
        path.mkdir(parents=True, exist_ok=True)
        return path


def read_train_log(path: Path) -> List[Dict[str, float]]:
    """读取训练日志；跳过 schema 注释行"""
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    rows = []
    for record in csv.DictReader(lines):
        rows.append({key: (int(value) if key == "step" else float(value)) for key, value in record.items()})
    return rows


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Mapping[str, Any]], *, schema: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        if schema:
            handle.write(schema + "\n")
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(column, "")) for column in columns])
    return path
