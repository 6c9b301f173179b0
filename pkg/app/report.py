"""报告渲染：训练日志汇总 CSV 与并排 PNG 拼图。渲染失败只记录警告。"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from PIL import Image

from .imageio import to_uint8
from .storage import read_train_log, write_csv

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("metric", "first", "last", "min", "max", "mean")
GRID_GAP = 2


def summarize_log(rows: Sequence[Dict[str, float]]) -> List[Dict[str, float]]:
    if not rows:
        return []
    summary = []
    for metric in rows[0]:
        if metric == "step":
            continue
        values = np.array([row[metric] for row in rows], dtype=np.float64)
        summary.append(
            {
                "metric": metric,
                "first": float(values[0]),
                "last": float(values[-1]),
                "min": float(values.min()),
                "max": float(values.max()),
                "mean": float(values.mean()),
            }
        )
    return summary


def compose_grid(rows: Sequence[Sequence[torch.Tensor]]) -> Image.Image:
    """每行若干张图，统一最近邻放大到该行最大尺寸后拼接"""
    tiles = [[Image.fromarray(to_uint8(image)).convert("RGB") for image in row] for row in rows]
    cell_h = max(tile.height for row in tiles for tile in row)
    cell_w = max(tile.width for row in tiles for tile in row)
    columns = max(len(row) for row in tiles)
    canvas = Image.new(
        "RGB",
        (columns * cell_w + (columns - 1) * GRID_GAP, len(tiles) * cell_h + (len(tiles) - 1) * GRID_GAP),
        color=(255, 255, 255),
    )
    for r, row in enumerate(tiles):
        for c, tile in enumerate(row):
            if tile.size != (cell_w, cell_h):
                tile = tile.resize((cell_w, cell_h), Image.Resampling.NEAREST)
            canvas.paste(tile, (c * (cell_w + GRID_GAP), r * (cell_h + GRID_GAP)))
    return canvas


def save_grid(path: Path, rows: Sequence[Sequence[torch.Tensor]]) -> Optional[Path]:
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        compose_grid(rows).save(path, format="PNG")
        return path
    except Exception as exc:  # noqa: BLE001
        logger.warning(f"拼图渲染失败 {path}: {exc}")
        return None


def render_run_report(log_path: Path, report_dir: Path) -> Optional[Path]:
    """由训练日志生成 summary.csv；失败时返回 None"""
    try:
        rows = read_train_log(log_path)
        return write_csv(Path(report_dir) / "summary.csv", SUMMARY_COLUMNS, summarize_log(rows))
    except Exception as exc:  # noqa: BLE001
        logger.warning(f"训练报告渲染失败: {exc}")
        return None
