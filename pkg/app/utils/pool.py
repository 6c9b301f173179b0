"""按输入顺序返回结果的线程池映射，供场景生成与评估跨场景并行。"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], *, workers: int = 1) -> List[R]:
    """workers ≤ 1 时顺序执行；结果顺序始终与输入一致"""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"并行处理 {len(items)} 项（{workers} 线程）")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
