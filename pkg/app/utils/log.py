"""日志初始化"""

from __future__ import annotations

import logging
import os
import sys
from typing import Optional

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """配置根日志器，输出到 stderr。

    Args:
        level: 日志级别名称；为空时读取环境变量 FSR_LOG_LEVEL，默认 INFO
    """
    level_name = (level or os.getenv("FSR_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )
