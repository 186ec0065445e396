"""自定义日志配置，支持东八区北京时间"""
from __future__ import annotations

import logging
import logging.config
import os
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any

import yaml


_BEIJING_TZ = timezone(timedelta(hours=8))
_DEFAULT_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s - %(message)s"
_DEFAULT_DATEFMT = "%Y-%m-%d %H:%M:%S"


class BeijingFormatter(logging.Formatter):
    """使用东八区北京时间的日志格式化器"""

    def formatTime(self, record, datefmt=None):
        """重写 formatTime 方法，使用东八区时间"""
        dt = datetime.fromtimestamp(record.created, tz=_BEIJING_TZ)
        return dt.strftime(datefmt or _DEFAULT_DATEFMT)


def get_cli_log_config(level: str = "INFO") -> dict[str, Any]:
    """获取 CLI 的日志配置（诊断信息统一输出到 stderr）"""
    resolved = str(level or "INFO").upper()
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "default": {
                "()": "exdos.utils.logging_config.BeijingFormatter",
                "fmt": _DEFAULT_FORMAT,
                "datefmt": _DEFAULT_DATEFMT,
            },
        },
        "handlers": {
            "default": {
                "formatter": "default",
                "class": "logging.StreamHandler",
                "stream": "ext://sys.stderr",
            },
        },
        "loggers": {
            "exdos": {"handlers": ["default"], "level": resolved, "propagate": False},
        },
    }


def configure_logging(level: str = "INFO", *, config_path: str | Path | None = None) -> None:
    """初始化日志。

    说明：
    - 优先使用 EXDOS_LOG_CONFIG 指向的 YAML（例如仓库根目录的 exdos_log_config.yaml）
    - 没有配置文件时走内置 dictConfig
    - 命令行传入的 level 始终覆盖 exdos logger 的级别
    """
    path = config_path or os.environ.get("EXDOS_LOG_CONFIG")
    if path and Path(path).is_file():
        with open(path, "r", encoding="utf-8") as f:
            logging.config.dictConfig(yaml.safe_load(f))
    else:
        logging.config.dictConfig(get_cli_log_config(level))
    logging.getLogger("exdos").setLevel(str(level or "INFO").upper())
