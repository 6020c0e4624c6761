import logging
import sys
import os
from logging.handlers import RotatingFileHandler
from core.config import settings, Settings


def setup_logging(config: Settings | None = None):
    """
    配置全局日志
    - 控制台输出 (stderr，stdout 留给产物路径)
    - 文件输出 (按大小轮转，logging_file 为空时关闭)
    - 统一格式
    """
    config = config or settings
    log_level = config.logging_level
    log_format = config.logging_format
    log_datefmt = config.logging_datefmt

    root_logger = logging.getLogger()
    level = getattr(logging, log_level.upper(), logging.INFO)
    root_logger.setLevel(level)

    # 清除现有的 handlers
    root_logger.handlers = []

    formatter = logging.Formatter(fmt=log_format, datefmt=log_datefmt)

    # 1. 控制台 Handler
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    # 2. 文件 Handler
    log_file = config.logging_file
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)

        # 10MB per file, max 5 backups
        file_handler = RotatingFileHandler(
            log_file, maxBytes=10*1024*1024, backupCount=5, encoding="utf-8"
        )
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)
