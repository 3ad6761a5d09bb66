"""Shared logging configuration with rotation for explorer runs."""

import logging
import os
from logging.handlers import RotatingFileHandler

ROOT_LOGGER = "explorer"

_CONFIGURED = False


def get_logger(module: str) -> logging.Logger:
    """Child logger of the ``explorer`` tree, e.g. ``explorer.irm``."""
    return logging.getLogger(f"{ROOT_LOGGER}.{module}")


def setup_logging(service_name: str, cfg: dict) -> logging.Logger:
    """Attach file rotation and console output to the ``explorer`` logger.

    Returns the logger for *service_name*.  Handlers are attached once per
    process; a ``logging.directory`` of ``null`` skips the file handler.
    """
    global _CONFIGURED

    log_cfg = cfg.get("logging", {}) or {}
    level = getattr(logging, str(log_cfg.get("level", "INFO")).upper(), logging.INFO)
    log_dir = log_cfg.get("directory", "./logs")
    max_bytes = int(log_cfg.get("max_bytes", 10 * 1024 * 1024))
    backup_count = int(log_cfg.get("backup_count", 5))

    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(level)

    if not _CONFIGURED:
        fmt = logging.Formatter(
            "%(asctime)s [%(name)s] %(levelname)s  %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
            fh = RotatingFileHandler(
                os.path.join(log_dir, f"{service_name}.log"),
                maxBytes=max_bytes,
                backupCount=backup_count,
                encoding="utf-8",
            )
            fh.setLevel(level)
            fh.setFormatter(fmt)
            root.addHandler(fh)

        # Console handler (stderr)
        ch = logging.StreamHandler()
        ch.setLevel(level)
        ch.setFormatter(fmt)
        root.addHandler(ch)

        _CONFIGURED = True

    return logging.getLogger(f"{ROOT_LOGGER}.{service_name}")
