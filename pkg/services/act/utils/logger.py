"""
Logging Utilities Module

Structured logging configuration and utilities.

Industry Standards:
    - Structured logging (JSON) in production
    - Human-readable logs during development
    - Context injection (seed, stage, variant)
"""

import logging
import sys
from typing import Any, Dict, Optional

from pythonjsonlogger import jsonlogger

from ..core.config import settings

CONTEXT_FIELDS = ("seed", "stage", "variant", "epoch")


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    """
    Custom JSON Log Formatter

    Formats log records as JSON with service and run context.
    """

    def add_fields(
        self,
        log_record: Dict[str, Any],
        record: logging.LogRecord,
        message_dict: Dict[str, Any],
    ) -> None:
        super().add_fields(log_record, record, message_dict)

        log_record["timestamp"] = self.formatTime(record, "%Y-%m-%dT%H:%M:%S.%fZ")
        log_record["level"] = record.levelname
        log_record["service"] = settings.SERVICE_NAME
        log_record["environment"] = settings.ENVIRONMENT

        for field in CONTEXT_FIELDS:
            if hasattr(record, field):
                log_record[field] = getattr(record, field)


def setup_logging(level: Optional[str] = None, json_logs: Optional[bool] = None) -> None:
    """
    Setup Application Logging

    Configures the root logger with a single stderr handler; stdout is left
    for command output.

    Args:
        level: Log level override (defaults to settings.LOG_LEVEL)
        json_logs: Force JSON formatting (defaults to settings.use_json_logs)

    Example:
        ```python
        from services.act.utils.logger import setup_logging
        setup_logging()
        logger = logging.getLogger(__name__)
        logger.info("Run started", extra={"seed": 0})
        ```
    """
    level = level or settings.LOG_LEVEL
    json_logs = settings.use_json_logs if json_logs is None else json_logs

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stderr)

    if json_logs:
        formatter = CustomJsonFormatter("%(timestamp)s %(level)s %(name)s %(message)s")
    else:
        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    logging.debug(
        f"Logging configured: level={level}, json={json_logs}, "
        f"environment={settings.ENVIRONMENT}"
    )

