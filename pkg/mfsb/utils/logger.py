"""
Structured Logging with structlog
Provides JSON-formatted logs with context for training and experiment runs
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import structlog


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None) -> structlog.BoundLogger:
    """
    Configure structured logging for the package

    Args:
        log_level: Minimum log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional path of a persistent log file

    Returns:
        Configured logger instance
    """

    # stdout carries result tables, so logs go to stderr
    root_logger = logging.getLogger()
    ours = [h for h in root_logger.handlers if getattr(h, "_mfsb", False)]

    # Avoid duplicate handlers on reconfiguration; follow a replaced sys.stderr
    streams = [h for h in ours if not isinstance(h, logging.FileHandler)]
    if streams:
        streams[0].setStream(sys.stderr)
    else:
        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(logging.Formatter("%(message)s"))
        stream_handler._mfsb = True  # type: ignore[attr-defined]
        root_logger.addHandler(stream_handler)

    if log_file and not any(isinstance(h, logging.FileHandler) for h in ours):
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter("%(message)s"))
        file_handler._mfsb = True  # type: ignore[attr-defined]
        root_logger.addHandler(file_handler)

    root_logger.setLevel(getattr(logging, log_level.upper()))

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer()
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    return structlog.get_logger("mfsb")


def log_training_step(logger: structlog.BoundLogger, step: int, total: float, **kwargs):
    """Log one optimizer step"""
    logger.debug(
        "training_step",
        step=step,
        total=round(total, 6),
        **kwargs
    )


def log_epoch(
    logger: structlog.BoundLogger,
    epoch: int,
    mean_total: float,
    **kwargs
):
    """Log end of a training epoch"""
    logger.info(
        "epoch_complete",
        epoch=epoch,
        mean_total=round(mean_total, 6),
        **kwargs
    )


def log_run(
    logger: structlog.BoundLogger,
    config_hash: str,
    status: str,
    **kwargs
):
    """Log experiment run outcome"""
    logger.info(
        "experiment_run",
        config_hash=config_hash,
        status=status,
        **kwargs
    )


def log_error(
    logger: structlog.BoundLogger,
    error_type: str,
    message: str,
    **kwargs
):
    """Log error with context"""
    logger.error(
        "application_error",
        error_type=error_type,
        message=message,
        **kwargs
    )


# Global logger instance
app_logger = setup_logging()
