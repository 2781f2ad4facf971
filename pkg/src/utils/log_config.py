"""
Process-wide logging setup
"""
import json
import logging
from datetime import datetime, timezone

from src.config.experiment_config import LoggingConfig


class JsonFormatter(logging.Formatter):
    """One JSON object per record"""

    def format(self, record: logging.LogRecord) -> str:
        event = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            event["exception"] = self.formatException(record.exc_info)
        return json.dumps(event)


def configure_logging(config: LoggingConfig) -> None:
    root = logging.getLogger()
    level = "WARNING" if config.log_level == "WARN" else config.log_level
    root.setLevel(getattr(logging, level))

    handler = logging.StreamHandler()
    if config.structured_logging:
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.handlers = [handler]
