from __future__ import annotations

import json
import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Iterator, Optional
from uuid import uuid4

from app.settings import settings

# Correlation id for the run currently executing (one per CLI command / engine run).
run_id_var: ContextVar[str] = ContextVar("run_id", default="-")

_STD_ATTRS = set(vars(logging.makeLogRecord({})).keys()) | {"message", "asctime", "run_id"}


class RunIdFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = run_id_var.get()
        return True


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "at": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "service": settings.SERVICE_NAME,
            "run_id": getattr(record, "run_id", "-"),
            "msg": record.getMessage(),
        }
        for k, v in record.__dict__.items():
            if k not in _STD_ATTRS and not k.startswith("_"):
                payload[k] = v
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False, default=str)


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.addFilter(RunIdFilter())
    if (fmt or settings.LOG_FORMAT) == "text":
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s [%(run_id)s] %(message)s"))
    else:
        handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel((level or settings.LOG_LEVEL).upper())


@contextmanager
def run_context(run_id: Optional[str] = None) -> Iterator[str]:
    """Bind a correlation id to every log line emitted inside the block."""
    rid = run_id or str(uuid4())
    token = run_id_var.set(rid)
    try:
        yield rid
    finally:
        run_id_var.reset(token)
