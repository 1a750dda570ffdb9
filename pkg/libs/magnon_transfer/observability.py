from __future__ import annotations

import contextvars
import json
import logging
import os
import re
import sqlite3
import sys
import threading
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

_RUN_ID: contextvars.ContextVar[str] = contextvars.ContextVar("magnon_transfer_run_id", default="")
_SCENARIO: contextvars.ContextVar[str] = contextvars.ContextVar("magnon_transfer_scenario", default="")

_CONFIG_LOCK = threading.Lock()
_MAX_LOG_QUERY_LIMIT = 1000

_RESERVED_LOG_RECORD_KEYS = {
    "args",
    "asctime",
    "created",
    "exc_info",
    "exc_text",
    "filename",
    "funcName",
    "levelname",
    "levelno",
    "lineno",
    "module",
    "msecs",
    "message",
    "msg",
    "name",
    "pathname",
    "process",
    "processName",
    "relativeCreated",
    "stack_info",
    "taskName",
    "thread",
    "threadName",
    "run_id",
    "scenario",
    "app",
}


def _normalize_id(value: str, *, fallback: str = "") -> str:
    cleaned = re.sub(r"[^a-zA-Z0-9_\-]", "", str(value or ""))
    return cleaned[:64] or fallback


def get_run_id() -> str:
    return _RUN_ID.get().strip()


def get_scenario() -> str:
    return _SCENARIO.get().strip()


@contextmanager
def bind_log_context(*, run_id: Optional[str] = None, scenario: Optional[str] = None) -> Iterator[None]:
    token_run = None
    token_scenario = None

    if run_id is not None:
        token_run = _RUN_ID.set(_normalize_id(run_id))
    if scenario is not None:
        token_scenario = _SCENARIO.set(_normalize_id(scenario))

    try:
        yield
    finally:
        if token_run is not None:
            _RUN_ID.reset(token_run)
        if token_scenario is not None:
            _SCENARIO.reset(token_scenario)


def _log_db_path() -> str:
    return os.getenv("LOG_DB_PATH", "").strip()


def _timestamp(record: logging.LogRecord) -> str:
    return datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(timespec="milliseconds")


def _extract_extra(record: logging.LogRecord) -> Dict[str, Any]:
    payload: Dict[str, Any] = {}
    for key, value in record.__dict__.items():
        if key in _RESERVED_LOG_RECORD_KEYS or key.startswith("_"):
            continue
        try:
            json.dumps(value)
            payload[key] = value
        except (TypeError, ValueError):
            payload[key] = str(value)
    return payload


class _ContextFilter(logging.Filter):
    def __init__(self, app_name: str) -> None:
        super().__init__()
        self._app_name = app_name

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = get_run_id()
        record.scenario = get_scenario()
        record.app = self._app_name
        return True


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "ts": _timestamp(record),
            "level": record.levelname,
            "app": getattr(record, "app", ""),
            "logger": record.name,
            "message": record.getMessage(),
            "run_id": getattr(record, "run_id", ""),
            "scenario": getattr(record, "scenario", ""),
        }
        extra = _extract_extra(record)
        if extra:
            payload["extra"] = extra
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


class _SqliteLogHandler(logging.Handler):
    def __init__(self, db_path: str) -> None:
        super().__init__()
        self._db_path = Path(db_path)
        self._db_path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(str(self._db_path), timeout=8, check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._lock = threading.Lock()
        self._init_db()

    def _init_db(self) -> None:
        with self._conn:
            self._conn.execute(
                """
                CREATE TABLE IF NOT EXISTS run_logs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    created_at TEXT NOT NULL,
                    app TEXT NOT NULL,
                    level TEXT NOT NULL,
                    logger TEXT NOT NULL,
                    message TEXT NOT NULL,
                    run_id TEXT NOT NULL,
                    scenario TEXT NOT NULL,
                    extra_json TEXT NOT NULL
                )
                """
            )
            self._conn.execute("CREATE INDEX IF NOT EXISTS idx_run_logs_run_id ON run_logs(run_id)")

    def emit(self, record: logging.LogRecord) -> None:
        try:
            payload = _extract_extra(record)
            if record.exc_info:
                payload["exception"] = logging.Formatter().formatException(record.exc_info)
            row = (
                _timestamp(record),
                str(getattr(record, "app", "")),
                record.levelname,
                record.name,
                record.getMessage(),
                str(getattr(record, "run_id", "")),
                str(getattr(record, "scenario", "")),
                json.dumps(payload),
            )
            with self._lock:
                with self._conn:
                    self._conn.execute(
                        "INSERT INTO run_logs (created_at, app, level, logger, message, run_id, scenario, extra_json) "
                        "VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                        row,
                    )
        except Exception:
            self.handleError(record)

    def close(self) -> None:
        with self._lock:
            self._conn.close()
        super().close()


def configure_logging(app_name: str) -> None:
    """JSON lines on stderr; records are also stored in SQLite when LOG_DB_PATH is set."""
    normalized = _normalize_id(app_name, fallback="magnon_transfer")
    level_name = os.getenv("LOG_LEVEL", "INFO").upper()
    level = getattr(logging, level_name, logging.INFO)
    db_path = _log_db_path()
    signature = (normalized, level, db_path)

    with _CONFIG_LOCK:
        root = logging.getLogger()
        if getattr(root, "_magnon_transfer_signature", None) == signature:
            return

        for handler in list(root.handlers):
            root.removeHandler(handler)
            handler.close()

        context_filter = _ContextFilter(normalized)

        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setLevel(level)
        stream_handler.addFilter(context_filter)
        stream_handler.setFormatter(_JsonFormatter())
        root.addHandler(stream_handler)

        if db_path:
            sqlite_handler = _SqliteLogHandler(db_path)
            sqlite_handler.setLevel(level)
            sqlite_handler.addFilter(context_filter)
            root.addHandler(sqlite_handler)

        root.setLevel(level)
        root._magnon_transfer_signature = signature


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


def query_logs(
    *,
    limit: int = 200,
    run_id: str = "",
    level: str = "",
    keyword: str = "",
) -> List[Dict[str, Any]]:
    db_path = _log_db_path()
    if not db_path or not Path(db_path).exists():
        return []

    safe_limit = max(1, min(int(limit or 200), _MAX_LOG_QUERY_LIMIT))
    clauses: List[str] = []
    params: List[Any] = []

    if run_id.strip():
        clauses.append("run_id = ?")
        params.append(_normalize_id(run_id))
    if level.strip():
        clauses.append("level = ?")
        params.append(level.strip().upper())
    if keyword.strip():
        clauses.append("message LIKE ?")
        params.append(f"%{keyword.strip()}%")

    where = ("WHERE " + " AND ".join(clauses)) if clauses else ""
    query = (
        "SELECT id, created_at, app, level, logger, message, run_id, scenario, extra_json "
        f"FROM run_logs {where} ORDER BY id DESC LIMIT ?"
    )
    params.append(safe_limit)

    conn = sqlite3.connect(db_path, timeout=8)
    conn.row_factory = sqlite3.Row
    try:
        rows = conn.execute(query, params).fetchall()
    finally:
        conn.close()

    items: List[Dict[str, Any]] = []
    for row in rows:
        item = dict(row)
        try:
            item["extra"] = json.loads(item.pop("extra_json") or "{}")
        except ValueError:
            item["extra"] = {}
        items.append(item)
    return items
