import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

from loguru import logger

from src.schemas.exceptions import BackendError

# ──────────────────────────────────────────────
# Atomic file output
# ──────────────────────────────────────────────

def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """
    Write `data` to `path` through a temp file in the same directory and
    rename it into place, so readers never see a partial file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise BackendError(f"cannot write {path}: {e.strerror or e}")


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_bytes(path: Path | str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise BackendError(f"cannot read {what} '{path}': {e.strerror or e}")


def read_text(path: Path | str, what: str) -> str:
    try:
        return read_bytes(path, what).decode("utf-8")
    except UnicodeDecodeError as e:
        raise BackendError(f"{what} '{path}' is not valid UTF-8: {e}")

# ──────────────────────────────────────────────
# Logging
# ──────────────────────────────────────────────

def configure_logging(level: str = "INFO", run_log: Optional[Path] = None) -> None:
    """
    Install the stderr sink and, optionally, a run-log file sink.

    Records bound with `run_log_only=True` skip stderr.
    """
    logger.remove()
    logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {message}",
        filter=lambda record: not record["extra"].get("run_log_only", False),
    )
    if run_log is not None:
        run_log.parent.mkdir(parents=True, exist_ok=True)
        logger.add(run_log, level="DEBUG", encoding="utf-8")
