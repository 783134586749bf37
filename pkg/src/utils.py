import logging
import os
import re
import time
from contextlib import contextmanager

import coloredlogs

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

logger = logging.getLogger(__name__)


def setup_logging(level=None):
    """Install colored console logging on the root logger.

    Args:
        level: Level name or number. Falls back to TUBETRACK_LOG_LEVEL, then INFO.

    Returns:
        The numeric level that was installed.
    """
    if level is None:
        level = os.getenv("TUBETRACK_LOG_LEVEL", "INFO")
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO
    coloredlogs.install(level=level, fmt=LOG_FORMAT)
    logging.getLogger().setLevel(level)
    return level


def progress_enabled():
    """Progress bars are shown only when INFO messages would be shown."""
    return logging.getLogger().getEffectiveLevel() <= logging.INFO


@contextmanager
def stage_timer(stage, summary=None):
    """Log the wall-clock duration of a pipeline stage.

    Args:
        stage: Stage name used in the log line.
        summary: Optional dict filled in by the caller; its items are appended to the line.

    Examples:
        with stage_timer("filters", summary) as info:
            info["voxels"] = 1024
    """
    info = {} if summary is None else summary
    start = time.perf_counter()
    logger.info("stage %s started", stage)
    yield info
    elapsed = time.perf_counter() - start
    details = " ".join(f"{key}={value}" for key, value in info.items())
    logger.info("stage %s finished in %.2fs %s", stage, elapsed, details)


def resolve_threads(threads=None):
    """Number of worker threads: explicit value, else TUBETRACK_THREADS, else CPU count."""
    if threads is None:
        env = os.getenv("TUBETRACK_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def sanitize_filename(filename: str) -> str:
    """Turn a free-form label into a safe file stem.

    Args:
        filename: Label such as a pipeline mode or run name.

    Returns:
        The sanitized name; extension characters are kept alphanumeric.

    Raises:
        TypeError: If filename is not a string.

    Examples:
        sanitize_filename("tsp+cyl seed 3.csv")
        'tsp_cyl_seed_3.csv'
    """
    if not isinstance(filename, str):
        raise TypeError("filename must be a string")

    if not filename:
        return filename

    if "." in filename:
        name, extension = filename.rsplit(".", 1)
    else:
        name, extension = filename, ""

    # Dashes are allowed so dates and seeds stay readable
    sanitized_name = re.sub(r"[^a-zA-Z0-9_\-]", "_", name)
    sanitized_name = re.sub(r"_+", "_", sanitized_name).strip("_")
    sanitized_extension = re.sub(r"[^a-zA-Z0-9]", "", extension)

    if sanitized_extension:
        return f"{sanitized_name}.{sanitized_extension}"
    return sanitized_name
