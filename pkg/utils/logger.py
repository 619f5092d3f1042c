# utils/logger.py
import os
import sys
import logging
import logging.handlers

from utils.exceptions import RunSetupError

LOGGER_NAME = 'medbench'
FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
CONSOLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
RUN_FORMAT = '%(message)s'


def setup_logging(log_level=None, log_file=None):
    """Set up logging configuration

    Args:
        log_level (str, optional): Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file (str, optional): Path to log file; console only when empty

    Returns:
        logging.Logger: Configured logger
    """
    if log_level is None:
        log_level = os.getenv('MEDBENCH_LOG_LEVEL', 'INFO').upper()

    if log_file is None:
        log_file = os.getenv('MEDBENCH_LOG_FILE', '')

    root_logger = logging.getLogger()

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    numeric_level = getattr(logging, log_level, None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO
    root_logger.setLevel(numeric_level)

    if log_file:
        log_dir = os.path.dirname(log_file)
        try:
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                log_file,
                maxBytes=10*1024*1024,  # 10 MB
                backupCount=5
            )
            file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
            root_logger.addHandler(file_handler)
        except (IOError, PermissionError) as e:
            print(f"Warning: Could not create log file at {log_file}: {e}", file=sys.stderr)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    root_logger.addHandler(console_handler)

    logger = logging.getLogger(LOGGER_NAME)
    logger.debug(f"Logging initialized at level {log_level}")

    return logger


class _FlushingStreamHandler(logging.StreamHandler):
    """Stream handler that writes through to the stream on every record"""

    def emit(self, record):
        super().emit(record)
        self.flush()


class _DurableFileHandler(logging.FileHandler):
    """Append-only file handler that fsyncs every record"""

    def emit(self, record):
        super().emit(record)
        if self.stream is not None:
            self.stream.flush()
            os.fsync(self.stream.fileno())


def tee_log(sink, run_id='run', stream=None):
    """Create the run logger that mirrors every line to stdout and a file

    Both handlers share one formatter, so the file and the terminal receive
    identical lines in identical order.

    Args:
        sink (str): Path of the log file (opened in append mode)
        run_id (str, optional): Suffix of the logger name
        stream (file, optional): Terminal stream, defaults to sys.stdout

    Returns:
        logging.Logger: Logger writing to both sinks

    Raises:
        RunSetupError: The sink cannot be opened
    """
    logger = logging.getLogger(f'{LOGGER_NAME}.run.{run_id}')
    close_tee(logger)

    try:
        file_handler = _DurableFileHandler(sink, mode='a', encoding='utf-8')
    except OSError as e:
        raise RunSetupError(f"cannot open run log {sink}: {e}") from e

    formatter = logging.Formatter(RUN_FORMAT)
    file_handler.setFormatter(formatter)
    console_handler = _FlushingStreamHandler(stream or sys.stdout)
    console_handler.setFormatter(formatter)

    logger.addHandler(console_handler)
    logger.addHandler(file_handler)
    logger.setLevel(logging.INFO)
    logger.propagate = False
    return logger


def close_tee(logger):
    """Detach and close the handlers of a run logger"""
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

