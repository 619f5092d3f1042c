# utils/helpers.py
import os
import json
import hashlib
import logging
import platform
from datetime import timedelta

import humanize
import psutil

logger = logging.getLogger('medbench.helpers')


def get_system_info():
    """Get a snapshot of the host the benchmark runs on

    Returns:
        dict: Host information (platform, CPU and memory figures)
    """
    try:
        memory = psutil.virtual_memory()
        return {
            'platform': platform.system(),
            'platform_release': platform.release(),
            'architecture': platform.machine(),
            'processor': platform.processor(),
            'python_version': platform.python_version(),
            'cpu_count_logical': psutil.cpu_count(logical=True),
            'cpu_count_physical': psutil.cpu_count(logical=False),
            'memory_total': memory.total,
            'memory_total_human': humanize.naturalsize(memory.total, binary=True),
        }
    except Exception as e:
        logger.error(f"Error getting system info: {str(e)}")
        return {
            'platform': platform.system(),
            'python_version': platform.python_version(),
        }


def dumps_record(record):
    """Serialize one record as a single JSONL line (without newline)

    Keys are sorted so identical records always produce identical bytes.
    """
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def append_jsonl(handle, record):
    """Append one record to an open JSONL file and force it to disk

    Args:
        handle (file): Text file opened for appending
        record (dict): JSON-serializable record
    """
    handle.write(dumps_record(record) + '\n')
    handle.flush()
    os.fsync(handle.fileno())


def read_jsonl(path):
    """Read every complete record of a JSONL file

    A truncated final line (left behind by a killed writer) is skipped.

    Args:
        path (str): Path to the file

    Returns:
        list: Decoded records in file order
    """
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                if not line.endswith('\n'):
                    logger.warning(f"Ignoring truncated final record in {path}")
                    break
                raise
    return records


def text_hash(text):
    """SHA-256 of a text, used to fingerprint prompts"""
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def split_lines(text):
    """Split text on line feeds only, dropping a trailing carriage return from each line

    Unicode separators (U+2028, U+2029, NEL) stay inside their line.
    A final newline does not open an extra empty line.
    """
    if not text:
        return []
    lines = text.split('\n')
    if lines[-1] == '':
        lines.pop()
    return [line[:-1] if line.endswith('\r') else line for line in lines]


def human_duration(seconds):
    """Format seconds for reports, e.g. '7.48 seconds' or '2 minutes'"""
    if seconds is None:
        return 'n/a'
    if seconds < 60:
        return f"{seconds:.2f} seconds"
    return humanize.naturaldelta(timedelta(seconds=seconds))


def human_count(value):
    """Format an integer with thousands separators"""
    return humanize.intcomma(value)


def percent(rate):
    """Format a rate in [0, 1] as a percentage with one decimal"""
    if rate is None:
        return 'n/a'
    return f"{rate * 100:.1f}%"
