# catalog/icd_catalog.py
# Catalog lines read "CODE<whitespace>DESCRIPTION", e.g. "A051    Botulism food poisoning".
# Codes are kept undotted and uppercase; the display form has a dot after the third character.
import os
import re
import logging
from collections import Counter
from dataclasses import dataclass
from types import MappingProxyType
from typing import Optional

from utils.exceptions import CatalogParseError, ShapeError
from utils.helpers import split_lines

logger = logging.getLogger('medbench.catalog')

# letter, digit, then 1-5 letters or digits: 3 to 7 characters in total
CODE_PATTERN = re.compile(r'^[A-Z][0-9][A-Z0-9]{1,5}$')


@dataclass(frozen=True)
class IcdEntry:
    """One catalog line"""
    raw_code: str
    display_code: str
    description: str
    line_number: Optional[int] = None


@dataclass(frozen=True)
class CodeParts:
    """Positional components of a code: category, detail and extension"""
    category: str
    detail: str
    extension: Optional[str] = None

    def join(self):
        return self.category + self.detail + (self.extension or '')


def normalize_code(s):
    """Canonicalize dotted or undotted user input to the raw code form

    Args:
        s (str): Code text such as 'j02.0 ' or 'W01190A'

    Returns:
        str: Raw code, e.g. 'J020'

    Raises:
        ShapeError: The result does not satisfy the code grammar
    """
    if not isinstance(s, str):
        raise ShapeError(f"code must be text, got {type(s).__name__}")

    code = s.strip().upper()
    if len(code) > 3 and code[3] == '.':
        code = code[:3] + code[4:]

    if not CODE_PATTERN.match(code):
        raise ShapeError(f"not a diagnostic code: {s!r}")
    return code


def is_code_shaped(s):
    """True iff ``normalize_code`` accepts the text"""
    try:
        normalize_code(s)
        return True
    except ShapeError:
        return False


def display_code(raw_code):
    """Dotted form of a raw code (dot after the 3rd character when longer than 3)"""
    if len(raw_code) <= 3:
        return raw_code
    return f"{raw_code[:3]}.{raw_code[3:]}"


def decompose(raw_code):
    """Split a code into category (1-3), detail (4-6) and extension (7)

    Args:
        raw_code (str): Code in raw or dotted form

    Returns:
        CodeParts: The positional components

    Raises:
        ShapeError: The code violates the grammar
    """
    code = normalize_code(raw_code)
    extension = code[6] if len(code) == 7 else None
    return CodeParts(category=code[:3], detail=code[3:6], extension=extension)


def parse_catalog_line(line, line_number=None):
    """Parse one catalog line

    Args:
        line (str): Line text, with or without its line ending
        line_number (int, optional): 1-based position used in error reports

    Returns:
        IcdEntry: The parsed entry, or None for a blank line

    Raises:
        CatalogParseError: The first token is not a code or the description is empty
    """
    stripped = line.strip()
    if not stripped:
        return None

    parts = stripped.split(None, 1)
    token = parts[0]
    description = parts[1].strip() if len(parts) > 1 else ''

    try:
        raw_code = normalize_code(token)
    except ShapeError:
        raise CatalogParseError(f"invalid code {token!r}", line_number, line.rstrip('\r\n'))

    if not description:
        raise CatalogParseError(f"missing description for {raw_code}", line_number,
                                line.rstrip('\r\n'))

    return IcdEntry(
        raw_code=raw_code,
        display_code=display_code(raw_code),
        description=description,
        line_number=line_number,
    )


class IcdCatalog:
    """Immutable code universe parsed from one catalog file"""

    def __init__(self, entries, source_label='', line_count=0, skipped=0):
        """Initialize the catalog

        Args:
            entries (iterable): IcdEntry objects in file order, unique raw codes
            source_label (str): Provenance (file path and line count)
            line_count (int): Total lines read from the source
            skipped (int): Blank lines in the source
        """
        self._entries = tuple(entries)
        self._by_raw = MappingProxyType({entry.raw_code: entry for entry in self._entries})
        if len(self._by_raw) != len(self._entries):
            raise ValueError("catalog entries must have unique raw codes")
        self.source_label = source_label
        self.line_count = line_count
        self.skipped = skipped

    @property
    def entries(self):
        return self._entries

    @property
    def by_raw(self):
        return self._by_raw

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __contains__(self, code):
        try:
            return normalize_code(code) in self._by_raw
        except ShapeError:
            return False

    def lookup(self, s):
        """Exact lookup after normalization; None when the code is absent

        Raises:
            ShapeError: ``s`` is not code-shaped
        """
        return self._by_raw.get(normalize_code(s))

    def __repr__(self):
        return f"IcdCatalog({len(self)} entries from {self.source_label!r})"


def lookup(catalog, s):
    """Find the entry for a code; None (not found) is a value, not an error"""
    return catalog.lookup(s)


def parse_catalog(data, source='<memory>'):
    """Parse the full contents of a catalog file

    Errors are collected, never fatal. Duplicate codes keep the first
    occurrence and report the later ones.

    Args:
        data (str or bytes): File contents; bytes are decoded as UTF-8 (BOM tolerated)
        source (str, optional): Path or name for the provenance label

    Returns:
        tuple: (IcdCatalog, list of CatalogParseError)
    """
    if isinstance(data, bytes):
        try:
            data = data.decode('utf-8-sig')
        except UnicodeDecodeError as e:
            error = CatalogParseError(f"{source} is not valid UTF-8: {e}")
            return IcdCatalog([], source_label=f"{source} (undecodable)"), [error]
    elif data.startswith('﻿'):
        data = data[1:]

    lines = split_lines(data)
    entries = []
    errors = []
    first_seen = {}
    skipped = 0

    for line_number, line in enumerate(lines, start=1):
        try:
            entry = parse_catalog_line(line, line_number)
        except CatalogParseError as e:
            errors.append(e)
            continue

        if entry is None:
            skipped += 1
            continue

        if entry.raw_code in first_seen:
            errors.append(CatalogParseError(
                f"duplicate code {entry.raw_code} (first seen on line {first_seen[entry.raw_code]})",
                line_number, line))
            continue

        first_seen[entry.raw_code] = line_number
        entries.append(entry)

    label = f"{source} ({len(lines)} lines)"
    catalog = IcdCatalog(entries, source_label=label, line_count=len(lines), skipped=skipped)
    if errors:
        logger.warning(f"Catalog {source}: {len(errors)} lines rejected")
    return catalog, errors


def load_catalog(path):
    """Read and parse a catalog file from disk

    Args:
        path (str): Path to the catalog text file

    Returns:
        tuple: (IcdCatalog, list of CatalogParseError)
    """
    with open(path, 'rb') as f:
        data = f.read()
    catalog, errors = parse_catalog(data, source=os.path.abspath(path))
    logger.info(f"Loaded {len(catalog)} codes from {path}")
    return catalog, errors


def catalog_stats(catalog):
    """Summarize a catalog for the catalog-stats command

    Returns:
        dict: entry count, line accounting, code-length and first-letter histograms
    """
    lengths = Counter(len(entry.raw_code) for entry in catalog)
    letters = Counter(entry.raw_code[0] for entry in catalog)
    return {
        'source': catalog.source_label,
        'entries': len(catalog),
        'lines': catalog.line_count,
        'blank_lines': catalog.skipped,
        'by_length': dict(sorted(lengths.items())),
        'by_letter': dict(sorted(letters.items())),
    }
