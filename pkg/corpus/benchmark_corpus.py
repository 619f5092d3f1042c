# corpus/benchmark_corpus.py
# One JSONL record per note:
#   {"id": "4", "title": "...", "note_text": "...",
#    "gold": [{"diagnosis": "Facial spasm", "primary_code": "G5139", "alternate_codes": []}]}
import re
import json
import logging
from dataclasses import dataclass
from typing import Tuple

from catalog.icd_catalog import normalize_code, display_code
from schemas.output_schema import render_document
from utils.exceptions import CorpusError, ShapeError
from utils.helpers import split_lines

logger = logging.getLogger('medbench.corpus')

_HEADING = re.compile(r'^\s*diagnos[ie]s\s*:?\s*$', re.IGNORECASE)


@dataclass(frozen=True)
class GoldLabel:
    diagnosis: str
    primary_code: str
    alternate_codes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CaseNote:
    id: str
    title: str
    note_text: str
    gold: Tuple[GoldLabel, ...]


@dataclass(frozen=True)
class Corpus:
    notes: Tuple[CaseNote, ...]
    source_label: str = ''

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    def get(self, note_id):
        """Return the note with the given id, or None"""
        note_id = str(note_id)
        for note in self.notes:
            if note.id == note_id:
                return note
        return None


@dataclass
class CorpusValidationReport:
    """Gold codes absent from a catalog, as (note id, raw code) pairs"""
    missing: list

    @property
    def clean(self):
        return not self.missing


def acceptable_codes(label):
    """Every raw code that satisfies a gold slot (primary first)"""
    return (label.primary_code,) + tuple(label.alternate_codes)


def _parse_code(value, record_id, field_name):
    try:
        return normalize_code(value)
    except ShapeError:
        raise CorpusError(f"{field_name} {value!r} is not a diagnostic code", record_id)


def _parse_record(data):
    if not isinstance(data, dict):
        raise CorpusError(f"record must be an object, got {type(data).__name__}")

    if data.get('id') in (None, ''):
        raise CorpusError("record has no id")
    record_id = str(data['id'])

    note_text = data.get('note_text')
    if not isinstance(note_text, str) or not note_text.strip():
        raise CorpusError("note_text is missing or empty", record_id)

    gold_data = data.get('gold')
    if not isinstance(gold_data, list) or not gold_data:
        raise CorpusError("gold labels are missing", record_id)

    gold = []
    for item in gold_data:
        if not isinstance(item, dict):
            raise CorpusError("gold label must be an object", record_id)
        diagnosis = item.get('diagnosis')
        if not isinstance(diagnosis, str) or not diagnosis.strip():
            raise CorpusError("gold diagnosis is empty", record_id)
        if 'primary_code' not in item:
            raise CorpusError(f"gold label {diagnosis!r} has no primary_code", record_id)
        alternates = item.get('alternate_codes') or []
        gold.append(GoldLabel(
            diagnosis=diagnosis,
            primary_code=_parse_code(item['primary_code'], record_id, 'primary_code'),
            alternate_codes=tuple(_parse_code(code, record_id, 'alternate_code')
                                  for code in alternates),
        ))

    return CaseNote(
        id=record_id,
        title=str(data.get('title') or ''),
        note_text=note_text,
        gold=tuple(gold),
    )


def parse_corpus(text, source='<memory>'):
    """Parse corpus JSONL text

    Raises:
        CorpusError: Malformed JSON, a record violating the format or a duplicate id
    """
    notes = []
    seen = set()
    for line_number, line in enumerate(split_lines(text), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{source} line {line_number}: invalid JSON ({e.msg})")

        note = _parse_record(data)
        if note.id in seen:
            raise CorpusError("duplicate id", note.id)
        seen.add(note.id)
        notes.append(note)

    return Corpus(notes=tuple(notes), source_label=f"{source} ({len(notes)} notes)")


def load_corpus(path):
    """Load the benchmark corpus from a JSONL file

    Args:
        path (str): Path to the corpus file

    Returns:
        Corpus: Notes in file order, note_text untouched

    Raises:
        CorpusError: A record is malformed; the message names its id
    """
    with open(path, 'r', encoding='utf-8', newline='') as f:
        text = f.read()
    corpus = parse_corpus(text, source=path)
    logger.info(f"Loaded {len(corpus)} notes from {path}")
    return corpus


def corpus_records(corpus):
    """Corpus as plain records in the on-disk key order"""
    return [
        {
            'id': note.id,
            'title': note.title,
            'note_text': note.note_text,
            'gold': [
                {
                    'diagnosis': label.diagnosis,
                    'primary_code': label.primary_code,
                    'alternate_codes': list(label.alternate_codes),
                }
                for label in note.gold
            ],
        }
        for note in corpus
    ]


def save_corpus(corpus, path):
    """Write a corpus in the same JSONL format load_corpus reads"""
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for record in corpus_records(corpus):
            f.write(json.dumps(record, ensure_ascii=False) + '\n')


def validate_corpus(corpus, catalog):
    """List every gold code (primary and alternates) absent from the catalog

    Args:
        corpus (Corpus): Loaded corpus
        catalog (IcdCatalog): Parsed catalog

    Returns:
        CorpusValidationReport: Empty when every gold code is present
    """
    missing = []
    for note in corpus:
        for label in note.gold:
            for code in acceptable_codes(label):
                if catalog.lookup(code) is None:
                    missing.append((note.id, code))

    if missing:
        logger.warning(f"{len(missing)} gold codes missing from catalog {catalog.source_label}")
    return CorpusValidationReport(missing=missing)


def gold_output(note, variant):
    """The response a perfect model would give for a note

    Primary codes in dotted form and the gold diagnoses verbatim, with the
    note embedded as original_document.
    """
    codes = [display_code(label.primary_code) for label in note.gold]
    diagnoses = [label.diagnosis for label in note.gold]
    return render_document(variant, note.note_text, codes, diagnoses)


def extract_diagnosis_lines(note_text):
    """Lines listed under the note's final "Diagnosis" heading

    Returns an empty list when the note has no such heading.
    """
    lines = split_lines(note_text)
    heading = None
    for position, line in enumerate(lines):
        if _HEADING.match(line):
            heading = position

    if heading is None:
        return []

    return [line.strip() for line in lines[heading + 1:] if line.strip()]
