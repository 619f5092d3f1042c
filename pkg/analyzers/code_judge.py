# analyzers/code_judge.py
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from analyzers.similarity import string_similarity, normalize_text
from catalog.icd_catalog import normalize_code
from corpus.benchmark_corpus import acceptable_codes
from utils.exceptions import ShapeError

logger = logging.getLogger('medbench.analyzer.codes')

DEFAULT_MATCH_THRESHOLD = 0.8


class CodeClass(str, Enum):
    CORRECT = 'correct'
    PARTIALLY_CORRECT = 'partially_correct'
    VALID_BUT_WRONG = 'valid_but_wrong'
    LOOKS_LIKE_CODE = 'looks_like_code'
    NOT_CODE_LIKE = 'not_code_like'
    BLANK = 'blank'


class CodeVerdict(str, Enum):
    EXACT_GOLD = 'exact_gold'
    CATEGORY_GOLD = 'category_gold'
    IN_CATALOG_NOT_GOLD = 'in_catalog_not_gold'
    SHAPED_NOT_IN_CATALOG = 'shaped_not_in_catalog'
    NOT_SHAPED = 'not_shaped'


@dataclass(frozen=True)
class CodeEntry:
    predicted: str
    verdict: CodeVerdict
    normalized: Optional[str] = None
    in_catalog: bool = False

    def to_record(self):
        return {
            'predicted': self.predicted,
            'verdict': self.verdict.value,
            'normalized': self.normalized,
            'in_catalog': self.in_catalog,
        }

    @classmethod
    def from_record(cls, record):
        return cls(record['predicted'], CodeVerdict(record['verdict']),
                   record.get('normalized'), record.get('in_catalog', False))


@dataclass(frozen=True)
class CodeJudgment:
    code_class: CodeClass
    per_code: Tuple[CodeEntry, ...] = ()

    @property
    def code_like(self):
        """At least one entry has the shape of a code"""
        return any(entry.verdict is not CodeVerdict.NOT_SHAPED for entry in self.per_code)


@dataclass
class DiagnosisMatches:
    matched: List[Tuple[str, str]] = field(default_factory=list)
    missed: List[str] = field(default_factory=list)
    spurious: List[str] = field(default_factory=list)

    @property
    def recall(self):
        total = len(self.matched) + len(self.missed)
        return len(self.matched) / total if total else None

    @property
    def precision(self):
        total = len(self.matched) + len(self.spurious)
        return len(self.matched) / total if total else None

    def to_record(self):
        return {
            'matched': [list(pair) for pair in self.matched],
            'missed': list(self.missed),
            'spurious': list(self.spurious),
        }

    @classmethod
    def from_record(cls, record):
        return cls([tuple(pair) for pair in record.get('matched', [])],
                   list(record.get('missed', [])), list(record.get('spurious', [])))


def _entries(predicted):
    entries = []
    for item in predicted or []:
        text = item if isinstance(item, str) else str(item)
        text = text.strip()
        if text:
            entries.append(text)
    return entries


def judge_codes(predicted, gold, catalog):
    """Classify the predicted code list of one response

    Args:
        predicted (list): Code strings as the model wrote them
        gold (list): GoldLabel objects of the note
        catalog (IcdCatalog): Code universe for existence checks

    Returns:
        CodeJudgment: One class for the response plus a verdict per entry
    """
    entries = _entries(predicted)
    if not entries:
        return CodeJudgment(CodeClass.BLANK)

    slots = [set(acceptable_codes(label)) for label in gold]
    accepted = set().union(*slots) if slots else set()
    categories = {code[:3] for code in accepted}

    per_code = []
    for text in entries:
        try:
            raw = normalize_code(text)
        except ShapeError:
            per_code.append(CodeEntry(text, CodeVerdict.NOT_SHAPED))
            continue

        in_catalog = raw in catalog.by_raw
        if raw in accepted:
            verdict = CodeVerdict.EXACT_GOLD
        elif raw[:3] in categories:
            verdict = CodeVerdict.CATEGORY_GOLD
        elif in_catalog:
            verdict = CodeVerdict.IN_CATALOG_NOT_GOLD
        else:
            verdict = CodeVerdict.SHAPED_NOT_IN_CATALOG
        per_code.append(CodeEntry(text, verdict, raw, in_catalog))

    exact = {entry.normalized for entry in per_code if entry.verdict is CodeVerdict.EXACT_GOLD}
    all_exact = all(entry.verdict is CodeVerdict.EXACT_GOLD for entry in per_code)
    every_slot = all(slot & exact for slot in slots)

    if exact and all_exact and every_slot:
        code_class = CodeClass.CORRECT
    elif exact:
        code_class = CodeClass.PARTIALLY_CORRECT
    elif any(entry.in_catalog for entry in per_code):
        code_class = CodeClass.VALID_BUT_WRONG
    elif any(entry.verdict is not CodeVerdict.NOT_SHAPED for entry in per_code):
        code_class = CodeClass.LOOKS_LIKE_CODE
    else:
        code_class = CodeClass.NOT_CODE_LIKE

    return CodeJudgment(code_class, tuple(per_code))


def diagnoses_match(predicted, gold, threshold=DEFAULT_MATCH_THRESHOLD):
    """Match rule for two already-normalized diagnosis texts"""
    if predicted == gold or gold in predicted or predicted in gold:
        return True
    return string_similarity(predicted, gold) >= threshold


def judge_diagnoses(predicted, gold, threshold=DEFAULT_MATCH_THRESHOLD):
    """One-to-one matching of predicted diagnoses against the gold labels

    Gold labels are taken in order; each takes the first still-unused
    prediction that matches it.

    Args:
        predicted (list): Diagnosis strings from the response
        gold (list): GoldLabel objects of the note
        threshold (float, optional): Minimum similarity for a fuzzy match

    Returns:
        DiagnosisMatches: matched (prediction, gold) pairs, missed gold, spurious predictions
    """
    candidates = []
    for text in predicted or []:
        text = text if isinstance(text, str) else str(text)
        normalized = normalize_text(text)
        if normalized:
            candidates.append((text, normalized))

    used = set()
    result = DiagnosisMatches()
    for label in gold:
        target = normalize_text(label.diagnosis)
        for position, (text, normalized) in enumerate(candidates):
            if position in used:
                continue
            if diagnoses_match(normalized, target, threshold):
                used.add(position)
                result.matched.append((text, label.diagnosis))
                break
        else:
            result.missed.append(label.diagnosis)

    result.spurious = [text for position, (text, _) in enumerate(candidates) if position not in used]
    return result
