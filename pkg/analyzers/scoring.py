# analyzers/scoring.py
import logging
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from analyzers.code_judge import (CodeClass, CodeEntry, CodeJudgment, CodeVerdict,
                                  DiagnosisMatches, judge_codes, judge_diagnoses,
                                  DEFAULT_MATCH_THRESHOLD)
from analyzers.similarity import string_similarity, normalize_text
from catalog.icd_catalog import normalize_code
from communication.inference_client import GenerationStatus
from schemas.output_schema import Violation, ValidationResult, validate_response, extract_fields
from utils.exceptions import EmptyRun, ShapeError

logger = logging.getLogger('medbench.analyzer.scoring')

DEFAULT_TRANSCRIPTION_THRESHOLD = 0.95

TAG_STRUCTURED_OUTPUT = 'structured_output'
TAG_TRANSCRIPTION = 'transcription'
TAG_CODE_HALLUCINATION = 'code_hallucination'
TAG_EXEMPLAR_COPY = 'exemplar_copy'
TAG_SYSTEM_FAILURE = 'system_failure'
ERROR_TAGS = (TAG_STRUCTURED_OUTPUT, TAG_TRANSCRIPTION, TAG_CODE_HALLUCINATION,
              TAG_EXEMPLAR_COPY, TAG_SYSTEM_FAILURE)

_HALLUCINATED = (CodeVerdict.SHAPED_NOT_IN_CATALOG, CodeVerdict.NOT_SHAPED)


@dataclass
class ResponseScore:
    """Everything measured about one model response"""
    note_id: str
    model: str
    strategy: str
    repetition: int
    status: GenerationStatus
    duration_s: float
    validation: ValidationResult
    transcription_similarity: Optional[float]
    code_judgment: CodeJudgment
    diagnosis_matches: DiagnosisMatches
    predicted_codes: List[str] = field(default_factory=list)
    predicted_diagnoses: List[str] = field(default_factory=list)
    leakage_flag: bool = False
    error_tags: List[str] = field(default_factory=list)
    detail: str = ''

    @property
    def code_class(self):
        return self.code_judgment.code_class

    def to_record(self):
        """Flat JSON-serializable record for scores.jsonl"""
        return {
            'note_id': self.note_id,
            'model': self.model,
            'strategy': self.strategy,
            'repetition': self.repetition,
            'status': self.status.value,
            'detail': self.detail,
            'duration_s': self.duration_s,
            'strict_valid': self.validation.strict_valid,
            'recovered': self.validation.recovered,
            'json_parsed': self.validation.json_parsed,
            'fence_stripped': self.validation.fence_stripped,
            'violations': [{'path': v.path, 'kind': v.kind} for v in self.validation.violations],
            'transcription_similarity': self.transcription_similarity,
            'code_class': self.code_class.value,
            'per_code': [entry.to_record() for entry in self.code_judgment.per_code],
            'diagnoses': self.diagnosis_matches.to_record(),
            'predicted_codes': list(self.predicted_codes),
            'predicted_diagnoses': list(self.predicted_diagnoses),
            'leakage_flag': self.leakage_flag,
            'error_tags': list(self.error_tags),
        }

    @classmethod
    def from_record(cls, record):
        validation = ValidationResult(
            strict_valid=record['strict_valid'],
            recovered=record['recovered'],
            violations=[Violation(v['path'], v['kind']) for v in record.get('violations', [])],
            json_parsed=record.get('json_parsed', False),
            fence_stripped=record.get('fence_stripped', False),
        )
        judgment = CodeJudgment(CodeClass(record['code_class']),
                                tuple(CodeEntry.from_record(e) for e in record.get('per_code', [])))
        return cls(
            note_id=str(record['note_id']),
            model=record['model'],
            strategy=record['strategy'],
            repetition=record.get('repetition', 0),
            status=GenerationStatus(record['status']),
            duration_s=record['duration_s'],
            validation=validation,
            transcription_similarity=record.get('transcription_similarity'),
            code_judgment=judgment,
            diagnosis_matches=DiagnosisMatches.from_record(record.get('diagnoses', {})),
            predicted_codes=record.get('predicted_codes', []),
            predicted_diagnoses=record.get('predicted_diagnoses', []),
            leakage_flag=record.get('leakage_flag', False),
            error_tags=record.get('error_tags', []),
            detail=record.get('detail', ''),
        )


def code_key(text):
    """Comparable form of a predicted code: raw code when shaped, else case-folded text"""
    try:
        return normalize_code(text)
    except ShapeError:
        return text.strip().casefold()


def _code_set(codes):
    return frozenset(code_key(c) for c in codes if isinstance(c, str) and c.strip())


def _diagnosis_set(diagnoses):
    return frozenset(n for n in (normalize_text(d) for d in diagnoses if isinstance(d, str)) if n)


def _copied_exemplar(codes, diagnoses, note, exemplar_notes):
    """The response reproduces an exemplar's gold answer instead of the target's"""
    predicted_codes = _code_set(codes)
    predicted_diagnoses = _diagnosis_set(diagnoses)
    target_codes = frozenset(label.primary_code for label in note.gold)
    target_diagnoses = _diagnosis_set(label.diagnosis for label in note.gold)

    for exemplar in exemplar_notes:
        if exemplar.id == note.id:
            continue
        exemplar_codes = frozenset(label.primary_code for label in exemplar.gold)
        exemplar_diagnoses = _diagnosis_set(label.diagnosis for label in exemplar.gold)
        if predicted_codes and predicted_codes == exemplar_codes and predicted_codes != target_codes:
            return True
        if (predicted_diagnoses and predicted_diagnoses == exemplar_diagnoses
                and predicted_diagnoses != target_diagnoses):
            return True
    return False


def score_response(raw, note, variant, catalog, model='', strategy='', repetition=0,
                   leakage_flag=False, exemplar_notes=(),
                   diagnosis_threshold=DEFAULT_MATCH_THRESHOLD,
                   transcription_threshold=DEFAULT_TRANSCRIPTION_THRESHOLD):
    """Score one generation result against its note

    Args:
        raw (GenerationResult): What the server returned
        note (CaseNote): Target note with gold labels
        variant (SchemaVariant): Structure the model was asked for
        catalog (IcdCatalog): Code universe
        model (str, optional): Model name recorded on the score
        strategy (str, optional): Strategy label recorded on the score
        repetition (int, optional): Repetition index
        leakage_flag (bool, optional): The note was also a few-shot exemplar
        exemplar_notes (iterable, optional): Exemplar notes, for copy detection
        diagnosis_threshold (float, optional): Fuzzy diagnosis match threshold
        transcription_threshold (float, optional): Similarity below this is a transcription error

    Returns:
        ResponseScore: Never raises for bad responses
    """
    text = raw.text if raw.status is GenerationStatus.OK else ''
    validation = validate_response(text, variant)

    similarity = None
    codes, diagnoses = [], []
    # anything that parsed is judged, shape violations included; only unparsed text scores Blank
    if validation.json_parsed:
        original, codes, diagnoses = extract_fields(validation.document, variant)
        if original is not None:
            similarity = string_similarity(note.note_text, original)

    judgment = judge_codes(codes, note.gold, catalog)
    matches = judge_diagnoses(diagnoses, note.gold, diagnosis_threshold)

    tags = []
    if raw.status is not GenerationStatus.OK:
        tags.append(TAG_SYSTEM_FAILURE)
    else:
        if not validation.strict_valid:
            tags.append(TAG_STRUCTURED_OUTPUT)
        if validation.json_parsed and (similarity is None or similarity < transcription_threshold):
            tags.append(TAG_TRANSCRIPTION)
        if any(entry.verdict in _HALLUCINATED for entry in judgment.per_code):
            tags.append(TAG_CODE_HALLUCINATION)
        if exemplar_notes and _copied_exemplar(codes, diagnoses, note, exemplar_notes):
            tags.append(TAG_EXEMPLAR_COPY)

    return ResponseScore(
        note_id=note.id,
        model=model,
        strategy=strategy,
        repetition=repetition,
        status=raw.status,
        duration_s=raw.duration_s,
        validation=validation,
        transcription_similarity=similarity,
        code_judgment=judgment,
        diagnosis_matches=matches,
        predicted_codes=list(codes),
        predicted_diagnoses=list(diagnoses),
        leakage_flag=leakage_flag,
        error_tags=tags,
        detail=raw.detail,
    )


@dataclass
class CellAggregate:
    """Aggregate metrics of one model x strategy cell"""
    model: str
    strategy: str
    responses: int
    strict_json_rate: float
    recovered_rate: float
    json_parse_rate: float
    mean_similarity: Optional[float]
    class_counts: dict
    correct_rate: float
    diagnosis_precision: Optional[float]
    diagnosis_recall: Optional[float]
    runtime_mean: float
    runtime_min: float
    runtime_max: float
    code_like_rate: float
    status_counts: dict
    tag_counts: dict
    consistency: float

    def to_row(self):
        """Flat row for the aggregate table"""
        row = OrderedDict([
            ('model', self.model),
            ('strategy', self.strategy),
            ('responses', self.responses),
            ('strict_json_rate', self.strict_json_rate),
            ('recovered_rate', self.recovered_rate),
            ('json_parse_rate', self.json_parse_rate),
            ('mean_similarity', self.mean_similarity),
            ('correct_rate', self.correct_rate),
        ])
        for code_class in CodeClass:
            row[code_class.value] = self.class_counts[code_class.value]
        row['diagnosis_precision'] = self.diagnosis_precision
        row['diagnosis_recall'] = self.diagnosis_recall
        row['runtime_mean_s'] = self.runtime_mean
        row['runtime_min_s'] = self.runtime_min
        row['runtime_max_s'] = self.runtime_max
        row['code_like_rate'] = self.code_like_rate
        for status in GenerationStatus:
            row[f'status_{status.value}'] = self.status_counts[status.value]
        for tag in ERROR_TAGS:
            row[f'tag_{tag}'] = self.tag_counts[tag]
        row['consistency'] = self.consistency
        return row


@dataclass
class RunAggregate:
    cells: List[CellAggregate]

    def cell(self, model, strategy):
        for cell in self.cells:
            if cell.model == model and cell.strategy == strategy:
                return cell
        raise KeyError((model, strategy))

    def rows(self):
        return [cell.to_row() for cell in self.cells]


def _consistency(scores):
    """Mean share of repetitions agreeing with the most common code set, per note"""
    by_note = OrderedDict()
    for score in scores:
        by_note.setdefault(score.note_id, []).append(_code_set(score.predicted_codes))

    shares = []
    for code_sets in by_note.values():
        most_common = Counter(code_sets).most_common(1)[0][1]
        shares.append(most_common / len(code_sets))
    return float(np.mean(shares))


def _aggregate_cell(model, strategy, scores):
    count = len(scores)
    class_counts = Counter(score.code_class.value for score in scores)
    status_counts = Counter(score.status.value for score in scores)
    tag_counts = Counter(tag for score in scores for tag in score.error_tags)

    similarities = [s.transcription_similarity for s in scores
                    if s.transcription_similarity is not None]
    matched = sum(len(s.diagnosis_matches.matched) for s in scores)
    missed = sum(len(s.diagnosis_matches.missed) for s in scores)
    spurious = sum(len(s.diagnosis_matches.spurious) for s in scores)
    durations = np.array([s.duration_s for s in scores], dtype=float)

    return CellAggregate(
        model=model,
        strategy=strategy,
        responses=count,
        strict_json_rate=sum(s.validation.strict_valid for s in scores) / count,
        recovered_rate=sum(s.validation.recovered for s in scores) / count,
        json_parse_rate=sum(s.validation.strict_parse for s in scores) / count,
        mean_similarity=float(np.mean(similarities)) if similarities else None,
        class_counts={c.value: class_counts.get(c.value, 0) for c in CodeClass},
        correct_rate=class_counts.get(CodeClass.CORRECT.value, 0) / count,
        diagnosis_precision=matched / (matched + spurious) if matched + spurious else None,
        diagnosis_recall=matched / (matched + missed) if matched + missed else None,
        runtime_mean=float(durations.mean()),
        runtime_min=float(durations.min()),
        runtime_max=float(durations.max()),
        code_like_rate=sum(s.code_judgment.code_like for s in scores) / count,
        status_counts={st.value: status_counts.get(st.value, 0) for st in GenerationStatus},
        tag_counts={tag: tag_counts.get(tag, 0) for tag in ERROR_TAGS},
        consistency=_consistency(scores),
    )


def aggregate(scores):
    """Per model x strategy metrics, cells in first-seen order

    Raises:
        EmptyRun: No scores
    """
    scores = list(scores)
    if not scores:
        raise EmptyRun("cannot aggregate an empty run")

    cells = OrderedDict()
    for score in scores:
        cells.setdefault((score.model, score.strategy), []).append(score)

    return RunAggregate([_aggregate_cell(model, strategy, cell_scores)
                         for (model, strategy), cell_scores in cells.items()])
