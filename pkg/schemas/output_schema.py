# schemas/output_schema.py
# The listings under schemas/structures are what the model is shown, trailing commas and all.
# SHAPES below are their strict counterparts used for validation.
import os
import re
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, List, Optional

import jsonschema

logger = logging.getLogger('medbench.schemas')

STRUCTURES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'structures')

PARSE_FAILURE = 'parse_failure'
MISSING_FIELD = 'missing_field'
EXTRA_FIELD = 'extra_field'
WRONG_TYPE = 'wrong_type'
NON_STRING_ELEMENT = 'non_string_element'

# leaf markers
STRING = 'string'
STRING_LIST = [STRING]

_FENCE = re.compile(r"^\s*(```|''')[ \t]*(?:json)?[ \t]*\r?\n?(.*?)\s*\1\s*$",
                    re.DOTALL | re.IGNORECASE)
_CODE_SPLIT = re.compile(r'[;,\n]')
_DIAGNOSIS_SPLIT = re.compile(r'[;\n]')


class SchemaVariant(Enum):
    TRIVIAL = 'trivial'
    SIMPLE = 'simple'
    COMPLEX = 'complex'
    # earlier field names, kept for the field-name comparison runs
    TRIVIAL_SINGULAR = 'trivial_singular'
    CHIEF_COMPLAINT = 'chief_complaint'


VITAL_SIGNS = {
    'temperature_celsius': STRING,
    'blood_pressure_mmHg': STRING,
    'heart_rate_bpm': STRING,
    'respiratory_rate_bpm': STRING,
    'oxygen_saturation_percent': STRING,
}

SHAPES = {
    SchemaVariant.TRIVIAL: {
        'original_document': STRING,
        'diagnostic_codes': STRING_LIST,
        'diagnoses': STRING_LIST,
    },
    SchemaVariant.TRIVIAL_SINGULAR: {
        'original_document': STRING,
        'diagnostic_code': STRING_LIST,
        'diagnosis': STRING_LIST,
    },
    SchemaVariant.CHIEF_COMPLAINT: {
        'original_document': STRING,
        'chief_complaint_code': STRING,
        'chief_complaint': STRING,
    },
    SchemaVariant.SIMPLE: {
        'original_document': STRING,
        'codes': {
            'diagnostic_codes': STRING_LIST,
        },
        'subjective': {
            'chief_complaint': STRING,
        },
        'objective': {
            'vital_signs': VITAL_SIGNS,
            'physical_exam': STRING,
            'lab_results': STRING_LIST,
            'imaging': STRING_LIST,
            'diagnostic_procedures': STRING_LIST,
        },
        'assessment': {
            'summary': STRING,
            'differential_diagnosis': STRING,
            'working_diagnosis': STRING,
        },
        'plan': {
            'expected_follow_up': STRING,
            'management_plan': STRING,
        },
        'orders': {
            'referrals_made': STRING_LIST,
        },
    },
    SchemaVariant.COMPLEX: {
        'original_document': STRING,
        'codes': {
            'diagnostic_codes': STRING_LIST,
            'procedure_codes': STRING_LIST,
            'billing_codes': STRING_LIST,
        },
        'subjective': {
            'chief_complaint': STRING,
            'history_of_present_illness': STRING,
            'past_medical_history': STRING,
            'surgical_history': STRING,
            'pregnancy_history': STRING,
            'menstrual_history': STRING,
            'social_history': {
                'sexual_activity': STRING,
                'drug_use': STRING,
                'lifestyle': STRING,
            },
            'alcohol_use': STRING,
            'current_medications': STRING_LIST,
            'allergies': STRING_LIST,
            'review_of_systems': {
                'systems_reviewed': [{
                    'system_name': STRING,
                    'findings': STRING,
                }],
            },
        },
        'objective': {
            'vital_signs': VITAL_SIGNS,
            'physical_exam': STRING_LIST,
            'lab_results': STRING_LIST,
            'imaging': STRING_LIST,
            'diagnostic_procedures': STRING_LIST,
        },
        'assessment': {
            'summary': STRING,
            'differential_diagnosis': STRING_LIST,
            'working_diagnosis': STRING,
        },
        'plan': {
            'expected_follow_up': STRING,
            'management_plan': [{
                'organ_system': STRING,
                'actions': STRING_LIST,
            }],
        },
        'orders': {
            'medications_ordered': STRING_LIST,
            'referrals_made': STRING_LIST,
            'labs_ordered': STRING_LIST,
            'imaging_ordered': STRING_LIST,
        },
    },
}

# Extraction checklist: note heading -> field path in the complex structure
EXTRACTION_INVENTORY = {
    'Diagnostic Codes': 'codes.diagnostic_codes',
    'Procedure Codes': 'codes.procedure_codes',
    'Billing Codes': 'codes.billing_codes',
    'Chief complaint': 'subjective.chief_complaint',
    'History of present illness': 'subjective.history_of_present_illness',
    'Past medical history': 'subjective.past_medical_history',
    'Surgery history': 'subjective.surgical_history',
    'Pregnancy history': 'subjective.pregnancy_history',
    'Menstrual history': 'subjective.menstrual_history',
    'Social history': 'subjective.social_history',
    'Alcohol use': 'subjective.alcohol_use',
    'Medications': 'subjective.current_medications',
    'Allergies': 'subjective.allergies',
    'Review of systems': 'subjective.review_of_systems.systems_reviewed',
    'Vital Signs': 'objective.vital_signs',
    'Physical Exam results': 'objective.physical_exam',
    'Lab results': 'objective.lab_results',
    'Imaging': 'objective.imaging',
    'Diagnostic Procedures': 'objective.diagnostic_procedures',
    'Summary': 'assessment.summary',
    'Differential diagnosis': 'assessment.differential_diagnosis',
    'Working diagnosis': 'assessment.working_diagnosis',
    'Expected follow up': 'plan.expected_follow_up',
    'What to do, by organ system': 'plan.management_plan',
    'Medications Ordered': 'orders.medications_ordered',
    'Referrals Made': 'orders.referrals_made',
    'Labs Ordered': 'orders.labs_ordered',
    'Imaging Ordered': 'orders.imaging_ordered',
}

# where each variant keeps its codes and diagnoses
CODE_PATHS = {
    SchemaVariant.TRIVIAL: ('diagnostic_codes',),
    SchemaVariant.TRIVIAL_SINGULAR: ('diagnostic_code',),
    SchemaVariant.CHIEF_COMPLAINT: ('chief_complaint_code',),
    SchemaVariant.SIMPLE: ('codes', 'diagnostic_codes'),
    SchemaVariant.COMPLEX: ('codes', 'diagnostic_codes'),
}
DIAGNOSIS_PATHS = {
    SchemaVariant.TRIVIAL: ('diagnoses',),
    SchemaVariant.TRIVIAL_SINGULAR: ('diagnosis',),
    SchemaVariant.CHIEF_COMPLAINT: ('chief_complaint',),
    SchemaVariant.SIMPLE: ('assessment', 'working_diagnosis'),
    SchemaVariant.COMPLEX: ('assessment', 'working_diagnosis'),
}


@dataclass(frozen=True)
class Violation:
    path: str
    kind: str


@dataclass
class ValidationResult:
    """Outcome of checking one response against a variant

    strict_valid: the text as returned is a valid document
    recovered: valid only after removing a markdown code fence
    json_parsed: the text (or its fence-stripped form) is JSON at all
    fence_stripped: the decoded document came from the fence-stripped text
    """
    strict_valid: bool
    recovered: bool
    violations: List[Violation] = field(default_factory=list)
    parsed: Optional[Any] = None
    json_parsed: bool = False
    fence_stripped: bool = False
    document: Optional[Any] = None

    @property
    def strict_parse(self):
        """Decodable as JSON without any fence stripping"""
        return self.json_parsed and not self.fence_stripped


def _variant(variant):
    return variant if isinstance(variant, SchemaVariant) else SchemaVariant(variant)


@lru_cache(maxsize=None)
def _read_structure(name):
    path = os.path.join(STRUCTURES_DIR, f'{name}.txt')
    with open(path, 'r', encoding='utf-8', newline='') as f:
        text = f.read()
    if text.endswith('\n'):
        text = text[:-1]
    return text


def schema_text(variant):
    """Structure listing of a variant, exactly as it is shown in prompts"""
    return _read_structure(_variant(variant).value)


def _constraint_for(shape):
    if shape == STRING:
        return {'type': 'string'}
    if isinstance(shape, list):
        return {'type': 'array', 'items': _constraint_for(shape[0])}
    return {
        'type': 'object',
        'properties': {name: _constraint_for(child) for name, child in shape.items()},
        'required': list(shape),
        'additionalProperties': False,
    }


def constraint_document(variant):
    """JSON Schema for a variant, usable as the server's output format constraint

    Returns:
        dict: Schema using only type, properties, required, items and additionalProperties
    """
    return _constraint_for(SHAPES[_variant(variant)])


def _empty_for(shape):
    if shape == STRING:
        return ''
    if isinstance(shape, list):
        inner = shape[0]
        return [] if inner == STRING else [_empty_for(inner)]
    return {name: _empty_for(child) for name, child in shape.items()}


def empty_document(variant):
    """Canonical shape of a variant filled with empty values"""
    return _empty_for(SHAPES[_variant(variant)])


def _reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


def _loads(text):
    """Strict JSON decode: NaN and Infinity are not JSON"""
    return json.loads(text, parse_constant=_reject_constant)


def strip_fence(text):
    """Remove one enclosing ``` or ''' fence (optional json tag); None if not fenced"""
    match = _FENCE.match(text)
    if not match:
        return None
    return match.group(2)


def _child_path(path, name):
    return f"{path}.{name}"


def _check(value, shape, path, violations):
    if shape == STRING:
        if not isinstance(value, str):
            violations.append(Violation(path, WRONG_TYPE))
        return

    if isinstance(shape, list):
        if not isinstance(value, list):
            violations.append(Violation(path, WRONG_TYPE))
            return
        inner = shape[0]
        for position, element in enumerate(value):
            element_path = f"{path}[{position}]"
            if inner == STRING:
                if not isinstance(element, str):
                    violations.append(Violation(element_path, NON_STRING_ELEMENT))
            else:
                _check(element, inner, element_path, violations)
        return

    if not isinstance(value, dict):
        violations.append(Violation(path, WRONG_TYPE))
        return

    for name, child in shape.items():
        if name not in value:
            violations.append(Violation(_child_path(path, name), MISSING_FIELD))
        else:
            _check(value[name], child, _child_path(path, name), violations)

    for name in value:
        if name not in shape:
            violations.append(Violation(_child_path(path, name), EXTRA_FIELD))


def check_document(document, variant):
    """Shape violations of an already-decoded document"""
    violations = []
    _check(document, SHAPES[_variant(variant)], '$', violations)
    return violations


def validate_response(text, variant):
    """Validate a model response against a variant

    The text is parsed as-is first. If that fails, one enclosing markdown
    code fence is stripped and the body is tried again; success there is
    reported as recovered, not as strict validity.

    Args:
        text (str): Raw model output
        variant (SchemaVariant): Expected structure

    Returns:
        ValidationResult: Never raises for bad input
    """
    variant = _variant(variant)
    if not isinstance(text, str):
        text = '' if text is None else str(text)

    try:
        document = _loads(text)
    except (ValueError, RecursionError):
        pass
    else:
        violations = check_document(document, variant)
        if not violations:
            return ValidationResult(strict_valid=True, recovered=False, parsed=document,
                                    json_parsed=True, document=document)
        return ValidationResult(strict_valid=False, recovered=False, violations=violations,
                                json_parsed=True, document=document)

    body = strip_fence(text)
    if body is not None:
        try:
            document = _loads(body)
        except (ValueError, RecursionError):
            pass
        else:
            violations = check_document(document, variant)
            if not violations:
                return ValidationResult(strict_valid=False, recovered=True, parsed=document,
                                        json_parsed=True, fence_stripped=True,
                                        document=document)
            return ValidationResult(strict_valid=False, recovered=False, violations=violations,
                                    json_parsed=True, fence_stripped=True, document=document)

    return ValidationResult(strict_valid=False, recovered=False,
                            violations=[Violation('$', PARSE_FAILURE)])


def satisfies_constraint(text, variant):
    """Evaluate the variant's constraint document on the text with jsonschema

    Independent of validate_response's own shape walker; the two must agree
    on every input.
    """
    try:
        document = _loads(text)
    except (ValueError, RecursionError, TypeError):
        return False
    validator = jsonschema.Draft7Validator(constraint_document(variant))
    return validator.is_valid(document)


def _get_path(document, path):
    value = document
    for name in path:
        if not isinstance(value, dict) or name not in value:
            return None
        value = value[name]
    return value


def _as_list(value, splitter):
    if value is None:
        return []
    if isinstance(value, str):
        return [part.strip() for part in splitter.split(value) if part.strip()]
    if isinstance(value, list):
        items = []
        for element in value:
            if element is None:
                continue
            items.append(element if isinstance(element, str) else json.dumps(element))
        return items
    return [json.dumps(value)]


def _unwrap(document):
    inner = document.get('medical_record')
    if isinstance(inner, dict) and 'original_document' not in document:
        return inner
    return document


def extract_fields(document, variant):
    """Pull transcription, codes and diagnoses out of a decoded response

    Lenient on purpose: unwraps a 'medical_record' envelope and falls back to
    the field names of the other variants when the expected one is absent.

    Returns:
        tuple: (original_document or None, list of code strings, list of diagnosis strings)
    """
    variant = _variant(variant)
    if not isinstance(document, dict):
        return None, [], []

    document = _unwrap(document)
    original = document.get('original_document')
    if not isinstance(original, str):
        original = None

    code_paths = [CODE_PATHS[variant]] + [p for v, p in CODE_PATHS.items() if v is not variant]
    diagnosis_paths = ([DIAGNOSIS_PATHS[variant]]
                       + [p for v, p in DIAGNOSIS_PATHS.items() if v is not variant])

    codes = []
    for path in code_paths:
        value = _get_path(document, path)
        if value is not None:
            codes = _as_list(value, _CODE_SPLIT)
            break

    diagnoses = []
    for path in diagnosis_paths:
        value = _get_path(document, path)
        if value is not None:
            diagnoses = _as_list(value, _DIAGNOSIS_SPLIT)
            break

    return original, codes, diagnoses


def render_document(variant, original_document, codes, diagnoses):
    """Deterministic JSON text of a filled document (4-space indent)"""
    variant = _variant(variant)
    document = empty_document(variant)
    codes = list(codes)
    diagnoses = list(diagnoses)

    document['original_document'] = original_document
    if variant is SchemaVariant.TRIVIAL:
        document['diagnostic_codes'] = codes
        document['diagnoses'] = diagnoses
    elif variant is SchemaVariant.TRIVIAL_SINGULAR:
        document['diagnostic_code'] = codes
        document['diagnosis'] = diagnoses
    elif variant is SchemaVariant.CHIEF_COMPLAINT:
        document['chief_complaint_code'] = '; '.join(codes)
        document['chief_complaint'] = '; '.join(diagnoses)
    else:
        document['codes']['diagnostic_codes'] = codes
        document['assessment']['working_diagnosis'] = '; '.join(diagnoses)

    return json.dumps(document, indent=4, ensure_ascii=False)
