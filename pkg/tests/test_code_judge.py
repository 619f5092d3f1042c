import random

import pytest

from analyzers.code_judge import (CodeClass, CodeVerdict, judge_codes, judge_diagnoses,
                                  diagnoses_match)
from corpus.benchmark_corpus import GoldLabel

DEEPSEEK_DIAGNOSES = [
    'fall from standing',
    'facial contusion',
    'decomposition of tissue (traumatic rhabdomyolysis)',
    'acute kidney injury',
]


@pytest.mark.parametrize('note_id,predicted,expected', [
    ('1', ['J02.0'], CodeClass.CORRECT),
    ('3', ['E86.0', 'N17.9'], CodeClass.PARTIALLY_CORRECT),
    ('1', ['I10'], CodeClass.VALID_BUT_WRONG),
    ('4', ['Z99.999W'], CodeClass.LOOKS_LIKE_CODE),
    ('3', ['I', 'E', 'A'], CodeClass.NOT_CODE_LIKE),
    ('5', [], CodeClass.BLANK),
])
def test_taxonomy(corpus, catalog, note_id, predicted, expected):
    assert judge_codes(predicted, corpus.get(note_id).gold, catalog).code_class is expected


def test_blank_entries(corpus, catalog):
    assert judge_codes(['', '  '], corpus.get('1').gold, catalog).code_class is CodeClass.BLANK
    assert judge_codes(None, corpus.get('1').gold, catalog).code_class is CodeClass.BLANK


def test_note_two_alternates(corpus, catalog):
    gold = corpus.get('2').gold
    for predicted in (['Z91.81', 'M54.50', 'R93.0'], ['W01.0XXA', 'M54.50', 'R93.0']):
        assert judge_codes(predicted, gold, catalog).code_class is CodeClass.CORRECT


def test_extra_code_is_partial(corpus, catalog):
    judgment = judge_codes(['J02.0', 'I10'], corpus.get('1').gold, catalog)
    assert judgment.code_class is CodeClass.PARTIALLY_CORRECT
    assert [e.verdict for e in judgment.per_code] == [CodeVerdict.EXACT_GOLD,
                                                      CodeVerdict.IN_CATALOG_NOT_GOLD]


def test_missing_slot_is_partial(corpus, catalog):
    gold = corpus.get('5').gold
    assert judge_codes(['R55'], gold, catalog).code_class is CodeClass.PARTIALLY_CORRECT
    assert judge_codes(['R55', 'R55'], gold, catalog).code_class is CodeClass.PARTIALLY_CORRECT
    assert judge_codes(['r55', 'R06.00'], gold, catalog).code_class is CodeClass.CORRECT


def test_category_match_does_not_upgrade(corpus, catalog):
    gold = corpus.get('3').gold
    # improper 7th character on a real category
    judgment = judge_codes(['N17.9A'], gold, catalog)
    assert judgment.per_code[0].verdict is CodeVerdict.CATEGORY_GOLD
    assert not judgment.per_code[0].in_catalog
    assert judgment.code_class is CodeClass.LOOKS_LIKE_CODE

    judgment = judge_codes(['N17.0'], gold, catalog)
    assert judgment.per_code[0].verdict is CodeVerdict.CATEGORY_GOLD
    assert judgment.code_class is CodeClass.VALID_BUT_WRONG


def test_commentary_nullifies_entry(corpus, catalog):
    judgment = judge_codes(['J02.0  # strep throat'], corpus.get('1').gold, catalog)
    assert judgment.per_code[0].verdict is CodeVerdict.NOT_SHAPED
    assert judgment.code_class is CodeClass.NOT_CODE_LIKE
    assert not judgment.code_like


def test_non_string_entries(corpus, catalog):
    judgment = judge_codes([20, None], corpus.get('1').gold, catalog)
    assert judgment.code_class is CodeClass.NOT_CODE_LIKE


def reference_class(predicted, gold, catalog):
    entries = [p.strip() for p in predicted if p.strip()]
    if not entries:
        return CodeClass.BLANK
    slots = [{label.primary_code} | set(label.alternate_codes) for label in gold]
    accepted = set().union(*slots)
    shaped = []
    for entry in entries:
        try:
            shaped.append(catalog.lookup(entry) is not None)
        except ValueError:
            shaped.append(None)
    raw = [e.replace('.', '').upper() for e in entries]
    hits = [r in accepted for r in raw]
    if all(hits) and all(any(r in slot for r in raw) for slot in slots):
        return CodeClass.CORRECT
    if any(hits):
        return CodeClass.PARTIALLY_CORRECT
    if any(s is True for s in shaped):
        return CodeClass.VALID_BUT_WRONG
    if any(s is False for s in shaped):
        return CodeClass.LOOKS_LIKE_CODE
    return CodeClass.NOT_CODE_LIKE


def test_classes_exclusive_and_exhaustive(catalog):
    rng = random.Random(99)
    entries = list(catalog)
    fabricated = ['Z99.999W', 'Q12.34', 'A00.0XXZ', 'B9']
    garbage = ['I', 'see note', 'E86.0 (dehydration)', '', '  ']
    seen = set()
    for _ in range(2000):
        gold = [GoldLabel(e.description, e.raw_code) for e in rng.sample(entries, rng.randint(1, 3))]
        pool = ([e.display_code for e in rng.sample(entries, 3)] + [g.primary_code for g in gold]
                + fabricated + garbage)
        predicted = rng.sample(pool, rng.randint(0, 4))

        judgment = judge_codes(predicted, gold, catalog)
        assert judgment.code_class is reference_class(predicted, gold, catalog)
        seen.add(judgment.code_class)

        shuffled_predicted = predicted[:]
        shuffled_gold = gold[:]
        rng.shuffle(shuffled_predicted)
        rng.shuffle(shuffled_gold)
        assert judge_codes(shuffled_predicted, shuffled_gold, catalog).code_class \
            is judgment.code_class
    assert seen == set(CodeClass)


def test_diagnosis_case_fold(corpus):
    matches = judge_diagnoses(['fall from standing'], corpus.get('2').gold[:1])
    assert matches.matched == [('fall from standing', 'Fall from standing')]


def test_diagnosis_containment():
    assert diagnoses_match('decomposition of tissue traumatic rhabdomyolysis',
                           'traumatic rhabdomyolysis')


def test_deepseek_diagnoses(corpus):
    matches = judge_diagnoses(DEEPSEEK_DIAGNOSES, corpus.get('3').gold)
    assert matches.missed == ['Dehydration']
    assert len(matches.matched) == 4
    assert matches.spurious == []
    assert matches.recall == pytest.approx(0.8)
    assert matches.precision == 1.0


def test_fuzzy_threshold(corpus):
    gold = corpus.get('2').gold
    # heading text is singular, the gold label plural
    matches = judge_diagnoses(['Abnormal imaging result'], gold)
    assert ('Abnormal imaging result', 'Abnormal imaging results') in matches.matched
    matches = judge_diagnoses(['Osteoporosis'], gold, threshold=0.8)
    assert matches.matched == []
    assert matches.spurious == ['Osteoporosis']


def test_one_to_one_assignment(corpus):
    matches = judge_diagnoses(['Syncope', 'syncope', 'Dyspnea'], corpus.get('5').gold)
    assert [pair[1] for pair in matches.matched] == ['Syncope', 'Dyspnea']
    assert matches.spurious == ['syncope']


def test_empty_predictions(corpus):
    matches = judge_diagnoses(['', '...'], corpus.get('4').gold)
    assert matches.matched == [] and matches.spurious == []
    assert matches.recall == 0.0
    assert matches.precision is None
