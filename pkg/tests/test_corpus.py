import json

import pytest

from catalog.icd_catalog import parse_catalog
from corpus.benchmark_corpus import (GoldLabel, parse_corpus, save_corpus, load_corpus,
                                     validate_corpus, gold_output, acceptable_codes,
                                     extract_diagnosis_lines)
from schemas.output_schema import SchemaVariant
from utils.exceptions import CorpusError

from conftest import CORPUS_PATH


def record(**overrides):
    data = {
        'id': '9',
        'title': 'Test',
        'note_text': 'Patient presents with a cough.',
        'gold': [{'diagnosis': 'Cough', 'primary_code': 'R05.9', 'alternate_codes': []}],
    }
    data.update(overrides)
    return json.dumps(data)


def test_shipped_corpus(corpus):
    assert [note.id for note in corpus] == ['1', '2', '3', '4', '5']
    assert sum(len(note.gold) for note in corpus) == 12


def test_note_four_gold(corpus):
    assert corpus.get('4').gold == (GoldLabel('Facial spasm', 'G5139', ()),)
    assert corpus.get(4) is corpus.get('4')
    assert corpus.get('6') is None


def test_note_two_alternates(corpus):
    fall = corpus.get('2').gold[0]
    assert acceptable_codes(fall) == ('Z9181', 'W010XXA')


def test_codes_are_normalized():
    corpus = parse_corpus(record())
    assert corpus.get('9').gold[0].primary_code == 'R059'


@pytest.mark.parametrize('broken,message', [
    (record(gold=[]), 'gold labels are missing'),
    (record(note_text='   '), 'note_text'),
    (record(id=''), 'no id'),
    (record(gold=[{'diagnosis': 'Cough'}]), 'primary_code'),
    (record(gold=[{'diagnosis': 'Cough', 'primary_code': 'cough'}]), 'not a diagnostic code'),
    (record(gold=[{'diagnosis': '', 'primary_code': 'R05'}]), 'diagnosis is empty'),
    ('{"id": "9", ', 'invalid JSON'),
])
def test_malformed_records(broken, message):
    with pytest.raises(CorpusError) as excinfo:
        parse_corpus(broken)
    assert message in str(excinfo.value)


def test_missing_gold_names_record():
    with pytest.raises(CorpusError) as excinfo:
        parse_corpus(record(id='7', gold=None))
    assert excinfo.value.record_id == '7'


def test_duplicate_id():
    with pytest.raises(CorpusError):
        parse_corpus(record() + '\n' + record())


def test_save_load_identity(corpus, tmp_path):
    path = tmp_path / 'copy.jsonl'
    save_corpus(corpus, str(path))
    with open(CORPUS_PATH, 'rb') as f:
        original = f.read()
    assert path.read_bytes() == original
    assert load_corpus(str(path)).notes == corpus.notes


def test_save_load_keeps_unicode_line_separators(tmp_path):
    text = 'Chief complaint:\u2028Sore throat\u2029\x85Diagnosis:\nStrep throat'
    corpus = parse_corpus(record(note_text=text))
    path = tmp_path / 'separators.jsonl'
    save_corpus(corpus, str(path))

    loaded = load_corpus(str(path))
    assert loaded.notes == corpus.notes
    assert loaded.get('9').note_text == text


def test_note_text_is_untouched(corpus):
    # tabs and trailing spaces survive loading
    text = corpus.get('1').note_text
    assert '\tGeneral:' in text
    assert 'Chief Complaint: Sore throat \n' in text


def test_validate_against_fixture_catalog(corpus, catalog):
    assert validate_corpus(corpus, catalog).clean


def test_validate_reports_missing_code(catalog):
    corpus = parse_corpus(record(gold=[{'diagnosis': 'Made up', 'primary_code': 'Z99.999W'}]))
    report = validate_corpus(corpus, catalog)
    assert report.missing == [('9', 'Z99999W')]


def test_validate_reports_missing_alternate():
    catalog, _ = parse_catalog('Z9181 History of falling\nM5450 Low back pain\nR930 Imaging\n')
    report = validate_corpus(parse_corpus(record(id='2', gold=[
        {'diagnosis': 'Fall', 'primary_code': 'Z9181', 'alternate_codes': ['W010XXA']}])), catalog)
    assert report.missing == [('2', 'W010XXA')]


def test_gold_output(corpus):
    note = corpus.get('4')
    document = json.loads(gold_output(note, SchemaVariant.TRIVIAL))
    assert document == {
        'original_document': note.note_text,
        'diagnostic_codes': ['G51.39'],
        'diagnoses': ['Facial spasm'],
    }


def test_diagnosis_lines(corpus):
    assert extract_diagnosis_lines(corpus.get('3').note_text) == [
        'fall from standing',
        'Facial contusion',
        'Dehydration.',
        'Traumatic rhabdomyolysis.',
        'Acute kidney injury',
    ]
    assert extract_diagnosis_lines(corpus.get('5').note_text) == ['Syncope', 'Dyspnea']


def test_diagnosis_lines_without_heading(corpus):
    assert extract_diagnosis_lines(corpus.get('1').note_text) == []
