import os
import time
import random
import string

import pytest

from catalog.icd_catalog import (IcdCatalog, parse_catalog, parse_catalog_line, load_catalog,
                                 normalize_code, is_code_shaped, display_code, decompose,
                                 lookup, catalog_stats)
from utils.exceptions import CatalogParseError, ShapeError

ALNUM = string.ascii_uppercase + string.digits


def random_code(rng):
    return (rng.choice(string.ascii_uppercase) + rng.choice(string.digits)
            + ''.join(rng.choice(ALNUM) for _ in range(rng.randint(1, 5))))


def test_parse_line_botulism():
    entry = parse_catalog_line('A051    Botulism food poisoning', 5)
    assert entry.raw_code == 'A051'
    assert entry.display_code == 'A05.1'
    assert entry.description == 'Botulism food poisoning'
    assert entry.line_number == 5


def test_parse_line_seven_characters():
    entry = parse_catalog_line('W6169XD Other contact with duck, subsequent encounter\n')
    assert entry.display_code == 'W61.69XD'
    assert entry.description == 'Other contact with duck, subsequent encounter'


def test_parse_line_blank_is_skipped():
    assert parse_catalog_line('   \n') is None


@pytest.mark.parametrize('line', ['1234 Not a code', 'A0 Too short', 'A051', 'A0512345 Too long'])
def test_parse_line_rejects(line):
    with pytest.raises(CatalogParseError):
        parse_catalog_line(line, 1)


def test_three_lines_one_blank():
    catalog, errors = parse_catalog('A000    Cholera\n\nA001    Cholera, eltor\n')
    assert len(catalog) == 2
    assert errors == []
    assert catalog.skipped == 1


def test_lines_are_accounted_for():
    text = 'A000 One\n\nbogus line\nA001 Two\nA000 Again\n  \nJ020 Strep\n'
    catalog, errors = parse_catalog(text)
    assert catalog.line_count == 7
    assert len(catalog) + catalog.skipped + len(errors) == catalog.line_count


def test_unicode_separators_stay_inside_a_line():
    catalog, errors = parse_catalog('A051    Botulism\x85 food poisoning\n'
                                    'R55     Syncope and collapse\u2028\n')
    assert errors == []
    assert catalog.line_count == 2
    assert catalog.lookup('A051').description == 'Botulism\x85 food poisoning'
    assert catalog.lookup('R55').description == 'Syncope and collapse'
    assert len(catalog) + catalog.skipped + len(errors) == catalog.line_count


def test_duplicate_keeps_first():
    catalog, errors = parse_catalog('A000 First\nA000 Second\n')
    assert len(catalog) == 1
    assert catalog.lookup('A000').description == 'First'
    assert len(errors) == 1
    assert errors[0].line_number == 2
    assert 'first seen on line 1' in str(errors[0])


def test_bom_and_crlf():
    catalog, errors = parse_catalog(b'\xef\xbb\xbfA000    Cholera\r\nA001    Eltor\r\n', 'x.txt')
    assert errors == []
    assert [e.raw_code for e in catalog] == ['A000', 'A001']
    assert catalog.lookup('A000').description == 'Cholera'


def test_undecodable_bytes():
    catalog, errors = parse_catalog(b'A000 Cholera\n\xff\xfe broken\n', 'bad.txt')
    assert len(catalog) == 0
    assert len(errors) == 1


def test_source_label_counts_lines(tmp_path):
    path = tmp_path / 'codes.txt'
    path.write_text('A000 Cholera\nA001 Eltor\n', encoding='utf-8')
    catalog, _ = load_catalog(str(path))
    assert catalog.source_label.endswith('codes.txt (2 lines)')


@pytest.mark.parametrize('text,expected', [
    ('J02.0', 'J020'),
    (' j020 ', 'J020'),
    ('w01.190a', 'W01190A'),
    ('R55', 'R55'),
])
def test_normalize_code(text, expected):
    assert normalize_code(text) == expected


@pytest.mark.parametrize('text', ['', 'I', 'E', '12.3', 'Z99.999WX', 'J0.20', None, 42])
def test_normalize_code_rejects(text):
    with pytest.raises(ShapeError):
        normalize_code(text)
    assert not is_code_shaped(text)


def test_decompose_seven_characters():
    parts = decompose('S00.83XA')
    assert (parts.category, parts.detail, parts.extension) == ('S00', '83X', 'A')


def test_decompose_join_identity():
    rng = random.Random(7)
    for _ in range(2000):
        code = random_code(rng)
        assert decompose(code).join() == code
        assert normalize_code(display_code(code)) == code


def test_lookup_dotted(catalog):
    entry = lookup(catalog, 'J02.0')
    assert entry.raw_code == 'J020'
    assert entry.description == 'Streptococcal pharyngitis'


def test_lookup_absent_is_none(catalog):
    assert catalog.lookup('Z99999W') is None
    with pytest.raises(ShapeError):
        catalog.lookup('not a code')


def test_lookup_matches_membership(catalog):
    for entry in catalog:
        assert catalog.lookup(entry.raw_code) is entry
        assert catalog.lookup(entry.display_code) is entry
        assert entry.display_code in catalog

    rng = random.Random(11)
    known = set(catalog.by_raw)
    for _ in range(2000):
        code = random_code(rng)
        assert (catalog.lookup(code) is not None) == (code in known)
        assert (code in catalog) == (code in known)


def test_catalog_rejects_duplicate_entries():
    entry = parse_catalog_line('A000 Cholera')
    with pytest.raises(ValueError):
        IcdCatalog([entry, entry])


def test_catalog_stats(catalog):
    stats = catalog_stats(catalog)
    assert stats['entries'] == 45
    assert stats['lines'] == 45
    assert sum(stats['by_length'].values()) == 45
    assert stats['by_length'][3] == 2  # I10, R55
    assert stats['by_letter']['W'] == 6


@pytest.mark.cdc
def test_full_cdc_catalog(cdc_catalog_path):
    started = time.perf_counter()
    catalog, errors = load_catalog(cdc_catalog_path)
    elapsed = time.perf_counter() - started

    assert errors == []
    assert len(catalog) >= 70000
    assert elapsed < 2.0
    if os.getenv('MEDBENCH_CDC_ENTRIES'):
        assert len(catalog) == int(os.environ['MEDBENCH_CDC_ENTRIES'])
