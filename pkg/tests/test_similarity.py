import random

import numpy as np
import pytest

from analyzers.similarity import string_similarity, normalize_text


def longest_block(a, b, alo, ahi, blo, bhi):
    """Longest common run in a[alo:ahi] and b[blo:bhi]; earliest in a, then in b"""
    if alo >= ahi or blo >= bhi:
        return alo, blo, 0
    left = np.array([ord(ch) for ch in a[alo:ahi]])
    right = np.array([ord(ch) for ch in b[blo:bhi]])
    runs = np.zeros((len(left), len(right)), dtype=int)
    previous = np.zeros(len(right), dtype=int)
    for row in range(len(left)):
        shifted = np.concatenate(([0], previous[:-1]))
        previous = np.where(left[row] == right, shifted + 1, 0)
        runs[row] = previous
    size = int(runs.max())
    if size == 0:
        return alo, blo, 0
    end_row, end_col = np.argwhere(runs == size)[0]
    return alo + int(end_row) - size + 1, blo + int(end_col) - size + 1, size


def matched_characters(a, b, alo, ahi, blo, bhi):
    i, j, size = longest_block(a, b, alo, ahi, blo, bhi)
    if size == 0:
        return 0
    return (size
            + matched_characters(a, b, alo, i, blo, j)
            + matched_characters(a, b, i + size, ahi, j + size, bhi))


def reference_similarity(a, b):
    if not a and not b:
        return 1.0
    first, second = sorted((a, b))
    matched = matched_characters(first, second, 0, len(first), 0, len(second))
    return 2.0 * matched / (len(first) + len(second))


def random_pair(rng):
    alphabet = rng.choice(['ab', 'abc ', 'abcdefgh', 'the quick brown fox'])
    a = ''.join(rng.choice(alphabet) for _ in range(rng.randint(0, 200)))
    if rng.random() < 0.5:
        return a, ''.join(rng.choice(alphabet) for _ in range(rng.randint(0, 200)))

    b = list(a)
    for _ in range(rng.randint(0, 20)):
        position = rng.randint(0, len(b))
        action = rng.randrange(3)
        if action == 0:
            b.insert(position, rng.choice(alphabet))
        elif action == 1 and position < len(b):
            del b[position]
        elif position < len(b):
            b[position] = rng.choice(alphabet)
    return a, ''.join(b[:200])


def test_examples():
    assert string_similarity('abc', 'abd') == pytest.approx(2 / 3, abs=1e-9)
    assert string_similarity('', 'x') == 0.0
    assert string_similarity('', '') == 1.0
    assert string_similarity('same text', 'same text') == 1.0


def test_symmetric_and_bounded():
    rng = random.Random(5)
    for _ in range(300):
        a, b = random_pair(rng)
        forward = string_similarity(a, b)
        assert forward == string_similarity(b, a)
        assert 0.0 <= forward <= 1.0
        assert (forward == 1.0) == (a == b)


def test_agrees_with_reference():
    rng = random.Random(1234)
    for _ in range(1000):
        a, b = random_pair(rng)
        assert abs(string_similarity(a, b) - reference_similarity(a, b)) < 1e-12, (a, b)


def test_long_texts_are_not_junk_filtered(corpus):
    # every character of a long note is popular enough for the junk heuristic
    text = corpus.get('3').note_text
    assert string_similarity(text, text.replace('  ', ' ')) > 0.95
    assert string_similarity(text, text) == 1.0


@pytest.mark.parametrize('text,expected', [
    ('Fall from standing', 'fall from standing'),
    ('Dehydration.', 'dehydration'),
    ('decomposition of tissue (traumatic rhabdomyolysis)',
     'decomposition of tissue traumatic rhabdomyolysis'),
    ('  Acute   kidney\tinjury ', 'acute kidney injury'),
    ('...', ''),
])
def test_normalize_text(text, expected):
    assert normalize_text(text) == expected
