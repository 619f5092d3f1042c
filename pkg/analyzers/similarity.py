# analyzers/similarity.py
import re
from difflib import SequenceMatcher

_PUNCTUATION = re.compile(r'[^\w\s]')


def string_similarity(a, b):
    """Gestalt pattern-matching ratio 2*M/T of two texts

    M is the total size of the recursively found longest matching blocks and
    T the combined length. The pair is put in a canonical order first so the
    value does not depend on argument order. Two empty texts score 1.0.

    Args:
        a (str): First text
        b (str): Second text

    Returns:
        float: Similarity in [0, 1]
    """
    if not a and not b:
        return 1.0
    first, second = sorted((a, b))
    return SequenceMatcher(None, first, second, autojunk=False).ratio()


def normalize_text(text):
    """Case-fold, turn punctuation into spaces, collapse whitespace"""
    return ' '.join(_PUNCTUATION.sub(' ', text.casefold()).split())
