# retrieval/retrieval_index.py
# Lexical (token overlap) and embedding (cosine) scorers, both exact scans over every chunk.
import os
import re
import glob
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import yaml

from catalog.icd_catalog import IcdCatalog
from corpus.benchmark_corpus import acceptable_codes, extract_diagnosis_lines
from utils.exceptions import EmptyDocument
from utils.helpers import split_lines

logger = logging.getLogger('medbench.retrieval')

LEXICAL = 'lexical'
EMBEDDING = 'embedding'

_TOKEN = re.compile(r'\w+')


@dataclass(frozen=True)
class Chunk:
    text: str
    source: str
    line_start: int
    line_end: int
    vector: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


def tokenize(text):
    """Case-folded word tokens"""
    return _TOKEN.findall(text.casefold())


def _group(numbered_lines, source, lines_per_chunk):
    if lines_per_chunk < 1:
        raise ValueError(f"lines_per_chunk must be >= 1, got {lines_per_chunk}")
    if not numbered_lines:
        raise EmptyDocument(f"{source} has no content to chunk")

    chunks = []
    for start in range(0, len(numbered_lines), lines_per_chunk):
        group = numbered_lines[start:start + lines_per_chunk]
        chunks.append(Chunk(
            text='\n'.join(text for _, text in group),
            source=source,
            line_start=group[0][0],
            line_end=group[-1][0],
        ))
    return chunks


def chunk_catalog(document, lines_per_chunk=1, source=None):
    """Split a catalog or a raw text document into consecutive line groups

    Blank lines are dropped before grouping. Catalog lines read
    "<raw code> <description>".

    Args:
        document (IcdCatalog or str): What to chunk
        lines_per_chunk (int, optional): Lines per chunk, the last chunk may be shorter
        source (str, optional): Label for raw documents

    Returns:
        list: Chunk objects in document order

    Raises:
        EmptyDocument: Nothing left after dropping blank lines
    """
    if isinstance(document, IcdCatalog):
        numbered = [(entry.line_number or position,
                     f"{entry.raw_code} {entry.description}")
                    for position, entry in enumerate(document, start=1)]
        return _group(numbered, source or document.source_label, lines_per_chunk)

    numbered = [(position, line.strip())
                for position, line in enumerate(split_lines(document), start=1)
                if line.strip()]
    return _group(numbered, source or '<document>', lines_per_chunk)


def load_context_documents(directory, lines_per_chunk=1):
    """Chunk every *.txt file of a directory, in file name order"""
    chunks = []
    for path in sorted(glob.glob(os.path.join(directory, '*.txt'))):
        with open(path, 'r', encoding='utf-8-sig') as f:
            text = f.read()
        try:
            chunks.extend(chunk_catalog(text, lines_per_chunk, source=os.path.basename(path)))
        except EmptyDocument:
            logger.warning(f"Skipping empty context document {path}")
    logger.info(f"Loaded {len(chunks)} context chunks from {directory}")
    return chunks


class Index:
    """Immutable flat index; build it with build_index"""

    def __init__(self, chunks, scorer_kind, model=None, client=None, matrix=None):
        self.chunks = tuple(chunks)
        self.scorer_kind = scorer_kind
        self.model = model
        self.client = client
        self._matrix = matrix
        self.dimension = None if matrix is None else matrix.shape[1]

        self._postings = {}
        if scorer_kind == LEXICAL:
            for position, chunk in enumerate(self.chunks):
                for token in set(tokenize(chunk.text)):
                    self._postings.setdefault(token, []).append(position)

    def __len__(self):
        return len(self.chunks)

    def scores(self, query):
        """Score of every chunk for one query, in chunk order"""
        if self.scorer_kind == LEXICAL:
            return self._lexical_scores(query)
        return self._embedding_scores(query)

    def _lexical_scores(self, query):
        scores = np.zeros(len(self.chunks))
        terms = set(tokenize(query))
        if not terms:
            return scores
        for term in terms:
            for position in self._postings.get(term, ()):
                scores[position] += 1.0
        return scores / len(terms)

    def _embedding_scores(self, query):
        vector = np.asarray(self.client.embed(self.model, query), dtype=float)
        query_norm = np.linalg.norm(vector)
        chunk_norms = np.linalg.norm(self._matrix, axis=1)
        denominator = chunk_norms * query_norm
        with np.errstate(invalid='ignore', divide='ignore'):
            scores = np.where(denominator > 0, (self._matrix @ vector) / denominator, 0.0)
        return np.clip(scores, -1.0, 1.0)


def build_index(chunks, scorer_kind=LEXICAL, client=None, model=None):
    """Build a flat index over chunks

    Args:
        chunks (list): Chunk objects
        scorer_kind (str): 'lexical' or 'embedding'
        client (InferenceClient, optional): Required for the embedding scorer
        model (str, optional): Embedding model name, required for the embedding scorer

    Returns:
        Index: The built index

    Raises:
        EmptyDocument: No chunks
        EmbeddingError: Embedding a chunk failed (DimensionMismatch included)
    """
    chunks = list(chunks)
    if not chunks:
        raise EmptyDocument("cannot build an index without chunks")

    if scorer_kind == LEXICAL:
        return Index(chunks, LEXICAL)

    if scorer_kind != EMBEDDING:
        raise ValueError(f"unknown scorer kind {scorer_kind!r}")
    if client is None or not model:
        raise ValueError("the embedding scorer needs a client and a model")

    logger.info(f"Embedding {len(chunks)} chunks with {model}")
    embedded = []
    for chunk in chunks:
        vector = tuple(client.embed(model, chunk.text))
        embedded.append(Chunk(chunk.text, chunk.source, chunk.line_start, chunk.line_end, vector))
    matrix = np.array([chunk.vector for chunk in embedded], dtype=float)
    return Index(embedded, EMBEDDING, model=model, client=client, matrix=matrix)


def _top(index, scores, k):
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k == 0:
        return []
    # stable sort keeps chunk order among equal scores
    order = np.argsort(-scores, kind='stable')[:k]
    return [ScoredChunk(index.chunks[i], float(scores[i])) for i in order]


def retrieve(index, query, k):
    """Top-k chunks for a query, best first, ties in chunk order"""
    return _top(index, index.scores(query), k)


def retrieve_many(index, queries, k):
    """Top-k chunks over several queries, scoring each chunk by its best query"""
    queries = [q for q in queries if q and q.strip()]
    if not queries:
        return _top(index, np.zeros(len(index)), k)
    best = np.max(np.vstack([index.scores(q) for q in queries]), axis=0)
    return _top(index, best, k)


def cosine(a, b):
    """Cosine similarity of two vectors; 0.0 when either is the zero vector"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denominator = np.linalg.norm(a) * np.linalg.norm(b)
    if denominator == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / denominator, -1.0, 1.0))


def assemble_context(scored, token_budget):
    """Join chunk texts in score order within a whitespace-token budget

    Stops before the first chunk that does not fit; chunks are never cut.
    """
    if token_budget < 0:
        raise ValueError(f"token_budget must be >= 0, got {token_budget}")

    parts = []
    used = 0
    for item in scored:
        size = len(item.chunk.text.split())
        if used + size > token_budget:
            break
        parts.append(item.chunk.text)
        used += size
    return '\n'.join(parts)


def build_queries(note, mode='note'):
    """Retrieval queries for a note

    'note' queries with the full text; 'diagnoses' with each line under the
    note's diagnosis heading, falling back to the full text when there is none.
    """
    if mode == 'note':
        return [note.note_text]
    if mode == 'diagnoses':
        lines = extract_diagnosis_lines(note.note_text)
        return lines or [note.note_text]
    raise ValueError(f"unknown query mode {mode!r}")


def retrieve_for_note(index, note, k, mode='note'):
    queries = build_queries(note, mode)
    if len(queries) == 1:
        return retrieve(index, queries[0], k)
    return retrieve_many(index, queries, k)


def _chunk_categories(chunk):
    categories = set()
    for line in split_lines(chunk.text):
        token = line.split(None, 1)[0] if line.strip() else ''
        categories.add(token[:3].upper())
    return categories


def lexical_recall_gaps(corpus, index, k=10):
    """Gold diagnoses whose code category is missing from their top-k results

    Querying each gold diagnosis text on its own; a hit is any result chunk
    whose code shares the category of the primary or an alternate code.

    Returns:
        list: {'note': id, 'diagnosis': text} for every miss, in corpus order
    """
    gaps = []
    for note in corpus:
        for label in note.gold:
            wanted = {code[:3] for code in acceptable_codes(label)}
            results = retrieve(index, label.diagnosis, k)
            if not any(_chunk_categories(item.chunk) & wanted for item in results):
                gaps.append({'note': note.id, 'diagnosis': label.diagnosis})
    return gaps


def load_known_gaps(path, catalog_name):
    """Known lexical gaps recorded for a catalog file; None when not recorded"""
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    if catalog_name not in data:
        return None
    return [{'note': str(entry['note']), 'diagnosis': entry['diagnosis']}
            for entry in (data[catalog_name] or [])]
