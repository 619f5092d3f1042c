# tests/conftest.py
import os
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from analyzers.scoring import score_response
from catalog.icd_catalog import load_catalog
from communication.inference_client import GenerationResult, GenerationStatus
from config.settings import Settings, config_from_dict
from corpus.benchmark_corpus import load_corpus, gold_output
from retrieval.retrieval_index import tokenize
from schemas.output_schema import SchemaVariant, render_document

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(ROOT, 'data')
FIXTURES_DIR = os.path.join(ROOT, 'tests', 'fixtures')
CORPUS_PATH = os.path.join(DATA_DIR, 'corpus', 'notes.jsonl')
CATALOG_PATH = os.path.join(DATA_DIR, 'catalog', 'icd10cm_codes_sample.txt')
KNOWN_GAPS_PATH = os.path.join(DATA_DIR, 'known_gaps.yaml')

NOTE_MARKER = 'Doctors note:'
EMBEDDING_DIMENSION = 8


def read_fixture(name):
    with open(os.path.join(FIXTURES_DIR, name), 'r', encoding='utf-8') as f:
        return f.read()


def toy_embedding(text):
    """Bag of tokens hashed into a small fixed number of buckets"""
    vector = [0.0] * EMBEDDING_DIMENSION
    for token in tokenize(text):
        vector[sum(map(ord, token)) % EMBEDDING_DIMENSION] += 1.0
    return vector


def pooled_scores(corpus, catalog):
    """25 responses (5 notes x 5 repetitions) in one cell, 3 of them Correct"""
    scores = []
    for repetition in range(5):
        for note in corpus:
            if note.id == '1' and repetition < 3:
                text = gold_output(note, SchemaVariant.TRIVIAL)
            else:
                text = render_document(SchemaVariant.TRIVIAL, note.note_text, ['I10'],
                                       [label.diagnosis for label in note.gold])
            result = GenerationResult(text, 1.0, GenerationStatus.OK)
            scores.append(score_response(result, note, SchemaVariant.TRIVIAL, catalog,
                                         model='pooled', strategy='zero_shot',
                                         repetition=repetition))
    return scores


class FakeClock:
    """Monotonic clock advancing a fixed step on every reading"""

    def __init__(self, step=0.5, start=100.0):
        self.now = start
        self.step = step

    def __call__(self):
        value = self.now
        self.now += self.step
        return value


class MockBackend:
    """Loopback server speaking the generate, embeddings and tags routes

    Modes, chosen per model with a default:
        echo: the prompt comes back as the response
        gold: the gold response of the note found after the last "Doctors note:"
        empty: a blank response
        hang: nothing is sent until the server is stopped
        trickle: a long body sent one byte at a time, faster than the read timeout
        error: HTTP 500 with an error body
    """

    def __init__(self, corpus, variant='trivial', mode='echo', modes=None, models=None):
        self.corpus = corpus
        self.variant = variant
        self.mode = mode
        self.modes = dict(modes or {})
        self.models = list(models or [])
        self.requests = []
        self.release = threading.Event()
        self._server = None
        self._thread = None

    @property
    def url(self):
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def mode_for(self, model):
        return self.modes.get(model, self.mode)

    def target_note(self, prompt):
        rest = prompt[prompt.rfind(NOTE_MARKER) + len(NOTE_MARKER):]
        for note in self.corpus:
            if rest.startswith(note.note_text):
                return note
        return None

    def start(self):
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, format, *args):
                pass

            def _send(self, status, body):
                data = json.dumps(body).encode('utf-8')
                self.send_response(status)
                self.send_header('Content-Type', 'application/json')
                self.send_header('Content-Length', str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def _trickle(self, text):
                data = text.encode('utf-8')
                self.send_response(200)
                self.send_header('Content-Type', 'application/json')
                self.send_header('Content-Length', str(len(data)))
                self.end_headers()
                try:
                    for position in range(len(data)):
                        if backend.release.wait(0.2):
                            return
                        self.wfile.write(data[position:position + 1])
                        self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def do_GET(self):
                if self.path == '/api/tags':
                    self._send(200, {'models': [{'name': m} for m in backend.models]})
                else:
                    self._send(404, {'error': 'not found'})

            def do_POST(self):
                length = int(self.headers.get('Content-Length', 0))
                body = json.loads(self.rfile.read(length) or b'{}')
                backend.requests.append((self.path, body))

                if self.path == '/api/embeddings':
                    self._send(200, {'embedding': toy_embedding(body.get('prompt', ''))})
                    return
                if self.path != '/api/generate':
                    self._send(404, {'error': 'not found'})
                    return

                mode = backend.mode_for(body.get('model'))
                prompt = body.get('prompt', '')
                if mode == 'hang':
                    backend.release.wait(30)
                    return
                if mode == 'trickle':
                    self._trickle(json.dumps({'response': 'x' * 200, 'done': True}))
                    return
                if mode == 'error':
                    self._send(500, {'error': 'model runner crashed'})
                elif mode == 'empty':
                    self._send(200, {'response': '   ', 'done': True})
                elif mode == 'gold':
                    note = backend.target_note(prompt)
                    text = gold_output(note, backend.variant) if note else ''
                    self._send(200, {'response': text, 'done': True})
                else:
                    self._send(200, {'response': prompt, 'done': True})

        self._server = ThreadingHTTPServer(('127.0.0.1', 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.release.set()
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture(autouse=True)
def loopback_environment(monkeypatch):
    """Keep proxies and user overrides away from the loopback tests"""
    monkeypatch.setenv('NO_PROXY', '127.0.0.1,localhost')
    monkeypatch.setenv('no_proxy', '127.0.0.1,localhost')
    monkeypatch.delenv('MEDBENCH_ENDPOINT', raising=False)


@pytest.fixture
def cdc_catalog_path():
    """Full CDC code file named by MEDBENCH_CDC_CATALOG"""
    path = Settings().CDC_CATALOG
    if not path:
        pytest.skip('MEDBENCH_CDC_CATALOG is not set')
    return path


@pytest.fixture(scope='session')
def corpus():
    return load_corpus(CORPUS_PATH)


@pytest.fixture(scope='session')
def catalog():
    catalog, errors = load_catalog(CATALOG_PATH)
    assert errors == []
    return catalog


@pytest.fixture
def fake_clock():
    return FakeClock()


@pytest.fixture
def backend_factory(corpus):
    started = []

    def factory(**kwargs):
        backend = MockBackend(corpus, **kwargs).start()
        started.append(backend)
        return backend

    yield factory
    for backend in started:
        backend.stop()


@pytest.fixture
def make_config(tmp_path):
    """Experiment config over the shipped corpus and fixture catalog"""

    def factory(base_url, **overrides):
        data = {
            'models': ['model-a'],
            'strategies': ['zero_shot'],
            'corpus_path': CORPUS_PATH,
            'catalog_path': CATALOG_PATH,
            'output_dir': str(tmp_path / 'runs'),
            'endpoint': {'base_url': base_url, 'generate_timeout_s': 5},
        }
        data.update(overrides)
        return config_from_dict(data, base_dir=ROOT)

    return factory
