# communication/inference_client.py
import json
import time
import logging
import ipaddress
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional
from urllib.parse import urlparse

import requests
from urllib3.exceptions import ReadTimeoutError

from utils.exceptions import EgressError, ServerError, EmbeddingError, DimensionMismatch

logger = logging.getLogger('medbench.client')

GENERATE_ROUTE = '/api/generate'
EMBEDDINGS_ROUTE = '/api/embeddings'
TAGS_ROUTE = '/api/tags'
# a trickling body is checked against the deadline after every byte
READ_CHUNK = 1


@dataclass
class EndpointConfig:
    """Where the local inference server lives and how long to wait for it"""
    base_url: str
    connect_timeout_s: float = 5.0
    generate_timeout_s: float = 300.0
    allow_nonlocal: bool = False


class GenerationStatus(str, Enum):
    OK = 'ok'
    TIMEOUT = 'timeout'
    EMPTY_RESPONSE = 'empty_response'
    SERVER_ERROR = 'server_error'


@dataclass(frozen=True)
class GenerationRequest:
    model: str
    prompt: str
    constraint: Optional[Any] = None
    temperature: float = 0.0
    seed: Optional[int] = 42

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must not be empty")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")

    def payload(self):
        """Request body for the generate route"""
        options = {'temperature': self.temperature}
        if self.seed is not None:
            options['seed'] = self.seed
        body = {
            'model': self.model,
            'prompt': self.prompt,
            'stream': False,
            'options': options,
        }
        if self.constraint is not None:
            body['format'] = self.constraint
        return body


@dataclass(frozen=True)
class GenerationResult:
    text: str
    duration_s: float
    status: GenerationStatus
    detail: str = ''

    @property
    def ok(self):
        return self.status is GenerationStatus.OK


def is_loopback_host(host):
    """True for 'localhost' and loopback IP literals; never resolves names"""
    if not host:
        return False
    host = host.strip('[]').lower()
    if host == 'localhost':
        return True
    try:
        address = ipaddress.ip_address(host)
    except ValueError:
        return False
    mapped = getattr(address, 'ipv4_mapped', None)
    if mapped is not None:
        return mapped.is_loopback
    return address.is_loopback


def assert_local_endpoint(config):
    """Refuse endpoints that would send note text off this machine

    Args:
        config (EndpointConfig): Endpoint to check

    Raises:
        EgressError: The host is not loopback and allow_nonlocal is not set
    """
    host = urlparse(config.base_url).hostname
    if config.allow_nonlocal:
        if not is_loopback_host(host):
            logger.warning(f"Non-local endpoint {host} explicitly allowed")
        return
    if not is_loopback_host(host):
        raise EgressError(host or config.base_url)


def _wraps_read_timeout(error):
    # body reads that time out surface as ConnectionError(ReadTimeoutError)
    return any(isinstance(arg, ReadTimeoutError) for arg in error.args)


def _read_before(response, deadline):
    # the read timeout bounds each socket read; the deadline bounds the whole body
    chunks = []
    for chunk in response.iter_content(chunk_size=READ_CHUNK):
        chunks.append(chunk)
        if time.monotonic() > deadline:
            return None
    return b''.join(chunks)


class InferenceClient:
    """Client for an Ollama-compatible server bound to the local host"""

    def __init__(self, config, session=None, clock=None):
        """Initialize the client

        Args:
            config (EndpointConfig): Endpoint settings
            session (requests.Session, optional): HTTP session, injectable for tests
            clock (callable, optional): Monotonic seconds source, defaults to time.monotonic

        Raises:
            EgressError: The endpoint is not local
        """
        assert_local_endpoint(config)
        self.config = config
        self.base_url = config.base_url.rstrip('/')
        self.session = session or requests.Session()
        self.clock = clock or time.monotonic

        self._embedding_cache = {}
        self._dimensions = {}
        self._lock = threading.Lock()

    def _elapsed(self, started):
        duration = self.clock() - started
        if duration < 0:
            logger.warning(f"Clock went backwards by {-duration:.6f} seconds, clamping to 0")
            return 0.0
        return duration

    def generate(self, request):
        """Run one non-streaming completion

        Every failure is folded into the result status; nothing is raised.

        Args:
            request (GenerationRequest): Model, prompt and options

        Returns:
            GenerationResult: Text, wall-clock duration and status
        """
        url = self.base_url + GENERATE_ROUTE
        timeout = (self.config.connect_timeout_s, self.config.generate_timeout_s)
        started = self.clock()
        deadline = time.monotonic() + self.config.generate_timeout_s

        try:
            with self.session.post(url, json=request.payload(), timeout=timeout,
                                   stream=True) as response:
                response.raise_for_status()
                body = _read_before(response, deadline)
            if body is None:
                return self._timeout(request, started)
            data = json.loads(body.decode('utf-8'))
        except requests.exceptions.ConnectTimeout as e:
            return self._failure(GenerationStatus.SERVER_ERROR, started, f"connect timeout: {e}")
        except requests.exceptions.ReadTimeout:
            return self._timeout(request, started)
        except requests.exceptions.ConnectionError as e:
            if _wraps_read_timeout(e):
                return self._timeout(request, started)
            return self._failure(GenerationStatus.SERVER_ERROR, started, str(e))
        except requests.exceptions.RequestException as e:
            return self._failure(GenerationStatus.SERVER_ERROR, started, str(e))
        except ValueError as e:
            return self._failure(GenerationStatus.SERVER_ERROR, started, f"invalid JSON body: {e}")

        duration = self._elapsed(started)

        if not isinstance(data, dict):
            return GenerationResult('', duration, GenerationStatus.SERVER_ERROR,
                                    "response body is not an object")
        if data.get('error'):
            return GenerationResult('', duration, GenerationStatus.SERVER_ERROR, str(data['error']))

        text = data.get('response')
        if not isinstance(text, str) or not text.strip():
            logger.warning(f"Model {request.model} returned an empty response")
            return GenerationResult('', duration, GenerationStatus.EMPTY_RESPONSE, 'empty response')

        return GenerationResult(text, duration, GenerationStatus.OK)

    def _timeout(self, request, started):
        duration = self._elapsed(started)
        logger.error(f"Model {request.model} did not finish within "
                     f"{self.config.generate_timeout_s} seconds")
        return GenerationResult('', duration, GenerationStatus.TIMEOUT,
                                f"no response after {self.config.generate_timeout_s}s")

    def _failure(self, status, started, detail):
        duration = self._elapsed(started)
        logger.error(f"Generation failed: {detail}")
        return GenerationResult('', duration, status, detail)

    def embed(self, model, text):
        """Embed a text; repeated calls return the cached vector

        The first vector returned for a model pins its dimension for the
        lifetime of the client.

        Args:
            model (str): Embedding model name
            text (str): Non-empty text

        Returns:
            list: Floats of the pinned dimension

        Raises:
            ValueError: Empty text
            EmbeddingError: Transport failure or malformed reply
            DimensionMismatch: The server changed dimension for this model
        """
        if not text:
            raise ValueError("cannot embed empty text")

        key = (model, text)
        with self._lock:
            if key in self._embedding_cache:
                return list(self._embedding_cache[key])

        url = self.base_url + EMBEDDINGS_ROUTE
        timeout = (self.config.connect_timeout_s, self.config.generate_timeout_s)
        try:
            response = self.session.post(url, json={'model': model, 'prompt': text}, timeout=timeout)
            response.raise_for_status()
            data = response.json()
        except (requests.exceptions.RequestException, ValueError) as e:
            raise EmbeddingError(f"embedding request failed: {str(e)}") from e

        vector = data.get('embedding') if isinstance(data, dict) else None
        if (not isinstance(vector, list) or not vector
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector)):
            raise EmbeddingError(f"model {model!r} returned no usable embedding")

        vector = tuple(float(x) for x in vector)
        with self._lock:
            pinned = self._dimensions.setdefault(model, len(vector))
            if pinned != len(vector):
                raise DimensionMismatch(model, pinned, len(vector))
            self._embedding_cache[key] = vector
        return list(vector)

    def list_models(self):
        """Names of the models the server reports

        Raises:
            ServerError: The server is unreachable or replied with garbage
        """
        url = self.base_url + TAGS_ROUTE
        try:
            response = self.session.get(url, timeout=(self.config.connect_timeout_s,
                                                      self.config.connect_timeout_s))
            response.raise_for_status()
            data = response.json()
        except (requests.exceptions.RequestException, ValueError) as e:
            raise ServerError(f"cannot list models at {self.base_url}: {str(e)}") from e

        models = data.get('models') if isinstance(data, dict) else None
        if not isinstance(models, list):
            raise ServerError(f"unexpected model listing from {self.base_url}")
        return [m.get('name') or m.get('model') for m in models if isinstance(m, dict)]

    def close(self):
        self.session.close()


def generate(config, request, session=None):
    """One-off generation with a throwaway client"""
    return InferenceClient(config, session=session).generate(request)


def embed(config, model, text, session=None):
    """One-off embedding with a throwaway client"""
    return InferenceClient(config, session=session).embed(model, text)


def list_models(config, session=None):
    """Model names reported by the server at config.base_url"""
    return InferenceClient(config, session=session).list_models()
