# config/settings.py
import os
import logging
from dataclasses import dataclass, field, fields, asdict
from typing import List, Optional

import dotenv
import yaml

from communication.inference_client import EndpointConfig
from schemas.output_schema import SchemaVariant
from utils.exceptions import ConfigError

logger = logging.getLogger('medbench.config')

DEFAULT_ENDPOINT = 'http://127.0.0.1:11434'
STRATEGY_KINDS = ('zero_shot', 'few_shot', 'rag')
SCORER_KINDS = ('lexical', 'embedding')
QUERY_MODES = ('note', 'diagnoses')
DEFAULT_EXEMPLARS = ['2', '4']


def load_environment(env_file=None):
    """Load config.env into the process environment (existing variables win)

    Args:
        env_file (str, optional): Path to the env file; defaults to
            MEDBENCH_CONFIG_ENV or ./config.env

    Returns:
        bool: True when a file was found and loaded
    """
    path = env_file or os.getenv('MEDBENCH_CONFIG_ENV', 'config.env')
    loaded = dotenv.load_dotenv(path)
    if loaded:
        logger.debug(f"Loaded environment from {path}")
    return loaded


class Settings:
    """Process-level settings, loaded from environment variables"""

    def __init__(self):
        """Load settings from environment variables with defaults"""
        self.ENDPOINT = os.getenv('MEDBENCH_ENDPOINT') or None
        self.LOG_LEVEL = os.getenv('MEDBENCH_LOG_LEVEL', 'INFO').upper()
        self.LOG_FILE = os.getenv('MEDBENCH_LOG_FILE', '')
        self.CDC_CATALOG = os.getenv('MEDBENCH_CDC_CATALOG') or None

        self._validate_settings()

    def _validate_settings(self):
        """Validate the environment-provided values"""
        if self.ENDPOINT and not self.ENDPOINT.startswith(('http://', 'https://')):
            raise ConfigError(f"MEDBENCH_ENDPOINT must be an http(s) URL, got {self.ENDPOINT!r}")

        if self.LOG_LEVEL not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ConfigError(f"MEDBENCH_LOG_LEVEL {self.LOG_LEVEL!r} is not a logging level")

        if self.CDC_CATALOG and not os.path.isfile(self.CDC_CATALOG):
            raise ConfigError(f"MEDBENCH_CDC_CATALOG points at a missing file: {self.CDC_CATALOG}")


@dataclass
class StrategyConfig:
    """One prompting strategy of the grid, as written in the config file"""
    kind: str
    name: Optional[str] = None
    exemplars: Optional[List[str]] = None
    k: Optional[int] = None
    token_budget: Optional[int] = None

    @property
    def label(self):
        return self.name or self.kind


@dataclass
class RetrievalConfig:
    k: int = 20
    lines_per_chunk: int = 1
    token_budget: int = 2048
    scorer: str = 'lexical'
    embedding_model: Optional[str] = None
    query_mode: str = 'note'


@dataclass
class ScoringConfig:
    diagnosis_match_threshold: float = 0.8
    transcription_error_threshold: float = 0.95


@dataclass
class ExperimentConfig:
    """Everything needed to run (and re-run) one benchmark grid"""
    models: List[str]
    strategies: List[StrategyConfig]
    corpus_path: str
    catalog_path: str
    endpoint: EndpointConfig = field(default_factory=lambda: EndpointConfig(DEFAULT_ENDPOINT))
    schema_variant: str = SchemaVariant.TRIVIAL.value
    schema_in_prompt: bool = True
    use_constraint: bool = True
    normalized_templates: bool = False
    context_docs_dir: Optional[str] = None
    repetitions: int = 1
    temperature: float = 0.0
    seed: Optional[int] = 42
    output_dir: str = 'runs'
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)

    @property
    def variant(self):
        return SchemaVariant(self.schema_variant)

    def uses_rag(self):
        return any(strategy.kind == 'rag' for strategy in self.strategies)

    def validate(self):
        """Check the grid invariants

        Raises:
            ConfigError: The first violated rule
        """
        if not self.models:
            raise ConfigError("at least one model is required")
        if len(set(self.models)) != len(self.models):
            raise ConfigError("model names must be unique")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")

        valid_variants = [v.value for v in SchemaVariant]
        if self.schema_variant not in valid_variants:
            raise ConfigError(f"schema_variant must be one of {valid_variants}, "
                              f"got {self.schema_variant!r}")

        labels = [strategy.label for strategy in self.strategies]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"strategy labels must be unique, got {labels}; "
                              "give repeated kinds a name")

        for strategy in self.strategies:
            if strategy.kind not in STRATEGY_KINDS:
                raise ConfigError(f"unknown strategy kind {strategy.kind!r}")
            if strategy.kind == 'few_shot' and not strategy.exemplars:
                raise ConfigError(f"strategy {strategy.label!r} needs at least one exemplar")
            if strategy.kind == 'rag':
                if strategy.k < 1:
                    raise ConfigError(f"strategy {strategy.label!r}: k must be >= 1")
                if strategy.token_budget < 1:
                    raise ConfigError(f"strategy {strategy.label!r}: token_budget must be >= 1")

        retrieval = self.retrieval
        if retrieval.lines_per_chunk < 1:
            raise ConfigError("retrieval.lines_per_chunk must be >= 1")
        if retrieval.scorer not in SCORER_KINDS:
            raise ConfigError(f"retrieval.scorer must be one of {SCORER_KINDS}")
        if retrieval.scorer == 'embedding' and not retrieval.embedding_model:
            raise ConfigError("retrieval.embedding_model is required with the embedding scorer")
        if retrieval.query_mode not in QUERY_MODES:
            raise ConfigError(f"retrieval.query_mode must be one of {QUERY_MODES}")

        for name in ('diagnosis_match_threshold', 'transcription_error_threshold'):
            value = getattr(self.scoring, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"scoring.{name} must be within [0, 1], got {value}")

    def to_dict(self):
        return asdict(self)


def _check_keys(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _field_names(cls):
    return [f.name for f in fields(cls)]


def _resolve_path(path, base_dir):
    if path is None:
        return None
    path = os.path.expanduser(str(path))
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    return os.path.normpath(path)


def config_from_dict(data, base_dir=None, endpoint_override=None):
    """Build an ExperimentConfig from decoded YAML

    Args:
        data (dict): Decoded config document
        base_dir (str, optional): Directory relative paths resolve against
        endpoint_override (str, optional): Replaces endpoint.base_url

    Returns:
        ExperimentConfig: Validated configuration with absolute paths

    Raises:
        ConfigError: Unknown keys, missing required keys or invalid values
    """
    base_dir = base_dir or os.getcwd()
    data = dict(data or {})
    data.pop('host', None)

    _check_keys('config', data, _field_names(ExperimentConfig))
    for required in ('models', 'strategies', 'corpus_path', 'catalog_path'):
        if required not in data:
            raise ConfigError(f"missing required key {required!r}")

    endpoint_data = data.pop('endpoint', None) or {}
    _check_keys('endpoint', endpoint_data, _field_names(EndpointConfig))
    endpoint_data.setdefault('base_url', DEFAULT_ENDPOINT)
    if endpoint_override:
        endpoint_data['base_url'] = endpoint_override

    retrieval_data = data.pop('retrieval', None) or {}
    _check_keys('retrieval', retrieval_data, _field_names(RetrievalConfig))
    retrieval = RetrievalConfig(**retrieval_data)

    scoring_data = data.pop('scoring', None) or {}
    _check_keys('scoring', scoring_data, _field_names(ScoringConfig))

    strategies = []
    for position, raw in enumerate(data.pop('strategies') or []):
        if isinstance(raw, str):
            raw = {'kind': raw}
        _check_keys(f'strategies[{position}]', raw, _field_names(StrategyConfig))
        strategy = StrategyConfig(**raw)
        if strategy.kind == 'few_shot':
            exemplars = strategy.exemplars if strategy.exemplars is not None else DEFAULT_EXEMPLARS
            strategy.exemplars = [str(e) for e in exemplars]
        if strategy.kind == 'rag':
            strategy.k = retrieval.k if strategy.k is None else int(strategy.k)
            strategy.token_budget = (retrieval.token_budget if strategy.token_budget is None
                                     else int(strategy.token_budget))
        strategies.append(strategy)

    models = data.pop('models') or []
    if isinstance(models, str):
        models = [models]

    try:
        config = ExperimentConfig(
            models=[str(m) for m in models],
            strategies=strategies,
            endpoint=EndpointConfig(**endpoint_data),
            retrieval=retrieval,
            scoring=ScoringConfig(**scoring_data),
            **data,
        )
    except TypeError as e:
        raise ConfigError(f"invalid config: {str(e)}") from e

    config.corpus_path = _resolve_path(config.corpus_path, base_dir)
    config.catalog_path = _resolve_path(config.catalog_path, base_dir)
    config.context_docs_dir = _resolve_path(config.context_docs_dir, base_dir)
    config.output_dir = _resolve_path(config.output_dir, base_dir)

    config.validate()
    return config


def load_experiment_config(path, settings=None):
    """Load and validate an experiment config file

    Settings.ENDPOINT (MEDBENCH_ENDPOINT), when set, overrides endpoint.base_url.

    Args:
        path (str): Path to the YAML file
        settings (Settings, optional): Process settings; read from the environment when omitted

    Returns:
        ExperimentConfig: The resolved configuration
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e

    if data is None:
        raise ConfigError(f"config {path} is empty")

    settings = settings or Settings()
    base_dir = os.path.dirname(os.path.abspath(path))
    config = config_from_dict(data, base_dir=base_dir, endpoint_override=settings.ENDPOINT)
    logger.info(f"Loaded experiment config from {path}: {len(config.models)} models, "
                f"{len(config.strategies)} strategies")
    return config


def dump_resolved(config, path=None, host=None):
    """Serialize the fully resolved config as YAML

    Args:
        config (ExperimentConfig): Config to write
        path (str, optional): Destination file; only the text is returned when omitted
        host (dict, optional): Host snapshot stored under 'host' (ignored on reload)

    Returns:
        str: The YAML text
    """
    data = config.to_dict()
    if host is not None:
        data['host'] = host
    text = yaml.safe_dump(data, sort_keys=False, default_flow_style=False, allow_unicode=True)
    if path:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
    return text
