# runner/experiment_runner.py
import os
import logging
from dataclasses import dataclass
from datetime import datetime, timezone

from analyzers.scoring import ResponseScore, aggregate, score_response
from catalog.icd_catalog import load_catalog
from communication.inference_client import (InferenceClient, GenerationRequest, GenerationResult,
                                            GenerationStatus, assert_local_endpoint)
from config.settings import dump_resolved
from corpus.benchmark_corpus import load_corpus, validate_corpus
from prompts.prompt_engine import ZeroShot, FewShot, Rag, build_prompt, make_exemplars
from retrieval.retrieval_index import (build_index, chunk_catalog, load_context_documents,
                                       assemble_context, retrieve_for_note)
from runner.report import write_aggregate, write_report
from schemas.output_schema import constraint_document
from utils.exceptions import (MedbenchError, EgressError, ServerError, CorpusError,
                              RunSetupError)
from utils.helpers import append_jsonl, get_system_info, read_jsonl, text_hash
from utils.logger import tee_log, close_tee

logger = logging.getLogger('medbench.runner')

BANNER = '=========================='

RESPONSES_FILE = 'responses.jsonl'
SCORES_FILE = 'scores.jsonl'
AGGREGATE_FILE = 'aggregate.csv'
SUMMARY_FILE = 'summary.md'
LOG_FILE = 'run.log'
CONFIG_FILE = 'config.resolved'


@dataclass(frozen=True)
class PreflightError:
    check: str
    message: str

    def __str__(self):
        return f"[{self.check}] {self.message}"


@dataclass(frozen=True)
class RunArtifacts:
    run_dir: str

    @property
    def responses(self):
        return os.path.join(self.run_dir, RESPONSES_FILE)

    @property
    def scores(self):
        return os.path.join(self.run_dir, SCORES_FILE)

    @property
    def aggregate(self):
        return os.path.join(self.run_dir, AGGREGATE_FILE)

    @property
    def summary(self):
        return os.path.join(self.run_dir, SUMMARY_FILE)

    @property
    def log(self):
        return os.path.join(self.run_dir, LOG_FILE)

    @property
    def config_resolved(self):
        return os.path.join(self.run_dir, CONFIG_FILE)

    @property
    def figures_dir(self):
        return os.path.join(self.run_dir, 'figures')

    def files(self):
        return [self.responses, self.scores, self.aggregate, self.summary, self.log,
                self.config_resolved]

    def complete(self):
        return all(os.path.isfile(path) for path in self.files())


def _model_available(name, available):
    return name in available or f"{name}:latest" in available


def preflight(config, session=None):
    """Check that a run can start

    Locality is checked first; a non-local endpoint stops the checks before
    any connection is attempted.

    Args:
        config (ExperimentConfig): Resolved configuration
        session (requests.Session, optional): HTTP session for the model listing

    Returns:
        list: PreflightError objects, empty when the run may start
    """
    try:
        assert_local_endpoint(config.endpoint)
    except EgressError as e:
        return [PreflightError('endpoint', str(e))]

    errors = []

    catalog = None
    try:
        catalog, catalog_errors = load_catalog(config.catalog_path)
        if catalog_errors:
            errors.append(PreflightError('catalog', f"{len(catalog_errors)} lines rejected, "
                                                    f"first: {catalog_errors[0]}"))
        if len(catalog) == 0:
            errors.append(PreflightError('catalog', f"{config.catalog_path} has no entries"))
    except OSError as e:
        errors.append(PreflightError('catalog', f"cannot read {config.catalog_path}: {e}"))

    corpus = None
    try:
        corpus = load_corpus(config.corpus_path)
    except OSError as e:
        errors.append(PreflightError('corpus', f"cannot read {config.corpus_path}: {e}"))
    except CorpusError as e:
        errors.append(PreflightError('corpus', str(e)))

    if corpus is not None and catalog is not None:
        report = validate_corpus(corpus, catalog)
        for note_id, code in report.missing:
            errors.append(PreflightError('corpus', f"note {note_id}: gold code {code} "
                                                   f"is not in the catalog"))

    if corpus is not None:
        for strategy in config.strategies:
            for note_id in strategy.exemplars or []:
                if corpus.get(note_id) is None:
                    errors.append(PreflightError('strategy', f"{strategy.label}: exemplar note "
                                                             f"{note_id} is not in the corpus"))

    if config.context_docs_dir and not os.path.isdir(config.context_docs_dir):
        errors.append(PreflightError('retrieval', f"context_docs_dir {config.context_docs_dir} "
                                                  f"is not a directory"))

    client = InferenceClient(config.endpoint, session=session)
    try:
        available = client.list_models()
    except ServerError as e:
        errors.append(PreflightError('models', str(e)))
    else:
        wanted = list(config.models)
        if config.uses_rag() and config.retrieval.scorer == 'embedding':
            wanted.append(config.retrieval.embedding_model)
        for name in wanted:
            if not _model_available(name, available):
                errors.append(PreflightError('models', f"model {name!r} is not available on "
                                                       f"{config.endpoint.base_url}"))

    for error in errors:
        logger.error(f"Preflight: {error}")
    return errors


def make_strategies(config, corpus):
    """Strategy objects for the configured grid, in config order"""
    strategies = []
    for strategy in config.strategies:
        if strategy.kind == 'zero_shot':
            strategies.append(ZeroShot(label=strategy.label))
        elif strategy.kind == 'few_shot':
            exemplars = make_exemplars(corpus, strategy.exemplars, config.variant)
            strategies.append(FewShot(exemplars=exemplars, label=strategy.label))
        else:
            strategies.append(Rag(k=strategy.k, token_budget=strategy.token_budget,
                                  label=strategy.label))
    return strategies


def _exemplar_notes(strategy):
    if isinstance(strategy, FewShot):
        return tuple(exemplar.note for exemplar in strategy.exemplars)
    return ()


def _create_run_dir(output_dir, run_name=None):
    name = run_name or 'run-' + datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%SZ')
    try:
        os.makedirs(output_dir, exist_ok=True)
        candidate = os.path.join(output_dir, name)
        suffix = 1
        while os.path.exists(candidate):
            candidate = os.path.join(output_dir, f"{name}-{suffix}")
            suffix += 1
        os.makedirs(candidate)
    except OSError as e:
        raise RunSetupError(f"cannot create run directory under {output_dir}: {e}") from e
    return candidate


class ExperimentRunner:
    """Runs the models x strategies x notes x repetitions grid"""

    def __init__(self, config, session=None, clock=None, stream=None):
        """Initialize the runner

        Args:
            config (ExperimentConfig): Resolved configuration
            session (requests.Session, optional): HTTP session for the client
            clock (callable, optional): Monotonic clock for durations
            stream (file, optional): Terminal stream for the run log
        """
        self.config = config
        self.client = InferenceClient(config.endpoint, session=session, clock=clock)
        self.stream = stream

        self.catalog, _ = load_catalog(config.catalog_path)
        self.corpus = load_corpus(config.corpus_path)
        self.strategies = make_strategies(config, self.corpus)
        self.constraint = constraint_document(config.variant) if config.use_constraint else None
        self.index = None
        self.run_log = None

    def _build_index(self):
        retrieval = self.config.retrieval
        chunks = chunk_catalog(self.catalog, retrieval.lines_per_chunk)
        if self.config.context_docs_dir:
            chunks.extend(load_context_documents(self.config.context_docs_dir,
                                                 retrieval.lines_per_chunk))
        return build_index(chunks, retrieval.scorer, client=self.client,
                           model=retrieval.embedding_model)

    def _context_for(self, strategy, note):
        scored = retrieve_for_note(self.index, note, strategy.k, self.config.retrieval.query_mode)
        return assemble_context(scored, strategy.token_budget)

    def _run_cell(self, model, strategy, note):
        context = ''
        if isinstance(strategy, Rag):
            context = self._context_for(strategy, note)

        prompt = build_prompt(strategy, note, self.config.variant, context=context,
                              include_schema=self.config.schema_in_prompt,
                              normalized=self.config.normalized_templates)
        request = GenerationRequest(model=model, prompt=prompt.text, constraint=self.constraint,
                                    temperature=self.config.temperature, seed=self.config.seed)
        return prompt, self.client.generate(request)

    def run(self, run_name=None):
        """Execute the grid and write every artifact

        Returns:
            RunArtifacts: Paths of the run's files

        Raises:
            RunSetupError: The run directory or log could not be created
        """
        # Create run directory and log
        config = self.config
        artifacts = RunArtifacts(_create_run_dir(config.output_dir, run_name))
        run_id = os.path.basename(artifacts.run_dir)
        self.run_log = tee_log(artifacts.log, run_id=run_id, stream=self.stream)
        os.makedirs(artifacts.figures_dir, exist_ok=True)

        try:
            # Snapshot config and host
            dump_resolved(config, artifacts.config_resolved, host=get_system_info())

            # Build retrieval index
            if config.uses_rag():
                self.index = self._build_index()
                self.run_log.info(f"Retrieval index: {len(self.index)} chunks, "
                                  f"scorer {self.index.scorer_kind}")

            # Run grid
            scores = self._run_grid(artifacts)

            # Aggregate and report
            run_aggregate = aggregate(scores)
            write_aggregate(run_aggregate, artifacts.aggregate)
            write_report(artifacts, config, run_aggregate, scores)
            self.run_log.info(f"Run complete: {len(scores)} responses in {artifacts.run_dir}")
        finally:
            close_tee(self.run_log)

        return artifacts

    def _run_grid(self, artifacts):
        config = self.config
        scores = []
        with open(artifacts.responses, 'a', encoding='utf-8') as responses, \
                open(artifacts.scores, 'a', encoding='utf-8') as score_file:
            for model in config.models:
                for strategy in self.strategies:
                    for note in self.corpus:
                        for repetition in range(config.repetitions):
                            score = self._execute(model, strategy, note, repetition,
                                                  responses, score_file)
                            scores.append(score)
        return scores

    def _execute(self, model, strategy, note, repetition, responses, score_file):
        log = self.run_log
        log.info(BANNER)
        log.info(f"Strategy {strategy.label}, note {note.id}, repetition {repetition + 1}")
        log.info(f"Starting query using model {model} please wait...")

        # Generate
        prompt = None
        try:
            prompt, result = self._run_cell(model, strategy, note)
        except Exception as e:
            logger.error(f"Error in cell {model}/{strategy.label}/note {note.id}: {str(e)}")
            result = GenerationResult('', 0.0, GenerationStatus.SERVER_ERROR, str(e))

        log.info(result.text if result.ok else f"[{result.status.value}] {result.detail}")
        log.info("Time to completion")
        log.info(f"Time: {result.duration_s:.6f} seconds")

        # Record response
        leakage = bool(prompt and prompt.leakage_flag)
        append_jsonl(responses, {
            'model': model,
            'strategy': strategy.label,
            'note_id': note.id,
            'repetition': repetition,
            'leakage_flag': leakage,
            'exemplar_ids': list(prompt.exemplar_ids) if prompt else [],
            'prompt_sha256': text_hash(prompt.text) if prompt else None,
            'status': result.status.value,
            'detail': result.detail,
            'text': result.text,
            'duration_s': result.duration_s,
        })

        # Score
        score = score_response(
            result, note, self.config.variant, self.catalog,
            model=model, strategy=strategy.label, repetition=repetition,
            leakage_flag=leakage, exemplar_notes=_exemplar_notes(strategy),
            diagnosis_threshold=self.config.scoring.diagnosis_match_threshold,
            transcription_threshold=self.config.scoring.transcription_error_threshold,
        )
        append_jsonl(score_file, score.to_record())
        return score


def run_experiment(config, session=None, clock=None, stream=None, run_name=None):
    """Run the configured grid; see ExperimentRunner"""
    return ExperimentRunner(config, session=session, clock=clock, stream=stream).run(run_name)


def rescore(responses_path, config):
    """Score a responses file again, e.g. after changing thresholds

    Args:
        responses_path (str): responses.jsonl of an earlier run
        config (ExperimentConfig): Config supplying corpus, catalog and scoring settings

    Returns:
        list: ResponseScore objects in file order
    """
    catalog, _ = load_catalog(config.catalog_path)
    corpus = load_corpus(config.corpus_path)
    exemplars_by_label = {}
    for strategy in config.strategies:
        if strategy.kind == 'few_shot':
            exemplars_by_label[strategy.label] = tuple(
                corpus.get(note_id) for note_id in strategy.exemplars if corpus.get(note_id))

    scores = []
    for record in read_jsonl(responses_path):
        note = corpus.get(record['note_id'])
        if note is None:
            raise MedbenchError(f"responses reference note {record['note_id']!r} "
                                f"missing from {config.corpus_path}")
        result = GenerationResult(record.get('text', ''), record.get('duration_s', 0.0),
                                  GenerationStatus(record['status']), record.get('detail', ''))
        scores.append(score_response(
            result, note, config.variant, catalog,
            model=record['model'], strategy=record['strategy'],
            repetition=record.get('repetition', 0),
            leakage_flag=record.get('leakage_flag', False),
            exemplar_notes=exemplars_by_label.get(record['strategy'], ()),
            diagnosis_threshold=config.scoring.diagnosis_match_threshold,
            transcription_threshold=config.scoring.transcription_error_threshold,
        ))
    logger.info(f"Rescored {len(scores)} responses from {responses_path}")
    return scores


def load_scores(path):
    """ResponseScore objects from a scores.jsonl file"""
    return [ResponseScore.from_record(record) for record in read_jsonl(path)]
