# runner/report.py
import os
import logging

import pandas as pd

from analyzers.code_judge import CodeClass
from analyzers.scoring import ERROR_TAGS
from config.settings import dump_resolved
from utils.helpers import human_duration, percent

logger = logging.getLogger('medbench.report')

FIGURE_COLUMNS = {
    'json_compliance': ['strict_json_rate', 'recovered_rate', 'json_parse_rate'],
    'similarity': ['mean_similarity'],
    'code_classes': [c.value for c in CodeClass] + ['correct_rate'],
    'diagnosis_extraction': ['diagnosis_precision', 'diagnosis_recall'],
    'runtimes': ['runtime_mean_s', 'runtime_min_s', 'runtime_max_s'],
    'code_like': ['code_like_rate'],
    'error_tags': [f'tag_{tag}' for tag in ERROR_TAGS],
}


def aggregate_frame(run_aggregate):
    return pd.DataFrame(run_aggregate.rows())


def write_aggregate(run_aggregate, path):
    """Write the aggregate table as CSV"""
    aggregate_frame(run_aggregate).to_csv(path, index=False)


def write_figure_tables(run_aggregate, figures_dir):
    """One plot-ready CSV per metric family

    Returns:
        list: Paths written
    """
    os.makedirs(figures_dir, exist_ok=True)
    frame = aggregate_frame(run_aggregate)
    paths = []
    for name, columns in FIGURE_COLUMNS.items():
        path = os.path.join(figures_dir, f'{name}.csv')
        frame[['model', 'strategy'] + columns].to_csv(path, index=False)
        paths.append(path)
    return paths


def _table(headers, rows):
    lines = ['| ' + ' | '.join(headers) + ' |',
             '|' + '|'.join(['---'] * len(headers)) + '|']
    for row in rows:
        lines.append('| ' + ' | '.join(str(cell) for cell in row) + ' |')
    return '\n'.join(lines)


def _ratio(value):
    return 'n/a' if value is None else f"{value:.4f}"


def render_summary(config, run_aggregate, scores, run_id=''):
    """Markdown summary: one table per metric family, then the resolved config"""
    cells = run_aggregate.cells
    sections = [f"# Benchmark run {run_id}".rstrip(), '']

    sections.append('## Setup')
    sections.append('')
    sections.append(f"- Models: {', '.join(config.models)}")
    sections.append(f"- Strategies: {', '.join(s.label for s in config.strategies)}")
    sections.append(f"- Output structure: {config.schema_variant} "
                    f"(in prompt: {config.schema_in_prompt}, constraint: {config.use_constraint})")
    sections.append(f"- Notes: {len({s.note_id for s in scores})}, "
                    f"repetitions: {config.repetitions}, responses: {len(scores)}")
    sections.append(f"- Diagnosis match threshold: {config.scoring.diagnosis_match_threshold}")
    if config.uses_rag():
        retrieval = config.retrieval
        rag = [s for s in config.strategies if s.kind == 'rag']
        sections.append(f"- Retrieval: scorer {retrieval.scorer}"
                        + (f" ({retrieval.embedding_model})" if retrieval.embedding_model else '')
                        + f", lines per chunk {retrieval.lines_per_chunk}"
                        + f", query mode {retrieval.query_mode}, "
                        + ', '.join(f"{s.label}: k={s.k} token budget={s.token_budget}" for s in rag))
    sections.append('')

    sections.append('## JSON compliance')
    sections.append('')
    sections.append(_table(
        ['Model', 'Strategy', 'Responses', 'Strict', 'Recovered (fenced)', 'Parsed as JSON'],
        [[c.model, c.strategy, c.responses, percent(c.strict_json_rate),
          percent(c.recovered_rate), percent(c.json_parse_rate)] for c in cells]))
    sections.append('')

    sections.append('## Transcription similarity')
    sections.append('')
    sections.append(_table(['Model', 'Strategy', 'Mean similarity'],
                           [[c.model, c.strategy, _ratio(c.mean_similarity)] for c in cells]))
    sections.append('')

    sections.append('## Diagnostic codes')
    sections.append('')
    sections.append(_table(
        ['Model', 'Strategy'] + [code_class.value for code_class in CodeClass]
        + ['Correct rate', 'Code-like rate', 'Consistency'],
        [[c.model, c.strategy] + [c.class_counts[code_class.value] for code_class in CodeClass]
         + [percent(c.correct_rate), percent(c.code_like_rate), _ratio(c.consistency)]
         for c in cells]))
    sections.append('')

    sections.append('## Diagnosis extraction')
    sections.append('')
    sections.append(_table(['Model', 'Strategy', 'Precision', 'Recall'],
                           [[c.model, c.strategy, _ratio(c.diagnosis_precision),
                             _ratio(c.diagnosis_recall)] for c in cells]))
    sections.append('')

    sections.append('## Runtime')
    sections.append('')
    sections.append(_table(
        ['Model', 'Strategy', 'Mean', 'Min', 'Max', 'Timeouts', 'Empty', 'Server errors'],
        [[c.model, c.strategy, human_duration(c.runtime_mean), human_duration(c.runtime_min),
          human_duration(c.runtime_max), c.status_counts['timeout'],
          c.status_counts['empty_response'], c.status_counts['server_error']] for c in cells]))
    sections.append('')

    sections.append('## Error tags')
    sections.append('')
    sections.append(_table(['Model', 'Strategy'] + list(ERROR_TAGS),
                           [[c.model, c.strategy] + [c.tag_counts[t] for t in ERROR_TAGS]
                            for c in cells]))
    sections.append('')

    leaked = sorted({(s.strategy, s.note_id) for s in scores if s.leakage_flag})
    if leaked:
        sections.append('Notes that were also few-shot exemplars: '
                        + ', '.join(f"{strategy}/note {note_id}" for strategy, note_id in leaked))
        sections.append('')

    sections.append('## Resolved configuration')
    sections.append('')
    sections.append('```yaml')
    sections.append(dump_resolved(config).rstrip('\n'))
    sections.append('```')
    sections.append('')
    return '\n'.join(sections)


def write_report(artifacts, config, run_aggregate, scores):
    """Write summary.md and the figure tables for a run

    Returns:
        str: Path of the summary document
    """
    write_figure_tables(run_aggregate, artifacts.figures_dir)
    text = render_summary(config, run_aggregate, scores,
                          run_id=os.path.basename(artifacts.run_dir))
    with open(artifacts.summary, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.info(f"Summary written to {artifacts.summary}")
    return artifacts.summary
