#!/usr/bin/env python3
# medbench.py - Command-line entry point for the coding benchmark

import os
import sys
import logging
import argparse

import yaml

from analyzers.scoring import aggregate
from catalog.icd_catalog import load_catalog, catalog_stats
from config.settings import Settings, load_environment, load_experiment_config
from corpus.benchmark_corpus import load_corpus
from retrieval.retrieval_index import build_index, chunk_catalog, lexical_recall_gaps
from runner.experiment_runner import (RunArtifacts, preflight, run_experiment, rescore,
                                      load_scores, SCORES_FILE, AGGREGATE_FILE, CONFIG_FILE)
from runner.report import write_aggregate, write_report
from utils.exceptions import MedbenchError
from utils.helpers import append_jsonl, human_count
from utils.logger import setup_logging

logger = logging.getLogger('medbench')


def _preflight_ok(config):
    errors = preflight(config)
    for error in errors:
        print(f"preflight: {error}", file=sys.stderr)
    return not errors


def cmd_run(args):
    config = load_experiment_config(args.config, args.settings)
    if not args.skip_preflight and not _preflight_ok(config):
        return 1
    artifacts = run_experiment(config)
    print(f"Run written to {artifacts.run_dir}")
    return 0 if artifacts.complete() else 1


def cmd_validate(args):
    config = load_experiment_config(args.config, args.settings)
    if not _preflight_ok(config):
        return 1
    print("Preflight passed")
    return 0


def cmd_score(args):
    config = load_experiment_config(args.config, args.settings)
    scores = rescore(args.responses, config)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.responses))
    os.makedirs(out_dir, exist_ok=True)

    scores_path = os.path.join(out_dir, SCORES_FILE)
    with open(scores_path, 'w', encoding='utf-8') as f:
        for score in scores:
            append_jsonl(f, score.to_record())
    write_aggregate(aggregate(scores), os.path.join(out_dir, AGGREGATE_FILE))
    print(f"Scored {human_count(len(scores))} responses into {out_dir}")
    return 0


def cmd_report(args):
    artifacts = RunArtifacts(os.path.abspath(args.run_dir))
    config = load_experiment_config(os.path.join(artifacts.run_dir, CONFIG_FILE), args.settings)
    scores = load_scores(artifacts.scores)
    run_aggregate = aggregate(scores)
    write_aggregate(run_aggregate, artifacts.aggregate)
    print(f"Summary written to {write_report(artifacts, config, run_aggregate, scores)}")
    return 0


def cmd_catalog_stats(args):
    path = args.catalog or args.settings.CDC_CATALOG
    if not path:
        print("catalog-stats needs --catalog or MEDBENCH_CDC_CATALOG", file=sys.stderr)
        return 1
    catalog, errors = load_catalog(path)
    stats = catalog_stats(catalog)
    stats['parse_errors'] = len(errors)
    print(f"{human_count(stats['entries'])} codes from {stats['source']}")
    for error in errors[:args.show_errors]:
        print(f"  {error}")
    print(yaml.safe_dump({'by_length': stats['by_length'], 'by_letter': stats['by_letter'],
                          'parse_errors': stats['parse_errors']}, sort_keys=False).rstrip())

    if args.corpus:
        corpus = load_corpus(args.corpus)
        index = build_index(chunk_catalog(catalog, 1))
        gaps = lexical_recall_gaps(corpus, index, k=args.k)
        print(f"# lexical recall gaps at k={args.k}")
        print(yaml.safe_dump({os.path.basename(path): gaps}, sort_keys=False).rstrip())
    return 0 if not errors else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog='medbench',
        description='Offline diagnosis and ICD-10-CM code extraction benchmark')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('--env-file', default=None, help='env file to load (default config.env)')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run the experiment grid')
    run.add_argument('--config', required=True, help='experiment YAML file')
    run.add_argument('--skip-preflight', action='store_true')
    run.set_defaults(func=cmd_run)

    score = sub.add_parser('score', help='re-score an existing responses file')
    score.add_argument('--config', required=True)
    score.add_argument('--responses', required=True, help='responses.jsonl of a run')
    score.add_argument('--out', default=None, help='output directory (default: beside responses)')
    score.set_defaults(func=cmd_score)

    report = sub.add_parser('report', help='regenerate the summary of a run directory')
    report.add_argument('--run-dir', required=True)
    report.set_defaults(func=cmd_report)

    validate = sub.add_parser('validate', help='run the preflight checks only')
    validate.add_argument('--config', required=True)
    validate.set_defaults(func=cmd_validate)

    stats = sub.add_parser('catalog-stats', help='summarize a catalog file')
    stats.add_argument('--catalog', default=None,
                       help='catalog file (default: MEDBENCH_CDC_CATALOG)')
    stats.add_argument('--corpus', default=None, help='also list lexical recall gaps')
    stats.add_argument('--k', type=int, default=10)
    stats.add_argument('--show-errors', type=int, default=10)
    stats.set_defaults(func=cmd_catalog_stats)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    load_environment(args.env_file)
    try:
        settings = Settings()
    except MedbenchError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    setup_logging(args.log_level or settings.LOG_LEVEL, settings.LOG_FILE)
    args.settings = settings

    try:
        return args.func(args)
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 130
    except (MedbenchError, OSError) as e:
        logger.error(f"Error running {args.command}: {str(e)}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
