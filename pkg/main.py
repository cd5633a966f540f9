#!/usr/bin/env python3
"""
Conversational Bandit Experiments
Command-line entry point: run configured experiments, generate datasets, analyze
key-term rating aggregates and validate input files.
"""

import argparse
import logging
import sys
from functools import partial
from pathlib import Path
from typing import List, Optional, Sequence

from catalog import read_graph_csv, validate_catalog
from dataset_generator import cmd_generate_dataset
from environments import (ContextualEnvironment, Environment, build_synthetic_contextual,
                          build_synthetic_stochastic, load_dataset_env)
from experiment_config import (ConfigError, EnvironmentKind, EnvironmentSpec, PolicySpec,
                               RunConfig, load_preset, parse_config, with_overrides)
from experiment_output import ExperimentOutputGenerator
from harness import run_batch
from keyterm_analysis import KeyTermRewardAnalyzer
from policies import BanditPolicy, build_policy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _synthetic_stochastic_env(spec: EnvironmentSpec, repetition: int, seed: int) -> Environment:
    return build_synthetic_stochastic(spec.num_keyterms, spec.items_per_keyterm, lam=spec.discount,
                                      seed=seed, keyterm_model=spec.keyterm_model)


def _synthetic_contextual_env(spec: EnvironmentSpec, repetition: int, seed: int) -> Environment:
    return build_synthetic_contextual(spec.num_keyterms, spec.items_per_keyterm,
                                      dim_mode=spec.dim_mode, lam=spec.discount,
                                      noise_sigma=spec.noise_sigma, seed=seed, dim=spec.dim)


def _dataset_env(files: dict, lam: float, noise_sigma: float, repetition: int,
                 seed: int) -> ContextualEnvironment:
    """Repetition i runs user i mod |users|."""
    envs = load_dataset_env(files['items'], files.get('keyterms'), files['graph'], files['users'],
                            lam=lam, noise_sigma=noise_sigma, seed=seed)
    env = envs[repetition % len(envs)]
    env.reseed(seed)
    return env


def _policy_for(spec: PolicySpec, env: Environment, seed: int) -> BanditPolicy:
    return build_policy(spec.kind, env, gamma=spec.gamma, alpha=spec.alpha,
                        schedule_scale=spec.schedule_scale, schedule_base=spec.schedule_base)


def dataset_files(spec: EnvironmentSpec, output_dir: Path) -> dict:
    """Resolve dataset file paths, generating them first when a generator block is set."""
    if spec.generator is not None:
        gen = spec.generator
        return cmd_generate_dataset(gen.num_users, gen.num_items, gen.num_keyterms, gen.dim,
                                    gen.seed, output_dir / "dataset",
                                    with_keyterm_contexts=gen.keyterm_contexts)
    files = {'items': str(spec.items_file), 'graph': str(spec.graph_file), 'users': str(spec.users_file)}
    if spec.keyterms_file is not None:
        files['keyterms'] = str(spec.keyterms_file)
    return files


def environment_builder(config: RunConfig):
    """Picklable (repetition, seed) -> Environment factory for the configured environment."""
    spec = config.environment
    if spec.kind is EnvironmentKind.SYNTHETIC_STOCHASTIC:
        return partial(_synthetic_stochastic_env, spec)
    if spec.kind is EnvironmentKind.SYNTHETIC_CONTEXTUAL:
        return partial(_synthetic_contextual_env, spec)
    files = dataset_files(spec, Path(config.output_dir))
    return partial(_dataset_env, files, spec.discount, spec.noise_sigma)


def cmd_run(config: RunConfig, excel: bool = False, debug: bool = False) -> int:
    """Run every configured policy and write batch CSVs, the manifest and optional extras."""
    output = ExperimentOutputGenerator(config.output_dir, debug=debug)
    env_builder = environment_builder(config)
    logger.info(f"📊 Running '{config.name}': {len(config.policies)} policies, "
                f"T={config.horizon}, {config.repetitions} repetitions")

    for spec in config.policies:
        result = run_batch(env_builder, partial(_policy_for, spec), config.horizon,
                           config.repetitions, base_seed=config.base_seed, workers=config.workers,
                           keep_traces=config.save_traces, label=spec.name)
        output.add_result(spec.name, result)

    output.write_batches()
    output.write_repetitions()
    if config.save_traces:
        output.write_traces()
    output.write_manifest(config.name, config.config_hash(), config.base_seed, extra={
        'environment': config.environment.kind.value,
        'horizon': config.horizon,
        'repetitions': config.repetitions,
    })
    if excel:
        output.export_to_excel()
    output.print_summary()
    return EXIT_OK


def cmd_analyze(ratings_csv, alphas: Sequence[float], out=None, debug: bool = False) -> str:
    """Aggregate report CSV, one row per category."""
    analyzer = KeyTermRewardAnalyzer(debug=debug)
    analyzer.load_ratings(ratings_csv)
    report = analyzer.analyze(alphas)
    path = Path(out) if out else Path(ratings_csv).with_name(Path(ratings_csv).stem + "_aggregates.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(path, index=False, lineterminator='\n')
    print(report.to_string(index=False))
    logger.info(f"✅ Aggregates written: {path}")
    return str(path)


def cmd_validate(config: Optional[RunConfig] = None, graph=None) -> List[str]:
    """Problems found in a standalone graph file and/or a configuration's environment."""
    problems: List[str] = []
    if graph is not None:
        problems.extend(f"{Path(graph).name}: {v}" for v in validate_catalog(read_graph_csv(graph)))
    if config is not None:
        try:
            env = environment_builder(config)(0, config.base_seed)
            problems.extend(validate_catalog(env.catalog))
            for spec in config.policies:
                _policy_for(spec, env, config.base_seed)
        except ValueError as exc:
            problems.append(str(exc))
    return problems


def _load_run_config(args) -> RunConfig:
    if args.config:
        config = parse_config(Path(args.config).read_text(encoding='utf-8'), preset=args.preset)
    elif args.preset:
        config = load_preset(args.preset)
    else:
        raise ConfigError("either --config or --preset is required")
    return with_overrides(config, output_dir=args.out, base_seed=args.seed,
                          workers=getattr(args, 'workers', None))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Conversational bandit experiments")
    parser.add_argument('--debug', action='store_true', help="verbose logging")
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help="run a configured experiment")
    run.add_argument('--config', help="YAML run configuration")
    run.add_argument('--preset', help="named preset (paper-synthetic, desk-contextual, smoke)")
    run.add_argument('--out', help="output directory override")
    run.add_argument('--seed', type=int, help="base seed override")
    run.add_argument('--workers', type=int, help="parallel repetition workers")
    run.add_argument('--excel', action='store_true', help="also write an Excel workbook")

    gen = sub.add_parser('generate-dataset', help="write a synthetic contextual dataset")
    gen.add_argument('--users', type=int, default=20)
    gen.add_argument('--items', type=int, default=200)
    gen.add_argument('--keyterms', type=int, default=20)
    gen.add_argument('--dim', type=int, default=20)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--keyterm-contexts', action='store_true', help="also write keyterms.csv")
    gen.add_argument('--out', required=True)

    analyze = sub.add_parser('analyze', help="compare key-term rating aggregates")
    analyze.add_argument('ratings', help="CSV with category,item,rating[,weight]")
    analyze.add_argument('--alphas', type=float, nargs='+', default=[0.2, 0.5, 1.0])
    analyze.add_argument('--out', help="report CSV path")

    validate = sub.add_parser('validate', help="validate a configuration or graph file")
    validate.add_argument('--config')
    validate.add_argument('--preset')
    validate.add_argument('--graph', help="graph CSV with dense integer ids")
    validate.add_argument('--out')
    validate.add_argument('--seed', type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.INFO,
                        format='%(levelname)s - %(message)s')
    try:
        if args.command == 'run':
            return cmd_run(_load_run_config(args), excel=args.excel, debug=args.debug)
        if args.command == 'generate-dataset':
            files = cmd_generate_dataset(args.users, args.items, args.keyterms, args.dim,
                                         args.seed, args.out, with_keyterm_contexts=args.keyterm_contexts)
            for name, path in files.items():
                print(f"📄 {name}: {path}")
            return EXIT_OK
        if args.command == 'analyze':
            cmd_analyze(args.ratings, args.alphas, args.out, debug=args.debug)
            return EXIT_OK
        if args.command == 'validate':
            config = _load_run_config(args) if (args.config or args.preset) else None
            if config is None and args.graph is None:
                raise ConfigError("validate needs --config, --preset or --graph")
            problems = cmd_validate(config, args.graph)
            for problem in problems:
                print(f"❌ {problem}")
            if problems:
                return EXIT_FAILURE
            print("✅ Validation passed")
            return EXIT_OK
    except ConfigError as exc:
        logger.error(f"❌ Configuration error: {exc}")
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        logger.error(f"❌ {exc}")
        return EXIT_FAILURE
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
