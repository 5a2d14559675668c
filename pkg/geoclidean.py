#!/usr/bin/env python
"""
Geoclidean command line
Validates and renders concept programs, generates the few-shot dataset and
scores feature extractors on it.

    geoclidean.py validate concepts/elements/eq_triangle/target.gcl
    geoclidean.py render concepts/elements/eq_triangle/target.gcl --seed 7 --n 3
    geoclidean.py generate --seed 1 --out data/
    geoclidean.py eval --data data/ --extractor pixels32 --extractor edgehist
    geoclidean.py report --in data/scores.json
"""

import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

import concepts
import evaluation
from dsl import ERROR, ParseError, SkeletonMismatchError, check, load_program
from evaluation import EvaluationError, FeatureError
from realize import RealizeConfig, UnrealizableError, derive_seed, realize, to_scene
from render import RenderConfig, rasterize, render_vector, save_pgm, save_png, save_svg

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULT_OUT = "geoclidean_out"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID_PROGRAM = 4
EXIT_UNREALIZABLE = 5
EXIT_EVALUATION = 6


class MissingFileError(Exception):
    pass


def output_root():
    return Path(os.environ.get("GEOCLIDEAN_OUT") or DEFAULT_OUT)


def setup_logging(log_file=None, verbose=False):
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True
    )


def load_configs(path):
    """
    (RealizeConfig, RenderConfig) from a JSON file with optional `realize` and
    `render` sections, or from the config files saved in a generated dataset.
    """
    if path is None:
        return RealizeConfig(), RenderConfig()
    if not Path(path).exists():
        raise MissingFileError("config file %s not found" % path)
    if Path(path).is_dir():
        return (RealizeConfig.load(Path(path) / concepts.REALIZE_CONFIG_NAME),
                RenderConfig.load(Path(path) / concepts.RENDER_CONFIG_NAME))
    with open(path, 'r') as f:
        doc = json.load(f)
    logger.info("Configuration loaded from %s" % path)
    return RealizeConfig.from_dict(doc.get('realize', {})), RenderConfig.from_dict(doc.get('render', {}))


def require_file(path, what="file"):
    if not Path(path).exists():
        raise MissingFileError("%s %s not found" % (what, path))
    return Path(path)


# ---------------------------------------------------------------------------
# Subcommands

def cmd_validate(args):
    status = EXIT_OK
    for filename in args.files:
        source = require_file(filename, "program").read_text(encoding="utf-8")
        diagnostics = check(source)
        for d in diagnostics:
            print("%s:%s" % (filename, d))
        if any(d.severity == ERROR for d in diagnostics):
            status = EXIT_INVALID_PROGRAM
        else:
            print("%s: ok" % filename)
    if args.library:
        realize_config, _ = load_configs(args.config)
        report = concepts.library_report(seeds=range(args.seeds), config=realize_config)
        for entry in report:
            print("%-12s %-15s %-7s removed=%d failures=%d/%d mean_restarts=%s"
                  % (entry["split"], entry["concept"], entry["variant"], entry["removed"],
                     entry["failures"], entry["runs"],
                     "-" if entry["mean_restarts"] is None else "%.2f" % entry["mean_restarts"]))
        if any(entry["failures"] for entry in report):
            logger.error("[ERROR] some library programs failed to realize")
            status = status or EXIT_UNREALIZABLE
        else:
            logger.info("[OK] %d library programs realized" % len(report))
    elif not args.files:
        raise argparse.ArgumentTypeError("validate needs program files or --library")
    return status


def cmd_render(args):
    realize_config, render_config = load_configs(args.config)
    program = load_program(require_file(args.program, "program"))
    out_dir = Path(args.out) if args.out else output_root() / "renders"
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(1, args.n + 1):
        seed = derive_seed(args.seed, program.name, i)
        realization = realize(program, realize_config, seed=seed)
        scene = to_scene(realization)
        stem = out_dir / ("%s_%d" % (program.name, i))
        save_svg(render_vector(scene, render_config), stem.with_suffix(".svg"))
        image = rasterize(scene, render_config)
        save_png(image, stem.with_suffix(".png"))
        if args.pgm:
            save_pgm(image, stem.with_suffix(".pgm"))
        with open(stem.with_suffix(".json"), 'w') as f:
            json.dump(realization.to_json(), f, indent=2, sort_keys=True)
        logger.info("Rendered %s (seed %d, %d restarts)" % (stem, seed, realization.restarts))
    return EXIT_OK


def cmd_generate(args):
    realize_config, render_config = load_configs(args.config)
    tasks = None
    if args.concept:
        try:
            tasks = [concepts.get_task(c) for c in args.concept]
        except KeyError as e:
            raise argparse.ArgumentTypeError(str(e))
    out_dir = Path(args.out) if args.out else output_root()
    manifest = concepts.generate_dataset(args.seed, out_dir, realize_config, render_config,
                                         jobs=args.jobs, write_svg=args.svg, tasks=tasks,
                                         write_pgm=args.pgm)
    print("%d images, %d tasks, %d scoreable subtasks written to %s"
          % (len(manifest.rows), len(manifest.tasks), manifest.scoreable_subtasks, out_dir))
    return EXIT_OK


def cmd_eval(args):
    data_dir = Path(args.data) if args.data else output_root()
    require_file(data_dir / "manifest.csv", "manifest")
    if args.features:
        require_file(args.features, "features file")
    extractors = args.extractor or ["pixels32"]
    results = [evaluation.score_dataset(data_dir, ext, args.features, args.jobs) for ext in extractors]
    manifest = concepts.load_manifest(data_dir)
    report = evaluation.build_report(results, metadata={
        "data_dir": str(data_dir),
        "master_seed": manifest.master_seed,
        "generator_version": manifest.generator_version,
    })
    out = Path(args.out) if args.out else data_dir / "scores.json"
    evaluation.save_report(report, out)
    sys.stdout.write(evaluation.render_table(report))
    return EXIT_OK


def cmd_report(args):
    report = evaluation.load_report(require_file(args.input, "report"))
    sys.stdout.write(evaluation.render_table(report))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--log-file', help='also write log records to this file')
    common.add_argument('--verbose', action='store_true', help='debug logging')
    common.add_argument('--config', help='JSON file with optional "realize" and "render" sections, '
                                         'or a generated dataset directory to reuse its saved configs')

    parser = argparse.ArgumentParser(prog='geoclidean', description='Geoclidean concept toolchain')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate', parents=[common], help='check concept programs')
    p.add_argument('files', nargs='*', help='concept program files to check')
    p.add_argument('--library', action='store_true', help='realize every builtin program')
    p.add_argument('--seeds', type=int, default=20, help='realizations per program with --library (default 20)')
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('render', parents=[common], help='realize and draw one program')
    p.add_argument('program', help='concept program file')
    p.add_argument('--seed', type=int, default=0, help='master seed of the samples (default 0)')
    p.add_argument('--out', help='output directory (default $GEOCLIDEAN_OUT/renders)')
    p.add_argument('--n', type=int, default=1, help='number of samples to draw (default 1)')
    p.add_argument('--pgm', action='store_true', help='also write a PGM copy of each PNG')
    p.set_defaults(func=cmd_render)

    p = sub.add_parser('generate', parents=[common], help='generate the few-shot dataset')
    p.add_argument('--seed', type=int, default=0, help='master seed of the dataset (default 0)')
    p.add_argument('--out', help='dataset directory (default $GEOCLIDEAN_OUT)')
    p.add_argument('--jobs', type=int, help='worker threads (default: CPU count)')
    p.add_argument('--svg', action='store_true', help='also write SVG and realization JSON files')
    p.add_argument('--pgm', action='store_true', help='also write a PGM copy of each PNG')
    p.add_argument('--concept', action='append', help='restrict to these concepts (repeatable)')
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('eval', parents=[common], help='score extractors on a generated dataset')
    p.add_argument('--data', help='dataset directory (default $GEOCLIDEAN_OUT)')
    p.add_argument('--extractor', action='append', choices=evaluation.EXTRACTORS,
                   help='feature extractor to score (repeatable, default pixels32)')
    p.add_argument('--features', help='CSV of external features (image_path, v0, v1, ...)')
    p.add_argument('--out', help='report file (default <data>/scores.json)')
    p.add_argument('--jobs', type=int, help='worker threads for feature extraction')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('report', parents=[common], help='print a saved report as a table')
    p.add_argument('--in', dest='input', required=True, help='report JSON written by eval')
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    setup_logging(args.log_file, args.verbose)
    if getattr(args, 'n', 1) < 1:
        logger.error("--n must be at least 1")
        return EXIT_USAGE
    if args.command == 'eval' and 'external' in (args.extractor or []) and not args.features:
        logger.error("--extractor external needs --features")
        return EXIT_USAGE

    try:
        return args.func(args)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_UNEXPECTED
    except (MissingFileError, FileNotFoundError) as e:
        logger.error("[ERROR] %s" % e)
        return EXIT_MISSING_FILE
    except ParseError as e:
        for d in e.diagnostics:
            logger.error("%s: %s" % (e.name, d))
        return EXIT_INVALID_PROGRAM
    except SkeletonMismatchError as e:
        logger.error("[ERROR] %s" % e)
        return EXIT_INVALID_PROGRAM
    except UnrealizableError as e:
        logger.error("[ERROR] %s" % e)
        return EXIT_UNREALIZABLE
    except (FeatureError, EvaluationError) as e:
        logger.error("[ERROR] %s" % e)
        return EXIT_EVALUATION
    except (argparse.ArgumentTypeError, ValueError) as e:
        logger.error("[ERROR] %s" % e)
        return EXIT_USAGE
    except Exception as e:
        logger.error("Unexpected error: %s" % str(e))
        logger.error(traceback.format_exc())
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
