"""Command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .bundle import ERROR_NAME, ResultBundle
from .config import ConfigParseError, ConfigValidationError, get_settings, parse_config
from .export import write_task_result
from .schemas import RunConfig
from .services.experiments import ExperimentService

logger = logging.getLogger("photonic_qelm")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_BAD_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonic-qelm",
        description="Simulate a photonic quantum extreme learning machine run.",
    )
    parser.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, default=None, help="bundle directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return parser


def run(config: RunConfig, out_dir: str | Path, threads: int = 1) -> ResultBundle:
    """Execute one configured task into a result bundle.

    The manifest is written before computing; on failure an ``error.json`` record is
    added, the manifest is marked failed and the exception propagates.
    """

    bundle = ResultBundle(out_dir)
    bundle.write_manifest(config)
    try:
        result = ExperimentService(config, threads=threads).run()
        write_task_result(result, bundle)
    except Exception as exc:
        bundle.write_error(exc, include_traceback=logger.isEnabledFor(logging.DEBUG))
        bundle.finalize("failed")
        raise
    if result.error is not None:
        bundle.write_json(ERROR_NAME, {"type": "RunFailed", "message": result.error})
        bundle.finalize("failed")
    else:
        bundle.finalize("completed")
    return bundle


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=logging.WARNING if args.quiet else settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    out_dir = args.out or settings.output_dir
    threads = args.threads or settings.threads

    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config = RunConfig.model_validate(config.model_dump() | {"seed": args.seed})
    except (ConfigParseError, ConfigValidationError) as exc:
        logger.error("%s", exc)
        ResultBundle(out_dir).write_error(exc)
        return EXIT_BAD_CONFIG

    logger.info("running task %s (seed %d) into %s", config.task.value, config.seed, out_dir)
    try:
        bundle = run(config, out_dir, threads=threads)
    except Exception as exc:
        logger.error("run failed: %s", exc, exc_info=logger.isEnabledFor(logging.DEBUG))
        return EXIT_RUN_FAILED
    if bundle.status != "completed":
        logger.error("run finished with errors, see %s", bundle.root / ERROR_NAME)
        return EXIT_RUN_FAILED
    logger.info("wrote %d files to %s", len(bundle.files), bundle.root)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
