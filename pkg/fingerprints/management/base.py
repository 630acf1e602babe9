# fingerprints/management/base.py
from __future__ import annotations

import logging
import sys
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, TypeVar, Union, cast

from django.core.management.base import BaseCommand, CommandError, CommandParser

from fingerprints.services.config import RunConfig, load_run_config
from fingerprints.services.errors import (
    ConfigError,
    DatasetParseError,
    FingerprintError,
    InvalidInputError,
    NumericalError,
)
from fingerprints.services.manifest import MANIFEST_NAME, build_manifest
from fingerprints.services.storage import write_json

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NUMERICAL = 3

HandleMethod = TypeVar("HandleMethod", bound=Callable[..., Any])


class UsageExitParser(CommandParser):
    """Argument errors exit with the usage code instead of argparse's 2."""

    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


def exit_code_for(exc: FingerprintError) -> int:
    if isinstance(exc, DatasetParseError):
        return EXIT_PARSE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_USAGE


def maps_pipeline_errors(handle: HandleMethod) -> HandleMethod:
    """
    Decorator for command `handle` methods: service-layer errors become
    CommandError with the matching exit code.

      usage (ConfigError, InvalidInputError)  -> 1
      parse (DatasetParseError)               -> 2
      numerical (NumericalError)              -> 3
    """
    @wraps(handle)
    def _wrapped(self, *args, **options):
        try:
            return handle(self, *args, **options)
        except FingerprintError as exc:
            code = exit_code_for(exc)
            logger.debug("Command failed with exit code %d: %s", code, exc)
            raise CommandError(str(exc), returncode=code) from exc

    return cast(HandleMethod, _wrapped)


class RunResult(NamedTuple):
    inputs: Dict[str, Path]
    outputs: List[Path]


class PipelineCommand(BaseCommand):
    """
    Base class of every pipeline command.

    Subclasses set `name`, add their own arguments in `add_command_arguments` and
    implement `run(config, out_dir, options)`, returning the files they read and
    wrote. The base class layers the configuration, creates the output
    directory and writes manifest.json.
    """
    name = ""

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.__class__ = UsageExitParser
        return parser

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Key-value config file (KEY=VALUE lines).")
        parser.add_argument("--seed", type=int, help="Seed of every random stream.")
        parser.add_argument("--workers", type=int, help="Worker threads (results do not depend on it).")
        parser.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override one configuration key; repeatable.",
        )
        parser.add_argument("--out-dir", default=".", help="Directory the outputs are written to.")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, config: RunConfig, out_dir: Path, options: Dict[str, Any]) -> RunResult:
        raise NotImplementedError

    @maps_pipeline_errors
    def handle(self, *args, **options):
        config = load_run_config(
            config_path=options.get("config"),
            assignments=options.get("set") or (),
            seed=options.get("seed"),
            workers=options.get("workers"),
        )
        out_dir = Path(options.get("out_dir") or ".")
        out_dir.mkdir(parents=True, exist_ok=True)

        logger.info("Running %s (seed %d, %d worker(s)).", self.name, config.seed, config.workers)
        result = self.run(config, out_dir, options)
        manifest_path = write_json(out_dir / MANIFEST_NAME, build_manifest(self.name, config, result.inputs))

        for path in [*result.outputs, manifest_path]:
            self.stdout.write(f"Wrote {path}")
        self.stdout.write(self.style.SUCCESS(f"{self.name} finished."))

    @staticmethod
    def input_path(options: Dict[str, Any], key: str) -> Path:
        value: Union[str, None] = options.get(key)
        if not value:
            raise InvalidInputError(f"--{key.replace('_', '-')} is required.")
        path = Path(value)
        if not path.is_file():
            raise InvalidInputError(f"Input file '{path}' does not exist.")
        return path
