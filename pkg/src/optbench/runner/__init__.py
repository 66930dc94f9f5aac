"""Command-line batch runner over the on-disk registry."""

from .cli import main, run_cli
from .lists import ListFile, RegistryError, RegistryLayout, load_registry, parse_list_text, read_list, tree_checksum
from .pipeline import (
    DirectiveError,
    ResolutionError,
    RunDirective,
    RunnerError,
    RunPlan,
    RunResult,
    execute_run,
    parse_directives,
    resolve_and_validate,
)
from .records import RecordFormatError, RunRecord

__all__ = [
    "DirectiveError",
    "ListFile",
    "RecordFormatError",
    "RegistryError",
    "RegistryLayout",
    "ResolutionError",
    "RunDirective",
    "RunPlan",
    "RunRecord",
    "RunResult",
    "RunnerError",
    "execute_run",
    "load_registry",
    "main",
    "parse_directives",
    "parse_list_text",
    "read_list",
    "resolve_and_validate",
    "run_cli",
    "tree_checksum",
]
