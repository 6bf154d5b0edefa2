"""mapu CLI entrypoint."""

from __future__ import annotations

import logging

import typer
from rich.console import Console
from rich.logging import RichHandler

from mapu_lab import __version__
from mapu_lab.output import OutputContext

app = typer.Typer(
    name="mapu",
    help="Source-free time series domain adaptation with temporal imputation and evidential uncertainty.",
    no_args_is_help=True,
)


class State:
    """Global state shared across commands."""

    output: OutputContext


state = State()

_LEVELS = {0: logging.WARNING, 1: logging.INFO}


def version_callback(value: bool) -> None:
    if value:
        typer.echo(f"mapu {__version__}")
        raise typer.Exit()


def configure_logging(verbosity: int) -> None:
    """WARNING by default, INFO with -v, DEBUG with -vv; always on stderr."""
    package_logger = logging.getLogger("mapu_lab")
    package_logger.handlers.clear()
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(_LEVELS.get(verbosity, logging.DEBUG))


@app.callback()
def main(
    version: bool | None = typer.Option(
        None,
        "--version",
        "-V",
        help="Show version and exit.",
        callback=version_callback,
        is_eager=True,
    ),
    output_json: bool = typer.Option(False, "--json", help="Output as JSON."),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress status messages."),
    verbose: int = typer.Option(0, "--verbose", "-v", count=True, help="Log training progress (-vv for per-batch)."),
) -> None:
    """mapu - pretrain, adapt and evaluate time series classifiers across domain shift."""
    configure_logging(verbose)
    state.output = OutputContext(quiet=quiet, force_json=output_json)


# Import and register commands
from mapu_lab.commands import adapt, evaluate, generate, pretrain, scenario  # noqa: E402

app.command("generate")(generate.generate)
app.command("pretrain")(pretrain.pretrain)
app.command("adapt")(adapt.adapt)
app.command("evaluate")(evaluate.evaluate)
app.command("scenario")(scenario.scenario)

if __name__ == "__main__":
    app()
