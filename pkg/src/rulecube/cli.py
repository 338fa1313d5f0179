"""Command-line driver: batch validation, calculation, views, traces,
documentation, audits, and serving the HTTP API.

Outputs are byte-stable for identical inputs: data goes to files or
stdout, timings and progress chatter go to stderr.  Exit codes: 0 ok,
1 usage, 2 validation (model/rules), 3 data (rejected rows, bad files),
4 internal.
"""

from __future__ import annotations

import csv
import io
import sys
from pathlib import Path

import click

from . import modelio
from .engine import WriteBackError
from .formula import FormulaError
from .model import ModelError
from .modelio import DataFormatError
from .rules import stats as rule_stats
from .session import ModelSession
from .trace import trace_export, trace_path
from .views import ViewSpec, grid_csv

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class DataError(Exception):
    """Load-level failure (rejected rows without --allow-rejects, bad data files)."""


def _load_session(model_path: str) -> ModelSession:
    return ModelSession.from_path(model_path)


def _detect_format(text: str) -> str:
    reader = csv.reader(io.StringIO(text))
    for row in reader:
        if row and row[0].strip().casefold() == "format_version":
            continue
        return "long" if any(c.strip().casefold() == "value" for c in row) else "wide"
    return "long"


def _load_data_files(
    session: ModelSession, data_paths: tuple[str, ...], spread: str | None, allow_rejects: bool
) -> None:
    for path in data_paths:
        text = Path(path).read_text(encoding="utf-8")
        fmt = _detect_format(text)
        report = session.load_csv(text, Path(path).name, fmt, spread)
        click.echo(
            f"{path}: {report.rows_loaded}/{report.rows_total} rows loaded "
            f"({fmt} format, {report.cells_written} cells)",
            err=True,
        )
        for line, reason in report.rejected:
            click.echo(f"{path}:{line}: rejected: {reason}", err=True)
        for warning in report.warnings:
            click.echo(f"{path}: warning: {warning}", err=True)
        if report.rejected and not allow_rejects:
            raise DataError(
                f"{len(report.rejected)} rejected row(s) in {path} "
                "(pass --allow-rejects to continue)"
            )


def _write_output(text: str, out: str | None) -> None:
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _parse_cell(text: str) -> dict[str, str]:
    fields = next(csv.reader(io.StringIO(text)))
    address: dict[str, str] = {}
    for part in fields:
        dim, eq, member = part.partition("=")
        if not eq:
            raise click.UsageError(f"cell coordinate {part!r} must be DIM=Member")
        address[dim.strip()] = member.strip()
    return address


@click.group()
def cli() -> None:
    """Dimensional rule-calculation engine."""


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
def validate(model: str) -> None:
    """Validate structure and rule bindings; report coverage lint findings."""
    session = _load_session(model)
    findings = session.lint()
    stats = session.stats()
    click.echo(
        f"model '{session.structure.name}': {len(session.structure.dimensions)} dimensions, "
        f"{stats.total_cells} cells, {len(session.rules)} rules"
    )
    for f in findings:
        click.echo(f"{f.kind}: {f.message}")
    if findings:
        raise DataError(f"{len(findings)} lint finding(s)")  # mapped to exit 2 below
    click.echo("clean")


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
def stats(model: str) -> None:
    """Print cell accounting for a model."""
    structure, rules = modelio.load_model(model)
    st = rule_stats(structure, rules)
    click.echo(
        f"cells={st.total_cells} input={st.input_cells} "
        f"calculated={st.calculated_cells} rules={len(rules)}"
    )


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_paths", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spread", default=None, help="Spread dimension for wide data files.")
@click.option("--out", default=None, help="Cell ledger output path (default stdout).")
@click.option("--allow-rejects", is_flag=True, default=False)
def calc(model, data_paths, spread, out, allow_rejects) -> None:
    """Load data, calculate every cell, export the cell ledger."""
    session = _load_session(model)
    _load_data_files(session, data_paths, spread, allow_rejects)
    report = session.calc()
    click.echo(
        f"calculated {report.total_written} rule writes "
        f"({report.overwrites} overwrites, {report.skipped_pinned} pinned) "
        f"in {report.duration_ms:.1f} ms",
        err=True,
    )
    _write_output(session.ledger(), out)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_paths", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spread", default=None)
@click.option("--spec", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, help="Grid CSV output path (default stdout).")
@click.option("--allow-rejects", is_flag=True, default=False)
def view(model, data_paths, spread, spec, out, allow_rejects) -> None:
    """Materialize a view specification to CSV."""
    import json

    session = _load_session(model)
    _load_data_files(session, data_paths, spread, allow_rejects)
    session.calc()
    doc = json.loads(Path(spec).read_text(encoding="utf-8"))
    grid = session.view(ViewSpec.from_document(doc))
    _write_output(grid_csv(grid), out)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_paths", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spread", default=None)
@click.option("--cell", required=True, help='Cell address, e.g. "ACCTS=Net sales,TIME=Qtr1,...".')
@click.option("--rule", default=None, help="Drill the root through this rule (default: winner).")
@click.option("--depth", default=1, show_default=True, help="Drill depth along first operands.")
@click.option("--path", "path_", default=None, help="Comma list of 1-based operand picks.")
@click.option("--out", default=None)
@click.option("--allow-rejects", is_flag=True, default=False)
def trace(model, data_paths, spread, cell, rule, depth, path_, out, allow_rejects) -> None:
    """Export a trace-precedence drill in tabular block format."""
    session = _load_session(model)
    _load_data_files(session, data_paths, spread, allow_rejects)
    session.calc()
    address = _parse_cell(cell)
    if path_:
        picks = [int(p) for p in path_.split(",") if p.strip()]
    else:
        picks = []
    choices: list[str | None] = [rule]
    nodes = trace_path(session.cube, session.rules, address, picks, choices)
    if not path_ and depth > 1:
        # No explicit path: follow the first operand of the winning rule.
        current = nodes[-1]
        for _ in range(depth - 1):
            if not current.children:
                break
            child = current.children[0]
            if child.rule is None:
                break
            current = session.trace(child.address, None, child.label)
            nodes.append(current)
    _write_output(trace_export(session.structure, nodes), out)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None)
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "csv"]))
def docs(model, out, fmt) -> None:
    """Export parent/child tables and the rule listing."""
    session = _load_session(model)
    _write_output(session.docs_csv() if fmt == "csv" else session.docs(), out)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_paths", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spread", default=None)
@click.option("--out", default=None)
@click.option("--allow-rejects", is_flag=True, default=False)
def audit(model, data_paths, spread, out, allow_rejects) -> None:
    """List cells whose alternative rule decompositions disagree."""
    session = _load_session(model)
    _load_data_files(session, data_paths, spread, allow_rejects)
    session.calc()
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["format_version", 1])
    dim_names = [d.name for d in session.structure.dimensions]
    writer.writerow(dim_names + ["Stored", "Rule", "Sequence", "Reading", "Agrees"])
    for report in session.audit():
        for reading in report.readings:
            writer.writerow(
                list(report.names)
                + [
                    report.stored.display(),
                    reading.rule_name,
                    reading.sequence,
                    reading.value.display(),
                    str(reading.agrees).lower(),
                ]
            )
    _write_output(buffer.getvalue(), out)
    click.echo(f"{len(session.audit())} disagreeing cell(s)", err=True)


@cli.command()
@click.option("--listen", default="127.0.0.1:8760", show_default=True)
@click.option(
    "--models-dir",
    default=None,
    type=click.Path(file_okay=False),
    envvar="RULECUBE_MODELS_DIR",
    help="Directory of model JSON (+ optional .data.csv) files to serve and persist.",
)
@click.option("--max-body-bytes", default=50_000_000, show_default=True, envvar="RULECUBE_MAX_BODY")
def serve(listen: str, models_dir: str | None, max_body_bytes: int) -> None:
    """Serve the HTTP API."""
    import uvicorn

    from .service import ModelRegistry, create_app

    host, _, port = listen.rpartition(":")
    app = create_app(ModelRegistry(models_dir), max_body_bytes)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except (ModelError, FormulaError) as e:
        click.echo(f"validation error: {e}", err=True)
        return EXIT_VALIDATION
    except DataError as e:
        message = str(e)
        click.echo(f"data error: {message}", err=True)
        return EXIT_VALIDATION if "lint finding" in message else EXIT_DATA
    except (OSError, UnicodeDecodeError) as e:
        click.echo(f"data error: {e}", err=True)
        return EXIT_DATA
    except Exception as e:  # pragma: no cover - defensive
        click.echo(f"internal error: {type(e).__name__}: {e}", err=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
