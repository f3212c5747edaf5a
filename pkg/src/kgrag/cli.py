"""Thin-client CLI for the engine service.

Every subcommand marshals through the HTTP API. With --server the requests
hit a running instance; without it an in-process app is created for the
duration of the command, so one-shot use needs no daemon.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import asyncio
import json
import sys
from hashlib import sha256
from pathlib import Path

import click
import httpx

from .agent import ConfigurationError
from .config import EngineConfig
from .evalkit import load_eval_records


class CliFailure(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


class EngineClient:
    """HTTP client over either a remote server or a local in-process app."""

    def __init__(self, server: str | None, config: EngineConfig) -> None:
        self.server = server
        self._app = None
        if server is None:
            from .service import create_app

            self._app = create_app(config)

    def request(self, method: str, path: str, payload: dict | None = None) -> httpx.Response:
        if self._app is None:
            with httpx.Client(base_url=self.server, timeout=600.0) as client:
                return client.request(method, path, json=payload)

        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport, base_url="http://engine") as client:
                return await client.request(method, path, json=payload)

        return asyncio.run(go())


def _handle(response: httpx.Response) -> dict:
    if response.status_code == 200:
        return response.json()
    try:
        detail = response.json().get("detail", response.text)
    except ValueError:
        detail = response.text
    code = 1 if 400 <= response.status_code < 500 else 2
    raise CliFailure(code, f"{response.status_code}: {detail}")


def _load_config(ctx: click.Context) -> EngineConfig:
    path = ctx.obj.get("config_path")
    return EngineConfig.from_file(path) if path else EngineConfig()


def _client(ctx: click.Context, config: EngineConfig) -> EngineClient:
    return EngineClient(ctx.obj.get("server"), config)


def _echo_json(data: dict) -> None:
    click.echo(json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2))


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Engine config file (YAML or JSON).")
@click.option("--server", default=None, envvar="KGRAG_SERVER",
              help="URL of a running engine; omitted means in-process.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, server: str | None) -> None:
    """Query a passage corpus with KG-assisted agentic retrieval."""
    ctx.obj = {"config_path": config_path, "server": server}


@cli.command()
@click.argument("corpus", type=click.Path())
@click.option("--index-path", default=None, help="Where to persist the built index.")
@click.pass_context
def ingest(ctx: click.Context, corpus: str, index_path: str | None) -> None:
    """Build the passage index from a line-delimited corpus file."""
    config = _load_config(ctx)
    client = _client(ctx, config)
    response = client.request(
        "POST", "/ingest", {"corpus_path": corpus, "index_path": index_path}
    )
    _echo_json(_handle(response))


@cli.command("load-kg")
@click.argument("kg_file", type=click.Path())
@click.option("--literal-filter/--no-literal-filter", default=None,
              help="Drop literal-object triples (default: config setting, on).")
@click.pass_context
def load_kg_cmd(ctx: click.Context, kg_file: str, literal_filter: bool | None) -> None:
    """Load KG triples and entity aliases from a line-delimited file."""
    config = _load_config(ctx)
    client = _client(ctx, config)
    response = client.request(
        "POST", "/load-kg", {"kg_path": kg_file, "literal_filter": literal_filter}
    )
    _echo_json(_handle(response))


@cli.command()
@click.argument("question")
@click.option("--mock-script", type=click.Path(), default=None,
              help="Scripted LLM responses (local engine only).")
@click.option("--trace-dir", type=click.Path(), default=None,
              help="Write the run trace into this directory.")
@click.pass_context
def ask(ctx: click.Context, question: str, mock_script: str | None,
        trace_dir: str | None) -> None:
    """Answer one question and print the answer."""
    config = _load_config(ctx)
    if mock_script:
        if ctx.obj.get("server"):
            raise CliFailure(1, "--mock-script requires a local engine (omit --server)")
        config.llm.mock_script = mock_script
    client = _client(ctx, config)
    response = client.request(
        "POST", "/ask", {"question": question, "include_trace": bool(trace_dir)}
    )
    data = _handle(response)
    if trace_dir:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
        digest = sha256(question.encode("utf-8")).hexdigest()[:12]
        path = Path(trace_dir) / f"trace_{digest}.json"
        path.write_text(
            json.dumps(data["trace"], ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        click.echo(f"trace written to {path}", err=True)
    click.echo(data["answer"])


@cli.command()
@click.argument("eval_file", type=click.Path())
@click.option("--mock-script", type=click.Path(), default=None,
              help="Scripted LLM responses (local engine only).")
@click.option("--trace-dir", type=click.Path(), default=None,
              help="Engine writes per-question traces into this directory.")
@click.option("--report-out", type=click.Path(), default=None,
              help="Write the report JSON here instead of stdout.")
@click.option("--max-workers", type=int, default=1, show_default=True)
@click.pass_context
def batch(ctx: click.Context, eval_file: str, mock_script: str | None,
          trace_dir: str | None, report_out: str | None, max_workers: int) -> None:
    """Run an eval file through the pipeline and report metrics."""
    config = _load_config(ctx)
    if mock_script:
        if ctx.obj.get("server"):
            raise CliFailure(1, "--mock-script requires a local engine (omit --server)")
        config.llm.mock_script = mock_script
    try:
        records = load_eval_records(eval_file)
    except (OSError, ValueError) as exc:
        raise CliFailure(1, str(exc)) from exc
    payload_records = []
    for record in records:
        row: dict = {"question": record.question}
        if record.gold_answer is not None:
            row["gold_answer"] = record.gold_answer
        if record.gold_passage_ids is not None:
            row["gold_passage_ids"] = list(record.gold_passage_ids)
        payload_records.append(row)
    client = _client(ctx, config)
    response = client.request(
        "POST",
        "/batch",
        {"records": payload_records, "trace_dir": trace_dir, "max_workers": max_workers},
    )
    report = _handle(response)["report"]
    text = json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    if report_out:
        Path(report_out).write_text(text, encoding="utf-8")
        click.echo(f"report written to {report_out}", err=True)
    else:
        click.echo(text, nl=False)


@cli.command("sample-taxonomy")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=int, default=1, show_default=True)
@click.pass_context
def sample_taxonomy(ctx: click.Context, seed: int, count: int) -> None:
    """Draw question-category combinations from the default taxonomy."""
    config = _load_config(ctx)
    client = _client(ctx, config)
    response = client.request("POST", "/taxonomy/sample", {"seed": seed, "count": count})
    _echo_json(_handle(response))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_context
def serve(ctx: click.Context, host: str, port: int) -> None:
    """Run the engine as a long-lived HTTP service."""
    if ctx.obj.get("server"):
        raise CliFailure(1, "serve starts a local engine; --server does not apply")
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(_load_config(ctx)), host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    try:
        cli(args=argv, standalone_mode=False)
        return 0
    except CliFailure as exc:
        click.echo(f"error: {exc.message}", err=True)
        return exc.code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ConfigurationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except httpx.HTTPError as exc:
        click.echo(f"error: request failed: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
