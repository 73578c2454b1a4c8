"""Command-line interface: run, parse, validate, export, synth.

Exit codes are stable: 0 ok, 1 findings, 2 budget exhausted, 3 backend
failure, 64 usage, 65 bad input data, 74 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import BadScriptError, HttpBackend, HttpBackendConfig, load_script
from .engine import EngineConfig, Outcome, run_session
from .exporters import (
    BadJsonError,
    IntegrityViolationError,
    SchemaViolationError,
    from_json,
    to_graphviz,
    to_json,
    to_training_example,
)
from .graph import ReasoningDag, node_counts
from .synth import synth_traces
from .trace import (
    InferOptions,
    ParseError,
    Trace,
    TraceApplyError,
    TraceBuilder,
    TraceError,
    apply_trace,
    dag_to_trace,
    dump_trace_file,
    infer_linkage,
    infer_linkage_lenient,
    parse_stream,
    parse_stream_lenient,
)
from .validator import lint

EX_OK = 0
EX_FINDINGS = 1
EX_BUDGET = 2
EX_BACKEND = 3
EX_USAGE = 64
EX_DATAERR = 65
EX_IOERR = 74

_OUTCOME_CODES = {
    Outcome.SUMMARIZED: EX_OK,
    Outcome.BUDGET_EXHAUSTED: EX_BUDGET,
    Outcome.BACKEND_FAILURE: EX_BACKEND,
}


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        self.code = code
        super().__init__(message)


# -- layered configuration -------------------------------------------------


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _to_list(value: Any) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


# key -> converter; engine keys first, then HTTP backend keys
CONFIG_KEYS: dict[str, Callable[[Any], Any]] = {
    "min_verified": int,
    "max_rounds": int,
    "max_refinements_per_line": int,
    "verify_markers": _to_list,
    "include_context_edges": _to_bool,
    "output_retries": int,
    "max_tokens": int,
    "temperature": float,
    "base_url": str,
    "model": str,
    "api_key_env": str,
    "timeout_ms": int,
    "retries": int,
}
_ENGINE_KEYS = ("min_verified", "max_rounds", "max_refinements_per_line", "verify_markers",
                "include_context_edges", "output_retries", "max_tokens", "temperature")
_HTTP_KEYS = ("base_url", "model", "api_key_env", "timeout_ms", "retries")


def load_config(
    flags: dict[str, Any],
    env: Optional[dict[str, str]] = None,
    config_path: Optional[str] = None,
) -> dict[str, Any]:
    """Merge settings with precedence flags > environment (DOT_<KEY>) > config file.

    The config file path comes from ``config_path`` or ``DOT_CONFIG``.
    """
    env = dict(os.environ if env is None else env)
    merged: dict[str, Any] = {}
    path = config_path or env.get("DOT_CONFIG")
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as e:
            raise CliError(EX_IOERR, f"cannot read config {path}: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise CliError(EX_USAGE, f"bad config file {path}: {e}") from e
        for key, value in data.items():
            if key not in CONFIG_KEYS:
                raise CliError(EX_USAGE, f"unknown config key {key!r} in {path}")
            merged[key] = value
    for key in CONFIG_KEYS:
        var = "DOT_" + key.upper()
        if var in env:
            merged[key] = env[var]
    for key, value in flags.items():
        if key not in CONFIG_KEYS:
            raise CliError(EX_USAGE, f"unknown setting {key!r}")
        if value is not None:
            merged[key] = value
    try:
        return {k: CONFIG_KEYS[k](v) for k, v in merged.items()}
    except (TypeError, ValueError) as e:
        raise CliError(EX_USAGE, f"bad config value: {e}") from e


def engine_config(settings: dict[str, Any]) -> EngineConfig:
    try:
        return EngineConfig(**{k: settings[k] for k in _ENGINE_KEYS if k in settings})
    except ValueError as e:
        raise CliError(EX_USAGE, str(e)) from e


def http_config(settings: dict[str, Any]) -> HttpBackendConfig:
    if "base_url" not in settings or "model" not in settings:
        raise CliError(EX_USAGE, "--http needs a base URL and a model")
    try:
        return HttpBackendConfig(**{k: settings[k] for k in _HTTP_KEYS if k in settings})
    except ValueError as e:
        raise CliError(EX_USAGE, str(e)) from e


# -- input helpers -------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise CliError(EX_IOERR, f"cannot read {path}: {e}") from e


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise CliError(EX_IOERR, f"cannot write {path}: {e}") from e


def _is_json(text: str) -> bool:
    return text.lstrip().startswith("{")


def _load_trace(text: str) -> Trace:
    try:
        return infer_linkage(parse_stream(text))
    except ParseError as e:
        raise CliError(EX_DATAERR, f"parse error: {e}") from e


def _load_dag(text: str, check: bool) -> ReasoningDag:
    if _is_json(text):
        try:
            return from_json(text, check=check)
        except (BadJsonError, SchemaViolationError) as e:
            raise CliError(EX_DATAERR, f"bad DAG document: {e}") from e
        except IntegrityViolationError as e:
            raise CliError(EX_DATAERR, f"unsound DAG: {e}") from e
    try:
        return apply_trace(_load_trace(text))
    except TraceApplyError as e:
        raise CliError(EX_DATAERR, f"trace error: {e}") from e


# -- commands ------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    if bool(args.script) == bool(args.http):
        raise CliError(EX_USAGE, "select exactly one backend: --script PATH or --http")
    flags = {
        "min_verified": args.min_verified,
        "max_rounds": args.max_rounds,
        "max_refinements_per_line": args.max_refinements_per_line,
        "verify_markers": args.verify_markers,
        "base_url": args.base_url,
        "model": args.model,
        "api_key_env": args.api_key_env,
        "timeout_ms": args.timeout_ms,
    }
    settings = load_config(flags, config_path=args.config)
    config = engine_config(settings)
    if args.script:
        try:
            backend = load_script(args.script)
        except OSError as e:
            raise CliError(EX_IOERR, f"cannot read script {args.script}: {e}") from e
        except BadScriptError as e:
            raise CliError(EX_DATAERR, f"bad script {args.script}: {e}") from e
    else:
        backend = HttpBackend(http_config(settings))
    if not args.problem.strip():
        raise CliError(EX_USAGE, "problem statement is empty")

    result = run_session(args.problem, backend, config)
    if args.out_trace:
        _write(args.out_trace, dump_trace_file(result.trace))
    if args.out_dag:
        _write(args.out_dag, to_json(result.dag))
    if result.outcome is Outcome.SUMMARIZED:
        print(result.answer)
    else:
        print(f"{result.outcome.value}: {result.error}", file=sys.stderr)
    return _OUTCOME_CODES[result.outcome]


def cmd_parse(args: argparse.Namespace) -> int:
    text = _read(args.path)
    if not args.lenient:
        try:
            dag = apply_trace(infer_linkage(parse_stream(text)))
        except ParseError as e:
            print(f"error: {e}", file=sys.stderr)
            return EX_DATAERR
        except TraceApplyError as e:
            print(f"error: {e}", file=sys.stderr)
            return EX_DATAERR
        counts = node_counts(dag)
        print(f"nodes: {counts.total}, edges: {counts.edges}")
        return EX_OK

    trace, findings = parse_stream_lenient(text)
    trace, link_findings = infer_linkage_lenient(trace, InferOptions())
    messages = [str(f) for f in findings + link_findings]
    try:
        builder = TraceBuilder(trace.problem)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EX_DATAERR
    for block in trace.blocks:
        try:
            builder.apply(block)
        except TraceApplyError as e:
            messages.append(str(e))
    for m in messages:
        print(f"finding: {m}")
    counts = node_counts(builder.dag)
    print(f"nodes: {counts.total}, edges: {counts.edges}")
    return EX_FINDINGS if messages else EX_OK


def cmd_validate(args: argparse.Namespace) -> int:
    dag = _load_dag(_read(args.path), check=False)
    findings = lint(dag)
    for v in findings:
        print(str(v))
    if not findings:
        counts = node_counts(dag)
        print(f"ok: nodes: {counts.total}, edges: {counts.edges}")
    return EX_FINDINGS if findings else EX_OK


def cmd_export(args: argparse.Namespace) -> int:
    text = _read(args.path)
    if args.format == "training":
        try:
            trace = dag_to_trace(_load_dag(text, check=True)) if _is_json(text) else _load_trace(text)
            out = to_training_example(trace)
        except (TraceError, IntegrityViolationError) as e:
            raise CliError(EX_DATAERR, str(e)) from e
    else:
        dag = _load_dag(text, check=True)
        out = to_json(dag) if args.format == "json" else to_graphviz(dag, args.figure_style)
    _write(args.out, out)
    return EX_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if args.count < 0 or args.depth < 1 or not 0.0 <= args.refute_rate <= 1.0:
        raise CliError(EX_USAGE, "need count >= 0, depth >= 1 and refute-rate in [0, 1]")
    traces = synth_traces(args.seed, args.count, args.depth, args.refute_rate)
    if not traces:
        return EX_OK
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(EX_IOERR, f"cannot create {out_dir}: {e}") from e
    for i, trace in enumerate(traces):
        _write(str(out_dir / f"trace_{i:04d}.trace"), dump_trace_file(trace))
    print(f"wrote {len(traces)} traces to {out_dir}")
    return EX_OK


# -- argument parsing ----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dotreason", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML settings file (default: $DOT_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a reasoning session")
    run.add_argument("problem")
    run.add_argument("--script", help="replay completions from a script file")
    run.add_argument("--http", action="store_true", help="use an OpenAI-compatible server")
    run.add_argument("--base-url")
    run.add_argument("--model")
    run.add_argument("--api-key-env")
    run.add_argument("--timeout-ms", type=int)
    run.add_argument("--min-verified", type=int)
    run.add_argument("--max-rounds", type=int)
    run.add_argument("--max-refinements-per-line", type=int)
    run.add_argument("--verify-markers", help="comma-separated list")
    run.add_argument("--out-trace")
    run.add_argument("--out-dag")
    run.set_defaults(func=cmd_run)

    parse = sub.add_parser("parse", help="parse a trace file and report its size")
    parse.add_argument("path")
    mode = parse.add_mutually_exclusive_group()
    mode.add_argument("--strict", action="store_true", help="stop at the first error (default)")
    mode.add_argument("--lenient", action="store_true", help="report every error")
    parse.set_defaults(func=cmd_parse)

    validate = sub.add_parser("validate", help="check a DAG JSON or trace file")
    validate.add_argument("path")
    validate.set_defaults(func=cmd_validate)

    export = sub.add_parser("export", help="convert a DAG JSON or trace file")
    export.add_argument("path")
    export.add_argument("--format", choices=("json", "graphviz", "training"), default="json")
    export.add_argument("--figure-style", action="store_true")
    export.add_argument("--out")
    export.set_defaults(func=cmd_export)

    synth = sub.add_parser("synth", help="generate random well-formed traces")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--depth", type=int, default=3)
    synth.add_argument("--refute-rate", type=float, default=0.3)
    synth.add_argument("--count", type=int, default=10)
    synth.add_argument("--out-dir", default="synth")
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
