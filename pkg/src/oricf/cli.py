"""Command line entry point: ``oricf validate|run|worker|report|graph``.

Exit codes: 0 success, 1 validation or diagnostic failure, 2 runtime
failure, 3 usage error.  Machine output goes to stdout, diagnostics and
logs to stderr.  ``ORICF_LOG`` sets the log level (default INFO).
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
from typing import Optional, Sequence

from .orchestrator import Pipeline, StartupError, graph_dot
from .pipeline import SpecError, parse_hostport, parse_placement, parse_spec
from .telemetry import (
    LiveSampler, PowerParams, SamplerUnavailable, TraceError, build_report, read_trace_csv,
    write_trace_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2, 3

log = logging.getLogger("oricf")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read_spec(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise _UsageError(f"cannot read {path}: {exc}") from None
    return parse_spec(text)


def _print_diagnostics(err: SpecError) -> None:
    for d in err.diagnostics:
        print(f"error: {d}", file=sys.stderr)


def cmd_validate(args) -> int:
    try:
        _read_spec(args.spec)
    except SpecError as err:
        _print_diagnostics(err)
        return EXIT_INVALID
    return EXIT_OK


def cmd_graph(args) -> int:
    try:
        spec = _read_spec(args.spec)
    except SpecError as err:
        _print_diagnostics(err)
        return EXIT_INVALID
    sys.stdout.write(graph_dot(spec))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        spec = _read_spec(args.spec)
    except SpecError as err:
        _print_diagnostics(err)
        return EXIT_INVALID
    overrides = {}
    for item in args.placement:
        node, sep, target = item.partition("=")
        if not sep:
            raise _UsageError(f"--placement expects NODE=TARGET, got {item!r}")
        try:
            overrides[node] = parse_placement(target)
        except ValueError as exc:
            raise _UsageError(str(exc)) from None
    try:
        pipeline = Pipeline(spec, placement=overrides)
    except KeyError as exc:
        raise _UsageError(exc.args[0]) from None

    sampler = None
    try:
        if args.telemetry:
            sampler = LiveSampler(args.telemetry_interval_ms).__enter__()
        report = pipeline.run(duration=args.duration)
    except StartupError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except SamplerUnavailable as exc:
        log.error("telemetry: %s", exc)
        return EXIT_RUNTIME
    finally:
        if sampler is not None:
            sampler.__exit__(None, None, None)
    if sampler is not None and sampler.trace is not None:
        write_trace_csv(sampler.trace, args.telemetry)
        report.telemetry_trace = args.telemetry
    log.info("run finished in %.3f s (%s)", report.wall_time_s, report.stopped_by)
    sys.stdout.write(report.to_json(timing=args.timing) + "\n")
    sys.stdout.flush()
    return EXIT_OK if report.ok else EXIT_RUNTIME


def cmd_worker(args) -> int:
    from .offload.worker import Worker

    try:
        host, port = parse_hostport(args.listen)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    try:
        worker = Worker(host, port)
    except OSError as exc:
        log.error("cannot listen on %s: %s", args.listen, exc)
        return EXIT_RUNTIME
    log.info("worker listening on %s:%s", *worker.address[:2])

    def _term(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _term)
    signal.signal(signal.SIGINT, _term)
    worker.start()
    try:
        while worker._thread.is_alive():
            worker._thread.join(0.2)
    except KeyboardInterrupt:
        log.info("shutting down")
    finally:
        worker.stop()
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        params = PowerParams(args.p_idle, args.p_full)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    try:
        onboard = read_trace_csv(args.onboard, "onboard")
        offload = read_trace_csv(args.offload, "offload")
    except OSError as exc:
        raise _UsageError(f"cannot read trace: {exc}") from None
    except TraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        report = build_report(onboard, offload, params, args.statistic)
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(report.to_json() + "\n" if args.format == "json" else report.to_table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oricf", description="Declarative multimodal inference pipelines.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", help="check a pipeline spec")
    s.add_argument("spec")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("graph", help="print the pipeline as a DOT digraph")
    s.add_argument("spec")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("run", help="run a pipeline")
    s.add_argument("spec")
    s.add_argument("--duration", type=float, default=None, metavar="S",
                   help="stop after S seconds (default: run until sources are exhausted)")
    s.add_argument("--placement", action="append", default=[], metavar="NODE=TARGET",
                   help="override a node placement: onboard or edge://HOST:PORT")
    s.add_argument("--telemetry", metavar="CSV", help="record host CPU utilization to CSV")
    s.add_argument("--telemetry-interval-ms", type=float, default=100.0)
    s.add_argument("--timing", action="store_true", help="include wall time in the JSON report")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("worker", help="serve models for edge placement")
    s.add_argument("--listen", required=True, metavar="HOST:PORT")
    s.set_defaults(func=cmd_worker)

    s = sub.add_parser("report", help="utilization and energy comparison")
    s.add_argument("--onboard", required=True, metavar="CSV")
    s.add_argument("--offload", required=True, metavar="CSV")
    s.add_argument("--p-idle", type=float, default=5.0, metavar="W")
    s.add_argument("--p-full", type=float, default=25.0, metavar="W")
    s.add_argument("--statistic", choices=("median", "mean"), default="median")
    s.add_argument("--format", choices=("table", "json"), default="table")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("ORICF_LOG", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"oricf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
