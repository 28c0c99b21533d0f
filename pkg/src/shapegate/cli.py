"""Command-line entry point: scan, plan, serve, diff, validate, demo-origin.

Exit codes: 0 success, 1 error (network, TLS, file, parse, invalid policy),
2 when --fail-under is given and the score falls below it.
"""

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .demo_origin import PERSONAS, DemoOrigin
from .errors import ShapegateError
from .policy import load_policy, plan_from_scan, save_policy, validate_policy
from .proxy import ShapingProxy
from .reporting import (diff_reports, parse_report_json, remediation_map,
                        render, render_remediation_table)
from .scanner import run_scan

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1 (2 is reserved)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _address(value: str):
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(
            f"expected HOST:PORT, got {value!r}")
    return host, int(port)


def _emit(text: str, output):
    data = text if text.endswith("\n") else text + "\n"
    if output:
        Path(output).write_text(data, "utf-8")
    else:
        sys.stdout.write(data)


def build_parser() -> _Parser:
    parser = _Parser(prog="shapegate",
                     description="Scan a web origin, derive a zero-trust policy, "
                                 "enforce it through a transparent proxy, and diff "
                                 "the before/after posture.")
    parser.add_argument("--version", action="version", version=f"shapegate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_scan = sub.add_parser("scan", help="run the eleven security tests against a URL")
    p_scan.add_argument("url")
    p_scan.add_argument("--format", choices=("table", "json"), default="table")
    p_scan.add_argument("--output", metavar="FILE")
    p_scan.add_argument("--timeout-ms", type=int, default=10000)
    p_scan.add_argument("--accept-invalid-tls", action="store_true",
                        help="accept self-signed certificates (demo loop)")
    p_scan.add_argument("--http-probe-port", type=int, default=None,
                        help="port for the plain-HTTP redirection probe")
    p_scan.add_argument("--fail-under", type=int, default=None, metavar="SCORE")
    p_scan.add_argument("--ascii", action="store_true",
                        help="ok/fail/-- marks instead of unicode glyphs")

    p_plan = sub.add_parser("plan", help="derive an enforcement policy from a scan report")
    p_plan.add_argument("--from-report", required=True, metavar="FILE")
    p_plan.add_argument("--enable-hsts", action="store_true")
    p_plan.add_argument("--out", required=True, metavar="POLICY")

    p_serve = sub.add_parser("serve", help="run the shaping proxy in front of an upstream")
    p_serve.add_argument("--policy", required=True, metavar="FILE")
    p_serve.add_argument("--upstream", required=True, metavar="URL")
    p_serve.add_argument("--listen", required=True, type=_address, metavar="ADDR")
    p_serve.add_argument("--tls-cert", metavar="FILE")
    p_serve.add_argument("--tls-key", metavar="FILE")

    p_diff = sub.add_parser("diff", help="diff two scan report files")
    p_diff.add_argument("before", metavar="BEFORE.json")
    p_diff.add_argument("after", metavar="AFTER.json")
    p_diff.add_argument("--format", choices=("table", "json"), default="table")
    p_diff.add_argument("--ascii", action="store_true")

    p_validate = sub.add_parser("validate", help="validate a policy file")
    p_validate.add_argument("--policy", required=True, metavar="FILE")

    p_demo = sub.add_parser("demo-origin", help="run the built-in demo origin")
    p_demo.add_argument("--persona", choices=PERSONAS, default="before")
    p_demo.add_argument("--http-listen", type=_address, default=("127.0.0.1", 8080))
    p_demo.add_argument("--https-listen", type=_address, default=("127.0.0.1", 8443))
    p_demo.add_argument("--tls-cert", metavar="FILE")
    p_demo.add_argument("--tls-key", metavar="FILE")

    return parser


def _cmd_scan(args) -> int:
    report = run_scan(
        args.url,
        timeout_ms=args.timeout_ms,
        accept_invalid_tls=args.accept_invalid_tls,
        http_probe_port=args.http_probe_port,
    )
    _emit(render(report, args.format, ascii_marks=args.ascii), args.output)
    if args.fail_under is not None and report.score < args.fail_under:
        return 2
    return 0


def _cmd_plan(args) -> int:
    text = Path(args.from_report).read_text("utf-8")
    report = parse_report_json(text)
    doc = plan_from_scan(report, enable_hsts=args.enable_hsts)
    save_policy(doc, args.out)
    entries = remediation_map(report)
    if not doc.headers and not doc.hsts.enabled:
        print("warning: no failing tests with a header fix; planned headers are empty",
              file=sys.stderr)
    print(f"wrote policy: {args.out}")
    print(render_remediation_table(entries))
    return 0


def _cmd_serve(args) -> int:
    doc = load_policy(args.policy)
    violations = validate_policy(doc)
    if violations:
        for violation in violations:
            print(f"policy violation: {violation}", file=sys.stderr)
        return 1
    host, port = args.listen
    proxy = ShapingProxy(doc, args.upstream, host=host, port=port,
                         tls_cert=args.tls_cert, tls_key=args.tls_key)
    proxy.start()
    try:
        print(f"listening: {proxy.url}", flush=True)
        print(f"upstream: {args.upstream}", flush=True)
        print(f"chain: {', '.join(proxy.chain_names)}", flush=True)
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return 0
    finally:
        proxy.stop()


def _cmd_diff(args) -> int:
    before = parse_report_json(Path(args.before).read_text("utf-8"))
    after = parse_report_json(Path(args.after).read_text("utf-8"))
    diff = diff_reports(before, after)
    _emit(render(diff, args.format, ascii_marks=args.ascii), None)
    return 0


def _cmd_validate(args) -> int:
    doc = load_policy(args.policy)
    violations = validate_policy(doc)
    if violations:
        for violation in violations:
            print(f"policy violation: {violation}", file=sys.stderr)
        return 1
    print(f"policy valid: {args.policy}")
    return 0


def _cmd_demo_origin(args) -> int:
    http_host, http_port = args.http_listen
    https_host, https_port = args.https_listen
    origin = DemoOrigin(persona=args.persona,
                        http_host=http_host, http_port=http_port,
                        https_host=https_host, https_port=https_port,
                        cert_file=args.tls_cert, key_file=args.tls_key)
    origin.start()
    try:
        print(f"http: {origin.http_url}", flush=True)
        print(f"https: {origin.https_url}", flush=True)
        print(f"persona: {args.persona}", flush=True)
        if origin.cert_fingerprint:
            print(f"cert-sha256: {origin.cert_fingerprint}", flush=True)
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return 0
    finally:
        origin.stop()


_COMMANDS = {
    "scan": _cmd_scan,
    "plan": _cmd_plan,
    "serve": _cmd_serve,
    "diff": _cmd_diff,
    "validate": _cmd_validate,
    "demo-origin": _cmd_demo_origin,
}


def main(argv=None) -> int:
    level = LOG_LEVELS.get(os.environ.get("SHAPEGATE_LOG", "info").lower(), logging.INFO)
    logging.basicConfig(level=level, format="%(message)s")
    for stream in (sys.stdout, sys.stderr):  # glyph output survives C locales
        if hasattr(stream, "reconfigure"):
            try:
                stream.reconfigure(encoding="utf-8")
            except (OSError, ValueError):
                pass

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ShapegateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
