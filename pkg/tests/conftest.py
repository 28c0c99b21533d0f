"""Shared fixtures: synthetic snapshots, demo origins, a counting upstream
stub, and generated certificates."""

import json
import threading
from http.server import BaseHTTPRequestHandler

import pytest

from shapegate.certs import write_cert_bundle
from shapegate.serving import QuietHTTPServer
from shapegate.demo_origin import DemoOrigin
from shapegate.snapshot import CookieRecord, HttpProbe, TargetSnapshot


def make_snapshot(headers=None, cookies=(), body=b"", tls=True,
                  probe=None, final_url=None, initial_url=None,
                  final_status=200):
    """Build a synthetic snapshot for rule evaluation."""
    if final_url is None:
        final_url = "https://app.example.com/" if tls else "http://app.example.com/"
    if initial_url is None:
        initial_url = final_url
    normalized = {}
    for name, value in (headers or {}).items():
        values = value if isinstance(value, list) else [value]
        normalized[name.lower()] = list(values)
    if probe is None:
        probe = HttpProbe(reachable=False)
    return TargetSnapshot(
        initial_url=initial_url,
        redirect_chain=[(initial_url, final_status)],
        final_url=final_url,
        final_status=final_status,
        headers=normalized,
        body=body,
        cookies=list(cookies),
        fetched_over_tls=tls,
        http_probe=probe,
    )


def make_cookie(name="session", value="abc", secure=True, httponly=False, samesite=None):
    return CookieRecord(name=name, value=value, secure=secure,
                        httponly=httponly, samesite=samesite)


def probe_pass(host="app.example.com"):
    """A probe chain matching the happy redirect-to-HTTPS posture."""
    return HttpProbe(reachable=True, chain=[
        (f"http://{host}/", 301), (f"https://{host}/", 200)])


class _StubHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _serve(self):
        with self.server.lock:
            self.server.hits.append((self.command, self.path))
        length = int(self.headers.get("Content-Length") or 0)
        request_body = self.rfile.read(length) if length else b""
        status, headers, body = self.server.routes.get(
            self.path.split("?", 1)[0],
            (200, [("Content-Type", "text/plain")], b"stub: " + self.path.encode()))
        if callable(body):
            body = body(request_body)
        self.send_response(status)
        for name, value in headers:
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD" and body:
            self.wfile.write(body)

    do_GET = do_POST = do_PUT = do_HEAD = do_DELETE = _serve

    def log_message(self, fmt, *args):
        pass


class StubUpstream:
    """A counting upstream with per-path canned responses."""

    def __init__(self, routes=None):
        self.server = QuietHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.routes = routes or {}
        self.server.hits = []
        self.server.lock = threading.Lock()
        self._thread = threading.Thread(
            target=lambda: self.server.serve_forever(poll_interval=0.05), daemon=True)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self.server.shutdown()
        self.server.server_close()
        self._thread.join(timeout=2)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def hits(self):
        return self.server.hits

    @property
    def routes(self):
        return self.server.routes

    @property
    def port(self):
        return self.server.server_address[1]

    @property
    def url(self):
        return f"http://127.0.0.1:{self.port}/"


@pytest.fixture(scope="session")
def cert_bundle(tmp_path_factory):
    return write_cert_bundle("127.0.0.1", tmp_path_factory.mktemp("certs"))


@pytest.fixture(scope="session")
def demo_before():
    with DemoOrigin(persona="before") as origin:
        yield origin


@pytest.fixture(scope="session")
def demo_hardened():
    with DemoOrigin(persona="hardened") as origin:
        yield origin


@pytest.fixture
def stub_upstream():
    with StubUpstream() as stub:
        yield stub
