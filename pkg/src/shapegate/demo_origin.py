"""A tiny two-listener web origin for offline end-to-end runs.

The ``before`` persona reproduces a typical unhardened posture: an HTML
page with one same-origin script, no cookies, no security headers, an
upload endpoint that accepts anything, a signup endpoint that accepts any
password, and a plain-HTTP listener that 301-redirects to HTTPS on the
same host. The ``hardened`` persona additionally sends every passing
security header including HSTS.
"""

import json
import logging
import ssl
import threading
from http.server import BaseHTTPRequestHandler
from typing import List, Optional, Tuple

from .certs import CertBundle, write_cert_bundle
from .serving import QuietHTTPServer
from .errors import StartupError

log = logging.getLogger(__name__)

PERSONAS = ("before", "hardened")

HARDENED_HEADERS = (
    ("Content-Security-Policy",
     "default-src 'self'; object-src 'none'; frame-ancestors 'none'"),
    ("Strict-Transport-Security", "max-age=31536000; includeSubDomains"),
    ("Referrer-Policy", "strict-origin-when-cross-origin"),
    ("X-Content-Type-Options", "nosniff"),
    ("X-Frame-Options", "DENY"),
    ("X-XSS-Protection", "1; mode=block"),
)

INDEX_PAGE = """<!DOCTYPE html>
<html>
<head>
<title>Online File Manager</title>
<script src="/static/app.js"></script>
</head>
<body>
<h1>Online File Manager</h1>
<form action="/upload" method="post" enctype="multipart/form-data">
<input type="file" name="file"><button>Upload</button>
</form>
<form action="/signup" method="post">
<input name="email"><input type="password" name="password"><button>Sign up</button>
</form>
</body>
</html>
"""

APP_JS = 'document.addEventListener("DOMContentLoaded",function(){});\n'


class _ContentHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _record(self):
        self.server.requests_seen.append((self.command, self.path))

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send(self, status: int, content_type: str, body: bytes):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        if self.server.persona == "hardened":
            for name, value in HARDENED_HEADERS:
                self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        self._record()
        if self.path == "/" or self.path.startswith("/?"):
            self._send(200, "text/html; charset=utf-8", INDEX_PAGE.encode())
        elif self.path == "/static/app.js":
            self._send(200, "application/javascript", APP_JS.encode())
        else:
            self._send(404, "application/json", b'{"error": "not found"}')

    def do_POST(self):
        self._record()
        body = self._read_body()
        if self.path == "/upload":
            self._send(200, "application/json",
                       json.dumps({"stored": True, "bytes": len(body)}).encode())
        elif self.path == "/signup":
            self._send(200, "application/json", b'{"created": true}')
        else:
            self._send(404, "application/json", b'{"error": "not found"}')

    def do_PUT(self):
        self.do_POST()

    def log_message(self, fmt, *args):
        log.debug("demo-origin %s", fmt % args)


class _RedirectHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _redirect(self):
        host = self.server.https_host
        port = self.server.https_port
        location = f"https://{host}{'' if port == 443 else f':{port}'}{self.path}"
        self.send_response(301)
        self.send_header("Location", location)
        self.send_header("Content-Length", "0")
        self.end_headers()

    do_GET = do_POST = do_PUT = do_HEAD = _redirect

    def log_message(self, fmt, *args):
        log.debug("demo-origin http %s", fmt % args)


class DemoOrigin:
    """The two demo listeners, run on background threads."""

    def __init__(self, persona: str = "before",
                 http_host: str = "127.0.0.1", http_port: int = 0,
                 https_host: str = "127.0.0.1", https_port: int = 0,
                 cert_file: Optional[str] = None, key_file: Optional[str] = None):
        if persona not in PERSONAS:
            raise ValueError(f"unknown persona {persona!r}")
        self.persona = persona
        self._http_addr = (http_host, http_port)
        self._https_addr = (https_host, https_port)
        self._cert_file = cert_file
        self._key_file = key_file
        self.cert_bundle: Optional[CertBundle] = None
        self._servers: List[QuietHTTPServer] = []
        self._threads: List[threading.Thread] = []
        self.requests_seen: List[Tuple[str, str]] = []

    def start(self):
        try:
            https_server = QuietHTTPServer(self._https_addr, _ContentHandler)
        except OSError as exc:
            raise StartupError(f"cannot bind {self._https_addr}: {exc}")
        https_server.persona = self.persona
        https_server.requests_seen = self.requests_seen

        if self._cert_file and self._key_file:
            cert_file, key_file = self._cert_file, self._key_file
            self.cert_bundle = None
        else:
            self.cert_bundle = write_cert_bundle(self._https_addr[0])
            cert_file, key_file = self.cert_bundle.cert_path, self.cert_bundle.key_path
        ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        ctx.load_cert_chain(cert_file, key_file)
        https_server.socket = ctx.wrap_socket(https_server.socket, server_side=True)

        try:
            http_server = QuietHTTPServer(self._http_addr, _RedirectHandler)
        except OSError as exc:
            https_server.server_close()
            raise StartupError(f"cannot bind {self._http_addr}: {exc}")
        http_server.https_host = self._https_addr[0]
        http_server.https_port = https_server.server_address[1]

        self._servers = [https_server, http_server]
        for server in self._servers:
            thread = threading.Thread(
                target=lambda srv=server: srv.serve_forever(poll_interval=0.05),
                daemon=True)
            thread.start()
            self._threads.append(thread)
        return self

    def stop(self):
        for server in self._servers:
            server.shutdown()
            server.server_close()
        for thread in self._threads:
            thread.join(timeout=2)
        self._servers = []
        self._threads = []

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def http_port(self) -> int:
        return self._servers[1].server_address[1]

    @property
    def https_port(self) -> int:
        return self._servers[0].server_address[1]

    @property
    def http_url(self) -> str:
        return f"http://{self._http_addr[0]}:{self.http_port}/"

    @property
    def https_url(self) -> str:
        return f"https://{self._https_addr[0]}:{self.https_port}/"

    @property
    def cert_fingerprint(self) -> Optional[str]:
        return self.cert_bundle.fingerprint if self.cert_bundle else None

    @property
    def upstream_hits(self) -> int:
        return len(self.requests_seen)
