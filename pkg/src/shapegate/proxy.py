"""Transparent shaping reverse proxy.

An ordered interceptor chain sits between clients and an unmodified
upstream origin: pre hooks run in chain order and may reject or transform
the request before any byte reaches upstream; post hooks run in reverse
order over the response. A rejection short-circuits the upstream call but
the synthesized response still traverses every post hook, so even error
responses carry the injected policy headers.
"""

import http.client
import json
import logging
import ssl
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler
from typing import List, Optional, Tuple
from urllib.parse import parse_qs, urlsplit

from .errors import StartupError
from .interceptors import (REASON_PASSWORD, REASON_PASSWORD_MISSING,
                           REASON_TYPE_NOT_ALLOWED, UPLOAD_REJECTIONS,
                           check_password, guard_upload, inject_headers,
                           multipart_boundary, parse_multipart,
                           replace_part_payload)
from .policy import PasswordPolicy, PolicyDocument, UploadPolicy
from .serving import QuietHTTPServer

log = logging.getLogger(__name__)
access_log = logging.getLogger("shapegate.access")

HOP_BY_HOP = frozenset({
    "connection", "transfer-encoding", "keep-alive", "upgrade",
    "proxy-authenticate", "proxy-authorization", "proxy-connection",
    "te", "trailer", "trailers",
})

ERROR_LABELS = {
    400: "bad request",
    413: "payload too large",
    415: "unsupported media type",
    422: "unprocessable content",
    500: "internal error",
    502: "bad gateway",
}

REASON_UPSTREAM = "upstream unreachable"
REASON_INTERNAL = "interceptor failure"

_STATUS_REASONS = {413: "Payload Too Large", 415: "Unsupported Media Type",
                   422: "Unprocessable Content", 400: "Bad Request",
                   500: "Internal Server Error", 502: "Bad Gateway"}


@dataclass
class ProxyRequest:
    """Mutable per-request context handed to pre hooks."""

    method: str
    path: str  # raw request target, including any query string
    headers: List[Tuple[str, str]]
    body: Optional[bytes]  # buffered body; None when streaming unguarded

    @property
    def route_path(self) -> str:
        return self.path.split("?", 1)[0]

    def header(self, name: str) -> Optional[str]:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None


@dataclass
class ProxyResponse:
    status: int
    reason: str
    headers: List[Tuple[str, str]]
    body: bytes


@dataclass
class InterceptorOutcome:
    """Result of one pre hook: continue, transform, or reject."""

    kind: str  # "continue" | "transform" | "reject"
    status: Optional[int] = None
    reason: Optional[str] = None
    body: Optional[bytes] = None

    @classmethod
    def proceed(cls) -> "InterceptorOutcome":
        return cls(kind="continue")

    @classmethod
    def transform(cls, body: bytes) -> "InterceptorOutcome":
        return cls(kind="transform", body=body)

    @classmethod
    def reject(cls, status: int, reason: str) -> "InterceptorOutcome":
        if not reason:
            raise ValueError("a rejection requires a reason")
        return cls(kind="reject", status=status, reason=reason)


class Interceptor:
    """One shaping hook; defaults are identity on both directions."""

    name = "interceptor"

    def needs_body(self, method: str, path: str) -> bool:
        return False

    def pre(self, request: ProxyRequest) -> InterceptorOutcome:
        return InterceptorOutcome.proceed()

    def post(self, response: ProxyResponse) -> ProxyResponse:
        return response


class PasswordGate(Interceptor):
    """Enforce the password policy on matching routes, fail-closed."""

    name = "password-gate"

    def __init__(self, policy: PasswordPolicy):
        self.policy = policy

    def _matches(self, method: str, path: str) -> bool:
        return any(route.matches(method, path) for route in self.policy.routes)

    def needs_body(self, method: str, path: str) -> bool:
        return self._matches(method, path)

    def _extract(self, request: ProxyRequest) -> Optional[str]:
        body = request.body or b""
        content_type = (request.header("content-type") or "").lower()
        field_name = self.policy.field_name
        if "application/json" in content_type:
            try:
                data = json.loads(body.decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                return None
            value = data.get(field_name) if isinstance(data, dict) else None
            return value if isinstance(value, str) else None
        if "application/x-www-form-urlencoded" in content_type or content_type == "":
            try:
                fields = parse_qs(body.decode("utf-8"), keep_blank_values=True)
            except UnicodeDecodeError:
                return None
            values = fields.get(field_name)
            return values[0] if values else None
        return None

    def pre(self, request: ProxyRequest) -> InterceptorOutcome:
        if not self._matches(request.method, request.route_path):
            return InterceptorOutcome.proceed()
        candidate = self._extract(request)
        if candidate is None:
            return InterceptorOutcome.reject(422, REASON_PASSWORD_MISSING)
        verdict = check_password(candidate, self.policy)
        if not verdict.accepted:
            return InterceptorOutcome.reject(422, REASON_PASSWORD)
        return InterceptorOutcome.proceed()


class UploadGuard(Interceptor):
    """Size, type, magic-byte and malware checks on matching routes."""

    name = "upload-guard"

    def __init__(self, policy: UploadPolicy):
        self.policy = policy

    def _matches(self, method: str, path: str) -> bool:
        return any(route.matches(method, path) for route in self.policy.routes)

    def needs_body(self, method: str, path: str) -> bool:
        return self._matches(method, path)

    def pre(self, request: ProxyRequest) -> InterceptorOutcome:
        if not self._matches(request.method, request.route_path):
            return InterceptorOutcome.proceed()
        body = request.body or b""
        if len(body) > self.policy.max_size_bytes:
            return self._reject("oversize")

        content_type = request.header("content-type") or ""
        boundary = multipart_boundary(content_type)
        if "multipart/" in content_type.lower():
            if boundary is None:
                return self._reject("type-not-allowed")
            parts = parse_multipart(body, boundary)
            if parts is None:
                return self._reject("type-not-allowed")
            new_body = body
            transformed = False
            for part in parts:
                if not part.filename:
                    continue
                verdict = guard_upload(part.payload, part.filename, self.policy)
                if not verdict.allowed:
                    return self._reject(verdict.reject_reason)
                if verdict.sanitized:
                    # Same-length replacement keeps every other part's span valid.
                    new_body = replace_part_payload(new_body, part, verdict.body)
                    transformed = True
            if transformed:
                return InterceptorOutcome.transform(new_body)
            return InterceptorOutcome.proceed()

        filename = request.route_path.rstrip("/").rsplit("/", 1)[-1]
        verdict = guard_upload(body, filename, self.policy)
        if not verdict.allowed:
            return self._reject(verdict.reject_reason)
        if verdict.sanitized:
            return InterceptorOutcome.transform(verdict.body)
        return InterceptorOutcome.proceed()

    @staticmethod
    def _reject(slug: str) -> InterceptorOutcome:
        status, reason = UPLOAD_REJECTIONS[slug]
        return InterceptorOutcome.reject(status, reason)


class HeaderInject(Interceptor):
    """Apply policy header directives to every outgoing response."""

    name = "header-inject"

    def __init__(self, policy: PolicyDocument):
        self.directives = policy.headers
        self.hsts = policy.hsts

    def post(self, response: ProxyResponse) -> ProxyResponse:
        response.headers = inject_headers(response.headers, self.directives, self.hsts)
        return response


class InterceptorChain:
    """Fixed-order hooks: pre in list order, post in reverse (onion)."""

    def __init__(self, interceptors: List[Interceptor]):
        self.interceptors = list(interceptors)

    @property
    def names(self) -> List[str]:
        return [hook.name for hook in self.interceptors]

    def needs_body(self, method: str, path: str) -> bool:
        return any(hook.needs_body(method, path) for hook in self.interceptors)


def build_chain(policy: PolicyDocument) -> InterceptorChain:
    """Chain order is fixed: cheapest checks first, headers wrap everything."""
    return InterceptorChain([
        PasswordGate(policy.passwords),
        UploadGuard(policy.uploads),
        HeaderInject(policy),
    ])


def rejection_response(status: int, reason: str) -> ProxyResponse:
    body = json.dumps({"error": ERROR_LABELS.get(status, "error"),
                       "reason": reason}).encode()
    return ProxyResponse(
        status=status,
        reason=_STATUS_REASONS.get(status, "Error"),
        headers=[("Content-Type", "application/json")],
        body=body,
    )


def _read_chunked(rfile, cap: Optional[int] = None) -> Optional[bytes]:
    """Decode a chunked request body; None on malformed framing."""
    chunks = []
    total = 0
    while True:
        line = rfile.readline(65536)
        if not line:
            return None
        try:
            size = int(line.split(b";", 1)[0].strip(), 16)
        except ValueError:
            return None
        if size == 0:
            while True:  # drain optional trailers
                trailer = rfile.readline(65536)
                if trailer in (b"\r\n", b"\n", b""):
                    break
            return b"".join(chunks)
        data = rfile.read(size)
        rfile.read(2)  # chunk-terminating CRLF
        chunks.append(data)
        total += size
        if cap is not None and total > cap:
            return b"".join(chunks)


class _ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    # -- request plumbing ---------------------------------------------------

    def _buffer_cap(self) -> int:
        return self.server.policy.uploads.max_size_bytes + 1

    def _read_body(self, cap: Optional[int]) -> Optional[bytes]:
        """Read the request entity; None on unframeable bodies."""
        transfer = (self.headers.get("Transfer-Encoding") or "").lower()
        if "chunked" in transfer:
            body = _read_chunked(self.rfile, cap)
            if body is None or (cap is not None and len(body) > cap):
                self.close_connection = True
            return body
        length_raw = self.headers.get("Content-Length")
        if not length_raw:
            return b""
        try:
            length = int(length_raw)
        except ValueError:
            self.close_connection = True
            return None
        to_read = length if cap is None else min(length, cap)
        if to_read < length:
            self.close_connection = True  # truncated read desyncs keep-alive
        return self.rfile.read(to_read)

    def _handle(self):
        started = time.monotonic()
        chain = self.server.chain
        request = ProxyRequest(
            method=self.command,
            path=self.path,
            headers=list(self.headers.items()),
            body=None,
        )

        outcome_kind = "continue"
        response: Optional[ProxyResponse] = None

        guarded = chain.needs_body(request.method, request.route_path)
        chunked = "chunked" in (self.headers.get("Transfer-Encoding") or "").lower()
        if guarded or chunked:
            # Guarded routes are buffered (bounded); chunked bodies must be
            # re-framed with a content length either way.
            body = self._read_body(self._buffer_cap() if guarded else None)
            if body is None:
                outcome_kind = "reject"
                response = rejection_response(400, "malformed request body")
            else:
                request.body = body

        if response is None:
            for hook in chain.interceptors:
                try:
                    outcome = hook.pre(request)
                except Exception:
                    log.exception("pre hook %s failed", hook.name)
                    outcome_kind = "error"
                    response = rejection_response(500, REASON_INTERNAL)
                    break
                if outcome.kind == "reject":
                    outcome_kind = "reject"
                    response = rejection_response(outcome.status, outcome.reason)
                    break
                if outcome.kind == "transform":
                    outcome_kind = "transform"
                    request.body = outcome.body

        if response is None:
            try:
                response = self._forward(request)
            except (OSError, http.client.HTTPException, ssl.SSLError) as exc:
                log.warning("upstream unreachable: %s", exc)
                outcome_kind = "error"
                response = rejection_response(502, REASON_UPSTREAM)

        for hook in reversed(chain.interceptors):
            try:
                response = hook.post(response)
            except Exception:
                log.exception("post hook %s failed", hook.name)
                if response.status != 500:
                    outcome_kind = "error"
                    response = rejection_response(500, REASON_INTERNAL)

        if outcome_kind in ("reject", "error"):
            self.close_connection = True  # request body may be unconsumed
        self._send(response)
        latency_ms = (time.monotonic() - started) * 1000.0
        ts = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"
        access_log.info("%s\t%s\t%s\t%s\t%d\t%.2f", ts, request.method,
                        request.path, outcome_kind, response.status, latency_ms)

    def _forward(self, request: ProxyRequest) -> ProxyResponse:
        server = self.server
        if server.upstream_tls:
            conn = http.client.HTTPSConnection(
                server.upstream_host, server.upstream_port,
                timeout=server.upstream_timeout, context=server.upstream_ctx)
        else:
            conn = http.client.HTTPConnection(
                server.upstream_host, server.upstream_port,
                timeout=server.upstream_timeout)
        try:
            conn.putrequest(request.method, request.path,
                            skip_host=True, skip_accept_encoding=True)
            body = request.body
            if body is not None:
                out_length = len(body)
            else:
                try:
                    out_length = int(self.headers.get("Content-Length") or 0)
                except ValueError:
                    out_length = 0
            sent_length = False
            for name, value in request.headers:
                lname = name.lower()
                if lname in HOP_BY_HOP:
                    continue
                if lname == "content-length":
                    if sent_length:
                        continue
                    value = str(out_length)
                    sent_length = True
                conn.putheader(name, value)
            if out_length and not sent_length:
                conn.putheader("Content-Length", str(out_length))
            conn.endheaders()
            if body is not None:
                if body:
                    conn.send(body)
            else:
                remaining = out_length  # unguarded: stream straight through
                while remaining > 0:
                    chunk = self.rfile.read(min(65536, remaining))
                    if not chunk:
                        break
                    conn.send(chunk)
                    remaining -= len(chunk)
            resp = conn.getresponse()
            payload = b"" if request.method == "HEAD" else resp.read()
            headers = []
            for name, value in resp.getheaders():
                lname = name.lower()
                if lname in HOP_BY_HOP:
                    continue
                if lname == "content-length" and request.method != "HEAD":
                    continue  # recomputed from the final body
                headers.append((name, value))
            return ProxyResponse(status=resp.status, reason=resp.reason,
                                 headers=headers, body=payload)
        finally:
            conn.close()

    def _send(self, response: ProxyResponse):
        is_head = self.command == "HEAD"
        bodyless_status = response.status in (204, 304) or 100 <= response.status < 200
        self.send_response_only(response.status, response.reason)
        for name, value in response.headers:
            self.send_header(name, value)
        if not is_head and not bodyless_status:
            self.send_header("Content-Length", str(len(response.body)))
        self.end_headers()
        if not is_head and not bodyless_status and response.body:
            self.wfile.write(response.body)

    do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = do_OPTIONS = do_HEAD = _handle

    def log_message(self, fmt, *args):
        log.debug("proxy %s", fmt % args)


class ShapingProxy:
    """The proxy server: immutable policy and chain, concurrent requests."""

    def __init__(self, policy: PolicyDocument, upstream: str,
                 host: str = "127.0.0.1", port: int = 0,
                 tls_cert: Optional[str] = None, tls_key: Optional[str] = None,
                 upstream_timeout: float = 30.0):
        self.policy = policy
        self.upstream = upstream
        self._listen = (host, port)
        self._tls = (tls_cert, tls_key)
        self.upstream_timeout = upstream_timeout
        self.chain = build_chain(policy)
        self._server: Optional[QuietHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

        parts = urlsplit(upstream)
        if parts.scheme not in ("http", "https") or not parts.hostname:
            raise StartupError(f"upstream must be an absolute http/https URL: {upstream!r}")
        self.upstream_tls = parts.scheme == "https"
        self.upstream_host = parts.hostname
        self.upstream_port = parts.port or (443 if self.upstream_tls else 80)

    @property
    def chain_names(self) -> List[str]:
        return self.chain.names

    def start(self):
        try:
            server = QuietHTTPServer(self._listen, _ProxyHandler)
        except OSError as exc:
            raise StartupError(f"cannot bind {self._listen}: {exc}")
        server.policy = self.policy
        server.chain = self.chain
        server.upstream_tls = self.upstream_tls
        server.upstream_host = self.upstream_host
        server.upstream_port = self.upstream_port
        server.upstream_timeout = self.upstream_timeout
        # Upstream certificates are not verified: the upstream is a local,
        # operator-controlled origin (often with a generated certificate).
        ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
        ctx.check_hostname = False
        ctx.verify_mode = ssl.CERT_NONE
        server.upstream_ctx = ctx

        tls_cert, tls_key = self._tls
        if tls_cert and tls_key:
            listen_ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            try:
                listen_ctx.load_cert_chain(tls_cert, tls_key)
            except (OSError, ssl.SSLError) as exc:
                server.server_close()
                raise StartupError(f"cannot load TLS certificate: {exc}")
            server.socket = listen_ctx.wrap_socket(server.socket, server_side=True)
            self.tls_enabled = True
        else:
            self.tls_enabled = False

        self._server = server
        self._thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.05), daemon=True)
        self._thread.start()
        return self

    def serve_blocking(self):
        """Start and block until interrupted (CLI path)."""
        self.start()
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=2)
            self._thread = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        scheme = "https" if self.tls_enabled else "http"
        return f"{scheme}://{self._listen[0]}:{self.port}/"
