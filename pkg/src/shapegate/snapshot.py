"""Target fetching: capture one HTTP exchange as an immutable snapshot.

A snapshot records the full redirect chain, the final response (headers,
body, cookies) and the outcome of a plain-HTTP probe of the same host.
The eleven security tests evaluate snapshots only; they never touch the
network themselves.
"""

import http.client
import socket
import ssl
from dataclasses import dataclass, field
from http.cookies import SimpleCookie
from typing import Dict, List, Optional, Tuple
from urllib.parse import urljoin, urlsplit

from .errors import NetworkError, RedirectLoopError, TlsError

BODY_LIMIT = 4 * 1024 * 1024  # final-hop entity truncated at 4 MiB
REDIRECT_STATUSES = (301, 302, 303, 307, 308)
DEFAULT_TIMEOUT_MS = 10_000
DEFAULT_MAX_REDIRECTS = 10

_USER_AGENT = "shapegate-scan/0.1"


@dataclass(frozen=True)
class CookieRecord:
    """One parsed Set-Cookie header."""

    name: str
    value: str
    secure: bool
    httponly: bool
    samesite: Optional[str] = None


@dataclass
class HttpProbe:
    """Result of probing the plain-HTTP listener of the target host.

    ``chain`` holds (requested-url, status) hops; empty when the listener
    was unreachable.
    """

    reachable: bool
    chain: List[Tuple[str, int]] = field(default_factory=list)


@dataclass
class TargetSnapshot:
    """One captured HTTP exchange.

    Header names are lowercase; duplicate headers are preserved in order
    under the same key.
    """

    initial_url: str
    redirect_chain: List[Tuple[str, int]]
    final_url: str
    final_status: int
    headers: Dict[str, List[str]]
    body: bytes
    cookies: List[CookieRecord]
    fetched_over_tls: bool
    http_probe: HttpProbe

    def first_header(self, name: str) -> Optional[str]:
        """First value of a (possibly duplicated) header, or None."""
        values = self.headers.get(name.lower())
        return values[0] if values else None


def parse_set_cookie(raw: str) -> Optional[CookieRecord]:
    """Parse one Set-Cookie value into a CookieRecord; None if unparsable."""
    jar = SimpleCookie()
    try:
        jar.load(raw)
    except Exception:
        return None
    for name, morsel in jar.items():
        samesite = morsel["samesite"] or None
        return CookieRecord(
            name=name,
            value=morsel.value,
            secure=bool(morsel["secure"]),
            httponly=bool(morsel["httponly"]),
            samesite=samesite,
        )
    return None


def _tls_context(accept_invalid: bool) -> ssl.SSLContext:
    if accept_invalid:
        ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
        ctx.check_hostname = False
        ctx.verify_mode = ssl.CERT_NONE
        return ctx
    return ssl.create_default_context()


class _Hop:
    """Raw response of a single request: status, headers, optional body."""

    def __init__(self, status: int, reason: str, headers: List[Tuple[str, str]], body: bytes):
        self.status = status
        self.reason = reason
        self.headers = headers
        self.body = body

    def header(self, name: str) -> Optional[str]:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None


def _request_once(url: str, timeout_s: float, tls_ctx: ssl.SSLContext,
                  read_body: bool) -> _Hop:
    """Issue one GET without following redirects."""
    parts = urlsplit(url)
    host = parts.hostname or ""
    if parts.scheme == "https":
        port = parts.port or 443
        conn = http.client.HTTPSConnection(host, port, timeout=timeout_s, context=tls_ctx)
    elif parts.scheme == "http":
        port = parts.port or 80
        conn = http.client.HTTPConnection(host, port, timeout=timeout_s)
    else:
        raise ValueError(f"unsupported URL scheme: {url!r}")

    path = parts.path or "/"
    if parts.query:
        path = f"{path}?{parts.query}"
    try:
        conn.putrequest("GET", path)
        conn.putheader("User-Agent", _USER_AGENT)
        conn.putheader("Accept", "*/*")
        conn.endheaders()
        resp = conn.getresponse()
        body = resp.read(BODY_LIMIT) if read_body else b""
        return _Hop(resp.status, resp.reason, resp.getheaders(), body)
    finally:
        conn.close()


def _follow(url: str, timeout_s: float, max_redirects: int,
            tls_ctx: ssl.SSLContext) -> Tuple[List[Tuple[str, int]], _Hop]:
    """Follow redirects from ``url``; return the hop list and final response.

    The chain length (number of responses) is bounded by ``max_redirects``.
    """
    chain: List[Tuple[str, int]] = []
    current = url
    while True:
        hop = _request_once(current, timeout_s, tls_ctx, read_body=True)
        chain.append((current, hop.status))
        location = hop.header("location")
        if hop.status in REDIRECT_STATUSES and location:
            if len(chain) + 1 > max_redirects:
                raise RedirectLoopError(
                    f"redirect chain exceeds {max_redirects} hops starting at {url}")
            current = urljoin(current, location)
            continue
        return chain, hop


def _probe_http(target_url: str, timeout_s: float, max_redirects: int,
                tls_ctx: ssl.SSLContext, probe_port: Optional[int]) -> HttpProbe:
    """Probe the plain-HTTP listener of the target's host.

    Uses port 80 unless overridden. Connection failures mean the host does
    not listen on HTTP; the probe never raises.
    """
    host = urlsplit(target_url).hostname or ""
    port = probe_port if probe_port is not None else 80
    probe_url = f"http://{host}/" if port == 80 else f"http://{host}:{port}/"
    try:
        chain, _ = _follow(probe_url, timeout_s, max_redirects, tls_ctx)
        return HttpProbe(reachable=True, chain=chain)
    except RedirectLoopError:
        return HttpProbe(reachable=True, chain=[(probe_url, 300)])
    except (OSError, ssl.SSLError, http.client.HTTPException):
        return HttpProbe(reachable=False)


def fetch_target(url: str, *, timeout_ms: int = DEFAULT_TIMEOUT_MS,
                 max_redirects: int = DEFAULT_MAX_REDIRECTS,
                 accept_invalid_tls: bool = False,
                 http_probe_port: Optional[int] = None) -> TargetSnapshot:
    """Fetch ``url``, following redirects, and capture a TargetSnapshot.

    When ``url`` is not itself plain HTTP an additional HTTP probe of the
    same host is performed for the redirection test; when it is, the main
    chain doubles as the probe.

    Raises NetworkError for connect/timeout failures, TlsError for
    certificate validation failures, RedirectLoopError when the chain
    exceeds ``max_redirects``.
    """
    scheme = urlsplit(url).scheme
    if scheme not in ("http", "https"):
        raise ValueError(f"URL must be absolute http/https: {url!r}")

    timeout_s = timeout_ms / 1000.0
    tls_ctx = _tls_context(accept_invalid_tls)

    try:
        chain, final = _follow(url, timeout_s, max_redirects, tls_ctx)
    except RedirectLoopError:
        raise
    except ssl.SSLCertVerificationError as exc:
        raise TlsError(url, exc) from exc
    except ssl.SSLError as exc:
        raise TlsError(url, exc) from exc
    except (socket.timeout, TimeoutError) as exc:
        raise NetworkError(url, "timed out") from exc
    except (OSError, http.client.HTTPException) as exc:
        raise NetworkError(url, exc) from exc

    final_url = chain[-1][0]
    if scheme == "http":
        probe = HttpProbe(reachable=True, chain=list(chain))
    else:
        probe = _probe_http(url, timeout_s, max_redirects, tls_ctx, http_probe_port)

    headers: Dict[str, List[str]] = {}
    for name, value in final.headers:
        headers.setdefault(name.lower(), []).append(value)

    cookies = []
    for raw in headers.get("set-cookie", []):
        record = parse_set_cookie(raw)
        if record is not None:
            cookies.append(record)

    return TargetSnapshot(
        initial_url=url,
        redirect_chain=chain,
        final_url=final_url,
        final_status=final.status,
        headers=headers,
        body=final.body,
        cookies=cookies,
        fetched_over_tls=urlsplit(final_url).scheme == "https",
        http_probe=probe,
    )
