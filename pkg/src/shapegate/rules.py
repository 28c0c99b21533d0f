"""The eleven security tests and their normative outcome rows.

Every test is a pure, total function of a TargetSnapshot: for any snapshot
exactly one row applies, malformed header values map to defined fail rows,
and the emitted reason strings are byte-identical to the rows below.
"""

import re
from dataclasses import dataclass
from enum import Enum
from html.parser import HTMLParser
from typing import Dict, List, Optional, Tuple
from urllib.parse import urlsplit

from .snapshot import REDIRECT_STATUSES, TargetSnapshot


class Outcome(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class TestResult:
    """Outcome of one security test against one snapshot."""

    test_id: str
    outcome: Outcome
    modifier: int
    reason: str


# Fixed report order (also the rendering order).
TEST_ORDER = (
    "content-security-policy",
    "cookies",
    "cross-origin-resource-sharing",
    "http-public-key-pinning",
    "strict-transport-security",
    "redirection",
    "referrer-policy",
    "subresource-integrity",
    "x-content-type-options",
    "x-frame-options",
    "x-xss-protection",
)

TEST_TITLES = {
    "content-security-policy": "Content Security Policy",
    "cookies": "Cookies",
    "cross-origin-resource-sharing": "Cross-origin Resource Sharing",
    "http-public-key-pinning": "HTTP Public Key Pinning",
    "strict-transport-security": "HTTP Strict Transport Security",
    "redirection": "Redirection",
    "referrer-policy": "Referrer Policy",
    "subresource-integrity": "Subresource Integrity",
    "x-content-type-options": "X-Content-Type-Options",
    "x-frame-options": "X-Frame-Options",
    "x-xss-protection": "X-XSS-Protection",
}

# Normative rows: test id -> row key -> (outcome, modifier, reason).
# Reason strings are canonical; evaluators may only emit rows listed here.
ROWS: Dict[str, Dict[str, Tuple[Outcome, int, str]]] = {
    "content-security-policy": {
        "missing": (Outcome.FAIL, -25, "CSP header not implemented"),
        "clean": (Outcome.PASS, 5,
                  "Content Security Policy (CSP) implemented without "
                  "'unsafe-inline' or 'unsafe-eval'"),
        "unsafe": (Outcome.FAIL, -20,
                   "Content Security Policy (CSP) implemented with "
                   "'unsafe-inline' or 'unsafe-eval'"),
    },
    "cookies": {
        "none": (Outcome.NEUTRAL, 0, "No cookies detected"),
        "insecure": (Outcome.FAIL, -20, "Cookies set without using the Secure flag"),
        "secure": (Outcome.PASS, 0, "All cookies use the Secure flag"),
    },
    "cross-origin-resource-sharing": {
        "none": (Outcome.PASS, 0,
                 "Content is not visible via cross-origin resource sharing "
                 "(CORS) files or headers"),
        "wildcard": (Outcome.FAIL, -50,
                     "Content is visible via cross-origin resource sharing "
                     "(CORS) to all origins"),
        "specific": (Outcome.PASS, 0, "Content is visible via CORS to specific origins"),
    },
    "http-public-key-pinning": {
        "missing": (Outcome.NEUTRAL, 0,
                    "HTTP Public Key Pinning (HPKP) header not implemented (optional)"),
        "present": (Outcome.NEUTRAL, 0, "HPKP header implemented (deprecated)"),
    },
    "strict-transport-security": {
        "missing": (Outcome.FAIL, -20,
                    "HTTP Strict Transport Security (HSTS) header not implemented"),
        "six-months": (Outcome.PASS, 0, "HSTS header set to a minimum of six months"),
        "short": (Outcome.FAIL, -10, "HSTS header set to less than six months"),
    },
    "redirection": {
        "to-https": (Outcome.PASS, 0,
                     "Initial redirection is to HTTPS on same host, final "
                     "destination is HTTPS"),
        "no-http": (Outcome.NEUTRAL, 0, "Target does not listen on HTTP"),
        "no-redirect": (Outcome.FAIL, -20, "Does not redirect to HTTPS"),
        "other-host": (Outcome.FAIL, -5, "Initial redirection is to a different host"),
    },
    "referrer-policy": {
        "missing": (Outcome.NEUTRAL, 0, "Referrer-Policy header not implemented (optional)"),
        "safe": (Outcome.PASS, 0, "Referrer-Policy header set to a safe value"),
        "unsafe": (Outcome.FAIL, -5, "Referrer-Policy header set to an unsafe value"),
    },
    "subresource-integrity": {
        "similar-origin": (Outcome.NEUTRAL, 0,
                           "Subresource Integrity (SRI) not implemented, but all "
                           "scripts are loaded from a similar origin"),
        "implemented": (Outcome.PASS, 5, "SRI implemented on all external scripts"),
        "missing-external": (Outcome.FAIL, -5,
                             "SRI not implemented on scripts loaded from external origins"),
        "insecure": (Outcome.FAIL, -50, "Scripts loaded insecurely without SRI"),
    },
    "x-content-type-options": {
        "missing": (Outcome.FAIL, -5, "Not implemented"),
        "nosniff": (Outcome.PASS, 0, 'X-Content-Type-Options header set to "nosniff"'),
        "invalid": (Outcome.FAIL, -5,
                    "X-Content-Type-Options header set to an invalid value"),
    },
    "x-frame-options": {
        "missing": (Outcome.FAIL, -20, "Not implemented"),
        "valid": (Outcome.PASS, 0, "X-Frame-Options (XFO) header set to SAMEORIGIN or DENY"),
        "invalid": (Outcome.FAIL, -20, "X-Frame-Options (XFO) header set to an invalid value"),
    },
    "x-xss-protection": {
        "missing": (Outcome.FAIL, -10, "Not implemented"),
        "block": (Outcome.PASS, 0,
                  'Deprecated X-XSS-Protection header set to "1; mode=block"'),
        "disabled": (Outcome.PASS, 0, "Deprecated X-XSS-Protection header explicitly disabled"),
        "invalid": (Outcome.FAIL, -10, "X-XSS-Protection header set to an invalid value"),
    },
}

SAFE_REFERRER_VALUES = frozenset(
    {"no-referrer", "same-origin", "strict-origin", "strict-origin-when-cross-origin"})

HSTS_MIN_AGE = 15_552_000  # 180 days

_INTEGRITY_RE = re.compile(r"^sha(256|384|512)-[A-Za-z0-9+/=]{40,}$")
_IPV4_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")


def _row(test_id: str, key: str) -> TestResult:
    outcome, modifier, reason = ROWS[test_id][key]
    return TestResult(test_id=test_id, outcome=outcome, modifier=modifier, reason=reason)


# ---------------------------------------------------------------------------
# content-security-policy
# ---------------------------------------------------------------------------

def _parse_csp(value: str) -> Dict[str, List[str]]:
    """Split a CSP header into directives; first occurrence of a name wins."""
    directives: Dict[str, List[str]] = {}
    for chunk in value.split(";"):
        tokens = chunk.split()
        if not tokens:
            continue
        name = tokens[0].lower()
        if name not in directives:
            directives[name] = [tok.lower() for tok in tokens[1:]]
    return directives


def _eval_csp(snapshot: TargetSnapshot) -> TestResult:
    value = snapshot.first_header("content-security-policy")
    if value is None:
        return _row("content-security-policy", "missing")

    directives = _parse_csp(value)
    if not directives:
        # Unparsable header: treated like one carrying unsafe tokens.
        return _row("content-security-policy", "unsafe")

    script_policy = directives.get("script-src", directives.get("default-src"))
    if script_policy is None:
        # Neither script-src nor default-src: scripts are unrestricted.
        return _row("content-security-policy", "unsafe")

    unsafe_tokens = any(tok.strip("'") in ("unsafe-inline", "unsafe-eval")
                        for tok in script_policy)
    wildcard = any("*" in directives.get(name, ())
                   for name in ("default-src", "script-src", "object-src"))
    if unsafe_tokens or wildcard:
        return _row("content-security-policy", "unsafe")
    return _row("content-security-policy", "clean")


# ---------------------------------------------------------------------------
# cookies
# ---------------------------------------------------------------------------

def _eval_cookies(snapshot: TargetSnapshot) -> TestResult:
    if not snapshot.cookies:
        return _row("cookies", "none")
    if snapshot.fetched_over_tls and any(not c.secure for c in snapshot.cookies):
        return _row("cookies", "insecure")
    return _row("cookies", "secure")


# ---------------------------------------------------------------------------
# cross-origin-resource-sharing
# ---------------------------------------------------------------------------

def _eval_cors(snapshot: TargetSnapshot) -> TestResult:
    value = snapshot.first_header("access-control-allow-origin")
    if value is None:
        return _row("cross-origin-resource-sharing", "none")
    if value.strip() == "*":
        return _row("cross-origin-resource-sharing", "wildcard")
    return _row("cross-origin-resource-sharing", "specific")


# ---------------------------------------------------------------------------
# http-public-key-pinning
# ---------------------------------------------------------------------------

def _eval_hpkp(snapshot: TargetSnapshot) -> TestResult:
    if snapshot.first_header("public-key-pins") is None:
        return _row("http-public-key-pinning", "missing")
    return _row("http-public-key-pinning", "present")


# ---------------------------------------------------------------------------
# strict-transport-security
# ---------------------------------------------------------------------------

def _hsts_max_age(value: str) -> Optional[int]:
    for directive in value.split(";"):
        name, _, raw = directive.strip().partition("=")
        if name.strip().lower() == "max-age":
            try:
                return int(raw.strip().strip('"'))
            except ValueError:
                return None
    return None


def _eval_hsts(snapshot: TargetSnapshot) -> TestResult:
    value = snapshot.first_header("strict-transport-security")
    if value is None:
        return _row("strict-transport-security", "missing")
    max_age = _hsts_max_age(value)
    if max_age is not None and max_age >= HSTS_MIN_AGE:
        return _row("strict-transport-security", "six-months")
    # Missing or malformed max-age counts as too short.
    return _row("strict-transport-security", "short")


# ---------------------------------------------------------------------------
# redirection
# ---------------------------------------------------------------------------

def _hostname(url: str) -> str:
    return (urlsplit(url).hostname or "").lower()


def _eval_redirection(snapshot: TargetSnapshot) -> TestResult:
    probe = snapshot.http_probe
    if not probe.reachable:
        return _row("redirection", "no-http")
    chain = probe.chain
    if len(chain) < 2 or chain[0][1] not in REDIRECT_STATUSES:
        return _row("redirection", "no-redirect")
    first_url = chain[0][0]
    next_url = chain[1][0]
    if _hostname(next_url) != _hostname(first_url):
        return _row("redirection", "other-host")
    if urlsplit(next_url).scheme != "https":
        return _row("redirection", "no-redirect")
    final_url, final_status = chain[-1]
    if urlsplit(final_url).scheme == "https" and final_status not in REDIRECT_STATUSES:
        return _row("redirection", "to-https")
    return _row("redirection", "no-redirect")


# ---------------------------------------------------------------------------
# referrer-policy
# ---------------------------------------------------------------------------

def _eval_referrer(snapshot: TargetSnapshot) -> TestResult:
    value = snapshot.first_header("referrer-policy")
    if value is None:
        return _row("referrer-policy", "missing")
    if value.strip().lower() in SAFE_REFERRER_VALUES:
        return _row("referrer-policy", "safe")
    # Unknown or invalid values are treated as unsafe.
    return _row("referrer-policy", "unsafe")


# ---------------------------------------------------------------------------
# subresource-integrity
# ---------------------------------------------------------------------------

class _ScriptCollector(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.scripts: List[Tuple[str, Optional[str]]] = []

    def handle_starttag(self, tag, attrs):
        if tag.lower() != "script":
            return
        attr_map = {name.lower(): value for name, value in attrs if value is not None}
        src = attr_map.get("src")
        if src:
            self.scripts.append((src, attr_map.get("integrity")))


def extract_scripts(body: bytes) -> List[Tuple[str, Optional[str]]]:
    """(src, integrity) pairs of every script element carrying a src."""
    collector = _ScriptCollector()
    try:
        collector.feed(body.decode("utf-8", "replace"))
        collector.close()
    except Exception:
        return []
    return collector.scripts


def _valid_integrity(attr: Optional[str]) -> bool:
    if not attr:
        return False
    return any(_INTEGRITY_RE.match(token) for token in attr.split())


def _is_ip(host: str) -> bool:
    return bool(_IPV4_RE.match(host)) or ":" in host


def similar_origin(host: str, target_host: str) -> bool:
    """Same host, or sharing the last two DNS labels of the target host."""
    host = host.lower()
    target_host = target_host.lower()
    if host == target_host:
        return True
    if _is_ip(host) or _is_ip(target_host):
        return False
    return host.split(".")[-2:] == target_host.split(".")[-2:]


def _eval_sri(snapshot: TargetSnapshot) -> TestResult:
    target_host = _hostname(snapshot.final_url)
    insecure = False
    external: List[Tuple[str, Optional[str]]] = []

    for src, integrity in extract_scripts(snapshot.body):
        if src.startswith("//"):
            insecure = True
            continue
        parts = urlsplit(src)
        if parts.scheme == "" and not parts.netloc:
            continue  # relative: same origin
        if parts.scheme != "https":
            insecure = True
            continue
        if not similar_origin(parts.hostname or "", target_host):
            external.append((src, integrity))

    if insecure:
        return _row("subresource-integrity", "insecure")
    if any(not _valid_integrity(integrity) for _, integrity in external):
        return _row("subresource-integrity", "missing-external")
    if external:
        return _row("subresource-integrity", "implemented")
    return _row("subresource-integrity", "similar-origin")


# ---------------------------------------------------------------------------
# x-content-type-options / x-frame-options / x-xss-protection
# ---------------------------------------------------------------------------

def _eval_xcto(snapshot: TargetSnapshot) -> TestResult:
    value = snapshot.first_header("x-content-type-options")
    if value is None:
        return _row("x-content-type-options", "missing")
    if value.strip().lower() == "nosniff":
        return _row("x-content-type-options", "nosniff")
    return _row("x-content-type-options", "invalid")


def _eval_xfo(snapshot: TargetSnapshot) -> TestResult:
    value = snapshot.first_header("x-frame-options")
    if value is None:
        return _row("x-frame-options", "missing")
    if value.strip().upper() in ("SAMEORIGIN", "DENY"):
        return _row("x-frame-options", "valid")
    return _row("x-frame-options", "invalid")


def _eval_xxp(snapshot: TargetSnapshot) -> TestResult:
    value = snapshot.first_header("x-xss-protection")
    if value is None:
        return _row("x-xss-protection", "missing")
    normalized = re.sub(r"\s*;\s*", "; ", value.strip().lower())
    if normalized == "1; mode=block":
        return _row("x-xss-protection", "block")
    if normalized == "0":
        return _row("x-xss-protection", "disabled")
    return _row("x-xss-protection", "invalid")


_EVALUATORS = {
    "content-security-policy": _eval_csp,
    "cookies": _eval_cookies,
    "cross-origin-resource-sharing": _eval_cors,
    "http-public-key-pinning": _eval_hpkp,
    "strict-transport-security": _eval_hsts,
    "redirection": _eval_redirection,
    "referrer-policy": _eval_referrer,
    "subresource-integrity": _eval_sri,
    "x-content-type-options": _eval_xcto,
    "x-frame-options": _eval_xfo,
    "x-xss-protection": _eval_xxp,
}


def evaluate_test(test_id: str, snapshot: TargetSnapshot) -> TestResult:
    """Evaluate one of the eleven tests against a snapshot.

    Deterministic and total: the same snapshot always yields the same row,
    and malformed values map to fail rows rather than exceptions.
    """
    try:
        evaluator = _EVALUATORS[test_id]
    except KeyError:
        raise ValueError(f"unknown test id: {test_id!r}") from None
    return evaluator(snapshot)
