"""Zero-trust policy model: actors/assets/processes inventory, risk
assessment, enforcement directives, and remediation planning from a scan.

The policy file is a single strict JSON document; unknown keys are
rejected so golden fixtures stay bit-exact.
"""

import json
import re
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Union

from .errors import PolicyParseError
from .filetypes import MAGIC_TABLE
from .rules import Outcome
from .scanner import ScanReport

ACTOR_KINDS = ("end-user", "administrator", "service")
ASSET_KINDS = ("account-store", "object-store", "dns", "source-code",
               "infrastructure-config", "other")
RISK_SEVERITIES = ("low", "medium", "high")

DEFAULT_MAX_UPLOAD_BYTES = 10 * 1024 * 1024
DEFAULT_ALLOWED_TYPES = ("pdf", "png", "jpeg", "gif", "txt")
DEFAULT_MIN_LENGTH = 12
DEFAULT_MIN_CLASSES = 3
DEFAULT_HSTS_MAX_AGE = 31_536_000

# Header fixes the planner knows how to apply, keyed by failing test id.
FIXABLE_HEADERS = {
    "content-security-policy": (
        "Content-Security-Policy",
        "default-src 'self'; object-src 'none'; frame-ancestors 'none'"),
    "x-content-type-options": ("X-Content-Type-Options", "nosniff"),
    "x-frame-options": ("X-Frame-Options", "DENY"),
    "x-xss-protection": ("X-XSS-Protection", "1; mode=block"),
}

# Severity of a failing header test, ordered by its score penalty.
HEADER_RISK_SEVERITIES = {
    "content-security-policy": "high",
    "x-frame-options": "high",
    "strict-transport-security": "medium",
    "x-content-type-options": "low",
    "x-xss-protection": "low",
}

_HEADER_NAME_RE = re.compile(r"^[!#$%&'*+.^_`|~0-9A-Za-z-]+$")
_HEX_RE = re.compile(r"^(?:[0-9a-fA-F]{2})+$")


def default_deny_list() -> List[str]:
    """The embedded list of 1000 common passwords, lowercase."""
    text = resources.files("shapegate").joinpath("data/common_passwords.txt").read_text("utf-8")
    return [line for line in text.splitlines() if line]


@dataclass
class Actor:
    id: str
    kind: str
    description: str = ""


@dataclass
class Asset:
    id: str
    kind: str
    description: str = ""


@dataclass
class Process:
    id: str
    name: str
    touches: List[str] = field(default_factory=list)
    description: str = ""


@dataclass
class HeaderDirective:
    value: str
    override: bool = True


@dataclass
class HstsPolicy:
    enabled: bool = False
    max_age_seconds: int = DEFAULT_HSTS_MAX_AGE
    include_subdomains: bool = True

    def header_value(self) -> str:
        value = f"max-age={self.max_age_seconds}"
        if self.include_subdomains:
            value += "; includeSubDomains"
        return value


@dataclass
class Route:
    method: str
    path: str

    def matches(self, method: str, path: str) -> bool:
        return self.method.upper() == method.upper() and fnmatchcase(path, self.path)


@dataclass
class UploadPolicy:
    routes: List[Route] = field(default_factory=list)
    max_size_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    allowed_types: List[str] = field(default_factory=lambda: list(DEFAULT_ALLOWED_TYPES))
    sanitize_pdf: bool = True
    signatures: List[str] = field(default_factory=list)  # hex-encoded

    def decoded_signatures(self) -> List[bytes]:
        return [bytes.fromhex(sig) for sig in self.signatures]


@dataclass
class PasswordPolicy:
    routes: List[Route] = field(default_factory=list)
    field_name: str = "password"
    min_length: int = DEFAULT_MIN_LENGTH
    min_classes: int = DEFAULT_MIN_CLASSES
    deny_list: List[str] = field(default_factory=default_deny_list)

    def deny_set(self) -> frozenset:
        return frozenset(entry.lower() for entry in self.deny_list)


@dataclass
class PolicyDocument:
    name: str = "policy"
    version: str = "1"
    actors: List[Actor] = field(default_factory=list)
    assets: List[Asset] = field(default_factory=list)
    processes: List[Process] = field(default_factory=list)
    headers: Dict[str, HeaderDirective] = field(default_factory=dict)
    hsts: HstsPolicy = field(default_factory=HstsPolicy)
    uploads: UploadPolicy = field(default_factory=UploadPolicy)
    passwords: PasswordPolicy = field(default_factory=PasswordPolicy)


@dataclass
class RiskEntry:
    risk_id: str
    severity: str
    description: str
    remediation: str
    process_id: Optional[str] = None
    asset_id: Optional[str] = None


@dataclass
class RiskAssessment:
    entries: List[RiskEntry] = field(default_factory=list)

    def risk_ids(self) -> List[str]:
        return [entry.risk_id for entry in self.entries]

    def descriptions(self) -> List[str]:
        return [entry.description for entry in self.entries]


# ---------------------------------------------------------------------------
# JSON serialization (D-strict: unknown keys rejected)
# ---------------------------------------------------------------------------

def _expect(mapping, context: str, allowed: Dict[str, type]):
    if not isinstance(mapping, dict):
        raise PolicyParseError(f"{context}: expected an object")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise PolicyParseError(f"{context}: unknown keys {sorted(unknown)!r}")
    for key, value in mapping.items():
        expected = allowed[key]
        if expected is float:
            continue
        if expected is bool and not isinstance(value, bool):
            raise PolicyParseError(f"{context}.{key}: expected a boolean")
        if expected is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise PolicyParseError(f"{context}.{key}: expected an integer")
        if expected is str and not isinstance(value, str):
            raise PolicyParseError(f"{context}.{key}: expected a string")
        if expected is list and not isinstance(value, list):
            raise PolicyParseError(f"{context}.{key}: expected a list")
        if expected is dict and not isinstance(value, dict):
            raise PolicyParseError(f"{context}.{key}: expected an object")


def _parse_routes(raw: list, context: str) -> List[Route]:
    routes = []
    for i, item in enumerate(raw):
        _expect(item, f"{context}[{i}]", {"method": str, "path": str})
        routes.append(Route(method=item.get("method", "POST"), path=item.get("path", "/")))
    return routes


def policy_from_dict(data: dict, base_dir: Optional[Path] = None) -> PolicyDocument:
    """Build a PolicyDocument from parsed JSON; strict about keys and types.

    ``base_dir`` anchors a file-reference deny list; the referenced file is
    read eagerly so the in-memory policy always carries an embedded list.
    """
    _expect(data, "policy", {
        "meta": dict, "actors": list, "assets": list, "processes": list,
        "headers": dict, "hsts": dict, "uploads": dict, "passwords": dict,
    })

    meta = data.get("meta", {})
    _expect(meta, "meta", {"name": str, "version": str})

    actors = []
    for i, item in enumerate(data.get("actors", [])):
        _expect(item, f"actors[{i}]", {"id": str, "kind": str, "description": str})
        actors.append(Actor(id=item.get("id", ""), kind=item.get("kind", ""),
                            description=item.get("description", "")))

    assets = []
    for i, item in enumerate(data.get("assets", [])):
        _expect(item, f"assets[{i}]", {"id": str, "kind": str, "description": str})
        assets.append(Asset(id=item.get("id", ""), kind=item.get("kind", ""),
                            description=item.get("description", "")))

    processes = []
    for i, item in enumerate(data.get("processes", [])):
        _expect(item, f"processes[{i}]",
                {"id": str, "name": str, "touches": list, "description": str})
        touches = item.get("touches", [])
        if not all(isinstance(t, str) for t in touches):
            raise PolicyParseError(f"processes[{i}].touches: expected strings")
        processes.append(Process(id=item.get("id", ""), name=item.get("name", ""),
                                 touches=list(touches),
                                 description=item.get("description", "")))

    headers = {}
    for name, item in data.get("headers", {}).items():
        _expect(item, f"headers[{name!r}]", {"value": str, "override": bool})
        if "value" not in item:
            raise PolicyParseError(f"headers[{name!r}]: missing value")
        headers[name] = HeaderDirective(value=item["value"],
                                        override=item.get("override", True))

    hsts_raw = data.get("hsts", {})
    _expect(hsts_raw, "hsts",
            {"enabled": bool, "max_age_seconds": int, "include_subdomains": bool})
    hsts = HstsPolicy(
        enabled=hsts_raw.get("enabled", False),
        max_age_seconds=hsts_raw.get("max_age_seconds", DEFAULT_HSTS_MAX_AGE),
        include_subdomains=hsts_raw.get("include_subdomains", True),
    )

    uploads_raw = data.get("uploads", {})
    _expect(uploads_raw, "uploads",
            {"routes": list, "max_size_bytes": int, "allowed_types": list,
             "sanitize_pdf": bool, "signatures": list})
    allowed_types = uploads_raw.get("allowed_types", list(DEFAULT_ALLOWED_TYPES))
    signatures = uploads_raw.get("signatures", [])
    if not all(isinstance(t, str) for t in allowed_types):
        raise PolicyParseError("uploads.allowed_types: expected strings")
    if not all(isinstance(s, str) for s in signatures):
        raise PolicyParseError("uploads.signatures: expected strings")
    uploads = UploadPolicy(
        routes=_parse_routes(uploads_raw.get("routes", []), "uploads.routes"),
        max_size_bytes=uploads_raw.get("max_size_bytes", DEFAULT_MAX_UPLOAD_BYTES),
        allowed_types=list(allowed_types),
        sanitize_pdf=uploads_raw.get("sanitize_pdf", True),
        signatures=list(signatures),
    )

    passwords_raw = data.get("passwords", {})
    _expect(passwords_raw, "passwords",
            {"routes": list, "field": str, "min_length": int, "min_classes": int,
             "deny_list": object})
    deny_raw = passwords_raw.get("deny_list")
    if deny_raw is None:
        deny_list = default_deny_list()
    elif isinstance(deny_raw, list):
        if not all(isinstance(entry, str) for entry in deny_raw):
            raise PolicyParseError("passwords.deny_list: expected strings")
        deny_list = list(deny_raw)
    elif isinstance(deny_raw, str):
        path = Path(deny_raw)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            deny_list = [line for line in path.read_text("utf-8").splitlines() if line]
        except OSError as exc:
            raise PolicyParseError(f"passwords.deny_list: cannot read {deny_raw!r}: {exc}")
    else:
        raise PolicyParseError("passwords.deny_list: expected a list or file path")
    passwords = PasswordPolicy(
        routes=_parse_routes(passwords_raw.get("routes", []), "passwords.routes"),
        field_name=passwords_raw.get("field", "password"),
        min_length=passwords_raw.get("min_length", DEFAULT_MIN_LENGTH),
        min_classes=passwords_raw.get("min_classes", DEFAULT_MIN_CLASSES),
        deny_list=deny_list,
    )

    return PolicyDocument(
        name=meta.get("name", "policy"),
        version=meta.get("version", "1"),
        actors=actors, assets=assets, processes=processes,
        headers=headers, hsts=hsts, uploads=uploads, passwords=passwords,
    )


def policy_to_dict(doc: PolicyDocument) -> dict:
    return {
        "meta": {"name": doc.name, "version": doc.version},
        "actors": [{"id": a.id, "kind": a.kind, "description": a.description}
                   for a in doc.actors],
        "assets": [{"id": a.id, "kind": a.kind, "description": a.description}
                   for a in doc.assets],
        "processes": [{"id": p.id, "name": p.name, "touches": list(p.touches),
                       "description": p.description} for p in doc.processes],
        "headers": {name: {"value": d.value, "override": d.override}
                    for name, d in doc.headers.items()},
        "hsts": {"enabled": doc.hsts.enabled,
                 "max_age_seconds": doc.hsts.max_age_seconds,
                 "include_subdomains": doc.hsts.include_subdomains},
        "uploads": {"routes": [{"method": r.method, "path": r.path}
                               for r in doc.uploads.routes],
                    "max_size_bytes": doc.uploads.max_size_bytes,
                    "allowed_types": list(doc.uploads.allowed_types),
                    "sanitize_pdf": doc.uploads.sanitize_pdf,
                    "signatures": list(doc.uploads.signatures)},
        "passwords": {"routes": [{"method": r.method, "path": r.path}
                                 for r in doc.passwords.routes],
                      "field": doc.passwords.field_name,
                      "min_length": doc.passwords.min_length,
                      "min_classes": doc.passwords.min_classes,
                      "deny_list": list(doc.passwords.deny_list)},
    }


def load_policy(path: Union[str, Path]) -> PolicyDocument:
    """Read and parse a policy file; PolicyParseError on any defect."""
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise PolicyParseError(f"cannot read policy {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyParseError(f"invalid JSON in {path}: {exc.msg}",
                               line=exc.lineno, position=exc.colno)
    return policy_from_dict(data, base_dir=path.parent)


def save_policy(doc: PolicyDocument, path: Union[str, Path]) -> None:
    text = json.dumps(policy_to_dict(doc), indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", "utf-8")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _contains_control(value: str) -> bool:
    return any(ord(ch) < 0x20 or ord(ch) == 0x7F for ch in value)


def validate_policy(doc: PolicyDocument) -> List[str]:
    """All invariant breaches in the document; empty list iff valid."""
    violations = []

    seen_ids = set()
    for i, actor in enumerate(doc.actors):
        if actor.kind not in ACTOR_KINDS:
            violations.append(f"actors[{i}].kind: unknown kind '{actor.kind}'")
    asset_ids = set()
    for i, asset in enumerate(doc.assets):
        if asset.kind not in ASSET_KINDS:
            violations.append(f"assets[{i}].kind: unknown kind '{asset.kind}'")
        if asset.id in asset_ids:
            violations.append(f"assets[{i}].id: duplicate id '{asset.id}'")
        asset_ids.add(asset.id)
    for i, process in enumerate(doc.processes):
        if process.id in seen_ids:
            violations.append(f"processes[{i}].id: duplicate id '{process.id}'")
        seen_ids.add(process.id)
        for ref in process.touches:
            if ref not in asset_ids:
                violations.append(f"processes[{i}].touches: unknown asset '{ref}'")

    for name, directive in doc.headers.items():
        if not _HEADER_NAME_RE.match(name):
            violations.append(f"headers['{name}']: invalid header name")
        if _contains_control(directive.value):
            violations.append(
                f"headers['{name}']: header value contains control characters")

    if doc.hsts.max_age_seconds < 0:
        violations.append("hsts.max_age_seconds: must be non-negative")

    if doc.uploads.max_size_bytes <= 0:
        violations.append("uploads.max_size_bytes: must be positive")
    for type_id in doc.uploads.allowed_types:
        if type_id not in MAGIC_TABLE:
            violations.append(f"uploads.allowed_types: unknown type id '{type_id}'")
    for i, sig in enumerate(doc.uploads.signatures):
        if not _HEX_RE.match(sig):
            violations.append(f"uploads.signatures[{i}]: invalid hex string")

    if not 1 <= doc.passwords.min_classes <= 4:
        violations.append("passwords.min_classes: must be between 1 and 4")
    if doc.passwords.min_length < 1:
        violations.append("passwords.min_length: must be positive")
    if doc.passwords.routes and not doc.passwords.field_name:
        violations.append("passwords.field: must not be empty")

    return violations


# ---------------------------------------------------------------------------
# Risk assessment (inventory rules + scan findings)
# ---------------------------------------------------------------------------

def _looks_like(process: Process, *words: str) -> bool:
    text = f"{process.id} {process.name}".lower()
    return any(word in text for word in words)


def assess_risks(doc: PolicyDocument, report: Optional[ScanReport] = None) -> RiskAssessment:
    """Evaluate the risk rules over a policy document and optional scan."""
    entries: List[RiskEntry] = []

    def first_asset(process: Process) -> Optional[str]:
        return process.touches[0] if process.touches else None

    for process in doc.processes:
        if _looks_like(process, "upload", "file"):
            if not doc.uploads.routes or not doc.uploads.allowed_types:
                entries.append(RiskEntry(
                    risk_id="file-type-control",
                    severity="high",
                    description="lack of file type control",
                    remediation="uploads.allowed_types",
                    process_id=process.id,
                    asset_id=first_asset(process),
                ))
        if _looks_like(process, "auth", "login", "signup", "password"):
            if doc.passwords.min_length < DEFAULT_MIN_LENGTH or not doc.passwords.routes:
                remediation = ("passwords.min_length"
                               if doc.passwords.min_length < DEFAULT_MIN_LENGTH
                               else "passwords.routes")
                entries.append(RiskEntry(
                    risk_id="password-policy",
                    severity="high",
                    description="insufficient password policies",
                    remediation=remediation,
                    process_id=process.id,
                    asset_id=first_asset(process),
                ))

    if doc.uploads.routes and not doc.uploads.signatures and not doc.uploads.sanitize_pdf:
        entries.append(RiskEntry(
            risk_id="malware-uploads",
            severity="medium",
            description="susceptibility to malware or ransomware",
            remediation="uploads.signatures",
        ))

    if report is not None:
        for result in report.tests:
            if result.outcome is not Outcome.FAIL:
                continue
            severity = HEADER_RISK_SEVERITIES.get(result.test_id)
            if severity is None:
                continue
            if result.test_id == "strict-transport-security":
                remediation = "hsts.enabled"
            else:
                remediation = f"headers.{FIXABLE_HEADERS[result.test_id][0]}"
            entries.append(RiskEntry(
                risk_id=f"header-{result.test_id}",
                severity=severity,
                description=result.reason,
                remediation=remediation,
            ))

    return RiskAssessment(entries=entries)


# ---------------------------------------------------------------------------
# Remediation planning
# ---------------------------------------------------------------------------

def plan_from_scan(report: ScanReport, *, enable_hsts: bool = False) -> PolicyDocument:
    """Derive an enforcement policy fixing every fixable failing test.

    Header directives cover the four injectable headers; HSTS is emitted
    only when explicitly enabled. Upload and password sections get default
    settings with empty routes, since route knowledge requires a human.
    """
    headers: Dict[str, HeaderDirective] = {}
    for result in report.tests:
        if result.outcome is not Outcome.FAIL:
            continue
        fix = FIXABLE_HEADERS.get(result.test_id)
        if fix is not None:
            name, value = fix
            headers[name] = HeaderDirective(value=value, override=True)

    return PolicyDocument(
        name="zero-trust-plan",
        version="1",
        headers=headers,
        hsts=HstsPolicy(enabled=enable_hsts),
        uploads=UploadPolicy(),
        passwords=PasswordPolicy(),
    )
