"""Concrete shaping hooks: header injection, upload guarding, PDF
defanging, password policy checks and signature-based malware rejection.

All operations are pure over their inputs plus an immutable policy and are
safe for concurrent invocation.
"""

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import SanitizeInputError
from .filetypes import matches_magic, type_for_filename
from .policy import HeaderDirective, HstsPolicy, PasswordPolicy, UploadPolicy

# Rejection reason strings carried in rejection response bodies (bit-exact).
REASON_OVERSIZE = "upload exceeds maximum size"
REASON_TYPE_NOT_ALLOWED = "file type not allowed"
REASON_MAGIC_MISMATCH = "file content does not match declared type"
REASON_MALWARE = "malware signature detected"
REASON_PASSWORD = "password does not meet policy"
REASON_PASSWORD_MISSING = "password field missing"

# Upload verdict reason slug -> (HTTP status, rejection body reason).
UPLOAD_REJECTIONS = {
    "oversize": (413, REASON_OVERSIZE),
    "type-not-allowed": (415, REASON_TYPE_NOT_ALLOWED),
    "magic-mismatch": (415, REASON_MAGIC_MISMATCH),
    "malware-signature": (422, REASON_MALWARE),
}

# PDF name tokens that trigger active content; replaced by same-length
# /XXX... names so cross-reference offsets stay valid.
ACTIVE_PDF_TOKENS = ("JavaScript", "JS", "OpenAction", "AA", "Launch",
                     "EmbeddedFiles", "RichMedia", "XFA")

# Longer alternatives first so /JavaScript is never matched as /JS.
_PDF_TOKEN_RE = re.compile(
    rb"/(JavaScript|EmbeddedFiles|OpenAction|RichMedia|Launch|XFA|JS|AA)"
    rb"(?=[\x00\t\n\x0c\r ()<>\[\]{}/%]|$)")


@dataclass(frozen=True)
class UploadVerdict:
    """Decision of the upload guard for one file."""

    decision: str  # "allow" | "reject"
    reject_reason: Optional[str] = None
    detected_type: Optional[str] = None
    sanitized: bool = False
    body: Optional[bytes] = None  # payload to forward (sanitized when flagged)

    @property
    def allowed(self) -> bool:
        return self.decision == "allow"


@dataclass(frozen=True)
class PasswordVerdict:
    accepted: bool
    reason: Optional[str] = None


# ---------------------------------------------------------------------------
# Header injection
# ---------------------------------------------------------------------------

def inject_headers(headers: List[Tuple[str, str]],
                   directives: Dict[str, HeaderDirective],
                   hsts: Optional[HstsPolicy] = None) -> List[Tuple[str, str]]:
    """Apply policy header directives to a response header list.

    Absent headers are appended; present headers are replaced only when the
    directive sets override. Idempotent: applying twice equals once.
    """
    effective = dict(directives)
    if hsts is not None and hsts.enabled:
        effective["Strict-Transport-Security"] = HeaderDirective(
            value=hsts.header_value(), override=True)

    result = list(headers)
    for name, directive in effective.items():
        hits = [i for i, (key, _) in enumerate(result) if key.lower() == name.lower()]
        if not hits:
            result.append((name, directive.value))
        elif directive.override:
            result[hits[0]] = (name, directive.value)
            for i in reversed(hits[1:]):
                del result[i]
    return result


# ---------------------------------------------------------------------------
# Upload guarding
# ---------------------------------------------------------------------------

def scan_signatures(body: bytes, signatures: List[bytes]) -> Optional[int]:
    """Index of the first signature found in ``body``; None when clean."""
    for index, signature in enumerate(signatures):
        if signature and signature in body:
            return index
    return None


def guard_upload(body: bytes, filename: str, policy: UploadPolicy) -> UploadVerdict:
    """Validate one upload: size, declared type, magic bytes, malware.

    Checks run in that fixed order and the first failure wins. Allowed PDFs
    are defanged when the policy asks for sanitization.
    """
    if len(body) > policy.max_size_bytes:
        return UploadVerdict(decision="reject", reject_reason="oversize")

    declared = type_for_filename(filename)
    if declared is None or declared not in policy.allowed_types:
        return UploadVerdict(decision="reject", reject_reason="type-not-allowed")

    if not matches_magic(declared, body):
        return UploadVerdict(decision="reject", reject_reason="magic-mismatch")

    if scan_signatures(body, policy.decoded_signatures()) is not None:
        return UploadVerdict(decision="reject", reject_reason="malware-signature",
                             detected_type=declared)

    if declared == "pdf" and policy.sanitize_pdf:
        return UploadVerdict(decision="allow", detected_type=declared,
                             sanitized=True, body=sanitize_pdf(body))
    return UploadVerdict(decision="allow", detected_type=declared, body=body)


# ---------------------------------------------------------------------------
# PDF sanitization
# ---------------------------------------------------------------------------

def sanitize_pdf(body: bytes) -> bytes:
    """Defang active-content name tokens in a PDF, preserving length.

    Each listed name token becomes a same-length name of X characters, so
    byte offsets in the cross-reference table remain valid and the output
    is a fixed point of this function.
    """
    if not body.startswith(b"%PDF-"):
        raise SanitizeInputError("input does not start with %PDF-")
    return _PDF_TOKEN_RE.sub(lambda m: b"/" + b"X" * (len(m.group(0)) - 1), body)


# ---------------------------------------------------------------------------
# Password policy
# ---------------------------------------------------------------------------

def _character_classes(candidate: str) -> int:
    lower = upper = digit = other = False
    for ch in candidate:
        if ch.islower():
            lower = True
        elif ch.isupper():
            upper = True
        elif ch.isdigit():
            digit = True
        else:
            other = True
    return sum((lower, upper, digit, other))


def check_password(candidate: str, policy: PasswordPolicy) -> PasswordVerdict:
    """Accept or reject a password candidate against the policy."""
    if len(candidate) < policy.min_length:
        return PasswordVerdict(False, f"shorter than {policy.min_length} characters")
    if _character_classes(candidate) < policy.min_classes:
        return PasswordVerdict(
            False, f"fewer than {policy.min_classes} character classes")
    if candidate.lower() in policy.deny_set():
        return PasswordVerdict(False, "commonly used password")
    return PasswordVerdict(True)


# ---------------------------------------------------------------------------
# Multipart envelopes
# ---------------------------------------------------------------------------

@dataclass
class MultipartPart:
    """One part of a multipart/form-data body, with payload span offsets."""

    name: Optional[str]
    filename: Optional[str]
    payload: bytes
    payload_start: int
    payload_end: int


_BOUNDARY_RE = re.compile(r'boundary="?([^";]+)"?', re.IGNORECASE)
_NAME_RE = re.compile(r'\bname="([^"]*)"')
_FILENAME_RE = re.compile(r'\bfilename="([^"]*)"')


def multipart_boundary(content_type: str) -> Optional[str]:
    if "multipart/" not in content_type.lower():
        return None
    match = _BOUNDARY_RE.search(content_type)
    return match.group(1) if match else None


def parse_multipart(body: bytes, boundary: str) -> Optional[List[MultipartPart]]:
    """Split a multipart body into parts; None when the envelope is malformed."""
    delim = b"--" + boundary.encode("utf-8", "replace")
    pos = body.find(delim)
    if pos < 0:
        return None
    if pos > 0 and body[pos - 2:pos] != b"\r\n":
        return None  # the first delimiter must start a line
    parts: List[MultipartPart] = []
    while True:
        after = pos + len(delim)
        if body[after:after + 2] == b"--":
            return parts
        if body[after:after + 2] != b"\r\n":
            return None
        header_start = after + 2
        header_end = body.find(b"\r\n\r\n", header_start)
        if header_end < 0:
            return None
        payload_start = header_end + 4
        next_pos = body.find(b"\r\n" + delim, payload_start)
        if next_pos < 0:
            return None

        name = filename = None
        for raw_line in body[header_start:header_end].split(b"\r\n"):
            line = raw_line.decode("utf-8", "replace")
            if line.lower().startswith("content-disposition:"):
                name_match = _NAME_RE.search(line)
                file_match = _FILENAME_RE.search(line)
                name = name_match.group(1) if name_match else None
                filename = file_match.group(1) if file_match else None
        parts.append(MultipartPart(
            name=name, filename=filename,
            payload=body[payload_start:next_pos],
            payload_start=payload_start, payload_end=next_pos,
        ))
        pos = next_pos + 2


def replace_part_payload(body: bytes, part: MultipartPart, payload: bytes) -> bytes:
    """Splice a replacement payload into the original envelope."""
    return body[:part.payload_start] + payload + body[part.payload_end:]
