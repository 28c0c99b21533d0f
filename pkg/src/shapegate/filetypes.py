"""Known upload types: magic-byte signatures and extension mapping."""

from typing import Dict, Optional, Tuple

# Type id -> leading byte signatures. txt has no signature and is accepted
# only when the body decodes as UTF-8.
MAGIC_TABLE: Dict[str, Tuple[bytes, ...]] = {
    "pdf": (b"%PDF-",),
    "png": (b"\x89PNG\r\n\x1a\n",),
    "jpeg": (b"\xff\xd8\xff",),
    "gif": (b"GIF87a", b"GIF89a"),
    "zip": (b"PK\x03\x04",),
    "txt": (),
}

EXTENSION_TYPES: Dict[str, str] = {
    "pdf": "pdf",
    "png": "png",
    "jpeg": "jpeg",
    "jpg": "jpeg",
    "gif": "gif",
    "zip": "zip",
    "txt": "txt",
}


def type_for_filename(filename: str) -> Optional[str]:
    """Type id for the final dot-suffix, or None when unknown or absent."""
    _, dot, ext = filename.rpartition(".")
    if not dot or not ext:
        return None
    return EXTENSION_TYPES.get(ext.lower())


def matches_magic(type_id: str, body: bytes) -> bool:
    """Whether ``body`` carries the signature declared for ``type_id``."""
    signatures = MAGIC_TABLE[type_id]
    if not signatures:  # txt: plain UTF-8 text
        try:
            body.decode("utf-8")
            return True
        except UnicodeDecodeError:
            return False
    return any(body.startswith(sig) for sig in signatures)
