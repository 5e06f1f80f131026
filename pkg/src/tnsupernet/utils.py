"""Small shared helpers: canonical hashing, env-configured thread count."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

THREADS_ENV_VAR = "TNSUPERNET_THREADS"


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def sha256_tree(path: str | Path) -> str:
    """Hash a file, or a directory as the sorted list of (name, file hash)."""
    p = Path(path)
    if p.is_file():
        return sha256_file(p)
    parts = []
    for f in sorted(p.rglob("*")):
        if f.is_file():
            parts.append(f"{f.relative_to(p)}:{sha256_file(f)}")
    return sha256_text("\n".join(parts))


def worker_count(default: int = 1) -> int:
    """Worker cap from TNSUPERNET_THREADS; never below 1."""
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)
