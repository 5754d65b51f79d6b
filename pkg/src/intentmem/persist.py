"""Versioned JSON documents with atomic writes.

Every persisted artifact is a single JSON object with a header::

    {"format": "intentmem/<kind>", "version": 1, ...payload}

Writes go to a temporary sibling file that is then renamed over the target,
so readers never observe a half-written document. Reads validate the header
and parse the whole file before anything is returned.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import CorruptFileError, PersistenceError

SCHEMA_VERSION = 1


def dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_document(path: str | Path, kind: str, payload: Mapping[str, Any]) -> None:
    doc = {"format": f"intentmem/{kind}", "version": SCHEMA_VERSION, **payload}
    try:
        text = dumps(doc)
    except ValueError as exc:
        raise PersistenceError(f"cannot serialize {kind} document: {exc}") from exc
    atomic_write_text(path, text)


def parse_document(text: str, kind: str, source: str = "<memory>") -> dict[str, Any]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{source}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise CorruptFileError(f"{source}: top level is not an object")
    if doc.get("format") != f"intentmem/{kind}":
        raise CorruptFileError(f"{source}: expected format intentmem/{kind}, found {doc.get('format')!r}")
    if doc.get("version") != SCHEMA_VERSION:
        raise CorruptFileError(f"{source}: unsupported version {doc.get('version')!r}")
    return doc


def read_document(path: str | Path, kind: str) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFileError(f"{path}: not UTF-8 text") from exc
    except OSError as exc:
        raise PersistenceError(f"{path}: {exc.strerror or exc}") from exc
    return parse_document(text, kind, str(path))


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def encode_array(arr: np.ndarray) -> dict[str, Any]:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "dtype": "<f8", "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def decode_array(doc: Mapping[str, Any]) -> np.ndarray:
    try:
        raw = base64.b64decode(doc["data"], validate=True)
        arr = np.frombuffer(raw, dtype=doc["dtype"]).reshape(doc["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"bad array record: {exc}") from exc
    return arr.astype(float)


def vector_list(vec: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(vec, dtype=float).ravel()]


def as_vector(values: Any, dim: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise CorruptFileError(f"bad vector: {exc}") from exc
    if arr.ndim != 1 or (dim is not None and arr.shape[0] != dim) or not np.all(np.isfinite(arr)):
        raise CorruptFileError(f"bad vector of shape {arr.shape}")
    return arr
