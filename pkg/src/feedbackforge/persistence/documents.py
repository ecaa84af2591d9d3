"""Directory-per-collection JSON document store.

Every document carries id, instance_id, schema_version, and created_at;
shapes are validated against the JSON schemas shipped next to this module
on every write. composed_feedback is write-once per (instance_id, version)
via atomic create-new semantics, with a single sanctioned mutation: the
draft -> sent state transition.
"""
from __future__ import annotations

import json
import os
import threading
from importlib import resources
from pathlib import Path

import jsonschema

from ..errors import (
    ConfigError,
    ConflictError,
    NotFoundError,
    StateError,
    StorageIntegrityError,
)
from ..model import new_id, to_rfc3339, utcnow

COLLECTIONS = (
    "feedback_candidates",
    "composed_feedback",
    "prompt_bundles",
    "redaction_maps",
    "feedback_ratings",
    "generation_results",
)

CURRENT_SCHEMA_VERSION = 1

_ID_PREFIXES = {
    "feedback_candidates": "cnd",
    "composed_feedback": "cfb",
    "prompt_bundles": "prm",
    "redaction_maps": "red",
    "feedback_ratings": "rat",
    "generation_results": "gen",
}

_SAFE_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-")


def _safe_name(value: str) -> str:
    return "".join(c if c in _SAFE_CHARS else "-" for c in value)


def _load_schemas() -> dict[str, dict]:
    schemas = {}
    root = resources.files("feedbackforge.persistence") / "schemas"
    for collection in COLLECTIONS:
        schemas[collection] = json.loads(
            (root / f"{collection}.json").read_text(encoding="utf-8"))
    return schemas


class DocumentStore:
    Conflict = ConflictError
    COMPOSED = "composed_feedback"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.RLock()
        self._schemas = _load_schemas()
        self._validators = {
            name: jsonschema.Draft202012Validator(schema)
            for name, schema in self._schemas.items()
        }
        for collection in COLLECTIONS:
            (self.root / collection).mkdir(parents=True, exist_ok=True)

    def _collection_dir(self, collection: str) -> Path:
        if collection not in COLLECTIONS:
            raise ConfigError(f"unknown document collection {collection!r}")
        return self.root / collection

    def _check_version(self, collection: str, doc: dict, path: Path) -> None:
        version = doc.get("schema_version")
        if version != CURRENT_SCHEMA_VERSION:
            raise StorageIntegrityError(
                f"{path.name} in {collection} has schema_version {version!r};"
                f" this build reads version {CURRENT_SCHEMA_VERSION} only")

    def _read(self, collection: str, path: Path) -> dict:
        with path.open(encoding="utf-8") as fh:
            doc = json.load(fh)
        self._check_version(collection, doc, path)
        return doc

    def _dump(self, doc: dict) -> str:
        return json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n"

    # -- writes

    def store(self, collection: str, doc: dict, *, doc_id: str | None = None,
              unique_key: tuple[str, ...] | None = None) -> str:
        """Persist a new document; returns its id.

        With unique_key, the key fields name the file, so a second document
        with the same key loses the atomic create and raises Conflict.
        """
        directory = self._collection_dir(collection)
        doc = dict(doc)
        doc.setdefault("id", doc_id or new_id(_ID_PREFIXES[collection]))
        if doc_id is not None and doc["id"] != doc_id:
            raise ConfigError("doc_id does not match the document's id field")
        doc.setdefault("schema_version", CURRENT_SCHEMA_VERSION)
        doc.setdefault("created_at", to_rfc3339(utcnow()))

        errors = sorted(self._validators[collection].iter_errors(doc),
                        key=lambda e: e.json_path)
        if errors:
            raise StorageIntegrityError(
                f"document rejected by {collection} schema: {errors[0].message}")

        if unique_key:
            name = "__".join(_safe_name(str(doc[k])) for k in unique_key)
        else:
            name = _safe_name(doc["id"])
        path = directory / f"{name}.json"
        with self._lock:
            try:
                with path.open("x", encoding="utf-8") as fh:
                    fh.write(self._dump(doc))
                    fh.flush()
                    os.fsync(fh.fileno())
            except FileExistsError:
                raise ConflictError(
                    f"{collection} document already exists: {path.stem}") from None
        return doc["id"]

    def update_composed_state(self, doc_id: str, *, state: str,
                              sent_at: str | None,
                              idempotency_key: str | None = None) -> dict:
        """The one sanctioned mutation: move a composed draft to sent."""
        if state != "sent":
            raise StateError("composed feedback can only move to sent")
        with self._lock:
            path = self._path_for(self.COMPOSED, doc_id)
            if path is None:
                raise NotFoundError(f"unknown composed feedback {doc_id!r}")
            doc = self._read(self.COMPOSED, path)
            if doc["state"] != "draft":
                raise StateError("feedback version already sent")
            doc["state"] = "sent"
            doc["sent_at"] = sent_at
            if idempotency_key is not None:
                doc["idempotency_key"] = idempotency_key
            self._validators[self.COMPOSED].validate(doc)
            tmp = path.with_suffix(".tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                fh.write(self._dump(doc))
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
            return doc

    # -- reads

    def _paths(self, collection: str) -> list[Path]:
        return sorted(self._collection_dir(collection).glob("*.json"))

    def _path_for(self, collection: str, doc_id: str) -> Path | None:
        direct = self._collection_dir(collection) / f"{_safe_name(doc_id)}.json"
        if direct.exists():
            return direct
        for path in self._paths(collection):
            try:
                doc = self._read(collection, path)
            except StorageIntegrityError:
                continue
            if doc.get("id") == doc_id:
                return path
        return None

    def get(self, collection: str, doc_id: str) -> dict | None:
        with self._lock:
            path = self._path_for(collection, doc_id)
            return self._read(collection, path) if path else None

    def find(self, collection: str, **filters) -> list[dict]:
        """Load documents matching equality filters (instance_id,
        provider_id, state, version, ...)."""
        with self._lock:
            docs = [self._read(collection, p) for p in self._paths(collection)]
        docs = [d for d in docs
                if all(d.get(k) == v for k, v in filters.items())]
        docs.sort(key=lambda d: (d.get("created_at", ""), d.get("id", "")))
        return docs

    def count(self, collection: str) -> int:
        return len(self._paths(collection))

    def raw_bytes(self, collection: str, doc_id: str) -> bytes:
        with self._lock:
            path = self._path_for(collection, doc_id)
            if path is None:
                raise NotFoundError(f"unknown {collection} document {doc_id!r}")
            return path.read_bytes()
