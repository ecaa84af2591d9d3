"""Hybrid storage: relational rows, JSON documents, checksummed blobs."""
from .audit import run_integrity_audit
from .documents import COLLECTIONS, CURRENT_SCHEMA_VERSION, DocumentStore
from .files import FileRef, FileService, MEDIA_KINDS
from .relational import RelationalStore

__all__ = [
    "COLLECTIONS",
    "CURRENT_SCHEMA_VERSION",
    "DocumentStore",
    "FileRef",
    "FileService",
    "MEDIA_KINDS",
    "RelationalStore",
    "run_integrity_audit",
]
