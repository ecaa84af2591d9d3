"""Checksummed local-filesystem storage for session recordings.

Blobs live under the service root; metadata rows live in the relational
store, which enforces the one-active-recording-per-instance rule. Linking
a recording to an instance requires the subject's recording consent.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from ..errors import DomainError, NotFoundError, StorageIntegrityError
from ..model import new_id

MEDIA_KINDS = ("video", "audio")


@dataclass(frozen=True)
class FileRef:
    id: str
    instance_id: str | None
    media_kind: str
    rel_path: str
    sha256: str
    byte_size: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instance_id": self.instance_id,
            "media_kind": self.media_kind,
            "rel_path": self.rel_path,
            "sha256": self.sha256,
            "byte_size": self.byte_size,
        }


def _ref_from_row(row: dict) -> FileRef:
    return FileRef(id=row["id"], instance_id=row["instance_id"],
                   media_kind=row["media_kind"], rel_path=row["rel_path"],
                   sha256=row["sha256"], byte_size=row["byte_size"])


class FileService:
    def __init__(self, root: str | Path, relational):
        self.root = Path(root)
        self.relational = relational
        (self.root / "blobs").mkdir(parents=True, exist_ok=True)

    def put_file(self, data: bytes, media_kind: str,
                 instance_id: str | None = None) -> FileRef:
        """Store a blob; when instance_id is given, link it as the
        instance's active recording (subject consent required)."""
        if media_kind not in MEDIA_KINDS:
            raise DomainError(f"unknown media kind {media_kind!r}")
        if instance_id is not None:
            if self.relational.get_instance(instance_id) is None:
                raise NotFoundError(f"unknown instance {instance_id!r}")
            if not self.relational.subject_has_recording_consent(instance_id):
                raise DomainError(
                    "the instance subject has not consented to recording")
        file_id = new_id("fil")
        rel_path = f"blobs/{file_id}.bin"
        path = self.root / rel_path
        digest = hashlib.sha256(data).hexdigest()
        path.write_bytes(data)
        try:
            self.relational.register_file(
                file_id, instance_id=instance_id, media_kind=media_kind,
                rel_path=rel_path, sha256=digest, byte_size=len(data))
            if instance_id is not None:
                self.relational.set_instance_recording(instance_id, file_id)
        except Exception:
            path.unlink(missing_ok=True)
            raise
        return FileRef(id=file_id, instance_id=instance_id,
                       media_kind=media_kind, rel_path=rel_path,
                       sha256=digest, byte_size=len(data))

    def file_ref(self, file_id: str) -> FileRef:
        row = self.relational.file_row(file_id)
        if row is None:
            raise NotFoundError(f"unknown file {file_id!r}")
        return _ref_from_row(row)

    def get_file(self, file_id: str) -> tuple[FileRef, bytes]:
        """Read a blob back, verifying its checksum."""
        ref = self.file_ref(file_id)
        path = self.root / ref.rel_path
        if not path.exists():
            raise StorageIntegrityError(f"blob for file {file_id} is missing")
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != ref.sha256:
            raise StorageIntegrityError(
                f"checksum mismatch reading file {file_id}")
        return ref, data

    def deactivate(self, file_id: str) -> None:
        ref = self.file_ref(file_id)
        self.relational.deactivate_file(file_id)
        if ref.instance_id is not None:
            instance = self.relational.get_instance(ref.instance_id)
            if instance is not None and instance.recording_ref == file_id:
                self.relational.set_instance_recording(ref.instance_id, None)
