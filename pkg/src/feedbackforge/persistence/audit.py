"""Cross-store integrity audit.

Walks every document collection and file row, checking that references
resolve: document instance_ids exist relationally, ratings point at real
composed versions, version sequences are gap-free, and blobs match their
checksums. Emits a machine-readable report; runnable from the CLI.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

from .documents import COLLECTIONS, DocumentStore
from .relational import RelationalStore


def run_integrity_audit(relational: RelationalStore, documents: DocumentStore,
                        file_root: str | Path | None = None) -> dict:
    instance_ids = relational.instance_ids()
    report: dict = {
        "checked": {},
        "orphans": [],
        "broken_references": [],
        "version_issues": [],
        "file_issues": [],
    }

    composed_ids = set()
    versions_by_instance: dict[str, list[int]] = {}
    for collection in COLLECTIONS:
        docs = documents.find(collection)
        report["checked"][collection] = len(docs)
        for doc in docs:
            if doc.get("instance_id") not in instance_ids:
                report["orphans"].append({
                    "collection": collection,
                    "doc_id": doc.get("id"),
                    "instance_id": doc.get("instance_id"),
                })
            if collection == "composed_feedback":
                composed_ids.add(doc["id"])
                versions_by_instance.setdefault(
                    doc["instance_id"], []).append(doc["version"])

    for doc in documents.find("feedback_ratings"):
        if doc.get("feedback_version_id") not in composed_ids:
            report["broken_references"].append({
                "collection": "feedback_ratings",
                "doc_id": doc.get("id"),
                "feedback_version_id": doc.get("feedback_version_id"),
            })

    for instance_id, versions in sorted(versions_by_instance.items()):
        expected = list(range(1, len(versions) + 1))
        if sorted(versions) != expected:
            report["version_issues"].append({
                "instance_id": instance_id,
                "versions": sorted(versions),
            })

    rows = relational.all_file_rows()
    report["checked"]["files"] = len(rows)
    for row in rows:
        issue = None
        if row["instance_id"] is not None and row["instance_id"] not in instance_ids:
            issue = "unknown instance"
        elif file_root is not None:
            path = Path(file_root) / row["rel_path"]
            if not path.exists():
                issue = "blob missing"
            elif hashlib.sha256(path.read_bytes()).hexdigest() != row["sha256"]:
                issue = "checksum mismatch"
        if issue:
            report["file_issues"].append({"file_id": row["id"], "issue": issue})

    report["ok"] = not (report["orphans"] or report["broken_references"]
                        or report["version_issues"] or report["file_issues"])
    return report
