"""Background generation jobs, at most one per instance.

Admission control is a compare-and-set on the instance status
(collecting -> generating) in the request thread, so exactly one of any
number of concurrent triggers wins. The winning job runs the pipeline on
a worker thread; completion moves the instance to curating, failure rolls
it back to collecting so the teacher can retry.
"""
from __future__ import annotations

import logging
import threading

from ..errors import ConflictError, NotFoundError
from ..gateway import ProviderDescriptor
from ..model import to_rfc3339, utcnow
from .pipeline import run_generation

logger = logging.getLogger("feedbackforge.jobs")


class GenerationJobManager:
    def __init__(self, relational, documents, providers: list[dict],
                 *, synchronous: bool = False):
        self.relational = relational
        self.documents = documents
        self.descriptors = [ProviderDescriptor.from_dict(p) for p in providers]
        self.synchronous = synchronous
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    def start(self, instance_id: str) -> dict:
        """Admit one generation job; concurrent triggers get a conflict."""
        instance = self.relational.get_instance(instance_id)
        if instance is None:
            raise NotFoundError(f"unknown instance {instance_id!r}")
        won = self.relational.cas_instance_status(
            instance_id, "collecting", "generating")
        if not won:
            current = self.relational.get_instance(instance_id).status
            raise ConflictError(
                f"cannot start generation: instance status is {current!r}"
                " (a job may already be running or done)")
        job = {
            "instance_id": instance_id,
            "state": "running",
            "providers": [d.id for d in self.descriptors],
            "started_at": to_rfc3339(utcnow()),
            "finished_at": None,
            "error": None,
            "summaries": None,
        }
        with self._lock:
            self._jobs[instance_id] = job
        if self.synchronous:
            self._run(instance_id)
        else:
            threading.Thread(target=self._run, args=(instance_id,),
                             daemon=True).start()
        return self.status(instance_id)

    def _run(self, instance_id: str) -> None:
        try:
            report = run_generation(self.relational, self.documents,
                                    instance_id, self.descriptors)
        except Exception as exc:
            logger.exception("generation failed for %s", instance_id)
            self.relational.cas_instance_status(
                instance_id, "generating", "collecting")
            self._finish(instance_id, state="failed", error=str(exc))
        else:
            self.relational.cas_instance_status(
                instance_id, "generating", "curating")
            self._finish(instance_id, state="done",
                         summaries=[s.to_dict() for s in report.summaries])

    def _finish(self, instance_id: str, *, state: str, error: str | None = None,
                summaries: list[dict] | None = None) -> None:
        with self._lock:
            job = self._jobs[instance_id]
            job["state"] = state
            job["error"] = error
            job["summaries"] = summaries
            job["finished_at"] = to_rfc3339(utcnow())

    def status(self, instance_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(instance_id)
            return dict(job) if job else None
