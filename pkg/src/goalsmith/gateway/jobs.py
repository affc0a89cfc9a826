"""In-process job queue: FIFO, one heavyweight job at a time, atomic status
transitions, content-addressed artifacts."""

from __future__ import annotations

import hashlib
import itertools
import queue
import threading
import traceback
from dataclasses import dataclass, field
from pathlib import Path


class QueueFull(RuntimeError):
    pass


@dataclass
class Job:
    id: str
    kind: str
    status: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    artifacts: dict = field(default_factory=dict)
    error: str | None = None
    result: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "kind": self.kind, "status": self.status,
            "progress": self.progress, "artifacts": self.artifacts,
            "error": self.error, "result": self.result,
        }


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class JobQueue:
    def __init__(self, max_pending: int = 32):
        self._jobs: dict[str, Job] = {}
        self._queue: queue.Queue = queue.Queue(maxsize=max_pending)
        self._lock = threading.Lock()
        self._counter = itertools.count(1)
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, kind: str, fn) -> Job:
        """fn(job) runs on the single worker thread; it may set job.result
        and should register artifacts via attach()."""
        with self._lock:
            job = Job(id=f"j{next(self._counter):06d}", kind=kind)
            self._jobs[job.id] = job
        try:
            self._queue.put_nowait((job, fn))
        except queue.Full:
            with self._lock:
                del self._jobs[job.id]
            raise QueueFull("job queue is full")
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def attach(self, job: Job, name: str, path) -> dict:
        entry = {"path": str(path), "sha256": file_sha256(path)}
        with self._lock:
            job.artifacts[name] = entry
        return entry

    def _run(self):
        while True:
            job, fn = self._queue.get()
            with self._lock:
                job.status = "running"
            try:
                fn(job)
            except Exception as exc:
                with self._lock:
                    job.status = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"
                    job.progress = 1.0
                traceback.print_exc()
                continue
            with self._lock:
                job.status = "done"
                job.progress = 1.0

    def wait(self, job_id: str, timeout: float = 600.0) -> Job:
        import time

        t0 = time.time()
        while time.time() - t0 < timeout:
            job = self.get(job_id)
            if job and job.status in ("done", "failed"):
                return job
            time.sleep(0.05)
        raise TimeoutError(f"job {job_id} still {self.get(job_id).status}")
