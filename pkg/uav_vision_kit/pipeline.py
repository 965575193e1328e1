"""Bounded multi-worker frame pipeline with in-order delivery.

One producer submits frames into a bounded job queue, W workers apply a
shared stage function, and a collector thread files their results into a
reorder buffer keyed by sequence number. The consumer receives results in
submission order.
"""

import functools
import logging
import multiprocessing
import pickle
import queue
import threading
import time
from collections.abc import Callable, Sequence
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from .bench import ExhaustiveResult, exhaustive_search
from .conv import ConvOutput, DepthwiseKernel, PointwiseKernel, Tensor3, separable_conv
from .models import Frame, Patch

logger = logging.getLogger(__name__)

_READY = -1
_DONE = -2
_IDLE = -1

SHUTDOWN_WATCHDOG_SECONDS = 1.0
COLLECT_POLL_SECONDS = 0.1


class PipelineClosed(RuntimeError):
    """Raised on submit after shutdown, or on next_result once closed and drained."""


class WouldBlock(RuntimeError):
    """Raised by a non-blocking submit when the pipeline is at capacity."""


class SpawnFailure(RuntimeError):
    """Raised when workers cannot be started."""


class PipelineConfig(BaseModel):
    """Worker count, job queue bound and the per-frame stage."""

    model_config = ConfigDict(frozen=True)

    workers: int = Field(default=1, ge=1)
    queue_capacity: int = Field(default=8, ge=1)
    stage: Callable[[Frame], Any]
    backend: Literal["thread", "process"] = "thread"
    start_timeout: float = Field(default=30.0, gt=0.0)


class Job(BaseModel):
    model_config = ConfigDict(frozen=True)

    seq: int = Field(ge=0)
    frame: Frame


class PipelineResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    seq: int
    payload: Any = None
    worker_id: int
    latency: float
    error: str | None = None


class RunStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    workers: int
    jobs: int
    per_worker: list[int]
    wall_seconds: float
    fps: float
    hwm_inflight: int


def _worker_loop(
    worker_id: int,
    stage: Callable[[Frame], Any],
    jobs: Any,
    results: Any,
    current: Any,
    pickled: bool,
) -> None:
    """Consume jobs until a None sentinel arrives; stage errors travel with the result.

    current[worker_id] holds the seq being worked on, so a dead worker's job can be reported.
    With pickled set, payloads are pickled here so a failure becomes an error result.
    """
    results.put((_READY, worker_id, None, None, 0.0))
    while True:
        job = jobs.get()
        if job is None:
            break
        current[worker_id] = job.seq
        started = time.perf_counter()
        try:
            payload, error = stage(job.frame), None
            if pickled:
                payload = pickle.dumps(payload)
        except Exception as e:
            payload, error = None, f"{type(e).__name__}: {e}"
        results.put((job.seq, worker_id, payload, error, time.perf_counter() - started))
        current[worker_id] = _IDLE
    results.put((_DONE, worker_id, None, None, 0.0))


class Pipeline:
    """Single-producer, single-consumer handle over W stage workers."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        workers = config.workers
        capacity = config.queue_capacity

        self._cond = threading.Condition()
        self._buffer: dict[int, PipelineResult] = {}
        self._next_seq = 0
        self._next_out = 0
        self._outstanding = 0
        self._hwm = 0
        self._closed = False
        self._ready = 0
        self._done = 0
        self._finished: set[int] = set()
        self._suspects: set[int] = set()
        self._per_worker = [0] * workers
        self._first_submit: float | None = None
        self._stats: RunStats | None = None

        # queued + in flight + reorder buffer never exceeds this
        self._slots = threading.BoundedSemaphore(2 * capacity + workers)

        self._workers: list[Any] = []
        self._collector: threading.Thread | None = None
        if config.backend == "process":
            self._ctx = multiprocessing.get_context("spawn")
            self._jobs: Any = self._ctx.Queue(maxsize=capacity)
            self._results: Any = self._ctx.Queue()
            self._current: Any = self._ctx.RawArray("q", [_IDLE] * workers)
        else:
            self._jobs = queue.Queue(maxsize=capacity)
            self._results = queue.Queue()
            self._current = [_IDLE] * workers

    @retry(
        retry=retry_if_exception_type((OSError, RuntimeError)),
        stop=stop_after_attempt(3),
        wait=wait_exponential(multiplier=0.05, max=1),
        reraise=True,
    )
    def _spawn(self, worker_id: int) -> Any:
        pickled = self.config.backend == "process"
        args = (worker_id, self.config.stage, self._jobs, self._results, self._current, pickled)
        name = f"pipeline-worker-{worker_id}"
        if self.config.backend == "process":
            worker: Any = self._ctx.Process(target=_worker_loop, args=args, name=name, daemon=True)
        else:
            worker = threading.Thread(target=_worker_loop, args=args, name=name, daemon=True)
        worker.start()
        return worker

    def start(self) -> "Pipeline":
        """Start W workers and wait until each reports ready."""
        for worker_id in range(self.config.workers):
            try:
                self._workers.append(self._spawn(worker_id))
            except (OSError, RuntimeError) as e:
                self._abort()
                raise SpawnFailure(f"could not start worker {worker_id}: {e}") from e

        self._collector = threading.Thread(
            target=self._collect, name="pipeline-collector", daemon=True
        )
        self._collector.start()

        with self._cond:
            ready = self._cond.wait_for(
                lambda: self._ready == self.config.workers, timeout=self.config.start_timeout
            )
        if not ready:
            self._abort()
            raise SpawnFailure(
                f"only {self._ready} of {self.config.workers} workers became ready "
                f"within {self.config.start_timeout}s"
            )

        logger.debug(
            "pipeline started: %d %s workers, capacity %d",
            self.config.workers,
            self.config.backend,
            self.config.queue_capacity,
        )
        return self

    def _collect(self) -> None:
        while self._done < self.config.workers:
            try:
                seq, worker_id, payload, error, latency = self._results.get(
                    timeout=COLLECT_POLL_SECONDS
                )
            except queue.Empty:
                self._reap_dead_workers()
                continue
            if self.config.backend == "process" and error is None and seq >= 0:
                try:
                    payload = pickle.loads(payload)
                except Exception as e:
                    payload, error = None, f"{type(e).__name__}: {e}"
            with self._cond:
                if seq == _READY:
                    self._ready += 1
                elif seq == _DONE:
                    self._done += 1
                    self._finished.add(worker_id)
                else:
                    self._file(seq, worker_id, payload, error, latency)
                self._cond.notify_all()

        with self._cond:
            # no worker is left to run anything still queued
            self._closed = True
            for seq in range(self._next_out, self._next_seq):
                if seq not in self._buffer:
                    self._buffer[seq] = PipelineResult(
                        seq=seq, worker_id=-1, latency=0.0, error="WorkerDied: no result"
                    )
            self._cond.notify_all()

    def _file(
        self, seq: int, worker_id: int, payload: Any, error: str | None, latency: float
    ) -> None:
        self._buffer[seq] = PipelineResult(
            seq=seq, payload=payload, worker_id=worker_id, latency=latency, error=error
        )
        self._per_worker[worker_id] += 1

    def _reap_dead_workers(self) -> None:
        """Count workers that exited without finishing as done, failing their current job.

        A worker must be seen dead on two consecutive empty polls, so anything it
        flushed before exiting has been read.
        """
        dead = {
            worker_id
            for worker_id, worker in enumerate(self._workers)
            if worker_id not in self._finished and not worker.is_alive()
        }
        with self._cond:
            for worker_id in dead & self._suspects:
                worker = self._workers[worker_id]
                seq = self._current[worker_id]
                if seq >= self._next_out and seq not in self._buffer:
                    code = getattr(worker, "exitcode", None)
                    reason = f"{worker.name} exited" + (f" with code {code}" if code else "")
                    self._file(seq, worker_id, None, f"WorkerDied: {reason}", 0.0)
                logger.warning("worker %s died", worker.name)
                self._finished.add(worker_id)
                self._done += 1
            self._cond.notify_all()
        self._suspects = dead - self._finished

    def _abort(self) -> None:
        self._closed = True
        for _ in self._workers:
            try:
                self._jobs.put_nowait(None)
            except queue.Full:
                pass
        for worker in self._workers:
            worker.join(timeout=SHUTDOWN_WATCHDOG_SECONDS)
            if self.config.backend == "process" and worker.is_alive():
                worker.terminate()

    def submit(self, frame: Frame, block: bool = True, timeout: float | None = None) -> int:
        """Queue a frame and return its sequence number.

        Blocks while the pipeline is full; with block=False raises WouldBlock instead.
        """
        if self._closed:
            raise PipelineClosed("pipeline is shut down")

        acquired = self._slots.acquire(timeout=timeout) if block else self._slots.acquire(False)
        if not acquired:
            raise WouldBlock("pipeline holds its maximum number of outstanding jobs")

        seq = self._next_seq
        with self._cond:
            if self._first_submit is None:
                self._first_submit = time.perf_counter()
            self._next_seq += 1
            self._outstanding += 1
            self._hwm = max(self._hwm, self._outstanding)

        try:
            self._jobs.put(Job(seq=seq, frame=frame), block, timeout)
        except queue.Full:
            with self._cond:
                self._next_seq -= 1
                self._outstanding -= 1
            self._slots.release()
            raise WouldBlock(f"job queue is full ({self.config.queue_capacity} jobs)") from None

        return seq

    def next_result(self, timeout: float | None = None) -> PipelineResult:
        """Next result in sequence order; waits for it if necessary."""
        with self._cond:
            available = self._cond.wait_for(
                lambda: self._next_out in self._buffer
                or (self._closed and self._next_out >= self._next_seq),
                timeout=timeout,
            )
            if not available:
                raise TimeoutError(f"result {self._next_out} not ready after {timeout}s")
            if self._next_out not in self._buffer:
                raise PipelineClosed("pipeline is closed and drained")

            result = self._buffer.pop(self._next_out)
            self._next_out += 1
            self._outstanding -= 1

        self._slots.release()
        return result

    def shutdown(self) -> RunStats:
        """Stop accepting jobs, finish queued ones and join the workers."""
        with self._cond:
            if self._stats is not None:
                return self._stats
            self._closed = True
            self._cond.notify_all()

        for _ in self._workers:
            self._put_sentinel()

        if self._collector is not None:
            self._collector.join()
        for worker in self._workers:
            worker.join(timeout=SHUTDOWN_WATCHDOG_SECONDS)
            if worker.is_alive():
                logger.warning("worker %s did not exit in time", worker.name)
                if self.config.backend == "process":
                    worker.terminate()

        finished = time.perf_counter()
        with self._cond:
            wall = finished - self._first_submit if self._first_submit is not None else 0.0
            jobs = sum(self._per_worker)
            self._stats = RunStats(
                workers=self.config.workers,
                jobs=jobs,
                per_worker=list(self._per_worker),
                wall_seconds=wall,
                fps=jobs / wall if wall > 0 else 0.0,
                hwm_inflight=self._hwm,
            )
            self._cond.notify_all()

        logger.debug("pipeline stopped: %s", self._stats)
        return self._stats

    def _put_sentinel(self) -> None:
        while True:
            try:
                self._jobs.put(None, timeout=COLLECT_POLL_SECONDS)
                return
            except queue.Full:
                # every worker is gone, so nothing will make room
                if self._collector is None or not self._collector.is_alive():
                    return

    def __enter__(self) -> "Pipeline":
        return self

    def __exit__(self, *exc: object) -> None:
        self.shutdown()


def start(config: PipelineConfig) -> Pipeline:
    return Pipeline(config).start()


def submit(handle: Pipeline, frame: Frame, block: bool = True) -> int:
    return handle.submit(frame, block=block)


def next_result(handle: Pipeline, timeout: float | None = None) -> PipelineResult:
    return handle.next_result(timeout=timeout)


def shutdown(handle: Pipeline) -> RunStats:
    return handle.shutdown()


def run_frames(
    config: PipelineConfig,
    frames: Sequence[Frame],
) -> tuple[list[PipelineResult], RunStats]:
    """Push frames through a fresh pipeline from a producer thread and collect every result."""
    handle = start(config)
    producer_error: list[BaseException] = []

    def produce() -> None:
        try:
            for frame in frames:
                handle.submit(frame)
        except BaseException as e:
            producer_error.append(e)

    producer = threading.Thread(target=produce, name="pipeline-producer", daemon=True)
    producer.start()
    try:
        results = [handle.next_result() for _ in frames]
    finally:
        producer.join()
        stats = handle.shutdown()
    if producer_error:
        raise producer_error[0]
    return results, stats


def spin_stage(frame: Frame, ms: float) -> int:
    """Busy-loop for ms milliseconds of wall time; returns the frame's seq."""
    deadline = time.perf_counter() + ms / 1000.0
    while time.perf_counter() < deadline:
        pass
    return frame.seq


def make_spin_stage(ms: float) -> Callable[[Frame], int]:
    return functools.partial(spin_stage, ms=ms)


class SeparableStage:
    """A depthwise-separable layer loaded once and applied to every frame."""

    def __init__(self, dk: DepthwiseKernel, pk: PointwiseKernel):
        if dk.m != 1 or pk.m != 1:
            raise ValueError("frames are single-channel; kernels must take 1 input channel")
        self.dk = dk
        self.pk = pk

    def __call__(self, frame: Frame) -> ConvOutput:
        tensor = Tensor3(data=frame.pixels[:, :, None])
        return separable_conv(tensor, self.dk, self.pk)


class SearchStage:
    """Full-frame template search, independent per frame."""

    def __init__(self, template: Patch):
        self.template = template

    def __call__(self, frame: Frame) -> ExhaustiveResult:
        return exhaustive_search(self.template, frame)


def measure_scaling(
    worker_counts: Sequence[int],
    frames: Sequence[Frame],
    stage: Callable[[Frame], Any],
    backend: Literal["thread", "process"] = "process",
    queue_capacity: int = 8,
) -> list[RunStats]:
    """RunStats for each worker count over the same frames."""
    stats: list[RunStats] = []
    for workers in worker_counts:
        config = PipelineConfig(
            workers=workers, queue_capacity=queue_capacity, stage=stage, backend=backend
        )
        _, run = run_frames(config, frames)
        logger.debug("workers=%d fps=%.1f", workers, run.fps)
        stats.append(run)
    return stats
