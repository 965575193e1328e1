"""Tests for the bounded in-order frame pipeline."""

import os
import random
import threading
import time
from typing import NoReturn

import numpy as np
import pytest
from pydantic import ValidationError

from uav_vision_kit.bench import exhaustive_search
from uav_vision_kit.conv import DepthwiseKernel, PointwiseKernel, Tensor3, separable_conv
from uav_vision_kit.frames import extract_patch
from uav_vision_kit.models import Frame, PatchCenter
from uav_vision_kit.pipeline import (
    Pipeline,
    PipelineClosed,
    PipelineConfig,
    RunStats,
    SearchStage,
    SeparableStage,
    SpawnFailure,
    WouldBlock,
    make_spin_stage,
    measure_scaling,
    next_result,
    run_frames,
    shutdown,
    start,
    submit,
)


def tiny_frames(count: int) -> list[Frame]:
    return [Frame(pixels=np.zeros((2, 2)), seq=i) for i in range(count)]


def echo(frame: Frame) -> int:
    return frame.seq


def returns_lock(frame: Frame) -> object:
    return threading.Lock()


def exits_process(frame: Frame) -> NoReturn:
    os._exit(3)


def shutdown_within(handle: Pipeline, seconds: float) -> RunStats | None:
    """Shut down on a helper thread; None if it has not returned in time."""
    stats: list[RunStats] = []
    helper = threading.Thread(target=lambda: stats.append(handle.shutdown()), daemon=True)
    helper.start()
    helper.join(timeout=seconds)
    return stats[0] if stats else None


class Jitter:
    """Stage that sleeps a seeded random 0-1 ms per job, then echoes its seq."""

    def __init__(self, seed: int) -> None:
        self.seed = seed

    def __call__(self, frame: Frame) -> int:
        time.sleep(random.Random(self.seed * 1_000_003 + frame.seq).random() / 1000)
        return frame.seq


class Gate:
    """Stage that blocks every call until released and counts calls in progress."""

    def __init__(self) -> None:
        self.release = threading.Event()
        self.entered = 0
        self._lock = threading.Lock()

    def __call__(self, frame: Frame) -> int:
        with self._lock:
            self.entered += 1
        self.release.wait(timeout=10)
        return frame.seq

    def wait_entered(self, count: int, timeout: float = 5.0) -> None:
        deadline = time.monotonic() + timeout
        while self.entered < count:
            if time.monotonic() > deadline:
                raise AssertionError(f"only {self.entered} of {count} jobs reached the stage")
            time.sleep(0.005)


class TestPipelineConfig:
    """Tests for PipelineConfig model."""

    def test_defaults(self) -> None:
        """Test a config needs only a stage."""
        config = PipelineConfig(stage=echo)

        assert (config.workers, config.queue_capacity, config.backend) == (1, 8, "thread")

    def test_rejects_zero_workers(self) -> None:
        """Test at least one worker is required."""
        with pytest.raises(ValidationError):
            PipelineConfig(workers=0, stage=echo)


class TestOrdering:
    """Tests for in-order delivery."""

    def test_single_worker_order(self) -> None:
        """Test one worker returns results in submission order."""
        results, _ = run_frames(PipelineConfig(workers=1, stage=echo), tiny_frames(20))

        assert [r.seq for r in results] == list(range(20))
        assert [r.payload for r in results] == list(range(20))

    def test_reordered_completion(self) -> None:
        """Test early jobs that finish last are still delivered first."""

        def slow_early(frame: Frame) -> int:
            time.sleep(0.002 * (12 - frame.seq))
            return frame.seq

        config = PipelineConfig(workers=4, queue_capacity=4, stage=slow_early)
        results, stats = run_frames(config, tiny_frames(12))

        assert [r.payload for r in results] == list(range(12))
        assert stats.jobs == 12

    def test_module_functions(self) -> None:
        """Test the start/submit/next_result/shutdown functions drive a handle."""
        handle = start(PipelineConfig(workers=2, stage=echo))
        seqs = [submit(handle, frame) for frame in tiny_frames(3)]
        results = [next_result(handle, timeout=5) for _ in seqs]
        stats = shutdown(handle)

        assert seqs == [0, 1, 2]
        assert [r.seq for r in results] == seqs
        assert stats.jobs == 3

    @pytest.mark.slow
    @pytest.mark.parametrize("workers", [1, 2, 4, 8])
    def test_exactly_once(self, workers: int) -> None:
        """Test every one of many jobs is delivered exactly once and in order."""
        frames = tiny_frames(10_000)

        results, stats = run_frames(PipelineConfig(workers=workers, stage=echo), frames)

        assert [r.seq for r in results] == list(range(10_000))
        assert sum(stats.per_worker) == stats.jobs == 10_000

    @pytest.mark.slow
    @pytest.mark.parametrize("workers", [1, 2, 4, 8])
    def test_exactly_once_with_random_timing(self, workers: int) -> None:
        """Test random stage delays and random submit/consume interleavings keep exact order."""
        total = 2_000
        frames = tiny_frames(total)
        choices = random.Random(workers)
        delivered = []
        submitted = 0

        handle = start(PipelineConfig(workers=workers, queue_capacity=4, stage=Jitter(workers)))
        try:
            while len(delivered) < total:
                idle = submitted == len(delivered)
                if submitted < total and (idle or choices.random() < 0.5):
                    try:
                        handle.submit(frames[submitted], block=False)
                        submitted += 1
                        continue
                    except WouldBlock:
                        pass
                delivered.append(handle.next_result(timeout=10))
        finally:
            stats = handle.shutdown()

        assert [r.seq for r in delivered] == list(range(total))
        assert [r.payload for r in delivered] == list(range(total))
        assert sum(stats.per_worker) == stats.jobs == total


class TestBackpressure:
    """Tests for the bounded queue and non-blocking submit."""

    def test_would_block_on_full_queue(self) -> None:
        """Test a non-blocking submit fails once the single queue slot is taken."""
        gate = Gate()
        handle = Pipeline(PipelineConfig(workers=1, queue_capacity=1, stage=gate)).start()
        try:
            handle.submit(tiny_frames(1)[0])
            gate.wait_entered(1)
            handle.submit(tiny_frames(1)[0], block=False)

            with pytest.raises(WouldBlock):
                handle.submit(tiny_frames(1)[0], block=False)
        finally:
            gate.release.set()
            handle.shutdown()

    def test_capacity_counts_queued_jobs(self) -> None:
        """Test W jobs in flight plus a full queue are accepted, and no more."""
        gate = Gate()
        handle = Pipeline(PipelineConfig(workers=4, queue_capacity=8, stage=gate)).start()
        frame = tiny_frames(1)[0]
        try:
            for _ in range(4):
                handle.submit(frame)
            gate.wait_entered(4)
            for _ in range(8):
                handle.submit(frame, block=False)

            with pytest.raises(WouldBlock):
                handle.submit(frame, block=False)
        finally:
            gate.release.set()
            stats = handle.shutdown()

        assert stats.jobs == 12

    def test_failed_submit_does_not_consume_seq(self) -> None:
        """Test the sequence continues without a gap after WouldBlock."""
        gate = Gate()
        handle = Pipeline(PipelineConfig(workers=1, queue_capacity=1, stage=gate)).start()
        frame = tiny_frames(1)[0]
        try:
            handle.submit(frame)
            gate.wait_entered(1)
            handle.submit(frame)
            with pytest.raises(WouldBlock):
                handle.submit(frame, block=False)
            gate.release.set()

            assert [handle.next_result(timeout=5).seq for _ in range(2)] == [0, 1]
            assert handle.submit(frame) == 2
        finally:
            gate.release.set()
            handle.shutdown()

    def test_high_water_mark_bounded(self) -> None:
        """Test outstanding jobs never exceed 2*capacity + W."""
        config = PipelineConfig(workers=2, queue_capacity=2, stage=echo)

        _, stats = run_frames(config, tiny_frames(200))

        assert 1 <= stats.hwm_inflight <= 2 * 2 + 2


class TestShutdown:
    """Tests for shutdown and closed-pipeline behaviour."""

    def test_idle_shutdown_is_prompt(self) -> None:
        """Test an idle pipeline stops quickly with no jobs."""
        handle = start(PipelineConfig(workers=4, stage=echo))

        began = time.perf_counter()
        stats = handle.shutdown()

        assert time.perf_counter() - began < 1.0
        assert stats.jobs == 0
        assert stats.fps == 0.0

    def test_submit_after_shutdown(self) -> None:
        """Test a closed pipeline refuses new frames."""
        handle = start(PipelineConfig(stage=echo))
        handle.shutdown()

        with pytest.raises(PipelineClosed):
            handle.submit(tiny_frames(1)[0])

    def test_drains_then_closes(self) -> None:
        """Test queued results remain readable after shutdown, then PipelineClosed."""
        handle = start(PipelineConfig(workers=2, stage=echo))
        for frame in tiny_frames(2):
            handle.submit(frame)
        handle.shutdown()

        assert [handle.next_result(timeout=5).payload for _ in range(2)] == [0, 1]
        with pytest.raises(PipelineClosed):
            handle.next_result(timeout=5)

    def test_shutdown_is_idempotent(self) -> None:
        """Test repeated shutdown returns the same stats."""
        handle = start(PipelineConfig(stage=echo))

        assert handle.shutdown() is handle.shutdown()

    def test_timeout(self) -> None:
        """Test next_result gives up when nothing arrives."""
        handle = start(PipelineConfig(stage=echo))
        try:
            with pytest.raises(TimeoutError):
                handle.next_result(timeout=0.05)
        finally:
            handle.shutdown()

    def test_context_manager(self) -> None:
        """Test leaving the with-block shuts the pipeline down."""
        with start(PipelineConfig(stage=echo)) as handle:
            handle.submit(tiny_frames(1)[0])
            assert handle.next_result(timeout=5).payload == 0

        with pytest.raises(PipelineClosed):
            handle.submit(tiny_frames(1)[0])

    @pytest.mark.filterwarnings("ignore::pytest.PytestUnhandledThreadExceptionWarning")
    def test_dead_worker_thread(self) -> None:
        """Test a worker killed mid-job reports that job and lets shutdown finish."""

        def exits_on_one(frame: Frame) -> int:
            if frame.seq == 1:
                raise SystemExit
            return frame.seq

        handle = start(PipelineConfig(workers=1, stage=exits_on_one))
        for frame in tiny_frames(3):
            handle.submit(frame)

        results = [handle.next_result(timeout=5) for _ in range(3)]
        stats = shutdown_within(handle, 5.0)

        assert results[0].payload == 0
        assert results[1].error == "WorkerDied: pipeline-worker-0 exited"
        assert results[2].error == "WorkerDied: no result"
        assert stats is not None
        with pytest.raises(PipelineClosed):
            handle.submit(tiny_frames(1)[0])


class TestSpawn:
    """Tests for starting workers."""

    def test_retries_transient_failure(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test a worker that fails to start twice is retried and the pipeline runs."""
        real_start = threading.Thread.start
        failures: list[str] = []

        def flaky_start(thread: threading.Thread) -> None:
            if thread.name == "pipeline-worker-0" and len(failures) < 2:
                failures.append(thread.name)
                raise RuntimeError("can't start new thread")
            real_start(thread)

        monkeypatch.setattr(threading.Thread, "start", flaky_start)

        with start(PipelineConfig(workers=2, stage=echo)) as handle:
            handle.submit(tiny_frames(1)[0])
            assert handle.next_result(timeout=5).payload == 0
        assert len(failures) == 2

    def test_gives_up_after_three_attempts(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test a worker that never starts raises SpawnFailure and stops the ones that did."""
        real_start = threading.Thread.start
        attempts: list[str] = []

        def broken_start(thread: threading.Thread) -> None:
            if thread.name == "pipeline-worker-1":
                attempts.append(thread.name)
                raise RuntimeError("can't start new thread")
            real_start(thread)

        monkeypatch.setattr(threading.Thread, "start", broken_start)
        pipeline = Pipeline(PipelineConfig(workers=2, stage=echo))

        with pytest.raises(SpawnFailure, match="worker 1"):
            pipeline.start()

        assert len(attempts) == 3
        assert not any(t.name == "pipeline-worker-0" for t in threading.enumerate())
        with pytest.raises(PipelineClosed):
            pipeline.submit(tiny_frames(1)[0])


class TestStats:
    """Tests for RunStats and stage errors."""

    def test_conservation(self) -> None:
        """Test per-worker counts add up to the jobs submitted."""
        results, stats = run_frames(PipelineConfig(workers=3, stage=echo), tiny_frames(30))

        assert len(results) == 30
        assert len(stats.per_worker) == 3
        assert sum(stats.per_worker) == stats.jobs == 30
        assert all(0 <= r.worker_id < 3 for r in results)
        assert stats.fps > 0

    def test_stage_error_travels_with_result(self) -> None:
        """Test a failing stage yields an error result without stopping the pipeline."""

        def fails_on_two(frame: Frame) -> int:
            if frame.seq == 2:
                raise ValueError("boom")
            return frame.seq

        results, stats = run_frames(PipelineConfig(workers=2, stage=fails_on_two), tiny_frames(5))

        assert results[2].payload is None
        assert results[2].error == "ValueError: boom"
        assert [r.error for r in results if r.seq != 2] == [None] * 4
        assert stats.jobs == 5


class TestStages:
    """Tests for the bundled stage callables."""

    def test_spin_stage(self) -> None:
        """Test the spin stage burns at least its budget and returns the seq."""
        stage = make_spin_stage(5)
        frame = Frame(pixels=np.zeros((2, 2)), seq=7)

        began = time.perf_counter()
        assert stage(frame) == 7
        assert time.perf_counter() - began >= 0.005

    def test_separable_stage(self, noise_frame: Frame, rng: np.random.Generator) -> None:
        """Test the stage applies the layer to the frame as one channel."""
        dk = DepthwiseKernel(data=rng.standard_normal((3, 3, 1)))
        pk = PointwiseKernel(data=rng.standard_normal((1, 4)))

        out = SeparableStage(dk, pk)(noise_frame)

        expected = separable_conv(Tensor3(data=noise_frame.pixels[:, :, None]), dk, pk)
        np.testing.assert_array_equal(out.tensor.data, expected.tensor.data)
        assert out.macs == expected.macs

    def test_separable_stage_needs_one_channel(self, rng: np.random.Generator) -> None:
        """Test kernels for multi-channel input are refused."""
        dk = DepthwiseKernel(data=rng.standard_normal((3, 3, 2)))
        pk = PointwiseKernel(data=rng.standard_normal((2, 4)))

        with pytest.raises(ValueError, match="1 input channel"):
            SeparableStage(dk, pk)

    def test_search_stage(self, noise_frame: Frame) -> None:
        """Test the search stage finds the template where it was cut."""
        template = extract_patch(noise_frame, PatchCenter(x=30, y=12), 3)

        result = SearchStage(template)(noise_frame)

        assert result == exhaustive_search(template, noise_frame)
        assert result.center == PatchCenter(x=30, y=12)

    def test_search_stage_in_pipeline(self, noise_frame: Frame) -> None:
        """Test a pipeline of search stages agrees with direct calls."""
        template = extract_patch(noise_frame, PatchCenter(x=30, y=12), 3)
        frames = [noise_frame.model_copy(update={"seq": i}) for i in range(4)]

        results, _ = run_frames(
            PipelineConfig(workers=2, stage=SearchStage(template)), frames
        )

        assert all(r.payload.center == PatchCenter(x=30, y=12) for r in results)


@pytest.mark.slow
class TestProcessBackend:
    """Tests for the process-based workers."""

    def test_results_in_order(self) -> None:
        """Test process workers deliver every result in order."""
        config = PipelineConfig(workers=2, stage=make_spin_stage(1), backend="process")

        results, stats = run_frames(config, tiny_frames(20))

        assert [r.payload for r in results] == list(range(20))
        assert stats.jobs == 20

    def test_unpicklable_result_becomes_error(self) -> None:
        """Test a payload that cannot leave the worker process arrives as an error."""
        with start(PipelineConfig(workers=1, stage=returns_lock, backend="process")) as handle:
            handle.submit(tiny_frames(1)[0])
            result = handle.next_result(timeout=30)

        assert result.payload is None
        assert "pickle" in result.error

    def test_dead_worker_process(self) -> None:
        """Test a worker process that exits mid-job yields error results and a prompt shutdown."""
        handle = start(PipelineConfig(workers=1, stage=exits_process, backend="process"))
        for frame in tiny_frames(2):
            handle.submit(frame)

        died, orphan = handle.next_result(timeout=30), handle.next_result(timeout=30)

        assert died.error == "WorkerDied: pipeline-worker-0 exited with code 3"
        assert orphan.error == "WorkerDied: no result"
        assert shutdown_within(handle, 10.0) is not None

    @pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="needs at least 4 cores")
    def test_scaling(self) -> None:
        """Test four workers run a CPU-bound stage well over twice as fast as one."""
        stats = measure_scaling([1, 4], tiny_frames(40), make_spin_stage(20))

        assert stats[1].fps / stats[0].fps >= 2.5
