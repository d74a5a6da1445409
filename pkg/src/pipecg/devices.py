"""Emulated heterogeneous node: two executors plus async transfer channels.

Each :class:`Device` is a worker pool living in this process; speed
asymmetry (a fast accelerator vs a slower host, or the reverse) is
configured by padding kernel durations rather than by real hardware.
:class:`TransferChannel` stands in for an async copy engine: a copy
captures its payload immediately, becomes visible on the destination only
after a configurable delay, and costs the devices nothing while in flight,
so compute/transfer overlap can be measured for real.  Numerical results
never depend on any of this timing.
"""

from __future__ import annotations

import threading
import time
import queue
from concurrent.futures import Future
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

from .kernels import spmv
from .sparse import CsrMatrix

__all__ = [
    "DeviceKind",
    "Device",
    "TransferChannel",
    "CopyHandle",
    "ChannelError",
    "DeviceProfile",
    "profile_devices",
]


class DeviceKind(Enum):
    HOST = "host"
    ACCEL = "accel"


class ChannelError(RuntimeError):
    """Transfer contract violation (unknown or already in-flight name)."""


_CLOSE = object()


def _sleep_until(deadline: float) -> None:
    # time.sleep never wakes early, so one pass usually suffices
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0.0:
            return
        time.sleep(remaining)


class Device:
    """One emulated executor: a named-buffer store and a serial kernel queue.

    Kernels submitted to a device run one at a time on its own thread.
    ``worker_count`` and ``throttle`` set the speed model: every padded
    kernel lasts ``max(1, throttle / worker_count)`` times its measured
    duration.  A device can therefore only be slowed relative to native
    execution, never sped up; asymmetric pairs are built by throttling the
    slower side.

    The store maps vector names to buffers; a name holds at most one
    buffer.  Cross-device traffic goes exclusively through
    :class:`TransferChannel`.
    """

    def __init__(self, kind: DeviceKind | str, worker_count: int = 1, throttle: float = 1.0):
        if isinstance(kind, str):
            kind = DeviceKind(kind)
        if worker_count < 1:
            raise ValueError("worker_count must be at least 1")
        if not throttle >= 1.0:
            raise ValueError("throttle must be at least 1")
        self.kind = kind
        self.worker_count = int(worker_count)
        self.throttle = float(throttle)
        self.store: dict[str, Any] = {}
        self.kernel_seconds: dict[str, float] = {}
        self._tasks: queue.SimpleQueue = queue.SimpleQueue()
        self._closed = False
        self._thread = threading.Thread(
            target=self._serve, name=f"{kind.value}-device", daemon=True
        )
        self._thread.start()

    @property
    def slowdown(self) -> float:
        return max(1.0, self.throttle / self.worker_count)

    def _serve(self) -> None:
        while True:
            item = self._tasks.get()
            if item is _CLOSE:
                return
            fn, fut = item
            if not fut.set_running_or_notify_cancel():
                continue
            try:
                fut.set_result(fn())
            except BaseException as exc:
                fut.set_exception(exc)

    def submit(self, fn: Callable[[], Any]) -> Future:
        """Queue ``fn`` on the device thread; returns its Future."""
        if self._closed:
            raise RuntimeError("device is closed")
        fut: Future = Future()
        self._tasks.put((fn, fut))
        return fut

    def call(self, fn: Callable[[], Any]) -> Any:
        return self.submit(fn).result()

    def timed(self, label: str, fn: Callable[[], Any], pad: bool = True):
        """Run ``fn`` on the calling thread and account its duration.

        Meant to be used inside submitted tasks.  With ``pad`` the call is
        stretched to the device's effective speed; waits and bookkeeping
        pass ``pad=False``.  Returns ``(result, effective_seconds)``.
        """
        t0 = time.perf_counter()
        out = fn()
        effective = time.perf_counter() - t0
        if pad:
            target = effective * self.slowdown
            if target > effective:
                _sleep_until(t0 + target)
                effective = target
        self.kernel_seconds[label] = self.kernel_seconds.get(label, 0.0) + effective
        return out, effective

    def put(self, name: str, value: Any) -> None:
        self.store[name] = value

    def get(self, name: str) -> Any:
        return self.store[name]

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._tasks.put(_CLOSE)
            self._thread.join(timeout=10.0)

    def __enter__(self) -> "Device":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class CopyHandle:
    """Ticket for one in-flight copy; pass to :meth:`TransferChannel.wait`."""

    names: tuple
    values: int
    delay: float
    ready_at: float
    _payload: dict
    _dst: Device
    _done: bool = False


class TransferChannel:
    """Asynchronous one-way copy path between device stores.

    A copy snapshots the named source buffers at initiation and becomes
    visible on the destination only through :meth:`wait`, after a simulated
    delay of ``max(latency, bytes / bandwidth)``.  Counters track issued
    copies and float64 values moved.  Issuing a second copy of a name whose
    first is still in flight is a contract violation.
    """

    def __init__(self, latency_s: float = 0.0, bandwidth_bytes_per_s: float = 0.0):
        if latency_s < 0 or bandwidth_bytes_per_s < 0:
            raise ValueError("latency and bandwidth must be nonnegative")
        self.latency_s = float(latency_s)
        self.bandwidth_bytes_per_s = float(bandwidth_bytes_per_s)
        self.copies_issued = 0
        self.values_moved = 0
        self._in_flight: set[str] = set()
        self._lock = threading.Lock()

    def copy_async(self, src: Device, dst: Device, names: Sequence[str]) -> CopyHandle:
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ChannelError("duplicate name in one copy")
        for name in names:
            if name not in src.store:
                raise ChannelError(f"{name!r} is not resident on the {src.kind.value} device")
        total_bytes = 0
        total_values = 0
        payload: dict[str, np.ndarray] = {}
        with self._lock:
            for name in names:
                if name in self._in_flight:
                    raise ChannelError(f"copy of {name!r} already in flight on this channel")
            for name in names:
                buf = np.array(src.store[name], dtype=np.float64, copy=True)
                payload[name] = buf
                total_bytes += buf.nbytes
                total_values += buf.size
            self._in_flight.update(names)
            self.copies_issued += 1
            self.values_moved += total_values
        delay = self.latency_s
        if self.bandwidth_bytes_per_s > 0.0:
            delay = max(delay, total_bytes / self.bandwidth_bytes_per_s)
        return CopyHandle(
            names=names,
            values=total_values,
            delay=delay,
            ready_at=time.perf_counter() + delay,
            _payload=payload,
            _dst=dst,
        )

    def wait(self, handle: CopyHandle) -> None:
        """Block until the copy's delay elapses, then publish it on dst."""
        if handle._done:
            return
        _sleep_until(handle.ready_at)
        for name, buf in handle._payload.items():
            existing = handle._dst.store.get(name)
            if isinstance(existing, np.ndarray) and existing.shape == buf.shape:
                existing[...] = buf
            else:
                handle._dst.store[name] = buf
        with self._lock:
            self._in_flight.difference_update(handle.names)
        handle._done = True


@dataclass(frozen=True)
class DeviceProfile:
    """Measured (or pinned) relative speed of the two executors.

    ``s_d = profiled_nnz / t_d`` and ``r_host = s_host/(s_host + s_accel)``
    with ``r_accel`` stored as ``1 - r_host`` so the pair always sums to 1
    exactly.  ``degenerate`` flags a clamped unmeasurably-fast time.
    """

    t_host: float
    t_accel: float
    s_host: float
    s_accel: float
    r_host: float
    r_accel: float
    profiled_nnz: int
    degenerate: bool = False

    TIME_FLOOR = 1e-9

    @classmethod
    def from_times(cls, t_host: float, t_accel: float, profiled_nnz: int) -> "DeviceProfile":
        degenerate = False
        if t_host < cls.TIME_FLOOR:
            t_host, degenerate = cls.TIME_FLOOR, True
        if t_accel < cls.TIME_FLOOR:
            t_accel, degenerate = cls.TIME_FLOOR, True
        s_host = profiled_nnz / t_host
        s_accel = profiled_nnz / t_accel
        r_host = s_host / (s_host + s_accel)
        return cls(
            t_host=float(t_host),
            t_accel=float(t_accel),
            s_host=s_host,
            s_accel=s_accel,
            r_host=r_host,
            r_accel=1.0 - r_host,
            profiled_nnz=int(profiled_nnz),
            degenerate=degenerate,
        )

    @classmethod
    def pinned(cls, r_host: float, profiled_nnz: int) -> "DeviceProfile":
        """Profile with a chosen host share, bypassing the clock."""
        r_host = float(r_host)
        if not 0.0 <= r_host <= 1.0:
            raise ValueError("r_host must lie in [0, 1]")
        s_host = r_host
        s_accel = 1.0 - r_host
        return cls(
            t_host=profiled_nnz / s_host if s_host > 0 else float("inf"),
            t_accel=profiled_nnz / s_accel if s_accel > 0 else float("inf"),
            s_host=s_host,
            s_accel=s_accel,
            r_host=r_host,
            r_accel=1.0 - r_host,
            profiled_nnz=int(profiled_nnz),
        )

    def to_dict(self) -> dict:
        return {
            "t_host": float(self.t_host),
            "t_accel": float(self.t_accel),
            "s_host": float(self.s_host),
            "s_accel": float(self.s_accel),
            "r_host": float(self.r_host),
            "r_accel": float(self.r_accel),
            "profiled_nnz": int(self.profiled_nnz),
            "degenerate": bool(self.degenerate),
        }


def profile_devices(
    A: CsrMatrix,
    host: Device,
    accel: Device,
    runs: int = 5,
    profile_rows: int | None = None,
) -> DeviceProfile:
    """Measure each device's best-of-``runs`` matrix-product time.

    The minimum over repeated runs is the standard cache-warm estimator.
    Devices are timed one after the other so the measurements cannot
    disturb each other.  ``profile_rows`` restricts the sample to the
    first rows of ``A`` for matrices too large to sweep whole.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    slab = A if profile_rows is None else A.take_rows(profile_rows)
    if slab.nnz == 0:
        raise ValueError("profiling slab has no nonzeros")
    x = np.ones(slab.n_cols)
    times = []
    for device in (host, accel):
        device.put("profile_matrix", slab)
        y = np.empty(slab.n_rows)

        def one_run(device=device, y=y):
            return device.timed("profile_spmv", lambda: spmv(slab, x, out=y))

        best = min(device.call(one_run)[1] for _ in range(runs))
        times.append(best)
    return DeviceProfile.from_times(times[0], times[1], slab.nnz)
