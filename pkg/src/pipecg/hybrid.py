"""Multi-device orchestrations of the pipelined solver.

Three strategies trade transfer volume against redundant work:

* ``hybrid1_solve`` keeps all vector math on the accelerator and ships
  w, r, u (3N values) back each iteration so the host can form the dot
  products, overlapping that copy with the accelerator's preconditioner
  and matrix product.
* ``hybrid2_solve`` ships only n (N values); the host keeps replicas of
  the recurrence vectors and redundantly applies the update formulas, so
  every dot product is computable host-side from one incoming vector.
* ``hybrid3_solve`` splits the matrix by measured device speed; each
  device owns a row block and slice of every vector (no redundancy), and
  per iteration each ships its slice of m to the other (N values total)
  while the two-phase product hides the transfer behind local-column work.

All three reproduce the single-executor solver's iterates: the first two
bitwise, the third up to the reassociation inherent in splitting rows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Any

import numpy as np

from .devices import Device, DeviceKind, DeviceProfile, TransferChannel, profile_devices
from .kernels import (
    _fused_update,
    _update_qsru,
    _update_qspxru,
    _update_zwm,
    dot,
    norm2,
    spmv,
    spmv_phase,
)
from .partition import Partition, decompose_1d, decompose_2d, derive_split
from .solvers import SolveReport, SolverBreakdown, SolverConfig, pipecg_scalars
from .solvers import _check_system
from .sparse import CsrMatrix

__all__ = ["hybrid1_solve", "hybrid2_solve", "hybrid3_solve"]


def _resolve_devices(devices):
    if devices is None:
        return Device(DeviceKind.HOST), Device(DeviceKind.ACCEL), True
    host, accel = devices
    return host, accel, False


def _phase_delta(device: Device, before: dict, role: str) -> dict:
    out = {}
    for label, seconds in device.kernel_seconds.items():
        delta = seconds - before.get(label, 0.0)
        if delta > 0.0:
            out[f"{role}_{label}"] = delta
    return out


def _guard_scalars(gamma: float, delta: float, iteration: int) -> None:
    if gamma < 0.0 or not math.isfinite(gamma):
        raise SolverBreakdown("gamma", iteration, gamma)
    if not math.isfinite(delta):
        raise SolverBreakdown("delta", iteration, delta)


def hybrid1_solve(
    A: CsrMatrix,
    b,
    x0,
    pc,
    cfg: SolverConfig | None = None,
    devices: tuple[Device, Device] | None = None,
    channel: TransferChannel | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Accelerator-resident pipelined CG with host-side dot products.

    The accelerator owns the matrix and all ten vectors.  Per iteration:
    the host derives alpha/beta, the accelerator runs the fused update,
    then w, r, u start copying host-ward while the accelerator computes
    m = M^{-1}w and n = Am; the host waits out the copy, forms gamma,
    delta and the norm, and decides convergence.  Scalars travel as
    zero-cost control messages.

    Matches the single-executor solver bitwise.  Moves exactly 3N values
    per iteration over ``channel``.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    b, x0 = _check_system(A, b, x0)
    host, accel, own_devices = _resolve_devices(devices)
    channel = channel or TransferChannel()
    host_before = dict(host.kernel_seconds)
    accel_before = dict(accel.kernel_seconds)
    values_start = channel.values_moved
    try:
        N = A.n_rows
        inv = pc.inv_diag
        accel.put("A", A)
        accel.put("b", b.copy())
        accel.put("x", x0.copy())
        for name in ("r", "u", "w", "m", "n"):
            accel.put(name, np.empty(N))
        for name in ("z", "q", "s", "p"):
            accel.put(name, np.zeros(N))
        for name in ("w", "r", "u"):
            host.put(name, np.empty(N))

        def accel_init():
            st = accel.store

            def work():
                spmv(A, st["x"], out=st["n"])
                np.subtract(st["b"], st["n"], out=st["r"])
                np.multiply(inv, st["r"], out=st["u"])
                spmv(A, st["u"], out=st["w"])
                np.multiply(inv, st["w"], out=st["m"])
                spmv(A, st["m"], out=st["n"])

            accel.timed("init", work)

            def init_dots():
                g = dot(st["r"], st["u"])
                d = dot(st["w"], st["u"])
                return g, d, math.sqrt(dot(st["u"], st["u"]))

            out, _ = accel.timed("dots", init_dots)
            return out

        gamma, delta, norm = accel.call(accel_init)
        gamma_prev = 0.0
        alpha_prev = 0.0

        history = [norm] if cfg.record_history else None
        drift = [] if cfg.drift_check_interval > 0 else None
        b_norm = norm2(b)
        t_setup = time.perf_counter()
        loop_values = channel.values_moved

        it = 0
        while norm >= cfg.tolerance and it < cfg.max_iterations:
            alpha, beta = pipecg_scalars(gamma, gamma_prev, delta, alpha_prev, it)

            def fused_task(alpha=alpha, beta=beta):
                st = accel.store
                accel.timed(
                    "vma",
                    lambda: _fused_update(
                        st["z"], st["q"], st["s"], st["p"], st["x"], st["r"],
                        st["u"], st["w"], st["m"], st["n"], alpha, beta,
                    ),
                )

            accel.call(fused_task)
            handle = channel.copy_async(accel, host, ("w", "r", "u"))

            def mn_task():
                st = accel.store

                def work():
                    np.multiply(inv, st["w"], out=st["m"])
                    spmv(A, st["m"], out=st["n"])

                accel.timed("mn", work)

            f_mn = accel.submit(mn_task)

            def host_task():
                st = host.store
                host.timed("wait", lambda: channel.wait(handle), pad=False)

                def dots():
                    g = dot(st["r"], st["u"])
                    d = dot(st["w"], st["u"])
                    return g, d, math.sqrt(dot(st["u"], st["u"]))

                out, _ = host.timed("dots", dots)
                return out

            gamma_next, delta, norm = host.call(host_task)
            f_mn.result()
            _guard_scalars(gamma_next, delta, it)
            gamma_prev = gamma
            gamma = gamma_next
            alpha_prev = alpha
            it += 1
            if history is not None:
                history.append(norm)
            if drift is not None and it % cfg.drift_check_interval == 0:
                def drift_task():
                    st = accel.store
                    resid = b - spmv(A, st["x"])
                    gap = norm2(resid - st["r"])
                    return gap / b_norm if b_norm > 0 else gap

                val = accel.call(
                    lambda: accel.timed("drift", drift_task, pad=False)[0]
                )
                drift.append([it, val])

        x = np.array(accel.get("x"), copy=True)
        t_end = time.perf_counter()
        phase_times = {"setup": t_setup - t_start, "iterations": t_end - t_setup}
        phase_times.update(_phase_delta(host, host_before, "host"))
        phase_times.update(_phase_delta(accel, accel_before, "accel"))
        report = SolveReport(
            converged=norm < cfg.tolerance,
            iterations=it,
            final_norm=norm,
            strategy="hybrid1",
            history=history,
            phase_times=phase_times,
            transfer_values=channel.values_moved - loop_values,
            transfer_values_total=channel.values_moved - values_start,
            drift_history=drift,
        )
        return x, report
    finally:
        if own_devices:
            host.close()
            accel.close()


def hybrid2_solve(
    A: CsrMatrix,
    b,
    x0,
    pc,
    cfg: SolverConfig | None = None,
    devices: tuple[Device, Device] | None = None,
    channel: TransferChannel | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Replica-based pipelined CG copying a single vector per iteration.

    The accelerator runs the full pipeline; the host keeps replicas of
    z, q, s, n, m, w, u, r and replays the update formulas redundantly, so
    only n (N values) must cross the channel each iteration.  While n is
    in flight the host updates q, s, r, u (which do not need it) and forms
    gamma and the norm; once n lands it updates z, w, m and forms delta.

    Matches the single-executor solver bitwise.  A start that is already
    converged issues no copies at all.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    b, x0 = _check_system(A, b, x0)
    host, accel, own_devices = _resolve_devices(devices)
    channel = channel or TransferChannel()
    host_before = dict(host.kernel_seconds)
    accel_before = dict(accel.kernel_seconds)
    values_start = channel.values_moved
    try:
        N = A.n_rows
        inv = pc.inv_diag
        accel.put("A", A)
        accel.put("b", b.copy())
        accel.put("x", x0.copy())
        for name in ("r", "u", "w", "m", "n"):
            accel.put(name, np.empty(N))
        for name in ("z", "q", "s", "p"):
            accel.put(name, np.zeros(N))

        def accel_init():
            st = accel.store

            def work():
                spmv(A, st["x"], out=st["n"])
                np.subtract(st["b"], st["n"], out=st["r"])
                np.multiply(inv, st["r"], out=st["u"])
                spmv(A, st["u"], out=st["w"])
                np.multiply(inv, st["w"], out=st["m"])
                spmv(A, st["m"], out=st["n"])

            accel.timed("init", work)

        accel.call(accel_init)

        # replica seeding is initial placement, not channel traffic
        host.put("inv_diag", inv.copy())
        for name in ("r", "u", "w", "m", "n"):
            host.put(name, np.array(accel.get(name), copy=True))
        for name in ("z", "q", "s"):
            host.put(name, np.zeros(N))

        def host_init_dots():
            st = host.store

            def init_dots():
                g = dot(st["r"], st["u"])
                d = dot(st["w"], st["u"])
                return g, d, math.sqrt(dot(st["u"], st["u"]))

            out, _ = host.timed("dots", init_dots)
            return out

        gamma, delta, norm = host.call(host_init_dots)
        gamma_prev = 0.0
        alpha_prev = 0.0

        history = [norm] if cfg.record_history else None
        drift = [] if cfg.drift_check_interval > 0 else None
        b_norm = norm2(b)
        t_setup = time.perf_counter()
        loop_values = channel.values_moved

        it = 0
        while norm >= cfg.tolerance and it < cfg.max_iterations:
            alpha, beta = pipecg_scalars(gamma, gamma_prev, delta, alpha_prev, it)
            handle = channel.copy_async(accel, host, ("n",))

            def accel_task(alpha=alpha, beta=beta):
                st = accel.store

                def work():
                    _fused_update(
                        st["z"], st["q"], st["s"], st["p"], st["x"], st["r"],
                        st["u"], st["w"], st["m"], st["n"], alpha, beta,
                    )
                    np.multiply(inv, st["w"], out=st["m"])
                    spmv(A, st["m"], out=st["n"])

                accel.timed("pipeline", work)

            f_accel = accel.submit(accel_task)

            def host_task(alpha=alpha, beta=beta):
                st = host.store
                host.timed(
                    "vma",
                    lambda: _update_qsru(
                        st["q"], st["s"], st["r"], st["u"], st["m"], st["w"],
                        alpha, beta,
                    ),
                )

                def dots_a():
                    return dot(st["r"], st["u"]), math.sqrt(dot(st["u"], st["u"]))

                (g, nn), _ = host.timed("dots", dots_a)
                host.timed("wait", lambda: channel.wait(handle), pad=False)
                host.timed(
                    "vma",
                    lambda: _update_zwm(
                        st["z"], st["w"], st["m"], st["n"], st["inv_diag"],
                        alpha, beta,
                    ),
                )
                d, _ = host.timed("dots", lambda: dot(st["w"], st["u"]))
                return g, nn, d

            f_host = host.submit(host_task)
            gamma_next, norm, delta = f_host.result()
            f_accel.result()
            _guard_scalars(gamma_next, delta, it)
            gamma_prev = gamma
            gamma = gamma_next
            alpha_prev = alpha
            it += 1
            if history is not None:
                history.append(norm)
            if drift is not None and it % cfg.drift_check_interval == 0:
                def drift_task():
                    st = accel.store
                    resid = b - spmv(A, st["x"])
                    gap = norm2(resid - st["r"])
                    return gap / b_norm if b_norm > 0 else gap

                val = accel.call(
                    lambda: accel.timed("drift", drift_task, pad=False)[0]
                )
                drift.append([it, val])

        x = np.array(accel.get("x"), copy=True)
        t_end = time.perf_counter()
        phase_times = {"setup": t_setup - t_start, "iterations": t_end - t_setup}
        phase_times.update(_phase_delta(host, host_before, "host"))
        phase_times.update(_phase_delta(accel, accel_before, "accel"))
        report = SolveReport(
            converged=norm < cfg.tolerance,
            iterations=it,
            final_norm=norm,
            strategy="hybrid2",
            history=history,
            phase_times=phase_times,
            transfer_values=channel.values_moved - loop_values,
            transfer_values_total=channel.values_moved - values_start,
            drift_history=drift,
        )
        return x, report
    finally:
        if own_devices:
            host.close()
            accel.close()


@dataclass
class _Side:
    device: Device
    role: str
    view: Any
    row_start: int
    row_stop: int
    other_start: int
    other_stop: int
    channel_in: TransferChannel
    export_m: str
    import_m: str
    export_u: str
    import_u: str
    incoming_nnz2: int  # this side's remote-column count


def hybrid3_solve(
    A: CsrMatrix,
    b,
    x0,
    pc,
    cfg: SolverConfig | None = None,
    devices: tuple[Device, Device] | None = None,
    channels: tuple[TransferChannel, TransferChannel] | None = None,
    profile_override: DeviceProfile | float | None = None,
    profile_runs: int = 5,
    profile_rows: int | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Split-matrix pipelined CG with two-phase products on both devices.

    The matrix is profiled (unless ``profile_override`` pins the host
    share), split into a host row block and an accelerator row block by
    relative speed, and each block's rows are reordered into local-column
    and remote-column groups.  Each device owns only its slices; there is
    no redundant vector math.  Per iteration, symmetrically on both
    devices: update q, s, p, x, r, u; form gamma/norm partials; run the
    local-column product phase while this device's slice of m crosses to
    the peer; wait for the incoming slice only if remote columns exist;
    finish the product, update z, w, apply the local preconditioner to get
    the next m, and form delta partials.  Partials combine host-first.

    ``channels`` is the (host-to-accel, accel-to-host) pair.  Per
    iteration the two directions together move exactly N values; a device
    with no remote columns receives no copy at all, and a degenerate split
    (all rows on one device) runs the whole solve there with zero
    transfers, matching the single-executor solver bitwise.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    b, x0 = _check_system(A, b, x0)
    host, accel, own_devices = _resolve_devices(devices)
    if channels is None:
        to_accel, to_host = TransferChannel(), TransferChannel()
    else:
        to_accel, to_host = channels
    host_before = dict(host.kernel_seconds)
    accel_before = dict(accel.kernel_seconds)
    values_start = to_accel.values_moved + to_host.values_moved
    try:
        if profile_override is None:
            profile = profile_devices(A, host, accel, runs=profile_runs, profile_rows=profile_rows)
        elif isinstance(profile_override, DeviceProfile):
            profile = profile_override
        else:
            profile = DeviceProfile.pinned(float(profile_override), A.nnz)
        t_profile = time.perf_counter()

        part = decompose_2d(A, decompose_1d(A, derive_split(profile, A.nnz)))
        t_decompose = time.perf_counter()

        N = A.n_rows
        k = part.n_host_rows
        sides = (
            _Side(
                device=host, role="host", view=part.host_view,
                row_start=0, row_stop=k, other_start=k, other_stop=N,
                channel_in=to_host,
                export_m="m_host", import_m="m_accel",
                export_u="u_host", import_u="u_accel",
                incoming_nnz2=part.nnz2_host,
            ),
            _Side(
                device=accel, role="accel", view=part.accel_view,
                row_start=k, row_stop=N, other_start=0, other_stop=k,
                channel_in=to_accel,
                export_m="m_accel", import_m="m_host",
                export_u="u_accel", import_u="u_host",
                incoming_nnz2=part.nnz2_accel,
            ),
        )
        for side in sides:
            st = side.device.store
            rows = side.view.row_count
            other_rows = N - rows
            st["A_view"] = side.view
            st["inv_diag"] = pc.inv_diag[side.row_start : side.row_stop].copy()
            st["b"] = b[side.row_start : side.row_stop].copy()
            st["x"] = x0[side.row_start : side.row_stop].copy()
            for name in ("r", "u", "w", "m", "n"):
                st[name] = np.empty(rows)
            for name in ("z", "q", "s", "p"):
                st[name] = np.zeros(rows)
            st[side.export_m] = st["m"]
            st[side.export_u] = st["u"]
            st[side.import_m] = np.empty(other_rows)
            st[side.import_u] = np.empty(other_rows)
            full = np.zeros(N)
            full[...] = x0  # initial placement: starting iterate is input data
            st["vec_full"] = full

        def init_ru(side: _Side):
            def task():
                st = side.device.store

                def work():
                    spmv_phase(side.view, 1, st["vec_full"], st["r"])
                    if side.incoming_nnz2:
                        spmv_phase(side.view, 2, st["vec_full"], st["r"])
                    np.subtract(st["b"], st["r"], out=st["r"])
                    np.multiply(st["inv_diag"], st["r"], out=st["u"])

                side.device.timed("init", work)

            return task

        futures = [side.device.submit(init_ru(side)) for side in sides]
        for fut in futures:
            fut.result()

        u_to_accel = (
            to_accel.copy_async(host, accel, ("u_host",)) if part.nnz2_accel else None
        )
        u_to_host = (
            to_host.copy_async(accel, host, ("u_accel",)) if part.nnz2_host else None
        )

        def init_rest(side: _Side, incoming):
            def task():
                st = side.device.store

                def w_local():
                    st["vec_full"][side.row_start : side.row_stop] = st["u"]
                    spmv_phase(side.view, 1, st["vec_full"], st["w"])

                side.device.timed("init", w_local)
                if incoming is not None:
                    side.device.timed(
                        "wait", lambda: side.channel_in.wait(incoming), pad=False
                    )

                    def w_remote():
                        st["vec_full"][side.other_start : side.other_stop] = st[side.import_u]
                        spmv_phase(side.view, 2, st["vec_full"], st["w"])

                    side.device.timed("init", w_remote)

                def pc_and_dots():
                    np.multiply(st["inv_diag"], st["w"], out=st["m"])
                    return (
                        dot(st["r"], st["u"]),
                        dot(st["w"], st["u"]),
                        dot(st["u"], st["u"]),
                    )

                out, _ = side.device.timed("init", pc_and_dots)
                return out

            return task

        f_host = host.submit(init_rest(sides[0], u_to_host))
        f_accel = accel.submit(init_rest(sides[1], u_to_accel))
        g_h, d_h, n_h = f_host.result()
        g_a, d_a, n_a = f_accel.result()
        # fixed combine order: host partial first
        gamma = g_h + g_a
        delta = d_h + d_a
        norm = math.sqrt(n_h + n_a)
        gamma_prev = 0.0
        alpha_prev = 0.0

        history = [norm] if cfg.record_history else None
        drift = [] if cfg.drift_check_interval > 0 else None
        b_norm = norm2(b)
        t_setup = time.perf_counter()
        loop_values = to_accel.values_moved + to_host.values_moved

        def iter_task(side: _Side, alpha: float, beta: float, incoming):
            def task():
                st = side.device.store
                side.device.timed(
                    "vma",
                    lambda: _update_qspxru(
                        st["q"], st["s"], st["p"], st["x"], st["r"], st["u"],
                        st["m"], st["w"], alpha, beta,
                    ),
                )
                (g, nn), _ = side.device.timed(
                    "dots", lambda: (dot(st["r"], st["u"]), dot(st["u"], st["u"]))
                )

                def spmv_local():
                    st["vec_full"][side.row_start : side.row_stop] = st["m"]
                    spmv_phase(side.view, 1, st["vec_full"], st["n"])

                side.device.timed("spmv", spmv_local)
                if incoming is not None:
                    side.device.timed(
                        "wait", lambda: side.channel_in.wait(incoming), pad=False
                    )

                    def spmv_remote():
                        st["vec_full"][side.other_start : side.other_stop] = st[side.import_m]
                        spmv_phase(side.view, 2, st["vec_full"], st["n"])

                    side.device.timed("spmv", spmv_remote)
                side.device.timed(
                    "vma",
                    lambda: _update_zwm(
                        st["z"], st["w"], st["m"], st["n"], st["inv_diag"],
                        alpha, beta,
                    ),
                )
                d, _ = side.device.timed("dots", lambda: dot(st["w"], st["u"]))
                return g, nn, d

            return task

        it = 0
        while norm >= cfg.tolerance and it < cfg.max_iterations:
            alpha, beta = pipecg_scalars(gamma, gamma_prev, delta, alpha_prev, it)
            m_to_accel = (
                to_accel.copy_async(host, accel, ("m_host",)) if part.nnz2_accel else None
            )
            m_to_host = (
                to_host.copy_async(accel, host, ("m_accel",)) if part.nnz2_host else None
            )
            f_host = host.submit(iter_task(sides[0], alpha, beta, m_to_host))
            f_accel = accel.submit(iter_task(sides[1], alpha, beta, m_to_accel))
            g_h, n_h, d_h = f_host.result()
            g_a, n_a, d_a = f_accel.result()
            gamma_next = g_h + g_a
            norm = math.sqrt(n_h + n_a)
            delta = d_h + d_a
            _guard_scalars(gamma_next, delta, it)
            gamma_prev = gamma
            gamma = gamma_next
            alpha_prev = alpha
            it += 1
            if history is not None:
                history.append(norm)
            if drift is not None and it % cfg.drift_check_interval == 0:
                x_full = np.concatenate([host.get("x"), accel.get("x")])
                r_full = np.concatenate([host.get("r"), accel.get("r")])
                gap = norm2((b - spmv(A, x_full)) - r_full)
                drift.append([it, gap / b_norm if b_norm > 0 else gap])

        x = np.concatenate([host.get("x"), accel.get("x")])
        t_end = time.perf_counter()
        moved = to_accel.values_moved + to_host.values_moved
        phase_times = {
            "profile": t_profile - t_start,
            "decompose": t_decompose - t_profile,
            "setup": t_setup - t_decompose,
            "iterations": t_end - t_setup,
        }
        phase_times.update(_phase_delta(host, host_before, "host"))
        phase_times.update(_phase_delta(accel, accel_before, "accel"))
        report = SolveReport(
            converged=norm < cfg.tolerance,
            iterations=it,
            final_norm=norm,
            strategy="hybrid3",
            history=history,
            phase_times=phase_times,
            transfer_values=moved - loop_values,
            transfer_values_total=moved - values_start,
            drift_history=drift,
            profile=profile,
            partition=part.summary(),
        )
        return x, report
    finally:
        if own_devices:
            host.close()
            accel.close()
