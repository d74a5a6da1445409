#!/usr/bin/env python3
"""Show when a transfer hides behind compute and when it dominates.

Runs the deep-pipeline strategy (one N-vector copied per iteration) while
sweeping the channel latency from well under to well over the accelerator's
per-iteration compute time.  While the copy fits under the compute, wall
time per iteration barely moves; past the crossover it grows with latency.
"""

import numpy as np

from pipecg import (
    SolverConfig,
    TransferChannel,
    generate_poisson125,
    hybrid2_solve,
    jacobi_setup,
    spmv,
)
from pipecg.devices import Device, DeviceKind

THROTTLE = 12.0  # slow the emulated accelerator so compute is measurable


def run_once(A, b, x0, pc, cfg, latency):
    host = Device(DeviceKind.HOST)
    accel = Device(DeviceKind.ACCEL, throttle=THROTTLE)
    try:
        channel = TransferChannel(latency_s=latency)
        _, rep = hybrid2_solve(A, b, x0, pc, cfg,
                               devices=(host, accel), channel=channel)
    finally:
        host.close()
        accel.close()
    compute = rep.phase_times["accel_pipeline"] / rep.iterations
    wall = rep.phase_times["iterations"] / rep.iterations
    return compute, wall, rep.iterations


def main():
    A = generate_poisson125(10)
    x_true = np.full(A.n_rows, 1.0 / np.sqrt(A.n_rows))
    b = spmv(A, x_true)
    x0 = np.zeros(A.n_rows)
    pc = jacobi_setup(A)
    cfg = SolverConfig(tolerance=1e-5, max_iterations=200)

    # first call pays one-time setup costs; measure from the second on
    run_once(A, b, x0, pc, cfg, latency=0.0)
    base_compute, _, iters = run_once(A, b, x0, pc, cfg, latency=0.0)
    print(f"operator: {A.n_rows} rows, {A.nnz} nonzeros, "
          f"{iters} iterations per run")
    print(f"accelerator compute per iteration: {base_compute * 1e3:.3f} ms")

    print(f"\n{'latency/compute':>15} {'wall/compute':>13}   regime")
    for factor in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0):
        latency = factor * base_compute
        compute, wall, _ = run_once(A, b, x0, pc, cfg, latency)
        ratio = wall / compute
        regime = "copy hidden" if ratio < 1.3 else "copy dominates"
        print(f"{factor:15.2f} {ratio:13.2f}   {regime}")


if __name__ == "__main__":
    main()
