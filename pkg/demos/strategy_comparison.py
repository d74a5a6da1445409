#!/usr/bin/env python3
"""Run every execution strategy on one problem and tabulate the outcomes.

All five strategies solve the same manufactured system.  The point is not
raw speed (the devices here are emulated threads, not real hardware) but
that the numerical results line up and the transfer counters reflect each
strategy's communication pattern: three vectors per iteration for the
synchronous split, one for the deep pipeline, and one slice exchange for
the decomposed product.
"""

import time

import numpy as np

from pipecg import (
    SolverConfig,
    generate_poisson125,
    hybrid1_solve,
    hybrid2_solve,
    hybrid3_solve,
    jacobi_setup,
    pcg_solve,
    pipecg_solve,
    spmv,
)
from pipecg.devices import Device, DeviceKind


def run(name, A, b, x0, pc, cfg):
    if name == "pcg":
        t0 = time.perf_counter()
        x, rep = pcg_solve(A, b, x0, pc, cfg)
        return x, rep, time.perf_counter() - t0
    if name == "pipecg":
        t0 = time.perf_counter()
        x, rep = pipecg_solve(A, b, x0, pc, cfg)
        return x, rep, time.perf_counter() - t0

    host = Device(DeviceKind.HOST)
    accel = Device(DeviceKind.ACCEL)
    try:
        t0 = time.perf_counter()
        if name == "hybrid1":
            x, rep = hybrid1_solve(A, b, x0, pc, cfg, devices=(host, accel))
        elif name == "hybrid2":
            x, rep = hybrid2_solve(A, b, x0, pc, cfg, devices=(host, accel))
        else:
            x, rep = hybrid3_solve(A, b, x0, pc, cfg, devices=(host, accel),
                                   profile_override=0.5)
        return x, rep, time.perf_counter() - t0
    finally:
        host.close()
        accel.close()


def main():
    A = generate_poisson125(10)
    x_true = np.full(A.n_rows, 1.0 / np.sqrt(A.n_rows))
    b = spmv(A, x_true)
    x0 = np.zeros(A.n_rows)
    pc = jacobi_setup(A)
    cfg = SolverConfig(tolerance=1e-5, max_iterations=400)

    print(f"operator: {A.n_rows} rows, {A.nnz} nonzeros\n")
    x_ref, _, _ = run("pipecg", A, b, x0, pc, cfg)
    scale = np.max(np.abs(x_ref))

    header = (f"{'strategy':>9} {'iters':>6} {'final norm':>12} "
              f"{'vs pipecg':>11} {'xfer values':>12} {'wall s':>8}")
    print(header)
    for name in ("pcg", "pipecg", "hybrid1", "hybrid2", "hybrid3"):
        x, rep, wall = run(name, A, b, x0, pc, cfg)
        gap = np.max(np.abs(x - x_ref)) / scale
        print(f"{name:>9} {rep.iterations:6d} {rep.final_norm:12.3e} "
              f"{gap:11.2e} {rep.transfer_values_total:12d} {wall:8.3f}")

    print("\nper-iteration transfer volume: hybrid1 moves 3N values, "
          "hybrid2 and hybrid3 move N")


if __name__ == "__main__":
    main()
