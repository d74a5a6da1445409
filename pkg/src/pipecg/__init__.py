"""Pipelined conjugate gradient solvers on an emulated heterogeneous node.

The package has four layers: CSR storage and matrix sources
(:mod:`pipecg.sparse`), deterministic numerical kernels
(:mod:`pipecg.kernels`), the single-executor reference solvers
(:mod:`pipecg.solvers`), and the emulated two-device runtime with its
partitioning model and the three hybrid orchestrations
(:mod:`pipecg.devices`, :mod:`pipecg.partition`, :mod:`pipecg.hybrid`).
``pipecg-bench`` exposes the benchmark workflows on the command line.
"""

from .sparse import (
    CapacityError,
    CsrMatrix,
    MatrixMarketError,
    RowRangeView,
    csr_from_dense,
    generate_poisson125,
    load_matrix_market,
    parse_matrix_market,
    poisson125_shape,
)
from .kernels import (
    JacobiPreconditioner,
    PhaseOrderError,
    dot,
    fused_pipecg_update,
    jacobi_apply,
    jacobi_setup,
    norm2,
    spmv,
    spmv_phase,
)
from .solvers import (
    PipecgState,
    SolveReport,
    SolverBreakdown,
    SolverConfig,
    pcg_solve,
    pipecg_init,
    pipecg_scalars,
    pipecg_solve,
    true_residual_norm,
)
from .devices import (
    ChannelError,
    CopyHandle,
    Device,
    DeviceKind,
    DeviceProfile,
    TransferChannel,
    profile_devices,
)
from .partition import Partition, decompose_1d, decompose_2d, derive_split
from .hybrid import hybrid1_solve, hybrid2_solve, hybrid3_solve
from .cli import ProblemSpec, RunRecord, build_problem

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "CsrMatrix",
    "MatrixMarketError",
    "RowRangeView",
    "csr_from_dense",
    "generate_poisson125",
    "load_matrix_market",
    "parse_matrix_market",
    "poisson125_shape",
    "JacobiPreconditioner",
    "PhaseOrderError",
    "dot",
    "fused_pipecg_update",
    "jacobi_apply",
    "jacobi_setup",
    "norm2",
    "spmv",
    "spmv_phase",
    "PipecgState",
    "SolveReport",
    "SolverBreakdown",
    "SolverConfig",
    "pcg_solve",
    "pipecg_init",
    "pipecg_scalars",
    "pipecg_solve",
    "true_residual_norm",
    "ChannelError",
    "CopyHandle",
    "Device",
    "DeviceKind",
    "DeviceProfile",
    "TransferChannel",
    "profile_devices",
    "Partition",
    "decompose_1d",
    "decompose_2d",
    "derive_split",
    "hybrid1_solve",
    "hybrid2_solve",
    "hybrid3_solve",
    "ProblemSpec",
    "RunRecord",
    "build_problem",
]
