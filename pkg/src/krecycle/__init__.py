"""Sparse iterative solvers with Krylov subspace recycling.

The package provides BiCG and BiCGSTAB together with recycling variants that
deflate a slowly varying sequence of non-symmetric systems against a shared
recycle space, plus ILUTP preconditioning, benchmark problem generators, and
file exchange utilities.
"""

from .bilanczos import (BiLanczosResult, classical_pair, deflate_dual,
                        deflate_primary, deflated_pair, gen_bilanczos_full)
from .driver import (RunReport, SequenceResult, harvested_space,
                     run_recycling_study, run_sequence, smallest_eigenvectors,
                     solve_system)
from .ilutp import (FactorizationError, IlutpFactors,
                    SplitPreconditionedOperator, apply_left, apply_left_h,
                    apply_right, apply_right_h, ilutp_factor,
                    to_operator_coords)
from .io import (BannerError, HeaderError, IndexRangeError, MatrixMarketError,
                 history_write, mm_read, mm_write, recycle_load, recycle_save)
from .operators import CountingOperator, DenseOperator, as_operator
from .problems import (ParametricSequence, example1_operator,
                       example2_operator, synthetic_sequence)
from .recycling import (CapturedCycle, RecycleSpace, biorthonormalize,
                        principal_angle_cosines, project_initial,
                        project_initial_dual, refresh_images,
                        update_recycle_space)
from .solvers import (ConvergenceHistory, SolverConfig, bicg_solve,
                      bicgstab_solve, rbicg_solve, rbicgstab_solve)
from .sparse import SparseMatrix, axpy, dot, matvec, matvec_conj_transpose, norm

__version__ = "0.1.0"

__all__ = [
    "BiLanczosResult", "classical_pair", "deflate_dual", "deflate_primary",
    "deflated_pair", "gen_bilanczos_full",
    "RunReport", "SequenceResult", "harvested_space", "run_recycling_study",
    "run_sequence", "smallest_eigenvectors", "solve_system",
    "FactorizationError", "IlutpFactors", "SplitPreconditionedOperator",
    "apply_left", "apply_left_h", "apply_right", "apply_right_h",
    "ilutp_factor", "to_operator_coords",
    "BannerError", "HeaderError", "IndexRangeError", "MatrixMarketError",
    "history_write", "mm_read", "mm_write", "recycle_load", "recycle_save",
    "CountingOperator", "DenseOperator", "as_operator",
    "ParametricSequence", "example1_operator", "example2_operator",
    "synthetic_sequence",
    "CapturedCycle", "RecycleSpace", "biorthonormalize",
    "principal_angle_cosines", "project_initial", "project_initial_dual",
    "refresh_images", "update_recycle_space",
    "ConvergenceHistory", "SolverConfig", "bicg_solve", "bicgstab_solve",
    "rbicg_solve", "rbicgstab_solve",
    "SparseMatrix", "axpy", "dot", "matvec", "matvec_conj_transpose", "norm",
]
