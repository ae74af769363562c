"""Command line interface.

Subcommands:

- ``solve``: solve a Matrix Market system with any of the four methods,
  optionally with ILUTP split preconditioning and a recycle-space file on
  either end.
- ``example1`` / ``example2``: three-way recycling comparisons on the two
  built-in convection-diffusion problems.
- ``sequence``: recycling-vs-baseline totals over a synthetic drifting
  sequence.
- ``angles``: table of principal-angle cosines between the exact left and
  right smallest-magnitude invariant subspaces of a built-in operator,
  optionally alongside a harvested recycle space's angles to those subspaces.

Exit codes: 0 on success, 1 on usage or input errors, 2 when a solve fails
to converge.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .driver import (harvested_space, run_recycling_study, run_sequence,
                     smallest_eigenvectors, solve_system, RunReport)
from .ilutp import FactorizationError, SplitPreconditionedOperator, apply_left, ilutp_factor
from .io import (MatrixMarketError, history_write, mm_read, mm_write,
                 recycle_load, recycle_save)
from .problems import example1_operator, example2_operator, synthetic_sequence
from .recycling import principal_angle_cosines, update_recycle_space
from .sparse import SparseMatrix


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read_vector(path) -> np.ndarray:
    mat = mm_read(path)
    if mat.ncols == 1:
        return mat.to_dense()[:, 0]
    if mat.nrows == 1:
        return mat.to_dense()[0, :]
    raise ValueError(f"{path}: expected a vector, got shape {mat.shape}")


def _write_vector(path, x: np.ndarray):
    n = len(x)
    mat = SparseMatrix.from_triplets(n, 1, np.arange(n), np.zeros(n, dtype=np.int64), x)
    mm_write(path, mat)


def _solver_args(p):
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-itn", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop-tol", type=float, default=1e-4,
                   help="ILUTP drop tolerance")
    p.add_argument("--pivot-tol", type=float, default=0.1,
                   help="ILUTP column pivot threshold (0 disables pivoting)")


def _parse_x0(choice: str, n: int):
    """Initial-guess flag: a named fill value or a vector file path."""
    if choice == "zeros":
        return None
    if choice == "ones":
        return np.ones(n)
    if choice == "half":
        return 0.5 * np.ones(n)
    return _read_vector(choice)


def _cmd_solve(args) -> int:
    A = mm_read(args.matrix)
    b = _read_vector(args.rhs) if args.rhs else np.ones(A.nrows)
    factors = None if args.no_precond else ilutp_factor(
        A, drop_tol=args.drop_tol, pivot_tol=args.pivot_tol)
    op = SplitPreconditionedOperator(A, factors) if factors is not None else A
    recycle = recycle_load(args.recycle_in, op) if args.recycle_in else None
    x0 = _parse_x0(args.x0, A.nrows)

    x, hists, cycles, true_rel = solve_system(
        A, b, method=args.method, tol=args.tol, max_itn=args.max_itn,
        seed=args.seed, precond=factors, recycle=recycle, s=args.s, k=args.k,
        x_init=x0)

    status = hists[-1].status
    iters = sum(h.iterations for h in hists)
    mv = sum(h.total_matvecs for h in hists)
    print(f"method={args.method} status={status} iterations={iters} "
          f"matvecs={mv} true_rel_resid={true_rel:.3e}")

    if args.x_out:
        _write_vector(args.x_out, x)
    if args.history_out:
        history_write(args.history_out,
                      RunReport(label=args.method, histories=hists))
    if args.recycle_out:
        if not cycles:
            print("error: --recycle-out requires the rbicg method (no cycles "
                  "were harvested)", file=sys.stderr)
            return 1
        space = update_recycle_space(op, cycles, recycle, args.k or 10)
        recycle_save(args.recycle_out, space)

    ok = status == "converged" and true_rel <= args.tol * 1.000001
    return 0 if ok else 2


def _print_study(study):
    print(f"{'variant':<12} {'iterations':>10} {'matvecs':>8} {'status':>12}")
    for name in ("none", "right", "left_right"):
        h = study["histories"][name]
        print(f"{name:<12} {h.iterations:>10} {h.total_matvecs:>8} {h.status:>12}")


def _write_study_histories(path: str, study) -> None:
    """One CSV per study variant: path.none.csv, path.right.csv, ..."""
    root, ext = os.path.splitext(path)
    ext = ext or ".csv"
    for name in ("none", "right", "left_right"):
        out = f"{root}.{name}{ext}"
        history_write(out, RunReport(label=name,
                                     histories=[study["histories"][name]]))
        print(f"history written to {out}")


def _cmd_example1(args) -> int:
    A, b = example1_operator(cells=args.cells)
    study = run_recycling_study(A, b, k=args.k, tol=args.tol,
                                max_itn=args.max_itn, seed=args.seed,
                                harvest=args.harvest, passes=args.passes)
    n = A.nrows
    print(f"convection-diffusion, constant coefficients: n={n}, k={args.k}, "
          f"harvest={args.harvest}")
    _print_study(study)
    if args.history_out:
        _write_study_histories(args.history_out, study)
    return 0


def _cmd_example2(args) -> int:
    A, b, factors = example2_operator(gridlines=args.gridlines,
                                      drop_tol=args.drop_tol)
    if args.pivot_tol != 0.1:
        factors = ilutp_factor(A, drop_tol=args.drop_tol,
                               pivot_tol=args.pivot_tol)
    study = run_recycling_study(A, b, k=args.k, tol=args.tol,
                                max_itn=args.max_itn, seed=args.seed,
                                precond=factors, harvest=args.harvest,
                                passes=args.passes)
    print(f"convection-diffusion, discontinuous coefficients: n={A.nrows}, "
          f"k={args.k}, drop_tol={args.drop_tol}, harvest={args.harvest}")
    _print_study(study)
    if args.history_out:
        _write_study_histories(args.history_out, study)
    return 0


def _cmd_sequence(args) -> int:
    seq = synthetic_sequence(args.n, num_matrices=args.matrices,
                             rhs_per_matrix=args.rhs_per,
                             perturbation_scale=args.scale, seed=args.seed)
    res = run_sequence(seq, tol=args.tol, max_itn=args.max_itn, k=args.k,
                       s=args.s, drop_tol=args.drop_tol,
                       pivot_tol=args.pivot_tol, seed=args.seed)
    rec, base = res.recycling, res.baseline
    print(f"systems={args.matrices}x{args.rhs_per} n={seq.n} k={args.k} "
          f"s={args.s}")
    print(f"recycling: matvecs={rec.total_matvecs} "
          f"(maintenance {rec.aux_matvecs}) iterations={rec.total_iterations}")
    print(f"baseline:  matvecs={base.total_matvecs} "
          f"iterations={base.total_iterations}")
    print(f"savings: {100.0 * res.savings:.1f}% of operator applications")
    print(f"rebuild solves (system, matvecs): "
          + ", ".join(f"({p}, {m})" for p, m in
                      zip(res.rebuild_points, res.rebuild_matvecs)))
    if args.history_out:
        root, ext = os.path.splitext(args.history_out)
        base_path = f"{root}.baseline{ext or '.csv'}"
        history_write(args.history_out, rec)
        history_write(base_path, base)
        print(f"histories written to {args.history_out} and {base_path}")
    return 0


def _cmd_angles(args) -> int:
    if args.example == 1:
        A, b = example1_operator(cells=args.cells)
        op, bh = A, b
        source = A
        label = "constant-coefficient operator"
    else:
        A, b, factors = example2_operator(gridlines=args.gridlines,
                                          drop_tol=args.drop_tol)
        op = SplitPreconditionedOperator(A, factors)
        bh = apply_left(factors, b)
        source = op
        label = "preconditioned discontinuous-coefficient operator"
    U_exact, Ut_exact = smallest_eigenvectors(source, args.dim,
                                              seed=args.seed)
    cosines = principal_angle_cosines(Ut_exact, U_exact)
    print(f"cosines of the principal angles between the exact left and right "
          f"invariant subspaces")
    print(f"(dim {args.dim}, smallest-magnitude eigenvalues) of the {label}, "
          f"n={A.nrows}:")
    for c in cosines:
        print(f"  {c:.4f}")
    if args.harvested:
        space = harvested_space(op, bh, k=args.dim, passes=args.passes,
                                tol=args.tol, max_itn=args.max_itn,
                                seed=args.seed)
        cos_u = principal_angle_cosines(space.U, U_exact)
        cos_ut = principal_angle_cosines(space.Ut, Ut_exact)
        print(f"harvested space (dim {space.k}, {args.passes} passes) vs the "
              f"exact subspaces, primary | dual:")
        for cu, cd in zip(cos_u, cos_ut):
            print(f"  {cu:.4f}  {cd:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="krecycle",
                     description="Krylov solvers with subspace recycling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a Matrix Market system")
    p.add_argument("--matrix", required=True, help="coefficient matrix (.mtx)")
    p.add_argument("--rhs", help="right-hand side vector (.mtx); default all ones")
    p.add_argument("--method", default="bicgstab",
                   choices=["bicg", "bicgstab", "rbicg", "rbicgstab"])
    p.add_argument("--no-precond", action="store_true",
                   help="solve without ILUTP preconditioning")
    p.add_argument("--recycle-in", help="recycle-space file to deflate with")
    p.add_argument("--recycle-out",
                   help="write the harvested recycle space (rbicg only)")
    p.add_argument("--k", type=int, default=10, help="recycle-space dimension")
    p.add_argument("--s", type=int, default=25, help="harvest cycle length")
    p.add_argument("--x0", default="zeros",
                   help="initial guess: zeros, ones, half, or a vector file")
    p.add_argument("--x-out", help="write the solution vector (.mtx)")
    p.add_argument("--history-out", help="write convergence history CSV")
    _solver_args(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("example1",
                       help="three-way recycling study, constant coefficients")
    p.add_argument("--cells", type=int, default=42)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--harvest", default="eigen", choices=["eigen", "rbicg"])
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--history-out")
    _solver_args(p)
    p.set_defaults(func=_cmd_example1, max_itn=2000)

    p = sub.add_parser("example2",
                       help="three-way recycling study, discontinuous coefficients")
    p.add_argument("--gridlines", type=int, default=65)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--harvest", default="rbicg", choices=["eigen", "rbicg"])
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--history-out")
    _solver_args(p)
    p.set_defaults(func=_cmd_example2, max_itn=2000, drop_tol=0.1)

    p = sub.add_parser("sequence",
                       help="recycling vs baseline over a drifting sequence")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--matrices", type=int, default=3)
    p.add_argument("--rhs-per", type=int, default=21,
                   help="right-hand sides per matrix")
    p.add_argument("--scale", type=float, default=1e-3,
                   help="relative perturbation size between matrices")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--s", type=int, default=25)
    p.add_argument("--history-out")
    _solver_args(p)
    p.set_defaults(func=_cmd_sequence, max_itn=500)

    p = sub.add_parser("angles",
                       help="left vs right invariant-subspace angle table")
    p.add_argument("--example", type=int, default=1, choices=[1, 2])
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--cells", type=int, default=42,
                   help="grid parameter for example 1")
    p.add_argument("--gridlines", type=int, default=33,
                   help="grid parameter for example 2 (kept small: the exact "
                        "subspace of the implicit preconditioned operator "
                        "needs a dense eigendecomposition)")
    p.add_argument("--harvested", action="store_true",
                   help="also compare a harvested recycle space against the "
                        "exact subspaces")
    p.add_argument("--passes", type=int, default=2,
                   help="harvesting passes for --harvested")
    _solver_args(p)
    p.set_defaults(func=_cmd_angles, max_itn=2000, drop_tol=0.1)

    return parser


def cli_run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, MatrixMarketError,
            FactorizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_run(sys.argv[1:]))


if __name__ == "__main__":
    main()
