"""File exchange: Matrix Market matrices, recycle-space snapshots, and
convergence-history CSV dumps.

Matrix Market support covers coordinate files with real, complex, or integer
fields and general or symmetric symmetry.  Parse failures raise one of three
error types so callers can distinguish an unsupported banner from a corrupt
size header from out-of-range entries.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .recycling import RecycleSpace, biorthonormalize
from .sparse import SparseMatrix

_MAGIC = b"KRSP"
_VERSION = 1


class MatrixMarketError(ValueError):
    """Base class for Matrix Market parse failures."""


class BannerError(MatrixMarketError):
    """Missing or unsupported %%MatrixMarket banner."""


class HeaderError(MatrixMarketError):
    """Malformed size header or entry lines inconsistent with it."""


class IndexRangeError(MatrixMarketError):
    """Entry index outside the dimensions declared in the header."""


def mm_read(path) -> SparseMatrix:
    """Read a coordinate Matrix Market file."""
    with open(path, "r", encoding="ascii") as fh:
        banner = fh.readline()
        if not banner.startswith("%%MatrixMarket"):
            raise BannerError("file does not start with a %%MatrixMarket banner")
        parts = banner.strip().lower().split()
        if len(parts) != 5:
            raise BannerError(f"banner has {len(parts)} fields, expected 5")
        _, obj, fmt, fieldtype, symmetry = parts
        if obj != "matrix" or fmt != "coordinate":
            raise BannerError(f"unsupported banner: {obj} {fmt}")
        if fieldtype not in ("real", "complex", "integer"):
            raise BannerError(f"unsupported field type {fieldtype!r}")
        if symmetry not in ("general", "symmetric"):
            raise BannerError(f"unsupported symmetry {symmetry!r}")

        size_line = None
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise HeaderError("missing size line")
        fields = size_line.split()
        if len(fields) != 3:
            raise HeaderError(f"size line has {len(fields)} fields, expected 3")
        try:
            nrows, ncols, nnz = (int(f) for f in fields)
        except ValueError as exc:
            raise HeaderError(f"non-integer size line {size_line!r}") from exc
        if nrows < 0 or ncols < 0 or nnz < 0:
            raise HeaderError("negative dimension in size line")

        want = 4 if fieldtype == "complex" else 3
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.complex128 if fieldtype == "complex" else np.float64)
        count = 0
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            entry = stripped.split()
            if len(entry) != want:
                raise HeaderError(f"entry line has {len(entry)} fields, expected {want}")
            if count >= nnz:
                raise HeaderError("more entries than declared in the size line")
            try:
                i = int(entry[0])
                j = int(entry[1])
                if fieldtype == "complex":
                    v = complex(float(entry[2]), float(entry[3]))
                else:
                    v = float(entry[2])
            except ValueError as exc:
                raise HeaderError(f"unparseable entry line {stripped!r}") from exc
            if not (1 <= i <= nrows) or not (1 <= j <= ncols):
                raise IndexRangeError(
                    f"entry ({i}, {j}) outside declared dimensions "
                    f"{nrows}x{ncols}")
            rows[count] = i - 1
            cols[count] = j - 1
            vals[count] = v
            count += 1
        if count != nnz:
            raise HeaderError(f"size line declared {nnz} entries, file has {count}")

    if symmetry == "symmetric":
        off = rows != cols
        mirr_r, mirr_c, mirr_v = cols[off], rows[off], vals[off]
        rows = np.concatenate([rows, mirr_r])
        cols = np.concatenate([cols, mirr_c])
        vals = np.concatenate([vals, mirr_v])
    return SparseMatrix.from_triplets(nrows, ncols, rows, cols, vals)


def mm_write(path, A: SparseMatrix):
    """Write in general coordinate format, row-major, full precision.

    The 17-significant-digit representation round-trips float64 exactly, so
    write followed by read reproduces the matrix bit for bit.
    """
    complex_field = np.issubdtype(A.dtype, np.complexfloating)
    fieldtype = "complex" if complex_field else "real"
    rows, cols, vals = A.to_triplets()
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {fieldtype} general\n")
        fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
        if complex_field:
            for i, j, v in zip(rows, cols, vals):
                fh.write(f"{i + 1} {j + 1} {v.real:.17g} {v.imag:.17g}\n")
        else:
            for i, j, v in zip(rows, cols, vals):
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def recycle_save(path, space: RecycleSpace):
    """Persist the basis pair (U, Ut) of a recycle space.

    Only the bases are stored; images are operator-dependent and rebuilt at
    load time.
    """
    if space.k == 0:
        raise ValueError("refusing to save an empty recycle space")
    complex_field = np.issubdtype(space.U.dtype, np.complexfloating) \
        or np.issubdtype(space.Ut.dtype, np.complexfloating)
    dt = np.complex128 if complex_field else np.float64
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQB", _VERSION, space.n, space.k,
                             1 if complex_field else 0))
        fh.write(np.asfortranarray(space.U.astype(dt)).tobytes(order="F"))
        fh.write(np.asfortranarray(space.Ut.astype(dt)).tobytes(order="F"))


def recycle_load(path, A) -> RecycleSpace:
    """Load a saved basis pair and rebuild its images under ``A``.

    The stored dimension must match the operator; the result is freshly
    biorthonormalized, so it satisfies the recycle-space invariants for the
    supplied operator even if that operator differs from the one the space
    was built with.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a recycle-space file (bad magic {magic!r})")
        header = fh.read(struct.calcsize("<IQQB"))
        if len(header) != struct.calcsize("<IQQB"):
            raise ValueError("truncated recycle-space header")
        version, n, k, complex_flag = struct.unpack("<IQQB", header)
        if version != _VERSION:
            raise ValueError(f"unsupported recycle-space file version {version}")
        if n != A.shape[0]:
            raise ValueError(
                f"recycle space dimension {n} does not match operator "
                f"dimension {A.shape[0]}")
        dt = np.complex128 if complex_flag else np.float64
        count = n * k
        payload = fh.read(2 * count * np.dtype(dt).itemsize)
        expect = 2 * count * np.dtype(dt).itemsize
        if len(payload) != expect:
            raise ValueError("truncated recycle-space payload")
        flat = np.frombuffer(payload, dtype=dt)
        U = flat[:count].reshape((n, k), order="F").copy()
        Ut = flat[count:].reshape((n, k), order="F").copy()
    return biorthonormalize(U, Ut, A)


def history_write(path, report):
    """Dump a run report as CSV.

    One row per recorded iteration, then a summary row per system with
    iteration = -1 carrying the totals.  System indices are 1-based.  An
    empty report yields a header-only file.
    """
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_index", "solver", "iteration", "resid",
                         "matvecs_cum", "seconds_cum"])
        for sys_idx, hist in enumerate(getattr(report, "histories", report),
                                       start=1):
            for it, (rn, mv, sec) in enumerate(
                    zip(hist.resid, hist.matvecs, hist.seconds)):
                writer.writerow([sys_idx, hist.solver, it,
                                 f"{rn:.17g}", mv, f"{sec:.6f}"])
            writer.writerow([sys_idx, hist.solver, -1,
                             f"{hist.resid[-1] if hist.resid else float('nan'):.17g}",
                             hist.total_matvecs, f"{hist.total_seconds:.6f}"])
