"""Sparse and small dense linear algebra.

Matrices are ``scipy.sparse.csr_matrix`` instances with sorted, duplicate-free
column indices; vectors are 1-D float ``numpy`` arrays.  Assembly accumulates
triplets and finalizes exactly once through :func:`coo_to_csr`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-10


class StructuralError(ValueError):
    """Triplet indices or block shapes are inconsistent."""


class SingularSystemError(RuntimeError):
    """Factorization hit a zero pivot."""


class ConvergenceError(RuntimeError):
    """The achieved residual exceeds the requested tolerance."""


def coo_to_csr(triplets, shape: tuple[int, int]) -> sp.csr_matrix:
    """Finalize ``(row, col, value)`` triplets into a CSR matrix.

    ``triplets`` is either an iterable of 3-tuples or a tuple of three
    equally long arrays ``(rows, cols, values)``.  Duplicates are summed.
    """
    nrows, ncols = shape
    if isinstance(triplets, tuple) and len(triplets) == 3 and np.ndim(triplets[0]) >= 1:
        rows, cols, vals = (np.ravel(np.asarray(a)) for a in triplets)
    else:
        items = list(triplets)
        if items:
            rows, cols, vals = (np.asarray(a) for a in zip(*items))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
    rows = rows.astype(np.int64, copy=False)
    cols = cols.astype(np.int64, copy=False)
    vals = vals.astype(float, copy=False)
    if not (rows.shape == cols.shape == vals.shape):
        raise StructuralError("row, column and value arrays differ in length")
    if rows.size:
        bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise StructuralError(
                f"triplet {k} at ({rows[k]}, {cols[k]}) outside a {nrows}x{ncols} matrix"
            )
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ConvergenceError(f"{what} contains non-finite entries")


try:  # UMFPACK as shipped with cvxopt; SuperLU is the fallback
    import cvxopt
    import cvxopt.umfpack as _umfpack
except ImportError:  # pragma: no cover - depends on the environment
    cvxopt = _umfpack = None

BACKENDS = ("auto", "umfpack", "superlu")


def _factorize(A: sp.csc_matrix, backend: str, ordering: str):
    """Return a function solving with the LU factors of ``A``."""
    if backend == "auto":
        backend = "umfpack" if _umfpack is not None else "superlu"
    if backend == "umfpack":
        if _umfpack is None:
            raise ImportError("the umfpack backend needs cvxopt")
        coo = A.tocoo()
        C = cvxopt.spmatrix(coo.data, coo.row.astype(int), coo.col.astype(int), A.shape)
        try:
            numeric = _umfpack.numeric(C, _umfpack.symbolic(C))
        except ArithmeticError as exc:
            raise SingularSystemError(f"LU factorization failed: {exc}") from exc

        def solve(rhs):
            B = cvxopt.matrix(np.ascontiguousarray(rhs, dtype=float))
            _umfpack.solve(C, numeric, B)
            return np.array(B).ravel()

        return solve
    if backend != "superlu":
        raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
    try:
        lu = spla.splu(A, permc_spec=ordering)
    except RuntimeError as exc:
        raise SingularSystemError(f"LU factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if diag.min() == 0.0:
        k = int(np.argmin(diag))
        raise SingularSystemError(f"zero pivot in row {int(lu.perm_r.argsort()[k])}")
    return lu.solve


def solve_sparse(A, b, tol: float = DEFAULT_TOL, *, return_residual: bool = False,
                 backend: str = "auto", ordering: str = "COLAMD"):
    """Direct sparse LU solve with a relative residual guarantee.

    The returned ``x`` satisfies ``||Ax - b|| <= tol * max(||b||, 1)``;
    up to two steps of iterative refinement are spent before giving up.
    ``ordering`` is the SuperLU column ordering and only matters for that
    backend.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m:
        raise StructuralError(f"matrix is {n}x{m}, not square")
    if b.shape != (n,):
        raise StructuralError(f"right-hand side has shape {b.shape}, expected ({n},)")
    bound = tol * max(np.linalg.norm(b), 1.0)
    if n == 0:
        x = np.zeros(0)
        return (x, 0.0) if return_residual else x
    _check_finite(A.data, "matrix")
    solve = _factorize(A, backend, ordering)
    x = solve(b)
    _check_finite(x, "solution")
    r = b - A @ x
    res = float(np.linalg.norm(r))
    for _ in range(2):
        if res <= bound:
            break
        x = x + solve(r)
        r = b - A @ x
        res = float(np.linalg.norm(r))
    if res > bound:
        raise ConvergenceError(f"residual {res:.3e} exceeds bound {bound:.3e}")
    return (x, res) if return_residual else x


def solve_small_dense(M, rhs) -> np.ndarray:
    """Gaussian elimination with complete pivoting for small square systems."""
    a = np.array(M, dtype=float)
    b = np.array(rhs, dtype=float).ravel()
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise StructuralError(f"matrix of shape {a.shape} is not square")
    if b.size != n:
        raise StructuralError(f"right-hand side length {b.size} != {n}")
    if n > 16:
        raise StructuralError(f"dense solver is limited to 16 unknowns, got {n}")
    scale = np.abs(a).max() if n else 0.0
    colperm = np.arange(n)
    for k in range(n):
        sub = np.abs(a[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        i += k
        j += k
        if sub[i - k, j - k] <= 1e-14 * scale or scale == 0.0:
            raise SingularSystemError(f"dense matrix is singular at pivot {k}")
        a[[k, i]] = a[[i, k]]
        b[[k, i]] = b[[i, k]]
        a[:, [k, j]] = a[:, [j, k]]
        colperm[[k, j]] = colperm[[j, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        b[k + 1:] -= f * b[k]
    y = np.zeros(n)
    for k in range(n - 1, -1, -1):
        y[k] = (b[k] - a[k, k + 1:] @ y[k + 1:]) / a[k, k]
    x = np.empty(n)
    x[colperm] = y
    return x


@dataclass
class BlockSystem:
    """Square block-structured linear system.

    ``blocks`` maps ``(block_row, block_col)`` to a sparse matrix; several
    contributions to the same block are summed.  ``sizes`` lists the length
    of every unknown segment in order.
    """

    sizes: list[int]
    names: list[str] = field(default_factory=list)
    blocks: dict[tuple[int, int], sp.spmatrix] = field(default_factory=dict)
    rhs: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = [f"u{i}" for i in range(len(self.sizes))]
        if len(self.names) != len(self.sizes):
            raise StructuralError("one name per unknown segment is required")
        if not self.rhs:
            self.rhs = [np.zeros(n) for n in self.sizes]

    def index(self, key) -> int:
        return self.names.index(key) if isinstance(key, str) else int(key)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @property
    def size(self) -> int:
        return int(sum(self.sizes))

    def add(self, row, col, matrix, scale: float = 1.0) -> None:
        i, j = self.index(row), self.index(col)
        matrix = sp.csr_matrix(matrix)
        if matrix.shape != (self.sizes[i], self.sizes[j]):
            raise StructuralError(
                f"block ({self.names[i]}, {self.names[j]}) has shape {matrix.shape}, "
                f"expected {(self.sizes[i], self.sizes[j])}"
            )
        contrib = matrix * scale if scale != 1.0 else matrix
        if (i, j) in self.blocks:
            self.blocks[(i, j)] = self.blocks[(i, j)] + contrib
        else:
            self.blocks[(i, j)] = contrib

    def add_rhs(self, row, vector, scale: float = 1.0) -> None:
        i = self.index(row)
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.sizes[i],):
            raise StructuralError(f"rhs segment {self.names[i]} has shape {vector.shape}")
        self.rhs[i] = self.rhs[i] + scale * vector

    def matrix(self) -> sp.csr_matrix:
        n = len(self.sizes)
        grid = [[None] * n for _ in range(n)]
        for (i, j), blk in self.blocks.items():
            grid[i][j] = blk
        for i in range(n):
            if grid[i][i] is None:
                grid[i][i] = sp.csr_matrix((self.sizes[i], self.sizes[i]))
        A = sp.bmat(grid, format="csr")
        A.sum_duplicates()
        A.sort_indices()
        return A

    def vector(self) -> np.ndarray:
        return np.concatenate(self.rhs) if self.rhs else np.zeros(0)

    def split(self, x: np.ndarray) -> dict[str, np.ndarray]:
        off = self.offsets
        return {name: x[off[k]:off[k + 1]] for k, name in enumerate(self.names)}


def write_matrix_market(A, path) -> Path:
    """Dump ``A`` in MatrixMarket coordinate format for debugging."""
    path = Path(path)
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, sp.coo_matrix(A), field="real", symmetry="general")
    return path
