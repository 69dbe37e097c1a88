"""Sparse symmetric linear algebra used throughout the package.

Matrices are plain :mod:`scipy.sparse` CSR matrices; index sets are sorted
``int64`` arrays.  The two direct solvers wrap SuperLU:

* :func:`solve_spd` factorizes in symmetric mode with diagonal pivoting, so
  the pivots are the ``D`` of an ``LDL^T`` factorization and definiteness can
  be read off them.
* :func:`solve_saddle` eliminates the constraints of ``[[K, C^T], [C, 0]]``
  through a dense Schur complement when ``K`` is SPD and the complement is
  well conditioned, and otherwise factorizes the full block matrix, falling back to a regularized
  ``-eps*I`` block when that factorization is rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)

SPD_RTOL = 1e-10
SADDLE_RTOL = 1e-9
SCHUR_MAX_COND = 1e8      # beyond this, phi = x0 - Y eta loses too many digits


class SolverError(RuntimeError):
    """Base class for direct-solver failures."""

    def __init__(self, message, context=None):
        super().__init__(message if context is None else f"{message} [{context}]")
        self.context = context


class SingularMatrixError(SolverError):
    pass


class NotPositiveDefiniteError(SolverError):
    pass


def assemble(triplets, nrows, ncols):
    """Build a CSR matrix from ``(row, col, value)`` triplets, summing duplicates."""
    triplets = list(triplets)
    if triplets:
        rows, cols, vals = (np.asarray(a) for a in zip(*triplets))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    return assemble_arrays(rows, cols, vals, nrows, ncols)


def assemble_arrays(rows, cols, vals, nrows, ncols):
    """Array form of :func:`assemble`."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
        raise IndexError(f"triplet index out of range for a {nrows}x{ncols} matrix")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
    A.sum_duplicates()
    return A


def index_set(indices, dim=None):
    """Return ``indices`` as a strictly ascending int64 array, validated against ``dim``."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size > 1 and np.any(np.diff(idx) <= 0):
        idx = np.unique(idx)
    if idx.size and (idx[0] < 0 or (dim is not None and idx[-1] >= dim)):
        raise IndexError(f"index set out of range [0, {dim})")
    return idx


def extract(A, rows, cols):
    """Submatrix ``A(rows, cols)`` with ``result[i, j] = A[rows[i], cols[j]]``."""
    A = sp.csr_matrix(A)
    rows = index_set(rows, A.shape[0])
    cols = index_set(cols, A.shape[1])
    return A[rows][:, cols].tocsr()


def is_symmetric(A, tol=0.0):
    D = abs(A - A.T)
    return (D.max() if D.nnz else 0.0) <= tol


def _as_2d(b):
    b = np.asarray(b, dtype=float)
    return b[:, None] if b.ndim == 1 else b, b.ndim == 1


def _check_residual(A, x, b, rtol, context, cls=SingularMatrixError):
    return _check_relative(A @ x - b, b, rtol, context, cls)


def _check_relative(r, b, rtol, context, cls=SingularMatrixError):
    bn = np.linalg.norm(b, axis=0)
    rn = np.linalg.norm(r, axis=0)
    scale = np.where(bn > 0, bn, 1.0)
    worst = float(np.max(rn / scale)) if rn.size else 0.0
    if not np.isfinite(worst) or worst > rtol:
        raise cls(f"relative residual {worst:.3e} exceeds {rtol:.0e}", context)
    return worst


class SPDFactor:
    """Symmetric-pivoted SuperLU factorization of an SPD matrix."""

    def __init__(self, A, context=None):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.A = A
        self.context = context
        n = A.shape[0]
        if n == 0:
            self._lu = None
            return
        try:
            lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                      options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise SingularMatrixError(f"factorization failed: {exc}", context) from exc
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise NotPositiveDefiniteError("a zero diagonal pivot forced an off-diagonal pivot", context)
        d = lu.U.diagonal()
        if np.any(d <= 0):
            raise NotPositiveDefiniteError(
                f"{int(np.sum(d <= 0))} non-positive pivot(s), min {d.min():.3e}", context)
        self._lu = lu

    def solve(self, b, rtol=SPD_RTOL):
        B, vec = _as_2d(b)
        if self._lu is None:
            X = np.zeros_like(B)
        else:
            X = self._lu.solve(B)
            _check_residual(self.A, X, B, rtol, self.context)
        return X[:, 0] if vec else X


def solve_spd(A, b, context=None):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Raises :class:`NotPositiveDefiniteError` when a pivot is non-positive and
    :class:`SingularMatrixError` when SuperLU reports exact singularity or the
    relative residual exceeds ``1e-10``.
    """
    return SPDFactor(A, context).solve(b)


@dataclass
class SaddleFactor:
    """Factorization of ``[[K, C^T], [C, 0]]`` shared by many right-hand sides.

    When ``K`` is SPD the constraints are eliminated through the small Schur
    complement ``S = C K^-1 C^T``; otherwise the whole block matrix goes to
    SuperLU.  ``method`` records which path was taken.
    """

    K: sp.csr_matrix
    C: object               # sparse, or a dense array kept dense for BLAS products
    context: object = None
    regularized: bool = False
    method: str = ""

    def __post_init__(self):
        self.K = sp.csr_matrix(self.K, dtype=float)
        self.C = sp.csr_matrix(self.C, dtype=float) if sp.issparse(self.C) else np.asarray(self.C, dtype=float)
        n, p = self.K.shape[0], self.C.shape[0]
        if self.C.shape[1] != n and p:
            raise ValueError("constraint matrix has the wrong number of columns")
        self.n, self.p = n, p
        self._eps = 0.0
        if self._try_schur():
            return
        self.method = "lu"
        try:
            self._lu = splu(self._block(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError:
            self._lu = None
        if self._lu is None or not self._probe():
            self._regularize()

    def _block(self):
        if not self.p:
            return sp.csc_matrix(self.K)
        C = sp.csr_matrix(self.C)
        corner = -self._eps * sp.identity(self.p) if self._eps else None
        return sp.bmat([[self.K, C.T], [C, corner]], format="csc")

    def _apply(self, X):
        """Block matrix times ``X``."""
        top, bottom = X[: self.n], X[self.n:]
        out = np.empty_like(X)
        out[: self.n] = self.K @ top + self.C.T @ bottom
        out[self.n:] = self.C @ top - self._eps * bottom
        return out

    def _try_schur(self):
        try:
            self._kf = SPDFactor(self.K, self.context)
            Ct = self.C.T
            Y = self._kf.solve(Ct.toarray() if sp.issparse(Ct) else Ct) if self.p else np.zeros((self.n, 0))
        except SolverError:
            return False
        S = self.C @ Y
        S = 0.5 * (S + S.T)
        if self.p and not np.linalg.cond(S) <= SCHUR_MAX_COND:
            return False
        try:
            self._sf = cho_factor(S) if self.p else None
        except LinAlgError:
            return False
        self._Y = Y
        self.method = "schur"
        if self._probe():
            return True
        self.method = ""
        return False

    def _raw_solve(self, rhs):
        if self.method != "schur":
            return self._lu.solve(rhs)
        R = rhs[: self.n]
        X0 = self._kf._lu.solve(R)
        if not self.p:
            return X0
        eta = cho_solve(self._sf, self.C @ X0 - rhs[self.n:])
        return np.vstack([X0 - self._Y @ eta, eta])

    def _probe(self):
        # exact-singularity detection in SuperLU only catches zero pivots;
        # the probe has the zero constraint part every real solve has
        rng = np.random.default_rng(0)
        rhs = np.zeros((self.n + self.p, 1))
        rhs[: self.n, 0] = rng.standard_normal(self.n)
        x = self._raw_solve(rhs)
        res = np.linalg.norm(self._apply(x) - rhs) / np.linalg.norm(rhs)
        return bool(np.isfinite(res) and res <= SADDLE_RTOL)

    def _regularize(self):
        if self.p == 0:
            raise SingularMatrixError("unconstrained block is singular", self.context)
        kmax = abs(self.K).max() if self.K.nnz else 1.0
        self._eps = 1e-12 * kmax
        log.warning("saddle factorization rejected, regularizing with eps=%.3e (%s)", self._eps, self.context)
        try:
            self._lu = splu(self._block(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SingularMatrixError(f"regularized saddle factorization failed: {exc}", self.context) from exc
        self.method = "lu"
        self.regularized = True

    def solve(self, r, rtol=SADDLE_RTOL):
        """Return ``(phi, eta)`` for right-hand side ``[r; 0]`` (vector or column block)."""
        R, vec = _as_2d(r)
        rhs = np.vstack([R, np.zeros((self.p, R.shape[1]))])
        if not np.any(R):
            X = np.zeros_like(rhs)
        else:
            X = self._raw_solve(rhs)
            _check_relative(self._apply(X) - rhs, rhs, rtol, self.context)
        phi, eta = X[: self.n], X[self.n:]
        if vec:
            return phi[:, 0], eta[:, 0]
        return phi, eta


def solve_saddle(K, C, r, context=None):
    """Solve ``K phi + C^T eta = r``, ``C phi = 0``."""
    return SaddleFactor(K, C, context).solve(r)


def write_coo(path, A, header=None):
    """Write ``A`` as ``row col value`` lines (0-based); a ``# nrows ncols`` comment leads."""
    A = sp.coo_matrix(A)
    with open(path, "w", newline="\n") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write(f"# {A.shape[0]} {A.shape[1]}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {float(v)!r}\n")


def read_coo(path):
    shape = None
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and all(p.isdigit() for p in parts):
                    shape = (int(parts[0]), int(parts[1]))
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'row col value', got {line!r}")
            try:
                rows.append(int(parts[0]))
                cols.append(int(parts[1]))
                vals.append(float(parts[2]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if shape is None:
        raise ValueError(f"{path}: missing '# nrows ncols' shape line")
    return assemble_arrays(rows, cols, vals, *shape)
