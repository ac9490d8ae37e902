"""Sparse linear algebra for the grid operators.

Thin CSR wrapper with a cached LU factorization, a BiCGSTAB path with a
symmetric Gauss-Seidel preconditioner for larger systems, inverse power
iteration for the principal (smallest) eigenpair of an M-matrix, and
discrete Green-function columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SparseMatrix",
    "SolveReport",
    "SingularMatrixError",
    "NonconvergenceError",
    "solve",
    "transpose",
    "smallest_eigenpair",
    "green_column",
]

# systems up to this size take the cached direct path under method='auto'
_DIRECT_LIMIT = 40_000


class SingularMatrixError(RuntimeError):
    pass


class NonconvergenceError(RuntimeError):
    pass


class SparseMatrix:
    """Square sparse matrix in CSR form.

    Wraps ``scipy.sparse.csr_matrix`` in canonical format (duplicate
    entries summed, column indices strictly increasing within each row)
    and caches the LU factorization and preconditioner triangles across
    repeated solves with the same matrix.
    """

    def __init__(self, mat):
        m = sp.csr_matrix(mat, copy=False)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got shape {m.shape}")
        m.sum_duplicates()
        m.sort_indices()
        self._m = m
        self._lu = None
        self._sgs = None
        self._inf_norm = None

    @classmethod
    def from_coo(cls, rows, cols, vals, n):
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr())

    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def indptr(self):
        return self._m.indptr

    @property
    def indices(self):
        return self._m.indices

    @property
    def values(self):
        return self._m.data

    @property
    def scipy(self):
        return self._m

    def dot(self, v):
        return self._m.dot(v)

    def inf_norm(self):
        if self._inf_norm is None:
            self._inf_norm = float(np.max(np.abs(self._m).sum(axis=1))) if self.n else 0.0
        return self._inf_norm

    def lu(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self._m.tocsc())
            except RuntimeError as e:
                raise SingularMatrixError(str(e)) from e
        return self._lu

    def sgs_triangles(self):
        """Lower/upper triangles and diagonal for the SGS preconditioner."""
        if self._sgs is None:
            d = self._m.diagonal()
            if np.any(d == 0):
                raise SingularMatrixError("zero diagonal entry; SGS preconditioner undefined")
            lower = sp.tril(self._m, 0).tocsr()
            upper = sp.triu(self._m, 0).tocsr()
            self._sgs = (lower, upper, d)
        return self._sgs


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    method: str  # 'direct' | 'stationary' | 'krylov'


def _residual(A: SparseMatrix, x, rhs):
    return float(np.max(np.abs(A.dot(x) - rhs))) if rhs.size else 0.0


def _backward_scale(A: SparseMatrix, x, rhs_norm):
    # normwise-backward-error scale ||A||_inf ||x||_inf + ||b||_inf: the
    # smallest residual a double-precision solve can promise. A plain
    # tol*||b|| gate is unattainable for stiff grids (||A|| ~ 1/h^2).
    return A.inf_norm() * float(np.max(np.abs(x))) + rhs_norm


def solve(A: SparseMatrix, rhs, tol: float = 1e-10, method: str = "auto",
          x0=None):
    """Solve ``A x = rhs`` to a relative sup-norm residual of ``tol``.

    Parameters
    ----------
    A : SparseMatrix
    rhs : array_like
    tol : float
        Acceptance threshold on the normwise backward error:
        ``||A x - rhs||_inf <= tol * (||A||_inf ||x||_inf + ||rhs||_inf)``.
        Skipped when the right-hand side is zero.
    method : {'auto', 'direct', 'krylov'}
        'auto' picks the cached-LU direct path for desk-scale systems and
        BiCGSTAB with a symmetric Gauss-Seidel preconditioner beyond
        :data:`_DIRECT_LIMIT` unknowns.
    x0 : array_like, optional
        Initial guess for the Krylov path.

    Returns
    -------
    (x, SolveReport)

    For an M-matrix ``A`` and ``rhs >= 0`` the solution is nonnegative
    (inverse positivity); this is what the monotone iteration relies on.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (A.n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({A.n},)")
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    if method == "auto":
        method = "direct" if A.n <= _DIRECT_LIMIT else "krylov"

    if method == "direct":
        x = A.lu().solve(rhs)
        res = _residual(A, x, rhs)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("direct solve produced non-finite values")
        if scale > 0 and res > tol * _backward_scale(A, x, scale):
            raise NonconvergenceError(
                f"direct solve residual {res:.3e} above tol "
                f"(backward error {res / _backward_scale(A, x, scale):.3e})")
        return x, SolveReport(iterations=1, residual=res, method="direct")

    if method == "krylov":
        lower, upper, d = A.sgs_triangles()

        def sgs(r):
            y = spla.spsolve_triangular(lower, r, lower=True)
            return spla.spsolve_triangular(upper, d * y, lower=False)

        M = spla.LinearOperator((A.n, A.n), matvec=sgs)
        count = [0]

        def cb(_):
            count[0] += 1

        # scipy's bicgstab enforces an l2 criterion; ask for a bit more and
        # verify the sup-norm contract ourselves below.
        x, info = spla.bicgstab(A.scipy, rhs, x0=x0, M=M,
                                rtol=tol * 1e-2, atol=0.0,
                                maxiter=10 * A.n, callback=cb)
        res = _residual(A, x, rhs)
        if info != 0 or (scale > 0 and res > tol * _backward_scale(A, x, scale)):
            raise NonconvergenceError(
                f"bicgstab failed (info={info}, residual={res:.3e})")
        return x, SolveReport(iterations=count[0], residual=res, method="krylov")

    raise ValueError(f"unknown method {method!r}")


def transpose(A: SparseMatrix) -> SparseMatrix:
    """Structural transpose (the discrete adjoint operator)."""
    return SparseMatrix(A.scipy.T.tocsr())


def smallest_eigenpair(A: SparseMatrix, tol: float = 1e-8,
                       max_iter: int = 5000):
    """Principal (smallest) eigenpair of an M-matrix by inverse power iteration.

    Starts from the all-ones vector; the iterates stay positive by inverse
    positivity, so the limit is the Perron pair of ``A^{-1}``. The returned
    vector is normalized to sup-norm 1 and positive.

    Returns ``(value, vector)`` with ``||A v - value * v||_inf <= tol``.
    """
    lu = A.lu()
    v = np.ones(A.n)
    v /= np.max(np.abs(v))
    value = None
    for _ in range(max_iter):
        w = lu.solve(v)
        nw = float(np.max(np.abs(w)))
        if nw == 0.0 or not np.isfinite(nw):
            raise SingularMatrixError("inverse iteration collapsed")
        value = float(np.max(np.abs(v))) / nw
        v = w / nw
        res = float(np.max(np.abs(A.dot(v) - value * v)))
        if res <= tol:
            if np.min(v) < 0:
                v = -v
            return value, v
    raise NonconvergenceError(
        f"inverse power iteration did not reach tol={tol} in {max_iter} steps")


def green_column(L, j: int):
    """Column of the discrete Green function: solve ``L g = e_j / vol_j``.

    ``L`` may be a :class:`~ellstar.mesh.DiscreteOperator` (whose domain
    supplies the cell volume at interior node ``j``) or a bare
    :class:`SparseMatrix` (unit load). The result is strictly positive on
    the interior nodes for an irreducible M-matrix.
    """
    if hasattr(L, "matrix"):
        A = L.matrix
        vol = float(L.domain.cellvol[L.domain.interior][j])
    else:
        A = L
        vol = 1.0
    if not (0 <= j < A.n):
        raise IndexError(f"node index {j} out of range for n={A.n}")
    e = np.zeros(A.n)
    e[j] = 1.0 / vol
    g, _ = solve(A, e)
    return g
