"""Principal spectral hypersurface of the coupled power-shift eigenproblem.

The composed map T = T_1 ... T_m, where T_i v = L_i^{-1}(rho_i v^{alpha_i}),
is positively 1-homogeneous when prod(alpha) = 1 and maps the positive cone
into itself. Its principal eigenvalue 1/lambda_* is found by cone power
iteration; the closed forms H(Lambda) and theta_star(sigma) convert between
the scalar value lambda_* and the hypersurface

    { Lambda > 0 : H(Lambda) = lambda_* }.

Also here: the linearized stability eigenvalue eta_1 of the coupled system
frozen at a solution field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import NonconvergenceError, SparseMatrix, smallest_eigenpair, solve

__all__ = [
    "ComposedOperator",
    "SpectralPair",
    "StabilityResult",
    "apply_T",
    "lambda_star",
    "H_of",
    "theta_star",
    "stability_eigen",
]


def _rho_table(rho, domain, m):
    """Materialize a weight spec into an (m, n_interior) positive table."""
    n = domain.n_interior
    if callable(rho):
        v = np.asarray(rho(domain.interior_coords()), dtype=float)
        if v.ndim == 1:
            v = np.broadcast_to(v, (m, n))
        tab = np.array(v, dtype=float)
    else:
        arr = np.asarray(rho, dtype=float)
        if arr.ndim == 0:
            tab = np.full((m, n), float(arr))
        elif arr.ndim == 1 and arr.shape == (m,):
            tab = np.repeat(arr[:, None], n, axis=1)
        elif arr.shape == (m, n):
            tab = arr.astype(float)
        else:
            raise ValueError(f"cannot interpret weight of shape {arr.shape} "
                             f"as ({m}, {n}) interior table")
    if tab.shape != (m, n):
        raise ValueError(f"weight table has shape {tab.shape}, expected ({m}, {n})")
    if np.any(tab <= 0) or not np.all(np.isfinite(tab)):
        raise ValueError("weight rho must be positive and finite")
    return tab


@dataclass(frozen=True)
class ComposedOperator:
    """The m discrete operators, weight table, and exponents of T."""

    ops: tuple
    rho: np.ndarray       # (m, n_interior), positive
    alpha: np.ndarray     # exponents, prod = 1
    domain: object

    @classmethod
    def build(cls, ops, rho, alpha):
        ops = tuple(ops)
        alpha = np.asarray(alpha, dtype=float)
        m = len(ops)
        if alpha.shape != (m,):
            raise ValueError("need one exponent per operator")
        if np.any(alpha <= 0) or abs(float(np.prod(alpha)) - 1.0) > 1e-12:
            raise ValueError("exponents must be positive with product 1")
        dom = ops[0].domain
        for L in ops:
            if not L.m_matrix_verified:
                raise ValueError("all operators must be verified M-matrices")
            if L.domain.n_interior != dom.n_interior:
                raise ValueError("operators must share one domain")
        return cls(ops=ops, rho=_rho_table(rho, dom, m), alpha=alpha, domain=dom)

    @property
    def m(self):
        return len(self.ops)


def _apply_interior(op: ComposedOperator, v, weights=None):
    # composition T_1 ... T_m applied to an interior field: innermost first
    for i in range(op.m - 1, -1, -1):
        rhs = op.rho[i] * np.maximum(v, 0.0) ** op.alpha[i]
        v, _ = solve(op.ops[i].matrix, rhs)
        if weights is not None:
            v = weights[i] * v
    return v


def apply_T(op: ComposedOperator, u, weights=None):
    """Apply the composed map T (or its Lambda-weighted version) to a field.

    Solves v <- L_i^{-1}(rho_i v^{alpha_i}) for i = m down to 1. The input
    is a full-grid field (boundary nodes included); the result has zero
    boundary values. ``weights``, when given, multiplies the i-th solve by
    Lambda_i, producing T_Lambda = H(Lambda) T.
    """
    u = np.asarray(u, dtype=float)
    dom = op.domain
    if u.shape != (dom.coords.shape[0],):
        raise ValueError(f"expected a field of length {dom.coords.shape[0]}")
    if np.any(u < 0):
        raise ValueError("apply_T requires a nonnegative field")
    w = _apply_interior(op, u[dom.interior], weights=weights)
    out = np.zeros_like(u)
    out[dom.interior] = w
    return out


@dataclass(frozen=True)
class SpectralPair:
    lambda_star: float
    phi_star: np.ndarray   # full-grid, positive interior, max-norm 1
    iterations: int
    residual: float


def lambda_star(op: ComposedOperator, tol: float = 1e-8,
                max_iter: int = 10000, weights=None) -> SpectralPair:
    """Principal value of the composed map by cone power iteration.

    Iterates u <- T u / ||T u||_inf from the all-ones interior field until
    successive sup-norm ratios settle within ``tol`` (relative). Returns
    the pair (1/ratio, normalized eigenfield). With ``weights`` the map is
    the Lambda-weighted composition, so the returned value is
    lambda_* / H(Lambda) — equal to 1 exactly when Lambda lies on the
    spectral hypersurface.
    """
    v = np.ones(op.domain.n_interior)
    ratio = np.inf
    for k in range(1, max_iter + 1):
        w = _apply_interior(op, v, weights=weights)
        r = float(np.max(np.abs(w)))
        if r <= 0 or not np.isfinite(r):
            raise ValueError("composed map collapsed to zero; "
                             "weight or operator misconfigured")
        v = np.maximum(w, 0.0) / r
        if abs(r - ratio) <= tol * max(1.0, r):
            ratio = r
            break
        ratio = r
    else:
        raise NonconvergenceError(
            f"power iteration did not settle in {max_iter} iterations")
    resid = float(np.max(np.abs(_apply_interior(op, v, weights=weights) - ratio * v)))
    phi = np.zeros(op.domain.coords.shape[0])
    phi[op.domain.interior] = v
    return SpectralPair(lambda_star=1.0 / ratio, phi_star=phi,
                        iterations=k, residual=resid)


def H_of(Lam, alpha) -> float:
    """The hypersurface level H(Lambda) = prod_i lambda_i^(alpha_1...alpha_{i-1})."""
    Lam = np.asarray(Lam, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if Lam.shape != alpha.shape:
        raise ValueError("Lambda and alpha must have matching length")
    if np.any(Lam <= 0):
        raise ValueError("H is defined for positive tuples only")
    expo = np.concatenate(([1.0], np.cumprod(alpha[:-1])))
    return float(np.prod(Lam ** expo))


def theta_star(sigma, lam_star: float, alpha) -> float:
    """Scale theta placing (theta, theta*sigma) on the hypersurface.

    Closed form: theta = (lambda_* / prod_i sigma_i^{p_i})^{1/D} with
    p_i = alpha_1...alpha_i and D = sum of all p_i; equivalently the unique
    positive root of H((theta, theta sigma)) = lambda_*.
    """
    alpha = np.asarray(alpha, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m = alpha.shape[0]
    if sigma.shape != (m - 1,):
        raise ValueError(f"sigma must have {m - 1} components")
    if np.any(sigma <= 0) or lam_star <= 0:
        raise ValueError("sigma and lambda_* must be positive")
    p = np.cumprod(alpha)
    denom = float(np.prod(sigma ** p[:-1])) if m > 1 else 1.0
    return float((lam_star / denom) ** (1.0 / p.sum()))


@dataclass(frozen=True)
class StabilityResult:
    eta1: float
    phi: np.ndarray          # (m, n_nodes) eigenfield, sign-normalized
    coupling: SparseMatrix   # the frozen block matrix Lambda_i A_ij(x, u(x))
    residual: float
    positive: bool           # eigenfield strictly positive on interior nodes


def stability_eigen(Ls, Lam, nlmap, u, tol: float = 1e-8) -> StabilityResult:
    """Principal eigenvalue of the system linearized at a solution field.

    Assembles the (m n) x (m n) block matrix  blockdiag(L_i) - C  with
    C[(i,k),(j,k)] = Lambda_i A_ij(x_k, u(x_k)), then runs inverse power
    iteration on the shifted matrix M + s I, s = 1 + max row sum of C.
    The shift keeps the matrix a strictly diagonally dominant M-matrix, so
    the iteration converges to the Perron pair and eta_1 is its eigenvalue
    minus the shift. A non-positive eigenfield is reported (not raised): it
    is evidence that the frozen coupling is not irreducible.
    """
    Ls = tuple(Ls)
    m = len(Ls)
    Lam = np.asarray(Lam, dtype=float)
    dom = Ls[0].domain
    n = dom.n_interior
    u = np.asarray(u, dtype=float)
    if u.shape == (m, dom.coords.shape[0]):
        u_int = u[:, dom.interior]
    elif u.shape == (m, n):
        u_int = u
    else:
        raise ValueError(f"u must be an m x nodes field; got shape {u.shape}")

    A_tab = nlmap.A(dom.interior_coords(), u_int)     # (m, m, n)
    rows, cols, vals = [], [], []
    crows, ccols, cvals = [], [], []
    for i, L in enumerate(Ls):
        sp = L.matrix.scipy.tocoo()
        rows.append(sp.row + i * n)
        cols.append(sp.col + i * n)
        vals.append(sp.data)
        for j in range(m):
            block = Lam[i] * A_tab[i, j]
            if np.any(block != 0.0):
                idx = np.arange(n)
                crows.append(idx + i * n)
                ccols.append(idx + j * n)
                cvals.append(block)
    coupling = SparseMatrix.from_coo(np.concatenate(crows), np.concatenate(ccols),
                                     np.concatenate(cvals), m * n)
    rows.append(np.concatenate(crows))
    cols.append(np.concatenate(ccols))
    vals.append(-np.concatenate(cvals))

    shift = 1.0 + float(np.max(np.abs(coupling.scipy).sum(axis=1)))
    rows.append(np.arange(m * n))
    cols.append(np.arange(m * n))
    vals.append(np.full(m * n, shift))
    M_shift = SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                                    np.concatenate(vals), m * n)

    nu, w = smallest_eigenpair(M_shift, tol=tol)
    eta1 = nu - shift
    if w[np.argmax(np.abs(w))] < 0:
        w = -w
    resid = float(np.max(np.abs(M_shift.dot(w) - nu * w)))
    positive = bool(np.all(w > 0))
    phi = np.zeros((m, dom.coords.shape[0]))
    for i in range(m):
        phi[i, dom.interior] = w[i * n:(i + 1) * n]
    return StabilityResult(eta1=float(eta1), phi=phi, coupling=coupling,
                           residual=resid, positive=positive)
