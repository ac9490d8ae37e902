"""Discrete domains and elliptic operators in nondivergence form.

Supported geometries: the unit interval (0,1), the radial unit ball in
R^n (reduced to the radius coordinate), and an axis-aligned rectangle.
Operators -L with L = sum_k a_k(x) d^2/dx_k^2 + sum_k b_k(x) d/dx_k + c(x)
are assembled as sparse M-matrices on the interior nodes, with Dirichlet
rows eliminated, so that a discrete maximum principle holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import SparseMatrix

__all__ = [
    "DiscreteDomain",
    "OperatorSpec",
    "DiscreteOperator",
    "MMatrixError",
    "build_domain",
    "assemble",
    "apply",
]


class MMatrixError(ValueError):
    """The assembled stencil violates the M-matrix sign pattern.

    Carries the offending interior node index in ``node``.
    """

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


def _sphere_area(n: int) -> float:
    # surface measure of the unit sphere S^{n-1}
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class DiscreteDomain:
    """A uniform grid over one of the supported geometries.

    Attributes
    ----------
    kind : str
        One of ``'interval'``, ``'ball'``, ``'rectangle'``.
    resolution : int
        Nodes per axis, boundary nodes included (so the grid spacing on
        the unit interval is ``1/(resolution-1)``).
    dimension : int
        Ambient dimension: 1 for the interval, ``n`` for the radial ball,
        2 for the rectangle.
    coords : ndarray
        Node coordinates, shape ``(N,)`` in 1D/radial or ``(N, 2)``.
    interior, boundary : ndarray
        Index sets partitioning the nodes.
    delta : ndarray
        Distance to the boundary per node; zero exactly on boundary nodes.
    h : tuple
        Grid spacing per axis.
    quad_w : ndarray
        Trapezoid quadrature weights per node (radial weights include the
        surface factor ``omega_{n-1} r^{n-1}``), used for L^1 norms.
    cellvol : ndarray
        Volume of the cell owned by each node (finite-volume cells for the
        radial geometry); used to scale discrete Dirac loads.
    """

    kind: str
    resolution: int
    dimension: int
    coords: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    delta: np.ndarray
    h: tuple
    width: float = 1.0
    height: float = 1.0
    quad_w: np.ndarray = field(default=None, repr=False)
    cellvol: np.ndarray = field(default=None, repr=False)

    @property
    def n_interior(self) -> int:
        return self.interior.size

    def interior_coords(self) -> np.ndarray:
        return self.coords[self.interior]


def build_domain(kind: str, resolution: int, *, dimension: int = 3,
                 width: float = 1.0, height: float = 1.0) -> DiscreteDomain:
    """Build a uniform discrete domain.

    Parameters
    ----------
    kind : {'interval', 'ball', 'rectangle'}
        Geometry. ``'ball'`` is the radial reduction of the unit ball in
        ``R^dimension`` (nodes are radii, ``r = 1`` is the single boundary
        node). ``'rectangle'`` spans ``(0, width) x (0, height)``.
    resolution : int
        Nodes per axis including the boundary. Must be at least 3 (one
        interior node).
    """
    if resolution < 3:
        raise ValueError(f"resolution must be >= 3 nodes per axis, got {resolution}")

    if kind == "interval":
        h = 1.0 / (resolution - 1)
        x = np.linspace(0.0, 1.0, resolution)
        interior = np.arange(1, resolution - 1)
        boundary = np.array([0, resolution - 1])
        delta = np.minimum(x, 1.0 - x)
        w = np.full(resolution, h)
        w[0] = w[-1] = h / 2.0
        cell = w.copy()
        return DiscreteDomain(kind, resolution, 1, x, interior, boundary,
                              delta, (h,), quad_w=w, cellvol=cell)

    if kind == "ball":
        n = int(dimension)
        if n < 1:
            raise ValueError(f"ball dimension must be positive, got {dimension}")
        h = 1.0 / (resolution - 1)
        r = np.linspace(0.0, 1.0, resolution)
        interior = np.arange(0, resolution - 1)   # r = 0 is an interior node
        boundary = np.array([resolution - 1])
        delta = 1.0 - r
        omega = _sphere_area(n)
        w = omega * r ** (n - 1) * h
        w[0] *= 0.5
        w[-1] *= 0.5
        # finite-volume cells [r-h/2, r+h/2] clipped to [0, 1]
        rp = np.minimum(r + h / 2.0, 1.0)
        rm = np.maximum(r - h / 2.0, 0.0)
        cell = omega * (rp ** n - rm ** n) / n
        return DiscreteDomain(kind, resolution, n, r, interior, boundary,
                              delta, (h,), quad_w=w, cellvol=cell)

    if kind == "rectangle":
        if width <= 0 or height <= 0:
            raise ValueError("rectangle sides must be positive")
        hx = width / (resolution - 1)
        hy = height / (resolution - 1)
        xs = np.linspace(0.0, width, resolution)
        ys = np.linspace(0.0, height, resolution)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        coords = np.column_stack([X.ravel(), Y.ravel()])
        ix = np.arange(resolution)
        on_bdry = ((coords[:, 0] == 0.0) | (coords[:, 0] == width)
                   | (coords[:, 1] == 0.0) | (coords[:, 1] == height))
        interior = np.flatnonzero(~on_bdry)
        boundary = np.flatnonzero(on_bdry)
        delta = np.minimum.reduce([coords[:, 0], width - coords[:, 0],
                                   coords[:, 1], height - coords[:, 1]])
        wx = np.full(resolution, hx)
        wx[0] = wx[-1] = hx / 2.0
        wy = np.full(resolution, hy)
        wy[0] = wy[-1] = hy / 2.0
        w = np.outer(wy, wx).ravel()
        cell = w.copy()
        return DiscreteDomain(kind, resolution, 2, coords, interior, boundary,
                              delta, (hx, hy), width=width, height=height,
                              quad_w=w, cellvol=cell)

    raise ValueError(f"unknown domain kind {kind!r}")


def _as_axis_funcs(coef, n_axes):
    """Normalize a coefficient spec (scalar | callable | per-axis sequence)."""
    if isinstance(coef, (list, tuple)):
        if len(coef) != n_axes:
            raise ValueError(f"expected {n_axes} per-axis coefficients, got {len(coef)}")
        items = list(coef)
    else:
        items = [coef] * n_axes
    out = []
    for it in items:
        if callable(it):
            out.append(it)
        else:
            v = float(it)
            out.append(lambda _x, _v=v: np.full(np.shape(_x)[0] if np.ndim(_x) else 1, _v))
    return out


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficients of one elliptic operator L = a d^2 + b d + c.

    ``a`` and ``b`` may be scalars, callables of the node coordinates, or
    per-axis sequences thereof (2D). Diffusion must be strictly positive.
    For the radial ball the diffusion multiplies the full radial Laplacian
    u'' + ((n-1)/r) u' and ``b`` is an extra radial drift.

    ``c0``/``C0`` (ellipticity window) and ``bound`` (|b|, |c| cap) are
    optional; when given they are enforced at every node at assembly time.
    """

    a: object = 1.0
    b: object = 0.0
    c: object = 0.0
    c0: float = None
    C0: float = None
    bound: float = None


@dataclass(frozen=True)
class DiscreteOperator:
    """An assembled sparse approximation of -L on the interior nodes."""

    matrix: SparseMatrix
    domain: DiscreteDomain
    spec: OperatorSpec
    stencil_order: int
    m_matrix_verified: bool

    @property
    def n(self) -> int:
        return self.matrix.n


def _eval_coef(fn, coords):
    v = np.asarray(fn(coords), dtype=float)
    if v.ndim == 0:
        v = np.full(coords.shape[0], float(v))
    if v.shape[0] != coords.shape[0]:
        raise ValueError("coefficient callable returned wrong length")
    return v


def _check_bounds(spec, a_vals, b_vals, c_vals):
    for a in a_vals:
        if np.any(a <= 0):
            bad = int(np.argmax(a <= 0))
            raise ValueError(f"diffusion coefficient nonpositive at node {bad}")
        if spec.c0 is not None and np.any(a < spec.c0 - 1e-14):
            bad = int(np.argmax(a < spec.c0 - 1e-14))
            raise ValueError(f"ellipticity lower bound violated at node {bad}")
        if spec.C0 is not None and np.any(a > spec.C0 + 1e-14):
            bad = int(np.argmax(a > spec.C0 + 1e-14))
            raise ValueError(f"ellipticity upper bound violated at node {bad}")
    if spec.bound is not None:
        for b in b_vals:
            if np.any(np.abs(b) > spec.bound + 1e-14):
                bad = int(np.argmax(np.abs(b) > spec.bound))
                raise ValueError(f"drift bound violated at node {bad}")
        if np.any(np.abs(c_vals) > spec.bound + 1e-14):
            bad = int(np.argmax(np.abs(c_vals) > spec.bound))
            raise ValueError(f"potential bound violated at node {bad}")


def assemble(spec: OperatorSpec, dom: DiscreteDomain) -> DiscreteOperator:
    """Assemble the sparse matrix of -L on the interior nodes of ``dom``.

    Diffusion uses second-order differences (conservative flux form on the
    radial geometry, which keeps the scheme exact on quadratics and
    sign-correct at every radius). Drift uses first-order upwind
    differences chosen by the sign of b at each node, so the M-matrix
    pattern survives any drift magnitude. Dirichlet boundary values are
    eliminated (treated as zero).

    Raises
    ------
    MMatrixError
        If the resulting rows break the sign pattern (off-diagonal > 0 or
        diagonal <= 0); the offending node index is attached.
    """
    if dom.kind == "interval":
        op = _assemble_interval(spec, dom)
    elif dom.kind == "ball":
        op = _assemble_ball(spec, dom)
    elif dom.kind == "rectangle":
        op = _assemble_rectangle(spec, dom)
    else:  # pragma: no cover - build_domain guards kinds
        raise ValueError(f"unknown domain kind {dom.kind!r}")
    return op


def _scan_m_matrix(rows, cols, vals, c_vals):
    """Explicit sign-pattern scan; returns True or raises MMatrixError."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    vals = np.asarray(vals)
    off = rows != cols
    if np.any(vals[off] > 1e-14):
        bad = int(rows[off][np.argmax(vals[off] > 1e-14)])
        raise MMatrixError(f"positive off-diagonal entry in row {bad}", node=bad)
    diag = np.zeros(int(rows.max()) + 1)
    np.add.at(diag, rows[~off], vals[~off])
    if np.any(diag <= 0):
        bad = int(np.argmax(diag <= 0))
        raise MMatrixError(f"nonpositive diagonal in row {bad}", node=bad)
    if np.all(c_vals <= 0):
        rs = np.zeros_like(diag)
        np.add.at(rs, rows, vals)
        if np.any(rs < -1e-10 * np.abs(diag)):
            bad = int(np.argmax(rs < -1e-10 * np.abs(diag)))
            raise MMatrixError(f"negative row sum with c <= 0 in row {bad}", node=bad)
    return True


def _assemble_interval(spec, dom):
    (h,) = dom.h
    xi = dom.interior_coords()
    (a,) = (_eval_coef(f, xi) for f in _as_axis_funcs(spec.a, 1))
    (b,) = (_eval_coef(f, xi) for f in _as_axis_funcs(spec.b, 1))
    c = _eval_coef(_as_axis_funcs(spec.c, 1)[0], xi)
    _check_bounds(spec, [a], [b], c)

    N = dom.n_interior
    rows, cols, vals = [], [], []
    bp = np.maximum(b, 0.0)
    bm = np.minimum(b, 0.0)
    diag = 2.0 * a / h**2 + (bp - bm) / h - c
    left = -a / h**2 + bm / h
    right = -a / h**2 - bp / h
    for i in range(N):
        rows.append(i); cols.append(i); vals.append(diag[i])
        if i > 0:
            rows.append(i); cols.append(i - 1); vals.append(left[i])
        if i < N - 1:
            rows.append(i); cols.append(i + 1); vals.append(right[i])
    ok = _scan_m_matrix(rows, cols, vals, c)
    M = SparseMatrix.from_coo(rows, cols, vals, N)
    order = 2 if np.all(b == 0) else 1
    return DiscreteOperator(M, dom, spec, order, ok)


def _assemble_ball(spec, dom):
    (h,) = dom.h
    n = dom.dimension
    ri = dom.interior_coords()          # radii 0, h, ..., 1-h
    a = _eval_coef(_as_axis_funcs(spec.a, 1)[0], ri)
    b = _eval_coef(_as_axis_funcs(spec.b, 1)[0], ri)
    c = _eval_coef(_as_axis_funcs(spec.c, 1)[0], ri)
    _check_bounds(spec, [a], [b], c)

    N = dom.n_interior
    rows, cols, vals = [], [], []
    for i in range(N):
        if i == 0:
            # symmetric origin stencil: -a * Delta u(0) = -2n a (u1 - u0)/h^2.
            # Radial symmetry forces u'(0) = 0, so drift drops out here.
            d = 2.0 * n * a[0] / h**2 - c[0]
            rows += [0, 0]
            cols += [0, 1]
            vals += [d, -2.0 * n * a[0] / h**2]
            continue
        r = ri[i]
        rp = ((i + 0.5) * h) ** (n - 1)
        rm = ((i - 0.5) * h) ** (n - 1)
        V = (((i + 0.5) * h) ** n - ((i - 0.5) * h) ** n) / n
        cp = a[i] * rp / (h * V)
        cm = a[i] * rm / (h * V)
        bp = max(b[i], 0.0)
        bm = min(b[i], 0.0)
        rows.append(i); cols.append(i)
        vals.append(cp + cm + (bp - bm) / h - c[i])
        rows.append(i); cols.append(i - 1)
        vals.append(-cm + bm / h)
        if i < N - 1:
            rows.append(i); cols.append(i + 1)
            vals.append(-cp - bp / h)
    ok = _scan_m_matrix(rows, cols, vals, c)
    M = SparseMatrix.from_coo(rows, cols, vals, N)
    order = 2 if np.all(b == 0) else 1
    return DiscreteOperator(M, dom, spec, order, ok)


def _assemble_rectangle(spec, dom):
    hx, hy = dom.h
    xi = dom.interior_coords()
    ax, ay = (_eval_coef(f, xi) for f in _as_axis_funcs(spec.a, 2))
    bx, by = (_eval_coef(f, xi) for f in _as_axis_funcs(spec.b, 2))
    c = _eval_coef(_as_axis_funcs(spec.c, 2)[0], xi)
    _check_bounds(spec, [ax, ay], [bx, by], c)

    R = dom.resolution
    # global node id -> interior id (or -1)
    g2i = -np.ones(dom.coords.shape[0], dtype=int)
    g2i[dom.interior] = np.arange(dom.n_interior)

    rows, cols, vals = [], [], []
    for k, g in enumerate(dom.interior):
        iy, ix = divmod(g, R)
        bxp = max(bx[k], 0.0); bxm = min(bx[k], 0.0)
        byp = max(by[k], 0.0); bym = min(by[k], 0.0)
        diag = (2.0 * ax[k] / hx**2 + 2.0 * ay[k] / hy**2
                + (bxp - bxm) / hx + (byp - bym) / hy - c[k])
        rows.append(k); cols.append(k); vals.append(diag)
        for (gg, v) in (
            (g - 1, -ax[k] / hx**2 + bxm / hx),
            (g + 1, -ax[k] / hx**2 - bxp / hx),
            (g - R, -ay[k] / hy**2 + bym / hy),
            (g + R, -ay[k] / hy**2 - byp / hy),
        ):
            j = g2i[gg]
            if j >= 0:
                rows.append(k); cols.append(j); vals.append(v)
    ok = _scan_m_matrix(rows, cols, vals, c)
    M = SparseMatrix.from_coo(rows, cols, vals, dom.n_interior)
    order = 2 if (np.all(bx == 0) and np.all(by == 0)) else 1
    return DiscreteOperator(M, dom, spec, order, ok)


def apply(L: DiscreteOperator, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product L v on interior grid fields (boundary = 0)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (L.matrix.n,):
        raise ValueError(f"field has shape {v.shape}, operator expects ({L.matrix.n},)")
    return L.matrix.dot(v)
