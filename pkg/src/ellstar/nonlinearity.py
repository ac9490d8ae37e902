"""Catalog of coupled vector nonlinearities F(x,t) and their structure.

Each map carries its Jacobian A(x,t), a positive weight rho(x), and the
exponent tuple alpha (product 1) entering the cyclic power shift S_alpha
that quantifies the superlinear coupling. Conditions checked numerically:

    (A) F(x,0) > 0,
    (B) componentwise monotonicity in t,
    (C) F(x,t) >= kappa rho(x) S_alpha(t) for large |t|,
    (D) irreducibility of the Jacobian sparsity pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SaturationError",
    "ExpressionError",
    "ShiftEval",
    "NonlinearMap",
    "SampleSpec",
    "ConditionReport",
    "EnvelopeFit",
    "make_example",
    "eval_F",
    "eval_A",
    "verify_conditions",
    "lower_envelope",
]

_EXP_CAP = 700.0   # exp arguments beyond this would overflow float64


class SaturationError(FloatingPointError):
    """A nonlinearity evaluation overflowed.

    Raised instead of returning inf so that iteration drivers can treat
    the event as blow-up evidence rather than a numerical accident.
    """


class ExpressionError(ValueError):
    """Parse error in a custom-map expression; carries the position."""

    def __init__(self, msg, pos=None):
        super().__init__(msg)
        self.pos = pos


def _guarded_exp(z):
    z = np.asarray(z, dtype=float)
    if np.any(z > _EXP_CAP):
        raise SaturationError(f"exp argument above {_EXP_CAP}")
    return np.exp(z)


def _signed_pow(v, p):
    # |v|^(p-1) v, the odd power extension
    v = np.asarray(v, dtype=float)
    with np.errstate(over="raise"):
        try:
            return np.sign(v) * np.abs(v) ** p
        except FloatingPointError as e:
            raise SaturationError(str(e)) from e


@dataclass(frozen=True)
class ShiftEval:
    """The cyclic power shift S_gamma.

    S_gamma(a) = (|a_2|^{g1-1} a_2, ..., |a_m|^{g_{m-1}-1} a_m,
                  |a_1|^{gm-1} a_1).

    When the exponent product is 1, S_gamma is positively homogeneous
    under hat-scaling: with hat_g_i = prod_{k>=i} g_k,
    S_gamma(s^{hat_g} v) = s^{hat_g} S_gamma(v) for s > 0.
    """

    gamma: tuple

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        g = self.gamma
        out = np.empty_like(a)
        m = len(g)
        for i in range(m):
            out[i] = _signed_pow(a[(i + 1) % m], g[i])
        return out

    def hat(self):
        """The tail products hat_g_i = prod_{k=i}^{m} g_k."""
        g = np.asarray(self.gamma)
        return np.cumprod(g[::-1])[::-1]


def _as_rho(rho, m):
    """Normalize a weight spec to a callable coords -> (m, N) array."""
    if callable(rho):
        def tab(x):
            v = np.asarray(rho(x), dtype=float)
            if v.ndim == 1:
                v = np.broadcast_to(v, (m, v.shape[0]))
            return v
        return tab
    arr = np.asarray(rho, dtype=float)
    if arr.ndim == 0:
        const = np.full((m, 1), float(arr))
    elif arr.ndim == 1 and arr.shape[0] == m:
        const = arr.reshape(m, 1).astype(float)
    elif arr.ndim == 2 and arr.shape[0] == m:
        const = arr.astype(float)
    else:
        raise ValueError(f"weight must be scalar, length-{m}, or (m,N); got shape {arr.shape}")
    if np.any(const <= 0):
        raise ValueError("weight rho must be positive")
    return lambda x, _c=const: _c


class NonlinearMap:
    """A vector nonlinearity F(x,t) with Jacobian and structure data.

    Attributes
    ----------
    m : int
        Number of components.
    alpha : ndarray
        Coupling exponents with product 1 (checked to 1e-12).
    kind : str
        Catalog tag.
    convex, potential : bool
        Structural flags; ``potential`` means F = rho * grad(f) with a
        symmetric Jacobian.
    """

    def __init__(self, m, F, A, alpha, rho=1.0, kind="custom",
                 convex=False, potential=False):
        self.m = int(m)
        self._F = F
        self._A = A
        self.alpha = np.asarray(alpha, dtype=float)
        if self.alpha.shape != (self.m,):
            raise ValueError("alpha must have one exponent per component")
        if np.any(self.alpha <= 0):
            raise ValueError("alpha exponents must be positive")
        if abs(float(np.prod(self.alpha)) - 1.0) > 1e-12:
            raise ValueError(f"alpha product must be 1, got {np.prod(self.alpha)}")
        self.rho = _as_rho(rho, self.m)
        self.kind = kind
        self.convex = bool(convex)
        self.potential = bool(potential)
        self.shift = ShiftEval(tuple(self.alpha))

    # evaluation works on t of shape (m,) or (m, K); x may be None or a
    # coordinate array, and broadcasting pairs a single t column with all
    # nodes (or vice versa).
    def F(self, x, t):
        t = np.asarray(t, dtype=float)
        single = t.ndim == 1
        tt = t.reshape(self.m, -1) if single else t
        out = self._F(x, tt, self)
        return out[:, 0] if single else out

    def A(self, x, t):
        t = np.asarray(t, dtype=float)
        single = t.ndim == 1
        tt = t.reshape(self.m, -1) if single else t
        out = self._A(x, tt, self)
        return out[:, :, 0] if single else out


def eval_F(nlmap: NonlinearMap, x, t):
    """Evaluate F(x,t); raises SaturationError on overflow."""
    return nlmap.F(x, t)


def eval_A(nlmap: NonlinearMap, x, t):
    """Evaluate the Jacobian A_ij = dF_i/dt_j at (x,t)."""
    return nlmap.A(x, t)


def _normalized(gamma):
    g = np.asarray(gamma, dtype=float)
    return g / float(np.prod(g)) ** (1.0 / len(g))


# ---------------------------------------------------------------------------
# catalog


def _make_exp_shift(m, beta, rho):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (m,) or np.any(beta <= 0):
        raise ValueError("exp-shift requires a positive exponent per component")

    def F(x, t, nl):
        z = beta[:, None] * np.roll(t, -1, axis=0)
        return nl.rho(x) * _guarded_exp(z)

    def A(x, t, nl):
        f = F(x, t, nl)
        K = max(f.shape[1], 1)
        out = np.zeros((m, m, K))
        for i in range(m):
            out[i, (i + 1) % m] = beta[i] * f[i]
        return out

    return NonlinearMap(m, F, A, np.ones(m), rho=rho, kind="exp-shift",
                        convex=True, potential=(m == 1))


def _make_power_composite(m, alpha, beta, rho, tau):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if alpha.shape != (m,) or beta.shape != (m,) or np.any(alpha <= 0) or np.any(beta <= 0):
        raise ValueError("power-composite requires positive alpha and beta tuples")
    if np.prod(alpha * beta) <= 1.0:
        raise ValueError(
            f"power-composite requires prod(alpha*beta) > 1, got {np.prod(alpha * beta)}")
    if tau.shape != (m,) or np.any(tau <= 0):
        raise ValueError("tau must be a positive tuple")

    def F(x, t, nl):
        ts = np.roll(t, -1, axis=0)
        with np.errstate(over="raise"):
            try:
                inner = nl.rho(x) * np.abs(ts) ** beta[:, None] + tau[:, None]
                return inner ** alpha[:, None]
            except FloatingPointError as e:
                raise SaturationError(str(e)) from e

    def A(x, t, nl):
        ts = np.roll(t, -1, axis=0)
        r = nl.rho(x)
        with np.errstate(over="raise", divide="raise"):
            try:
                inner = r * np.abs(ts) ** beta[:, None] + tau[:, None]
                outer = alpha[:, None] * inner ** (alpha[:, None] - 1.0)
                dinner = r * beta[:, None] * np.abs(ts) ** (beta[:, None] - 1.0)
            except FloatingPointError as e:
                raise SaturationError(str(e)) from e
        g = outer * dinner
        K = g.shape[1]
        out = np.zeros((m, m, K))
        for i in range(m):
            out[i, (i + 1) % m] = g[i]
        return out

    stored = _normalized(alpha * beta)
    convex = bool(np.all(alpha * beta >= 1.0))
    return NonlinearMap(m, F, A, stored, rho=rho, kind="power-composite",
                        convex=convex)


def _make_affine_power(m, A_matrix, beta, tau):
    Amat = np.asarray(A_matrix, dtype=float)
    beta = np.asarray(beta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if Amat.shape != (m, m) or np.any(Amat < 0) or np.any(np.diag(Amat) <= 0):
        raise ValueError("affine-power requires a nonnegative matrix with positive diagonal")
    if beta.shape != (m,) or np.any(beta <= 0):
        raise ValueError("beta must be a positive tuple")
    if np.prod(beta) <= 1.0:
        raise ValueError(f"affine-power requires prod(beta) > 1, got {np.prod(beta)}")
    if tau.shape != (m,) or np.any(tau <= 0):
        raise ValueError("tau must be a positive tuple")
    shift_rows = [(i + 1) % m for i in range(m)]   # component i reads row i+1 (cyclic)

    def F(x, t, nl):
        K = t.shape[1]
        out = np.empty((m, K))
        with np.errstate(over="raise"):
            try:
                for i, s in enumerate(shift_rows):
                    out[i] = (Amat[s] @ t + tau[s]) ** beta[i]
            except FloatingPointError as e:
                raise SaturationError(str(e)) from e
        return out

    def A(x, t, nl):
        K = t.shape[1]
        out = np.zeros((m, m, K))
        with np.errstate(over="raise"):
            try:
                for i, s in enumerate(shift_rows):
                    base = (Amat[s] @ t + tau[s]) ** (beta[i] - 1.0)
                    for j in range(m):
                        if Amat[s, j] != 0.0:
                            out[i, j] = beta[i] * base * Amat[s, j]
            except FloatingPointError as e:
                raise SaturationError(str(e)) from e
        return out

    stored = _normalized(beta)
    convex = bool(np.all(beta >= 1.0))
    return NonlinearMap(m, F, A, stored, rho=1.0, kind="affine-power",
                        convex=convex)


def _make_product_potential(m, rho):
    # built-in scalar factors e^s: the potential is f(t) = exp(t_1+...+t_m),
    # so every component of F and every Jacobian entry equals rho * f.

    def F(x, t, nl):
        z = np.sum(t, axis=0, keepdims=True)
        return nl.rho(x) * _guarded_exp(z)

    def A(x, t, nl):
        f = F(x, t, nl)
        K = f.shape[1]
        out = np.empty((m, m, K))
        for i in range(m):
            for j in range(m):
                out[i, j] = f[i]
        return out

    return NonlinearMap(m, F, A, np.ones(m), rho=rho, kind="product-potential",
                        convex=True, potential=True)


def _make_custom(m, expressions, jacobian=None, alpha=None, rho=1.0,
                 convex=False, potential=False):
    if len(expressions) != m:
        raise ValueError(f"need {m} component expressions, got {len(expressions)}")
    comp = [_compile_expression(s, m) for s in expressions]
    jac = None
    if jacobian is not None:
        if len(jacobian) != m or any(len(row) != m for row in jacobian):
            raise ValueError("jacobian expression table must be m x m")
        jac = [[_compile_expression(s, m) for s in row] for row in jacobian]
    if alpha is None:
        alpha = np.ones(m)

    def F(x, t, nl):
        K = t.shape[1]
        out = np.empty((m, K))
        with np.errstate(over="raise"):
            try:
                for i in range(m):
                    out[i] = comp[i](t)
            except FloatingPointError as e:
                raise SaturationError(str(e)) from e
        rt = nl.rho(x)
        return out * rt if rt.shape[1] in (1, K) else out

    def A(x, t, nl):
        K = t.shape[1]
        out = np.empty((m, m, K))
        if jac is not None:
            with np.errstate(over="raise"):
                try:
                    for i in range(m):
                        for j in range(m):
                            out[i, j] = jac[i][j](t)
                except FloatingPointError as e:
                    raise SaturationError(str(e)) from e
            rt = nl.rho(x)
            return out * rt[:, None, :] if rt.shape[1] in (1, K) else out
        # central finite differences as the fallback derivative
        for j in range(m):
            step = 1e-6 * (1.0 + np.abs(t[j]))
            tp = t.copy(); tp[j] += step
            tm = t.copy(); tm[j] -= step
            out[:, j, :] = (F(x, tp, nl) - F(x, tm, nl)) / (2.0 * step)
        return out

    return NonlinearMap(m, F, A, alpha, rho=rho, kind="custom",
                        convex=convex, potential=potential)


_KINDS = {
    "exp-shift": _make_exp_shift,
    "power-composite": _make_power_composite,
    "affine-power": _make_affine_power,
    "product-potential": _make_product_potential,
    "custom": _make_custom,
}


def make_example(kind: str, params: dict = None, **kw) -> NonlinearMap:
    """Construct a catalog nonlinearity.

    Kinds and their parameters:

    - ``'exp-shift'``: ``m``, ``beta`` (positive tuple), ``rho``.
      F_i = rho_i exp(beta_i t_{i+1}), indices cyclic.
    - ``'power-composite'``: ``m``, ``alpha``, ``beta``, ``rho``, ``tau``
      with prod(alpha*beta) > 1. F_i = (rho_i |t_{i+1}|^{beta_i} + tau_i)^{alpha_i}.
    - ``'affine-power'``: ``m``, ``A`` (nonnegative matrix, positive
      diagonal), ``tau`` (positive), ``beta`` with prod(beta) > 1.
      F_i = (sum_j A[i+1,j] t_j + tau_{i+1})^{beta_i}, rows cyclically shifted.
    - ``'product-potential'``: ``m``, ``rho``. Gradient of the product
      potential with exponential factors: F_i = rho exp(t_1+...+t_m);
      the Jacobian is symmetric.
    - ``'custom'``: ``m``, ``expressions`` (strings over t1..tm using
      ``+ - * / ^ pow exp``), optional ``jacobian`` expression table
      (finite differences otherwise), optional ``alpha``, ``rho``,
      ``convex``, ``potential``.
    """
    merged = dict(params or {})
    merged.update(kw)
    if kind not in _KINDS:
        raise ValueError(f"unknown nonlinearity kind {kind!r}; choose from {sorted(_KINDS)}")
    if "m" not in merged:
        raise ValueError("parameter 'm' (component count) is required")
    m = int(merged.pop("m"))
    if m < 1:
        raise ValueError("m must be >= 1")
    if kind == "exp-shift":
        return _make_exp_shift(m, merged.pop("beta", np.ones(m)),
                               merged.pop("rho", 1.0))
    if kind == "power-composite":
        return _make_power_composite(m, merged.pop("alpha"), merged.pop("beta"),
                                     merged.pop("rho", 1.0),
                                     np.asarray(merged.pop("tau", np.ones(m))))
    if kind == "affine-power":
        return _make_affine_power(m, merged.pop("A"), merged.pop("beta"),
                                  np.asarray(merged.pop("tau", np.ones(m))))
    if kind == "product-potential":
        return _make_product_potential(m, merged.pop("rho", 1.0))
    return _make_custom(m, merged.pop("expressions"),
                        jacobian=merged.pop("jacobian", None),
                        alpha=merged.pop("alpha", None),
                        rho=merged.pop("rho", 1.0),
                        convex=merged.pop("convex", False),
                        potential=merged.pop("potential", False))


# ---------------------------------------------------------------------------
# condition verification


@dataclass(frozen=True)
class SampleSpec:
    """Finite sampling plan for the condition checks."""

    t_max: float = 20.0
    n_t: int = 250
    n_pairs: int = 1000
    kappas: tuple = (0.5, 1.0, 2.0)
    seed: int = 0


@dataclass
class ConditionReport:
    cond_A: bool
    cond_B: bool
    cond_C: bool
    cond_D: bool
    M_by_kappa: dict
    samples: dict
    witness: dict = field(default_factory=dict)

    def all_pass(self):
        return self.cond_A and self.cond_B and self.cond_C and self.cond_D


def _sample_magnitudes(rng, m, t_max, n):
    mags = np.geomspace(1e-2 * t_max, t_max, n)
    dirs = rng.random((n, m)) + 1e-3
    dirs /= dirs.max(axis=1, keepdims=True)
    return mags[:, None] * dirs          # rows are t samples with |t|_inf = mag


def verify_conditions(nlmap: NonlinearMap, domain, sample_spec: SampleSpec = None
                      ) -> ConditionReport:
    """Check conditions (A)-(D) on a finite sample and report.

    Failures are report contents (with a witness point), never exceptions.
    (C) is verified by locating the smallest sampled threshold M(kappa)
    beyond which F >= kappa rho S_alpha holds on every sample; the check
    fails when violations persist into the top fifth of the magnitude
    range (no evidence of an asymptotic threshold).
    """
    ss = sample_spec or SampleSpec()
    rng = np.random.default_rng(ss.seed)
    m = nlmap.m
    x_all = domain.coords if domain is not None else None
    witness = {}

    # (A): strict positivity of F(x, 0) at every node
    F0 = nlmap.F(x_all, np.zeros((m, 1)))
    cond_A = bool(np.all(F0 > 0))
    if not cond_A:
        bad = np.argwhere(F0 <= 0)[0]
        witness["A"] = {"node": int(bad[1]), "component": int(bad[0]),
                        "value": float(F0[bad[0], bad[1]])}

    # (B): monotonicity on random ordered pairs 0 <= s <= t
    cond_B = True
    for _ in range(ss.n_pairs):
        t = rng.random(m) * ss.t_max
        s = t * rng.random(m)
        try:
            Fs = nlmap.F(x_all, s.reshape(m, 1))
            Ft = nlmap.F(x_all, t.reshape(m, 1))
        except SaturationError:
            continue
        scale = 1.0 + np.abs(Ft)
        if np.any(Fs > Ft + 1e-10 * scale):
            cond_B = False
            witness["B"] = {"s": s.tolist(), "t": t.tolist()}
            break

    # (C): threshold search per kappa
    rho_tab = nlmap.rho(x_all)
    tsamples = _sample_magnitudes(rng, m, ss.t_max, ss.n_t)
    M_by_kappa = {}
    cond_C = True
    for kappa in ss.kappas:
        worst = 0.0
        top_viol = None
        for trow in tsamples:
            t = trow.reshape(m, 1)
            try:
                Fv = nlmap.F(x_all, t)
                Sv = nlmap.shift(t)
            except SaturationError:
                continue      # overflow far out implies F huge; no violation
            lhs = Fv
            rhs = kappa * rho_tab * Sv
            if np.any(lhs < rhs - 1e-12 * (1.0 + np.abs(rhs))):
                mag = float(np.max(np.abs(trow)))
                if mag > worst:
                    worst = mag
                    top_viol = trow
        M_by_kappa[float(kappa)] = worst
        if worst > 0.8 * ss.t_max:
            cond_C = False
            witness.setdefault("C", {})[float(kappa)] = {
                "t": top_viol.tolist(), "magnitude": worst}
    # (D): strong connectivity of the Jacobian sparsity pattern
    adj = np.zeros((m, m), dtype=bool)
    for _ in range(20):
        t = (rng.random(m) * ss.t_max * 0.5 + 0.1).reshape(m, 1)
        try:
            Av = nlmap.A(x_all, t)
        except SaturationError:
            continue
        adj |= np.max(np.abs(Av), axis=-1) > 1e-12
    np.fill_diagonal(adj, False)
    cond_D = _strongly_connected(adj) if m > 1 else True
    if not cond_D:
        witness["D"] = {"pattern": adj.astype(int).tolist()}

    samples = {"t_max": ss.t_max, "n_t": ss.n_t, "n_pairs": ss.n_pairs,
               "kappas": list(ss.kappas), "seed": ss.seed}
    return ConditionReport(cond_A, cond_B, cond_C, cond_D, M_by_kappa,
                           samples, witness)


def _strongly_connected(adj):
    m = adj.shape[0]

    def reach(mat):
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(mat[i]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen) == m

    return reach(adj) and reach(adj.T)


@dataclass(frozen=True)
class EnvelopeFit:
    """Empirically fitted envelope constants (sample maxima + 2% margin)."""

    rho0: np.ndarray     # positive weight min(rho, F(.,0)), per component/node
    C0: float            # C0 * F >= rho0 * S_alpha on the sample box
    B: float             # F >= kappa*rho*S_alpha - B*rho on the sample box
    kappa: float
    t_max: float


def lower_envelope(nlmap: NonlinearMap, kappa: float, domain=None,
                   t_max: float = 40.0, n_t: int = 400, seed: int = 0
                   ) -> EnvelopeFit:
    """Fit the two lower-envelope inequalities over a sample box.

    Returns constants such that, on all samples drawn,
    ``C0 * F(x,t) >= rho0(x) * S_alpha(t)`` and
    ``F(x,t) >= kappa * rho(x) * S_alpha(t) - B * rho(x)``.
    The fitted maxima carry a 2% inflation so that asymptotically-sharp
    envelopes (suprema not attained on any finite box) still satisfy the
    inequalities strictly.
    """
    m = nlmap.m
    x_all = domain.coords if domain is not None else None
    rng = np.random.default_rng(seed)
    rho_tab = nlmap.rho(x_all)
    F0 = nlmap.F(x_all, np.zeros((m, 1)))
    rho0 = np.minimum(rho_tab, F0)
    if np.any(rho0 <= 0):
        raise ValueError("envelope fit failed: F(x,0) or rho nonpositive")

    ratio = 1.0
    bfit = 0.0
    for trow in _sample_magnitudes(rng, m, t_max, n_t):
        t = trow.reshape(m, 1)
        try:
            Fv = nlmap.F(x_all, t)
            Sv = nlmap.shift(t)
        except SaturationError:
            continue
        if np.any(Fv <= 0) or not np.all(np.isfinite(Fv)):
            raise ValueError("envelope fit failed: F not positive on samples "
                             "(coupling condition violated)")
        ratio = max(ratio, float(np.max(rho0 * Sv / Fv)))
        gap = (kappa * rho_tab * Sv - Fv) / rho_tab
        bfit = max(bfit, float(np.max(gap)))
    return EnvelopeFit(rho0=rho0, C0=1.02 * ratio, B=1.02 * max(bfit, 0.0),
                       kappa=float(kappa), t_max=float(t_max))


# ---------------------------------------------------------------------------
# tiny arithmetic expression language for custom maps

_TOKEN_OPS = set("+-*/^(),")


def _tokenize(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
        elif ch in _TOKEN_OPS:
            toks.append((ch, ch, i))
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < n and (src[j].isdigit() or src[j] in ".eE"
                             or (src[j] in "+-" and src[j - 1] in "eE")):
                j += 1
            try:
                val = float(src[i:j])
            except ValueError:
                raise ExpressionError(f"bad number at position {i}", pos=i)
            toks.append(("num", val, i))
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(("name", src[i:j], i))
            i = j
        else:
            raise ExpressionError(f"unexpected character {ch!r} at position {i}", pos=i)
    toks.append(("end", None, n))
    return toks


def _compile_expression(src: str, m: int):
    """Compile an expression over t1..tm into a callable (m,K)->(K,)."""
    toks = _tokenize(src)
    pos = [0]

    def peek():
        return toks[pos[0]]

    def take(kind=None):
        tok = toks[pos[0]]
        if kind is not None and tok[0] != kind:
            raise ExpressionError(
                f"expected {kind} at position {tok[2]}, found {tok[0]}", pos=tok[2])
        pos[0] += 1
        return tok

    def atom():
        kind, val, at = peek()
        if kind == "num":
            take()
            return lambda t, _v=val: np.full(t.shape[1], _v)
        if kind == "name":
            take()
            if val == "exp":
                take("(")
                inner = expr()
                take(")")
                return lambda t, _f=inner: _guarded_exp(_f(t))
            if val == "pow":
                take("(")
                base = expr()
                take(",")
                ex = expr()
                take(")")
                return lambda t, _b=base, _e=ex: _b(t) ** _e(t)
            if val.startswith("t") and val[1:].isdigit():
                k = int(val[1:])
                if not (1 <= k <= m):
                    raise ExpressionError(
                        f"variable {val} out of range 1..{m} at position {at}", pos=at)
                return lambda t, _k=k - 1: t[_k]
            raise ExpressionError(f"unknown name {val!r} at position {at}", pos=at)
        if kind == "(":
            take()
            inner = expr()
            take(")")
            return inner
        raise ExpressionError(f"unexpected token at position {at}", pos=at)

    def power():
        base = atom()
        if peek()[0] == "^":
            take()
            ex = unary()          # right-associative
            return lambda t, _b=base, _e=ex: _b(t) ** _e(t)
        return base

    def unary():
        if peek()[0] == "-":
            take()
            inner = unary()
            return lambda t, _f=inner: -_f(t)
        return power()

    def term():
        left = unary()
        while peek()[0] in ("*", "/"):
            op = take()[0]
            right = unary()
            if op == "*":
                left = lambda t, _l=left, _r=right: _l(t) * _r(t)
            else:
                left = lambda t, _l=left, _r=right: _l(t) / _r(t)
        return left

    def expr():
        left = term()
        while peek()[0] in ("+", "-"):
            op = take()[0]
            right = term()
            if op == "+":
                left = lambda t, _l=left, _r=right: _l(t) + _r(t)
            else:
                left = lambda t, _l=left, _r=right: _l(t) - _r(t)
        return left

    result = expr()
    take("end")
    return result
