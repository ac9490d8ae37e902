"""Minimal positive solutions by monotone iteration from zero.

The iteration u_1 = 0, u_{k+1,i} = lambda_i L_i^{-1} f_i(x, u_k) is
componentwise nondecreasing (inverse positivity of the M-matrices plus
monotonicity of f), so it either converges to the minimal fixed point or
grows without bound. Divergence cannot be detected in finite time in
general; the heuristics here (sup-norm ceiling, sustained-growth window)
are config-exposed and their verdicts are recorded as statuses rather
than exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import solve
from .nonlinearity import SaturationError

__all__ = [
    "IterationCaps",
    "MinimalSolveOutcome",
    "minimal_solution",
    "check_monotone_in_lambda",
    "l1_norm",
]


@dataclass(frozen=True)
class IterationCaps:
    """Blow-up and stopping heuristics for the monotone iteration.

    ceiling: sup-norm beyond which the run is declared diverged.
    growth_window / growth_delta: the run is diverged when the increment
    ratio ||u_{k+1}-u_k|| / ||u_k-u_{k-1}|| stays >= 1 + growth_delta for
    growth_window consecutive steps. The iterate norms themselves are
    useless as a signal — a monotone iteration grows by construction, and
    slowly-convergent runs near the threshold sustain iterate growth for
    hundreds of steps — but the increments contract (ratio -> rate < 1)
    exactly when the run converges and re-accelerate past 1 when it
    escapes.
    max_iter: hard cap; hitting it yields status 'iteration-cap', which
    callers must treat as ambiguous (not evidence of divergence).
    """

    ceiling: float = 1e8
    growth_window: int = 25
    growth_delta: float = 1e-3
    max_iter: int = 50000


@dataclass(frozen=True)
class MinimalSolveOutcome:
    status: str                  # converged | diverged | saturated | iteration-cap
    solution: np.ndarray | None  # (m, n_nodes) full-grid field when converged
    iterations: int
    sup_history: np.ndarray      # ||u_k||_inf per step (nondecreasing for
                                 # ascending runs, i.e. from zero/subsolution)
    residuals: np.ndarray | None # per-component ||L_i u_i - lam_i f_i||_inf


def minimal_solution(Ls, Lam, nlmap, tol: float = 1e-10,
                     caps: IterationCaps = None, start=None) -> MinimalSolveOutcome:
    """Run the monotone iteration at parameter tuple Lam.

    Starts from zero, or from ``start``: a subsolution (e.g. the minimal
    solution at a smaller parameter tuple) keeps the iteration increasing
    toward the same limit, a supersolution (solution at a larger tuple)
    makes it decrease onto a fixed point from above. The direction is
    detected on the first step and the corresponding one-sided
    monotonicity is asserted from then on; a from-zero run that decreases
    signals a violated monotonicity condition and raises.

    Convergence requires both the increment test
    ``||u_{k+1} - u_k||_inf <= tol (1 + ||u_k||_inf)`` and the residual of
    the discrete equation at tol relative to the forcing scale; monotone
    iterations can creep, so the increment alone is never trusted.
    """
    caps = caps or IterationCaps()
    Ls = tuple(Ls)
    m = len(Ls)
    Lam = np.asarray(Lam, dtype=float)
    if Lam.shape != (m,) or np.any(Lam <= 0):
        raise ValueError("Lam must be a positive tuple, one entry per operator")
    if nlmap.m != m:
        raise ValueError(f"map has {nlmap.m} components but {m} operators given")
    dom = Ls[0].domain
    n = dom.n_interior
    x_int = dom.interior_coords()

    if start is None:
        u = np.zeros((m, n))
    else:
        u = np.asarray(start, dtype=float)
        if u.shape == (m, dom.coords.shape[0]):
            u = u[:, dom.interior].copy()
        elif u.shape == (m, n):
            u = u.copy()
        else:
            raise ValueError(f"start field has shape {u.shape}")

    history = [float(np.max(np.abs(u))) if u.size else 0.0]
    streak = 0
    prev_inc = None
    # iteration direction: from zero the sequence must rise (Lemma-style
    # induction); an explicit start may also sit above the target and fall
    direction = "up" if start is None else None
    status = "iteration-cap"
    residuals = None
    k = 0
    for k in range(1, caps.max_iter + 1):
        try:
            Fv = nlmap.F(x_int, u)
        except SaturationError:
            status = "saturated"
            break
        new = np.empty_like(u)
        for i in range(m):
            w, _ = solve(Ls[i].matrix, Fv[i])
            new[i] = Lam[i] * w
        slack = 1e-9 * (1.0 + history[-1])
        if direction is None:
            if float(np.min(new - u)) >= -slack:
                direction = "up"
            elif float(np.max(new - u)) <= slack:
                direction = "down"
            else:
                direction = "free"     # start not comparable to its image
        if direction == "up":
            drop = float(np.min(new - u))
            if drop < -slack:
                raise RuntimeError(
                    f"iterate decreased by {-drop:.3e} at step {k}; "
                    "the nonlinearity is not monotone on the iterate range")
        elif direction == "down":
            rise = float(np.max(new - u))
            if rise > slack:
                raise RuntimeError(
                    f"iterate increased by {rise:.3e} at step {k} of a "
                    "descending run; start was not a supersolution")
        inc = float(np.max(np.abs(new - u)))
        unorm = float(np.max(np.abs(new)))
        history.append(unorm)
        u = new
        if unorm > caps.ceiling:
            status = "diverged"
            break
        if direction == "up" and prev_inc is not None and prev_inc > 0 \
                and inc >= (1.0 + caps.growth_delta) * prev_inc:
            streak += 1
            if streak >= caps.growth_window:
                status = "diverged"
                break
        else:
            streak = 0
        prev_inc = inc
        if inc <= tol * (1.0 + unorm):
            try:
                Fnew = nlmap.F(x_int, u)
            except SaturationError:
                status = "saturated"
                break
            res = np.empty(m)
            ok = True
            for i in range(m):
                rhs = Lam[i] * Fnew[i]
                res[i] = float(np.max(np.abs(Ls[i].matrix.dot(u[i]) - rhs)))
                # backward-error scale: residuals below eps*||L||*||u|| are
                # not achievable, so the gate must include the matrix norm
                scale = (Ls[i].matrix.inf_norm() * float(np.max(np.abs(u[i])))
                         + float(np.max(np.abs(rhs))))
                if res[i] > tol * (1.0 + scale):
                    ok = False
            if ok:
                status = "converged"
                residuals = res
                break
            # residual still creeping; keep iterating

    sol = None
    if status == "converged":
        sol = np.zeros((m, dom.coords.shape[0]))
        sol[:, dom.interior] = u
    return MinimalSolveOutcome(status=status, solution=sol, iterations=k,
                               sup_history=np.asarray(history),
                               residuals=residuals)


def check_monotone_in_lambda(Ls, nlmap, Lam_a, Lam_b, tol: float = 1e-8,
                             caps: IterationCaps = None) -> bool:
    """Whether the minimal solutions at Lam_a <= Lam_b are ordered.

    Solves both from zero. Returns True when u_a <= u_b everywhere (within
    tol), and — when Lam_a < Lam_b strictly in every component — the
    interior inequality is strict as well.
    """
    Lam_a = np.asarray(Lam_a, dtype=float)
    Lam_b = np.asarray(Lam_b, dtype=float)
    out_a = minimal_solution(Ls, Lam_a, nlmap, caps=caps)
    out_b = minimal_solution(Ls, Lam_b, nlmap, caps=caps)
    if out_a.status != "converged" or out_b.status != "converged":
        raise ValueError("both parameter tuples must lie in the convergence region")
    ua, ub = out_a.solution, out_b.solution
    if np.any(ua > ub + tol * (1.0 + np.abs(ub))):
        return False
    if np.all(Lam_a < Lam_b):
        interior = Ls[0].domain.interior
        if not np.all(ub[:, interior] - ua[:, interior] > 0):
            return False
    return True


def l1_norm(u, domain) -> float:
    """Sum over components of the quadrature L1 norm (radial weight built in)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    w = domain.quad_w
    if u.shape[1] == domain.n_interior and u.shape[1] != w.shape[0]:
        full = np.zeros((u.shape[0], w.shape[0]))
        full[:, domain.interior] = u
        u = full
    if u.shape[1] != w.shape[0]:
        raise ValueError(f"field length {u.shape[1]} matches neither the node "
                         f"count {w.shape[0]} nor the interior count {domain.n_interior}")
    return float(np.sum(np.abs(u) @ w))
