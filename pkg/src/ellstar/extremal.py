"""Threshold tracing and extremal-solution diagnostics.

Along each ray Lambda = (lam, lam*sigma) the convergence region of the
monotone iteration is a half-open interval (0, lam_star(sigma)); bisection
on the solver verdict locates the endpoint. The extremal solution is then
approached as a monotone limit lam_k -> lam_star from below. Also here:
the radial growth-bound classifier, a quadrature probe of the stability
inequality for potential systems, and the boundary-distance lower bound
for Green solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import solve
from .mesh import _sphere_area
from .minimal import IterationCaps, l1_norm, minimal_solution
from .nonlinearity import lower_envelope
from .spectral import ComposedOperator, lambda_star, stability_eigen, theta_star

__all__ = [
    "Bracket",
    "ExtremalSample",
    "ExtremalProfile",
    "TraceResult",
    "RadialBoundReport",
    "StabilityProbeReport",
    "GreenBoundReport",
    "bracket_lambda_star",
    "lambda_star_bisect",
    "trace_hypersurface",
    "extremal_profile",
    "radial_bound_check",
    "stability_inequality_probe",
    "green_lower_bound_probe",
]

_LAMBDA_FLOOR = 1e-12
_LAMBDA_CEIL = 1e12


class Bracket(tuple):
    """A (lambda_lo, lambda_hi) verdict pair.

    Carries the independently computed spectral upper bound C0*theta_star
    (logged, never used to steer the search) and the converged solution at
    lambda_lo for warm starts.
    """

    def __new__(cls, pair, spectral_bound=None, lo_solution=None):
        self = super().__new__(cls, tuple(pair))
        self.spectral_bound = spectral_bound
        self.lo_solution = lo_solution
        return self

    @property
    def lo(self):
        return self[0]

    @property
    def hi(self):
        return self[1]


def _direction(sigma, m):
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if sigma.shape != (m - 1,):
        raise ValueError(f"sigma must have {m - 1} components, got {sigma.shape}")
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    return np.concatenate(([1.0], sigma)), sigma


def _rho0_interior(env_rho0, domain, m):
    # the envelope weight may be per-node or constant-per-component
    if env_rho0.shape[1] == domain.coords.shape[0]:
        return env_rho0[:, domain.interior]
    return np.repeat(env_rho0[:, :1], domain.n_interior, axis=1)


def spectral_upper_bound(Ls, nlmap, sigma):
    """The bound C0 * theta_star(sigma) from the envelope-weighted problem.

    Every convergent lam on the sigma-ray satisfies lam <= C0 theta_star,
    where theta_star belongs to the composed eigenproblem weighted by
    rho_0 = min(rho, F(.,0)). Used as a cross-check on brackets.
    """
    dom = Ls[0].domain
    env = lower_envelope(nlmap, kappa=1.0, domain=dom)
    op = ComposedOperator.build(Ls, _rho0_interior(env.rho0, dom, nlmap.m),
                                nlmap.alpha)
    pair = lambda_star(op)
    _, sigma = _direction(sigma, nlmap.m)
    return env.C0 * theta_star(sigma, pair.lambda_star, nlmap.alpha)


def bracket_lambda_star(Ls, nlmap, sigma, tol: float = 1e-10,
                        caps: IterationCaps = None, start: float = 1.0) -> Bracket:
    """Geometric search for a (convergent, nonconvergent) scale pair.

    Doubles up from (or halves down to) a convergent scale; the up-search
    warm-starts each solve from the last convergent solution. Raises when
    no convergent scale exists above 1e-12 — with F(x,0) > 0 that signals
    a misconfigured map rather than a genuinely empty region.
    """
    dirvec, sigma = _direction(sigma, nlmap.m)
    caps = caps or IterationCaps()
    lam = float(start)
    out = minimal_solution(Ls, lam * dirvec, nlmap, tol=tol, caps=caps)
    if out.status == "converged":
        lo, lo_sol = lam, out.solution
        hi = None
        while hi is None:
            lam *= 2.0
            if lam > _LAMBDA_CEIL:
                raise RuntimeError(f"still convergent at scale {lam / 2:.3g}; "
                                   "no finite threshold detected below 1e12")
            nxt = minimal_solution(Ls, lam * dirvec, nlmap, tol=tol, caps=caps,
                                   start=lo_sol)
            if nxt.status == "converged":
                lo, lo_sol = lam, nxt.solution
            else:
                hi = lam
    else:
        while out.status != "converged":
            lam *= 0.5
            if lam < _LAMBDA_FLOOR:
                raise RuntimeError("no convergent scale above 1e-12; "
                                   "check the map's positivity and monotonicity")
            out = minimal_solution(Ls, lam * dirvec, nlmap, tol=tol, caps=caps)
        lo, lo_sol = lam, out.solution
        hi = 2.0 * lam
    bound = spectral_upper_bound(Ls, nlmap, sigma)
    return Bracket((lo, hi), spectral_bound=bound, lo_solution=lo_sol)


@dataclass(frozen=True)
class ExtremalSample:
    """One point of the threshold hypersurface along a sigma-ray."""

    sigma: np.ndarray
    lambda_lo: float
    lambda_hi: float
    lambda_star_est: float
    resolution: int
    profile_near_star: np.ndarray | None   # minimal solution at profile_lambda
    profile_lambda: float | None
    eta1_near_star: float | None
    l1_history: np.ndarray                 # rows (lambda, L1 norm), lambda ascending
    spectral_bound: float | None
    warnings: tuple = ()


def lambda_star_bisect(Ls, nlmap, sigma, tol_lambda: float = 1e-4,
                       tol: float = 1e-10, caps: IterationCaps = None,
                       bracket: Bracket = None, profile_margin: float = 0.01,
                       compute_eta1: bool = True) -> ExtremalSample:
    """Bisect the solver verdict along the sigma-ray to relative tol_lambda.

    Convergent midpoints raise lambda_lo (and warm-start later solves);
    nonconvergent ones lower lambda_hi. Iteration-cap verdicts also lower
    lambda_hi — the conservative direction, since an ambiguous scale must
    not certify convergence — and are recorded as warnings. The final
    bracket therefore always satisfies converged-at-lo, not-converged-at-hi.
    """
    dirvec, sigma = _direction(sigma, nlmap.m)
    caps = caps or IterationCaps()
    if bracket is None:
        bracket = bracket_lambda_star(Ls, nlmap, sigma, tol=tol, caps=caps)
    lo, hi = float(bracket.lo), float(bracket.hi)
    if not lo < hi:
        raise ValueError(f"bracket endpoints out of order: {lo} >= {hi}")
    lo_sol = bracket.lo_solution
    dom = Ls[0].domain
    warnings = []
    l1_hist = [] if lo_sol is None else [(lo, l1_norm(lo_sol, dom))]
    while hi - lo > tol_lambda * hi:
        mid = 0.5 * (lo + hi)
        out = minimal_solution(Ls, mid * dirvec, nlmap, tol=tol, caps=caps,
                               start=lo_sol)
        if out.status == "converged":
            lo, lo_sol = mid, out.solution
            l1_hist.append((mid, l1_norm(out.solution, dom)))
        else:
            if out.status == "iteration-cap":
                warnings.append(f"iteration cap at scale {mid:.10g}; "
                                "treated as nonconvergent")
            hi = mid

    lam_prof = hi * (1.0 - profile_margin)
    prof = None
    out = minimal_solution(Ls, lam_prof * dirvec, nlmap, tol=tol, caps=caps,
                           start=lo_sol if lam_prof >= lo else None)
    if out.status == "converged":
        prof = out.solution
    else:
        warnings.append(f"profile solve at scale {lam_prof:.10g} was "
                        f"{out.status}; reporting the lambda_lo profile instead")
        lam_prof, prof = lo, lo_sol
    eta1 = None
    if compute_eta1 and prof is not None:
        eta1 = stability_eigen(Ls, lam_prof * dirvec, nlmap, prof).eta1

    hist = np.asarray(sorted(l1_hist), dtype=float).reshape(-1, 2)
    return ExtremalSample(sigma=sigma, lambda_lo=lo, lambda_hi=hi,
                          lambda_star_est=0.5 * (lo + hi),
                          resolution=dom.resolution,
                          profile_near_star=prof, profile_lambda=lam_prof,
                          eta1_near_star=eta1, l1_history=hist,
                          spectral_bound=bracket.spectral_bound,
                          warnings=tuple(warnings))


class TraceResult(list):
    """List of ExtremalSample with per-sigma failures in ``errors``."""

    def __init__(self, *args):
        super().__init__(*args)
        self.errors = []


def trace_hypersurface(Ls, nlmap, sigma_grid, tol_lambda: float = 1e-4,
                       tol: float = 1e-10, caps: IterationCaps = None,
                       compute_eta1: bool = True) -> TraceResult:
    """Bisect lambda_star(sigma) for every sigma in the grid.

    Per-sample failures are collected into the result's ``errors`` list
    (pairs of sigma and message), never raised, so a long sweep always
    returns its good rows.
    """
    if nlmap.m < 2:
        raise ValueError("tracing needs m >= 2 (the hypersurface is a point for m=1)")
    result = TraceResult()
    for sig in sigma_grid:
        try:
            result.append(lambda_star_bisect(Ls, nlmap, sig,
                                             tol_lambda=tol_lambda, tol=tol,
                                             caps=caps, compute_eta1=compute_eta1))
        except Exception as e:
            result.errors.append((np.asarray(sig, dtype=float).reshape(-1), str(e)))
    return result


@dataclass(frozen=True)
class ExtremalProfile:
    """Monotone-limit approximation of the extremal solution."""

    u_star: np.ndarray       # (m, n_nodes); pointwise supremum of the sweep
    lambdas: np.ndarray      # the lam_k sequence used
    sup_norms: np.ndarray    # ||u_{lam_k}||_inf, nondecreasing
    verdict: str             # bounded-saturating | growing
    threshold: float
    domain: object


def extremal_profile(Ls, nlmap, sigma, sample: ExtremalSample, K: int = 12,
                     tol: float = 1e-10, caps: IterationCaps = None,
                     saturate_threshold: float = 0.01) -> ExtremalProfile:
    """Sweep lam_k = lambda_lo * (1 - 2^-k), k = 1..K, and take the limit.

    The schedule is anchored at the bracket's verified-convergent endpoint
    so that every lam_k provably lies inside the convergence region; with
    a tight bracket the endpoint is within tol_lambda of the threshold and
    the anchoring bias is negligible against the 2^-K resolution.

    The boundedness verdict compares the sup-norm growth over the last
    three doublings against ``saturate_threshold`` (relative); the raw
    history is returned so the judgement can be redone with any threshold.
    """
    if K < 4:
        raise ValueError("need at least 4 doublings to judge saturation")
    dirvec, sigma = _direction(sigma, nlmap.m)
    caps = caps or IterationCaps()
    anchor = sample.lambda_lo
    lams = anchor * (1.0 - 0.5 ** np.arange(1, K + 1))
    dom = Ls[0].domain
    prev = None
    sups = []
    for lam in lams:
        out = minimal_solution(Ls, lam * dirvec, nlmap, tol=tol, caps=caps,
                               start=prev)
        if out.status != "converged":
            raise RuntimeError(f"{out.status} at scale {lam:.10g} below the "
                               "verified-convergent endpoint; bracket inconsistent")
        if prev is not None:
            drop = float(np.min(out.solution - prev))
            if drop < -1e-9 * (1.0 + sups[-1]):
                raise RuntimeError("profile sweep lost pointwise monotonicity")
        prev = out.solution
        sups.append(float(np.max(np.abs(out.solution))))
    sups = np.asarray(sups)
    growth = (sups[-1] - sups[-4]) / max(sups[-1], 1e-300)
    verdict = "bounded-saturating" if growth < saturate_threshold else "growing"
    return ExtremalProfile(u_star=prev, lambdas=lams, sup_norms=sups,
                           verdict=verdict, threshold=saturate_threshold,
                           domain=dom)


@dataclass(frozen=True)
class RadialBoundReport:
    bound_class: str        # "I" (sup), "II" (log), or "III" (power)
    constant: float         # smallest C matching the bound on sampled radii
    exponent: float | None  # the power for class III
    n: int
    Lam: np.ndarray


def radial_bound_check(profile: ExtremalProfile, n: int, Lam) -> RadialBoundReport:
    """Fit the smallest constant in the dimension-appropriate radial bound.

    Class I (2 <= n <= 9): a finite sup bound. Class II (n = 10):
    u(r) <= C (1 + |log r|). Class III (n >= 11): u(r) <= C r^e with
    e = -n/2 + sqrt(n-1) + 2. Sampled at all grid radii in (0, 1].
    """
    dom = profile.domain
    if dom.kind != "ball":
        raise ValueError("radial bound check applies to ball domains")
    r = dom.coords
    umax = np.max(np.abs(profile.u_star), axis=0)
    inner = r > 0
    if n <= 1:
        raise ValueError("radial bounds need n >= 2")
    if n <= 9:
        cls, expo = "I", None
        C = float(np.max(umax))
    elif n == 10:
        cls, expo = "II", None
        C = float(np.max(umax[inner] / (1.0 + np.abs(np.log(r[inner])))))
    else:
        expo = -n / 2.0 + math.sqrt(n - 1.0) + 2.0
        cls = "III"
        C = float(np.max(umax[inner] * r[inner] ** (-expo)))
    if not np.isfinite(C):
        raise ValueError("no finite bound constant on the sampled radii; "
                         "refine the grid")
    return RadialBoundReport(bound_class=cls, constant=C, exponent=expo,
                             n=int(n), Lam=np.asarray(Lam, dtype=float))


# ---------------------------------------------------------------------------
# quadrature probes


def _sine_field(domain, coeffs):
    """A smooth field vanishing on the boundary, from sine coefficients."""
    x = domain.coords
    if domain.kind == "rectangle":
        kmax = coeffs.shape[0]
        out = np.zeros(x.shape[0])
        for k in range(1, kmax + 1):
            for l in range(1, kmax + 1):
                out += coeffs[k - 1, l - 1] * np.sin(k * np.pi * x[:, 0] / domain.width) \
                    * np.sin(l * np.pi * x[:, 1] / domain.height)
        return out
    out = np.zeros(x.shape[0])
    for k in range(1, coeffs.shape[0] + 1):
        out += coeffs[k - 1] * np.sin(k * np.pi * x)
    return out


def _grad_energy(domain, psi):
    """Quadrature of |grad psi|^2 by forward differences on grid edges."""
    if domain.kind == "interval":
        h = domain.h[0]
        d = np.diff(psi) / h
        return float(np.sum(d * d) * h)
    if domain.kind == "ball":
        h = domain.h[0]
        nn = domain.dimension
        r_mid = (np.arange(psi.shape[0] - 1) + 0.5) * h
        d = np.diff(psi) / h
        return float(_sphere_area(nn) * np.sum(d * d * r_mid ** (nn - 1)) * h)
    R = domain.resolution
    hx, hy = domain.h
    grid = psi.reshape(R, R)              # grid[iy, ix], x fastest
    wx = np.full(R, hx); wx[0] = wx[-1] = hx / 2.0
    wy = np.full(R, hy); wy[0] = wy[-1] = hy / 2.0
    dx = np.diff(grid, axis=1) / hx       # (R, R-1)
    dy = np.diff(grid, axis=0) / hy       # (R-1, R)
    ex = np.sum(dx * dx, axis=1) * hx     # per y-row
    ey = np.sum(dy * dy, axis=0) * hy     # per x-column
    return float(ex @ wy + ey @ wx)


@dataclass(frozen=True)
class StabilityProbeReport:
    max_gap: float          # max over trials of LHS - RHS
    violations: int         # trials with LHS > RHS + 1e-10
    trials: int
    gaps: np.ndarray


def stability_inequality_probe(Ls, Lam, nlmap, u, trials: int = 100,
                               seed: int = 0, modes: int = 4) -> StabilityProbeReport:
    """Test the quadratic-form inequality of stable potential systems.

    For random smooth fields psi vanishing on the boundary, compares

        sum_ij int f_ij(u) psi_i psi_j  <=  sum_i (1/Lam_i) int |grad psi_i|^2

    by quadrature and discrete gradients, where f is the scalar potential
    with F = rho grad f (so f_ij = A_ij / rho_i). Reports the worst gap;
    violations at honest Lam indicate instability of the frozen profile.
    """
    if not nlmap.potential:
        raise ValueError("the inequality probe applies to potential systems "
                         "(symmetric Jacobian) only")
    Ls = tuple(Ls)
    m = len(Ls)
    Lam = np.asarray(Lam, dtype=float)
    dom = Ls[0].domain
    u = np.asarray(u, dtype=float)
    if u.shape == (m, dom.n_interior):
        full = np.zeros((m, dom.coords.shape[0]))
        full[:, dom.interior] = u
        u = full
    A_tab = nlmap.A(dom.coords, u)                 # (m, m, n_nodes)
    rho_tab = nlmap.rho(dom.coords)
    f_tab = A_tab / rho_tab[:, None, :]
    w = dom.quad_w
    rng = np.random.default_rng(seed)
    gaps = np.empty(trials)
    shape = (modes, modes) if dom.kind == "rectangle" else (modes,)
    for t in range(trials):
        psi = np.stack([_sine_field(dom, rng.standard_normal(shape))
                        for _ in range(m)])
        lhs = 0.0
        for i in range(m):
            for j in range(m):
                lhs += float(np.sum(w * f_tab[i, j] * psi[i] * psi[j]))
        rhs = sum(_grad_energy(dom, psi[i]) / Lam[i] for i in range(m))
        gaps[t] = lhs - rhs
    return StabilityProbeReport(max_gap=float(np.max(gaps)),
                                violations=int(np.sum(gaps > 1e-10)),
                                trials=trials, gaps=gaps)


def _boundary_distance(domain):
    x = domain.coords
    if domain.kind == "interval":
        return np.minimum(x, 1.0 - x)
    if domain.kind == "ball":
        return 1.0 - x
    dx = np.minimum(x[:, 0], domain.width - x[:, 0])
    dy = np.minimum(x[:, 1], domain.height - x[:, 1])
    return np.minimum(dx, dy)


@dataclass(frozen=True)
class GreenBoundReport:
    C2: float               # min over trials of min_x v / (delta * ||h||_L1(delta))
    samples: int
    per_trial: np.ndarray


def green_lower_bound_probe(L, domain=None, trials: int = 20, seed: int = 0,
                            fields=None) -> GreenBoundReport:
    """Empirical boundary-distance lower bound for nonnegative solves.

    For random (or supplied) nonnegative interior loads h, solves L v = h
    and measures C2 = min over interior nodes of v / (delta ||h||_L1(delta)),
    delta being the boundary distance. Inverse positivity makes C2 > 0;
    zero loads are skipped. Stability of C2 under refinement is the
    caller's check.
    """
    dom = domain if domain is not None else L.domain
    delta = _boundary_distance(dom)
    d_int = delta[dom.interior]
    w_int = dom.quad_w[dom.interior]
    rng = np.random.default_rng(seed)
    if fields is None:
        fields = [rng.random(dom.n_interior) for _ in range(trials)]
    per = []
    for h in fields:
        h = np.asarray(h, dtype=float)
        if np.any(h < 0):
            raise ValueError("loads must be nonnegative")
        weight = float(np.sum(w_int * d_int * h))
        if weight == 0.0:
            continue
        v, _ = solve(L.matrix, h)
        if np.min(v) <= 0:
            raise RuntimeError("solve lost positivity on a nonnegative load; "
                               "operator is not inverse-positive")
        per.append(float(np.min(v / (d_int * weight))))
    per = np.asarray(per)
    C2 = float(np.min(per)) if per.size else float("nan")
    return GreenBoundReport(C2=C2, samples=int(per.size), per_trial=per)
