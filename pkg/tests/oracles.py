"""Independent oracles for the test suite.

Everything here is computed without importing the package under test:
closed forms, dense numpy linear algebra, and scipy ODE integration only.
Frozen reference values are module constants so any drift in the oracle
itself is caught by the self-checks in test_oracles.py.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

# ---------------------------------------------------------------------------
# 1D Gelfand problem -u'' = lam * e^u on (0,1), u(0)=u(1)=0.
#
# First integral with center value s = u(1/2):  the time map gives the
# exact solution curve
#
#     lam(s) = 8 e^{-s} arcosh(e^{s/2})^2 ,
#
# single-humped in s; its maximum is the fold lam_star.

# frozen values (see test_oracles.py for the self-checks that pin them)
GELFAND_LAMBDA_STAR = 3.513830719125162
GELFAND_CENTER_AT_LAMBDA_1 = 0.14053921440029793


def gelfand_curve(s):
    """Exact lam as a function of the center value s > 0."""
    s = np.asarray(s, dtype=float)
    return 8.0 * np.exp(-s) * np.arccosh(np.exp(s / 2.0)) ** 2


def gelfand_lambda_star_closed_form():
    """Fold point of the exact solution curve, to near machine precision."""
    res = minimize_scalar(lambda s: -gelfand_curve(s), bounds=(0.5, 3.0),
                          method="bounded", options={"xatol": 1e-13})
    return float(gelfand_curve(res.x))


def gelfand_center_closed_form(lam):
    """Center value u(1/2) on the minimal branch at a subcritical lam."""
    res = minimize_scalar(lambda s: -gelfand_curve(s), bounds=(0.5, 3.0),
                          method="bounded", options={"xatol": 1e-13})
    s_fold = float(res.x)
    if not 0 < lam < gelfand_curve(s_fold):
        raise ValueError("lam outside the minimal branch")
    return float(brentq(lambda s: gelfand_curve(s) - lam, 1e-12, s_fold,
                        xtol=1e-14))


def _gelfand_shoot_endpoint(s, lam):
    """Integrate from the center (u=s, u'=0 at x=1/2) out to x=1."""
    def rhs(_x, y):
        return [y[1], -lam * np.exp(y[0])]
    sol = solve_ivp(rhs, (0.5, 1.0), [s, 0.0], rtol=1e-12, atol=1e-12,
                    dense_output=False)
    return sol.y[0, -1]


def gelfand_lambda_star_shooting(tol=1e-10):
    """Fold point by shooting + bisection, independent of the closed form.

    For fixed center value s the boundary residual u(1; s, lam) is strictly
    decreasing in lam, so lam(s) is a root in lam; the fold is the maximum
    of that curve over s, located by golden search.
    """
    def lam_of_s(s):
        return brentq(lambda lam: _gelfand_shoot_endpoint(s, lam), 1e-6, 20.0,
                      xtol=tol)
    res = minimize_scalar(lambda s: -lam_of_s(s), bounds=(0.8, 2.0),
                          method="bounded", options={"xatol": 1e-8})
    return float(lam_of_s(res.x))


def gelfand_center_shooting(lam, tol=1e-12):
    """Minimal-branch center value by shooting, for cross-checking."""
    return float(brentq(lambda s: _gelfand_shoot_endpoint(s, lam),
                        1e-9, 1.0, xtol=tol))


# ---------------------------------------------------------------------------
# dense discrete references on the interval (plain numpy, no sparse code)


def interval_grid(resolution):
    """Uniform grid on [0,1] with `resolution` nodes, h = 1/(resolution-1)."""
    return np.linspace(0.0, 1.0, resolution)


def dirichlet_laplacian_dense(resolution):
    """Dense 3-point -d2/dx2 matrix on the interior nodes."""
    h = 1.0 / (resolution - 1)
    n = resolution - 2
    return (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1)
            - np.diag(np.ones(n - 1), -1)) / h ** 2


def mu1_interval_discrete(resolution):
    """Smallest eigenvalue of the 3-point stencil: (2 - 2 cos(pi h))/h^2."""
    h = 1.0 / (resolution - 1)
    return (2.0 - 2.0 * np.cos(np.pi * h)) / h ** 2


def gelfand_solution_dense(lam, resolution, tol=1e-13):
    """Minimal-branch solution by damped Newton on the dense system."""
    A = dirichlet_laplacian_dense(resolution)
    n = A.shape[0]
    norm_A = np.max(np.sum(np.abs(A), axis=1))
    u = np.zeros(n)
    prev = np.inf
    for _ in range(200):
        r = A @ u - lam * np.exp(u)
        res = np.max(np.abs(r))
        # backward-error gate: the raw residual bottoms out near
        # eps * ||A|| * ||u|| for stiff grids
        floor = tol * (1.0 + norm_A * max(1.0, np.max(np.abs(u)) if n else 1.0))
        if res <= floor or (res < 1e-9 and res >= 0.5 * prev):
            return u
        prev = res
        J = A - lam * np.diag(np.exp(u))
        du = np.linalg.solve(J, -r)
        # keep Newton on the minimal branch: damp big steps
        step = 1.0
        if np.max(np.abs(du)) > 0.5:
            step = 0.5 / np.max(np.abs(du))
        u = u + step * du
    raise RuntimeError("dense Newton failed to converge")


def eta1_interval_dense(lam, resolution):
    """Principal eigenvalue of the linearization, by dense eigvalsh."""
    A = dirichlet_laplacian_dense(resolution)
    u = gelfand_solution_dense(lam, resolution)
    M = A - lam * np.diag(np.exp(u))
    return float(np.linalg.eigvalsh(M)[0])


def convergence_order(hs, errs):
    """Least-squares slope of log err vs log h."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
