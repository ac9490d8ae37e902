"""Self-checks pinning the oracles of oracles.py.

These tests exercise only the oracle code (closed forms, scipy shooting,
dense numpy references) so that a regression in an oracle is distinguished
from a regression in the package.
"""

import numpy as np
import pytest

import oracles as oc


def test_curve_shape():
    # lam(s) rises from 0, peaks once, decays; spot values by hand:
    # s -> 0+ gives lam ~ 8s e^{-s} -> 0.
    s = np.array([1e-6, 0.5, 1.0, 1.4, 2.5, 6.0])
    lam = oc.gelfand_curve(s)
    assert lam[0] < 1e-4
    assert np.all(lam[1:5] > 1.0)
    k = int(np.argmax(lam))
    assert 0 < k < len(s) - 1


def test_lambda_star_closed_form_frozen():
    assert oc.gelfand_lambda_star_closed_form() == pytest.approx(
        oc.GELFAND_LAMBDA_STAR, abs=1e-12)


def test_lambda_star_shooting_matches_closed_form():
    shoot = oc.gelfand_lambda_star_shooting(tol=1e-10)
    assert shoot == pytest.approx(oc.GELFAND_LAMBDA_STAR, abs=1e-8)


def test_center_value_frozen_and_cross_checked():
    closed = oc.gelfand_center_closed_form(1.0)
    assert closed == pytest.approx(oc.GELFAND_CENTER_AT_LAMBDA_1, abs=1e-12)
    shoot = oc.gelfand_center_shooting(1.0)
    assert shoot == pytest.approx(closed, abs=1e-9)


def test_discrete_mu1_formula():
    # eigenvector sin(k pi x) is exact for the 3-point stencil
    res = 65
    A = oc.dirichlet_laplacian_dense(res)
    mu = np.linalg.eigvalsh(A)[0]
    assert mu == pytest.approx(oc.mu1_interval_discrete(res), rel=1e-12)
    assert mu == pytest.approx(np.pi ** 2, rel=1e-3)


def test_dense_newton_matches_time_map():
    u = oc.gelfand_solution_dense(1.0, 513)
    center = u[len(u) // 2]
    # h^2/12 * u'''' discretization error ~ 5e-7 at h=1/512
    assert center == pytest.approx(oc.GELFAND_CENTER_AT_LAMBDA_1, abs=1e-6)


def test_dense_eta1_sane():
    # at lam -> 0 the linearization tends to the Laplacian minus lam
    small = oc.eta1_interval_dense(1e-8, 257)
    assert small == pytest.approx(oc.mu1_interval_discrete(257), abs=1e-6)
    # decreasing along the branch
    vals = [oc.eta1_interval_dense(lam, 257) for lam in (0.5, 1.5, 3.0)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_convergence_order_helper():
    hs = [0.1, 0.05, 0.025]
    errs = [h ** 2 * 3.0 for h in hs]
    assert oc.convergence_order(hs, errs) == pytest.approx(2.0, abs=1e-12)
