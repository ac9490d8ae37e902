"""Monotone iteration: statuses, minimality, ordering in the parameter."""

import numpy as np
import pytest

import oracles as oc
from ellstar import (IterationCaps, OperatorSpec, assemble, build_domain,
                     check_monotone_in_lambda, l1_norm, make_example,
                     minimal_solution)


def center_value(out, dom):
    j = int(np.argmin(np.abs(dom.coords - 0.5)))
    return out.solution[0, j]


# ---------------------------------------------------------------------------
# statuses and basic values


def test_constant_forcing_two_iterations():
    dom = build_domain("interval", 5)
    L = assemble(OperatorSpec(), dom)
    one = make_example("custom", m=1, expressions=["1"])
    out = minimal_solution([L], [1.0], one)
    assert out.status == "converged"
    assert out.iterations == 2
    assert center_value(out, dom) == pytest.approx(0.125)


def test_gelfand_center_value(lap257, gelfand):
    out = minimal_solution([lap257], [1.0], gelfand)
    assert out.status == "converged"
    c = center_value(out, lap257.domain)
    # h^2 discretization error at 1/256 is ~2e-7
    assert c == pytest.approx(oc.GELFAND_CENTER_AT_LAMBDA_1, abs=5e-7)


def test_gelfand_supercritical_diverges(lap257, gelfand):
    out = minimal_solution([lap257], [4.0], gelfand)
    assert out.status == "diverged"
    assert out.solution is None


def test_saturation_status(lap257, gelfand):
    caps = IterationCaps(ceiling=1e300, growth_window=10 ** 9)
    out = minimal_solution([lap257], [5.0], gelfand, caps=caps)
    assert out.status == "saturated"


def test_iteration_cap_status(lap257, gelfand):
    out = minimal_solution([lap257], [1.0], gelfand,
                           caps=IterationCaps(max_iter=3))
    assert out.status == "iteration-cap"
    assert out.iterations == 3


def test_symmetric_system_symmetric_solution(lap257):
    nl = make_example("exp-shift", m=2, beta=[1.0, 1.0])
    out = minimal_solution([lap257, lap257], [0.1, 0.1], nl)
    assert out.status == "converged"
    assert np.allclose(out.solution[0], out.solution[1], atol=1e-12)


def test_rejects_bad_lambda(lap257, gelfand):
    with pytest.raises(ValueError):
        minimal_solution([lap257], [-1.0], gelfand)
    with pytest.raises(ValueError):
        minimal_solution([lap257], [1.0, 1.0], gelfand)


# ---------------------------------------------------------------------------
# invariants


def test_history_nondecreasing_convergent_and_divergent(lap257, gelfand):
    for lam, want in [(1.0, "converged"), (4.0, "diverged")]:
        out = minimal_solution([lap257], [lam], gelfand)
        assert out.status == want
        assert np.all(np.diff(out.sup_history) >= -1e-12)


def test_residuals_pass_at_tol(lap257, gelfand):
    tol = 1e-10
    out = minimal_solution([lap257], [2.0], gelfand, tol=tol)
    u = out.solution[:, lap257.domain.interior]
    F = gelfand.F(lap257.domain.interior_coords(), u)
    res = np.max(np.abs(lap257.matrix.dot(u[0]) - 2.0 * F[0]))
    scale = (lap257.matrix.inf_norm() * np.max(np.abs(u))
             + 2.0 * np.max(np.abs(F)))
    assert res <= tol * (1.0 + scale)
    assert out.residuals is not None and np.all(out.residuals <= tol * (1 + scale))


def test_positive_interior(lap257, gelfand):
    out = minimal_solution([lap257], [1.0], gelfand)
    assert np.all(out.solution[:, lap257.domain.interior] > 0)
    assert np.allclose(out.solution[:, lap257.domain.boundary], 0.0)


def test_minimality_from_supersolution(lap257, gelfand):
    lo = minimal_solution([lap257], [1.0], gelfand, tol=1e-12)
    hi = minimal_solution([lap257], [2.0], gelfand, tol=1e-12)
    # restart at lambda=1 from the solution at lambda=2 (a supersolution):
    # the run descends back onto a fixed point >= the minimal one, and the
    # from-zero iterate is the smallest among the tested starts
    warm = minimal_solution([lap257], [1.0], gelfand, tol=1e-12,
                            start=hi.solution)
    assert warm.status == "converged"
    assert np.all(warm.solution >= lo.solution - 1e-8)
    assert np.max(np.abs(warm.solution - lo.solution)) < 1e-7


def test_warm_start_from_subsolution(lap257, gelfand):
    lo = minimal_solution([lap257], [1.0], gelfand, tol=1e-12)
    warm = minimal_solution([lap257], [2.0], gelfand, tol=1e-12,
                            start=lo.solution)
    cold = minimal_solution([lap257], [2.0], gelfand, tol=1e-12)
    assert warm.status == "converged"
    assert warm.iterations <= cold.iterations
    assert np.max(np.abs(warm.solution - cold.solution)) < 1e-8


def test_continuity_in_lambda(lap257, gelfand):
    base = minimal_solution([lap257], [1.0], gelfand, tol=1e-12)
    gaps = []
    for eps in (0.1, 0.01, 0.001):
        pert = minimal_solution([lap257], [1.0 + eps], gelfand, tol=1e-12)
        gaps.append(np.max(np.abs(pert.solution - base.solution)))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


# ---------------------------------------------------------------------------
# ordering in the parameter


def test_monotone_in_lambda_pairs(lap257, gelfand):
    assert check_monotone_in_lambda([lap257], gelfand, [1.0], [1.0])
    assert check_monotone_in_lambda([lap257], gelfand, [1.0], [2.0])
    assert not check_monotone_in_lambda([lap257], gelfand, [2.0], [1.0])


def test_monotone_requires_convergence(lap257, gelfand):
    with pytest.raises(ValueError):
        check_monotone_in_lambda([lap257], gelfand, [1.0], [10.0])


# ---------------------------------------------------------------------------
# quadrature


def test_l1_norm_constant_interval():
    dom = build_domain("interval", 513)
    assert l1_norm(np.ones(dom.coords.shape[0]), dom) == pytest.approx(1.0)
    # two components double it
    u2 = np.ones((2, dom.coords.shape[0]))
    assert l1_norm(u2, dom) == pytest.approx(2.0)


def test_l1_norm_parabola():
    dom = build_domain("interval", 513)
    x = dom.coords
    assert l1_norm(x * (1 - x) / 2, dom) == pytest.approx(1 / 12, rel=1e-5)


def test_l1_norm_ball_volume():
    dom = build_domain("ball", 513, dimension=3)
    val = l1_norm(np.ones(dom.coords.shape[0]), dom)
    assert val == pytest.approx(4 * np.pi / 3, rel=1e-5)


def test_l1_norm_interior_field():
    dom = build_domain("interval", 65)
    u = np.ones(dom.n_interior)
    # interior-only field is zero-padded to the boundary: trapezoid drops h
    assert l1_norm(u, dom) == pytest.approx(1.0 - 1.0 / 64, rel=1e-12)
