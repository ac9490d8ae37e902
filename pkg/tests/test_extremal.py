"""Threshold bisection, hypersurface tracing, extremal limits, probes."""

import numpy as np
import pytest

import oracles as oc
from ellstar import (IterationCaps, OperatorSpec, assemble, bracket_lambda_star,
                     build_domain, check_monotone_in_lambda, extremal_profile,
                     green_lower_bound_probe, lambda_star_bisect,
                     make_example, minimal_solution, radial_bound_check,
                     stability_inequality_probe, trace_hypersurface)
from ellstar.extremal import _grad_energy


# ---------------------------------------------------------------------------
# brackets


def test_bracket_contains_fold(lap257, gelfand):
    br = bracket_lambda_star([lap257], gelfand, [])
    assert br.lo < oc.GELFAND_LAMBDA_STAR < br.hi
    lo_run = minimal_solution([lap257], [br.lo], gelfand)
    assert lo_run.status == "converged"
    hi_run = minimal_solution([lap257], [br.hi], gelfand)
    assert hi_run.status != "converged"
    assert br.spectral_bound >= br.hi * 0.5


def test_bracket_spectral_crosscheck_m2(lap257):
    nl = make_example("exp-shift", m=2, beta=[1.0, 1.0])
    br = bracket_lambda_star([lap257, lap257], nl, [1.0])
    assert np.isfinite(br.lo) and np.isfinite(br.hi)
    assert br.spectral_bound >= br.hi


def test_linear_threshold_at_mu1():
    # F(t) = 1 + t has no solution past the principal eigenvalue; the
    # solver's threshold lands there (the iteration contracts at rate
    # lam/mu1, so caps must allow the slow runs near the threshold;
    # iteration-cap verdicts shrink the bracket conservatively)
    dom = build_domain("interval", 129)
    L = assemble(OperatorSpec(), dom)
    nl = make_example("custom", m=1, expressions=["1 + t1"])
    caps = IterationCaps(max_iter=20000, growth_delta=1e-4)
    s = lambda_star_bisect([L], nl, [], tol_lambda=1e-3, caps=caps,
                           compute_eta1=False)
    mu1 = oc.mu1_interval_discrete(129)
    assert abs(s.lambda_star_est - mu1) / mu1 < 5e-3
    assert abs(s.lambda_star_est - np.pi ** 2) / np.pi ** 2 < 1e-2
    # Lemma-style spectral cross-check sits at the same eigenvalue scale
    assert s.spectral_bound == pytest.approx(mu1, rel=0.1)


# ---------------------------------------------------------------------------
# bisection


def test_bisect_gelfand_against_oracle(lap257, gelfand):
    s = lambda_star_bisect([lap257], gelfand, [], tol_lambda=1e-4)
    assert abs(s.lambda_star_est - oc.GELFAND_LAMBDA_STAR) < 6e-3
    assert s.lambda_lo < s.lambda_hi
    assert s.lambda_hi - s.lambda_lo <= 1e-4 * s.lambda_hi * 1.01
    assert s.eta1_near_star is not None and s.eta1_near_star > 0
    assert s.profile_near_star is not None
    assert np.all(np.diff(s.l1_history[:, 0]) > 0)        # lambdas sorted
    assert np.all(np.diff(s.l1_history[:, 1]) > -1e-12)   # L1 nondecreasing


def test_bisect_bracket_endpoint_statuses(lap257, gelfand):
    s = lambda_star_bisect([lap257], gelfand, [], tol_lambda=1e-3,
                           compute_eta1=False)
    assert minimal_solution([lap257], [s.lambda_lo], gelfand).status == "converged"
    assert minimal_solution([lap257], [s.lambda_hi], gelfand).status != "converged"


# ---------------------------------------------------------------------------
# tracing


def test_trace_requires_system(lap257, gelfand):
    with pytest.raises(ValueError):
        trace_hypersurface([lap257], gelfand, [[]])


def test_trace_m2_orderings():
    dom = build_domain("interval", 129)
    L = assemble(OperatorSpec(), dom)
    nl = make_example("exp-shift", m=2, beta=[1.0, 1.0])
    grid = [[0.25], [1.0], [4.0]]
    out = trace_hypersurface([L, L], nl, grid, tol_lambda=1e-3,
                             compute_eta1=False)
    assert len(out) == 3 and not out.errors
    lams = [s.lambda_star_est for s in out]
    assert lams[0] >= lams[1] >= lams[2]
    nus = [s.lambda_star_est * s.sigma[0] for s in out]
    assert nus[0] <= nus[1] <= nus[2]


def test_trace_m3_pair_property():
    dom = build_domain("interval", 65)
    L = assemble(OperatorSpec(), dom)
    nl = make_example("exp-shift", m=3, beta=[1.0, 1.0, 1.0])
    grid = [[1.0, 1.0], [2.0, 2.0], [4.0, 4.0]]
    out = trace_hypersurface([L, L, L], nl, grid, tol_lambda=1e-3,
                             compute_eta1=False)
    assert not out.errors
    lams = [s.lambda_star_est for s in out]
    assert lams[0] >= lams[1] >= lams[2]
    # index comparison property: for sigma_a <= sigma_b some coordinate
    # of nu* = lambda* sigma does not decrease
    for a, b in [(0, 1), (1, 2)]:
        nu_a = lams[a] * np.asarray(grid[a])
        nu_b = lams[b] * np.asarray(grid[b])
        assert np.any(nu_b >= nu_a - 1e-12)


def test_trace_collects_errors():
    dom = build_domain("interval", 65)
    L = assemble(OperatorSpec(), dom)
    nl = make_example("exp-shift", m=2, beta=[1.0, 1.0])
    out = trace_hypersurface([L, L], nl, [[1.0], [1e30]], tol_lambda=1e-3,
                             compute_eta1=False)
    assert len(out) == 1
    assert len(out.errors) == 1


# ---------------------------------------------------------------------------
# extremal profiles and radial bounds


@pytest.fixture(scope="module")
def ball10():
    dom = build_domain("ball", 513, dimension=10)
    L = assemble(OperatorSpec(), dom)
    nl = make_example("exp-shift", m=1, beta=[1.0])
    s = lambda_star_bisect([L], nl, [], tol_lambda=1e-5, compute_eta1=False)
    prof = extremal_profile([L], nl, [], s, K=14)
    return dom, L, nl, s, prof


def test_profile_n10_growing_and_tracks_log(ball10):
    dom, L, nl, s, prof = ball10
    assert abs(s.lambda_star_est - 16.0) / 16.0 < 0.01
    assert prof.verdict == "growing"
    assert np.all(np.diff(prof.sup_norms) > -1e-12)
    r = dom.coords
    for rv in (0.2, 0.5, 0.8):
        j = int(np.argmin(np.abs(r - rv)))
        assert prof.u_star[0, j] == pytest.approx(-2 * np.log(r[j]), rel=0.05)


def test_profile_pointwise_monotone(ball10):
    dom, L, nl, s, prof = ball10
    lam_seq = prof.lambdas
    assert np.all(np.diff(lam_seq) > 0)
    a = minimal_solution([L], [lam_seq[2]], nl)
    b = minimal_solution([L], [lam_seq[4]], nl)
    assert np.all(a.solution <= b.solution + 1e-10)


def test_profile_n3_saturates():
    dom = build_domain("ball", 257, dimension=3)
    L = assemble(OperatorSpec(), dom)
    nl = make_example("exp-shift", m=1, beta=[1.0])
    s = lambda_star_bisect([L], nl, [], tol_lambda=1e-5, compute_eta1=False)
    prof = extremal_profile([L], nl, [], s, K=14, saturate_threshold=0.03)
    assert prof.verdict == "bounded-saturating"


def test_profile_needs_doublings(ball10):
    dom, L, nl, s, _ = ball10
    with pytest.raises(ValueError):
        extremal_profile([L], nl, [], s, K=3)


def test_radial_bound_classes(ball10):
    dom, L, nl, s, prof = ball10
    rep = radial_bound_check(prof, 10, [s.lambda_star_est])
    assert rep.bound_class == "II"
    assert np.isfinite(rep.constant) and rep.constant > 0

    dom3 = build_domain("ball", 257, dimension=3)
    L3 = assemble(OperatorSpec(), dom3)
    s3 = lambda_star_bisect([L3], nl, [], tol_lambda=1e-4, compute_eta1=False)
    prof3 = extremal_profile([L3], nl, [], s3, K=10, saturate_threshold=0.03)
    rep3 = radial_bound_check(prof3, 3, [s3.lambda_star_est])
    assert rep3.bound_class == "I"
    assert np.isfinite(rep3.constant)

    dom11 = build_domain("ball", 513, dimension=11)
    L11 = assemble(OperatorSpec(), dom11)
    s11 = lambda_star_bisect([L11], nl, [], tol_lambda=1e-4, compute_eta1=False)
    assert abs(s11.lambda_star_est - 18.0) / 18.0 < 0.01
    prof11 = extremal_profile([L11], nl, [], s11, K=12)
    rep11 = radial_bound_check(prof11, 11, [s11.lambda_star_est])
    assert rep11.bound_class == "III"
    assert rep11.exponent == pytest.approx(-11 / 2 + np.sqrt(10) + 2, abs=1e-12)
    assert np.isfinite(rep11.constant)


# ---------------------------------------------------------------------------
# stability inequality probe


def test_probe_zero_field_energy():
    dom = build_domain("interval", 65)
    assert _grad_energy(dom, np.zeros(65)) == 0.0


def test_probe_holds_at_honest_lambda(lap257, gelfand):
    out = minimal_solution([lap257], [1.0], gelfand)
    rep = stability_inequality_probe([lap257], [1.0], gelfand, out.solution,
                                     trials=100, seed=2)
    assert rep.violations == 0
    assert rep.max_gap <= 1e-10
    assert rep.trials == 100


def test_probe_flags_inflated_lambda(lap257, gelfand):
    # with the lam=1 profile frozen, pushing lam far past the fold must
    # produce violations: the first sine mode is the witness field
    out = minimal_solution([lap257], [1.0], gelfand)
    lam_hot = 3.0 * oc.GELFAND_LAMBDA_STAR
    rep = stability_inequality_probe([lap257], [lam_hot], gelfand,
                                     out.solution, trials=50, seed=2, modes=1)
    assert rep.violations == rep.trials
    assert rep.max_gap > 0


def test_probe_requires_potential(lap257):
    nl = make_example("exp-shift", m=2, beta=[1.0, 1.0])
    assert not nl.potential
    out = minimal_solution([lap257, lap257], [0.5, 0.5], nl)
    with pytest.raises(ValueError):
        stability_inequality_probe([lap257, lap257], [0.5, 0.5], nl,
                                   out.solution)


def test_probe_m2_potential_system(lap257):
    nl = make_example("product-potential", m=2)
    s = lambda_star_bisect([lap257, lap257], nl, [1.0], tol_lambda=1e-3,
                           compute_eta1=False)
    lam = 0.5 * s.lambda_star_est
    out = minimal_solution([lap257, lap257], [lam, lam], nl)
    rep = stability_inequality_probe([lap257, lap257], [lam, lam], nl,
                                     out.solution, trials=100, seed=5)
    assert rep.violations == 0


# ---------------------------------------------------------------------------
# green probe


def test_green_probe_zero_load_skipped(lap257):
    rep = green_lower_bound_probe(lap257, fields=[np.zeros(lap257.n)])
    assert rep.samples == 0
    assert np.isnan(rep.C2)


def test_green_probe_interval_explicit():
    dom = build_domain("interval", 129)
    L = assemble(OperatorSpec(), dom)
    rep = green_lower_bound_probe(L, fields=[np.ones(dom.n_interior)])
    # v = x(1-x)/2 against delta * integral(delta): C2 close to 1
    assert rep.C2 > 0.9


def test_green_probe_drift_refinement():
    C2s = []
    for res in (65, 129):
        dom = build_domain("interval", res)
        L = assemble(OperatorSpec(b=1.0), dom)
        C2s.append(green_lower_bound_probe(L, trials=20, seed=3).C2)
    assert all(c > 0 for c in C2s)
    assert 0.5 < C2s[1] / C2s[0] < 2.0
