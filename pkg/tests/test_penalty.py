import numpy as np
import pytest

import cmenet as cm
from cmenet.errors import DimensionMismatch, InvalidParams
from conftest import random_instance, random_params
from oracles import mcp_by_quadrature


def test_params_validation():
    with pytest.raises(InvalidParams):
        cm.PenaltyParams(-1.0, 0.5, 3.0, 0.05)
    with pytest.raises(InvalidParams):
        cm.PenaltyParams(1.0, 0.5, 0.9, 0.05)
    with pytest.raises(InvalidParams):
        cm.PenaltyParams(1.0, 0.5, 3.0, 0.2)  # 0.2 + 1/3 > 1/2
    loose = cm.PenaltyParams.unchecked(1.0, 0.5, 3.0, 0.2)
    assert loose.tau == 0.2


def test_mcp_inner_known_values():
    assert cm.mcp_inner(0.0, 1.0, 3.0) == 0.0
    assert cm.mcp_inner(0.5, 1.0, 3.0) == pytest.approx(0.5 - 0.25 / 6, abs=1e-12)
    assert cm.mcp_inner(10.0, 1.0, 3.0) == pytest.approx(1.5, abs=1e-12)
    assert cm.mcp_inner(-0.5, 1.0, 3.0) == cm.mcp_inner(0.5, 1.0, 3.0)


def test_mcp_inner_matches_quadrature_on_grid():
    rng = np.random.default_rng(1)
    for _ in range(40):
        lam = float(rng.uniform(0.05, 3.0))
        gamma = float(rng.uniform(1.1, 8.0))
        beta = float(rng.uniform(-3.0, 3.0) * lam * gamma)
        assert cm.mcp_inner(beta, lam, gamma) == pytest.approx(
            mcp_by_quadrature(beta, lam, gamma), abs=1e-8
        )


def test_mcp_inner_invalid():
    with pytest.raises(InvalidParams):
        cm.mcp_inner(1.0, -1.0, 3.0)
    with pytest.raises(InvalidParams):
        cm.mcp_inner(1.0, 1.0, 1.0)


def test_exp_outer_basics():
    assert cm.exp_outer(0.0, 2.0, 0.1) == 0.0
    # saturates at lam^2 / tau
    assert cm.exp_outer(1e9, 1.0, 0.05) == pytest.approx(20.0, rel=1e-9)
    vals = cm.exp_outer(np.linspace(0, 50, 200), 1.0, 0.05)
    assert (np.diff(vals) > 0).all()
    assert (np.diff(vals, 2) <= 1e-12).all()  # concave
    with pytest.raises(InvalidParams):
        cm.exp_outer(-1.0, 1.0, 0.05)


def test_exp_outer_derivative_at_zero_is_lambda():
    h = 1e-7
    for lam, tau in [(1.0, 0.05), (0.3, 0.2), (2.5, 0.01)]:
        deriv = (cm.exp_outer(h, lam, tau) - cm.exp_outer(0.0, lam, tau)) / h
        assert deriv == pytest.approx(lam, rel=1e-5)


def test_group_norm_additivity_and_zero():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(5), rng.standard_normal(3)
    lam, gamma = 0.7, 4.0
    assert cm.group_norm(np.zeros(4), lam, gamma) == 0.0
    assert cm.group_norm([0.5], 1.0, 3.0) == pytest.approx(0.5 - 0.25 / 6)
    assert cm.group_norm(np.concatenate([a, b]), lam, gamma) == pytest.approx(
        cm.group_norm(a, lam, gamma) + cm.group_norm(b, lam, gamma)
    )


def test_slope_values_and_bounds():
    assert cm.slope(0.0, 1.0, 0.25) == pytest.approx(1.0)
    assert cm.slope(5.0, 1.0, 0.25) == pytest.approx(np.exp(-1.25), abs=1e-12)
    norms = np.linspace(0, 30, 100)
    s = cm.slope(norms, 0.8, 0.1)
    assert (s > 0).all() and (s <= 0.8).all()
    assert (np.diff(s) < 0).all()


def test_objective_at_zero_is_half_mean_square():
    rng = np.random.default_rng(3)
    design, y, _ = random_instance(rng)
    yc = y - y.mean()
    params = random_params(rng)
    q0 = cm.objective(design, yc, np.zeros(design.p_prime), params)
    assert q0 == pytest.approx(0.5 * np.mean(yc**2), rel=1e-12)


def test_objective_matches_independent_recomputation():
    rng = np.random.default_rng(4)
    for _ in range(10):
        design, y, _ = random_instance(rng)
        yc = y - y.mean()
        params = random_params(rng)
        beta = np.zeros(design.p_prime)
        nz = rng.choice(design.p_prime, size=5, replace=False)
        beta[nz] = rng.standard_normal(5)

        # from-scratch recomputation straight off the formula
        r = yc - design.columns @ beta
        q = 0.5 * r @ r / design.n
        for j in range(1, design.p + 1):
            q += cm.exp_outer(
                cm.group_norm(beta[design.sibling_group(j)], params.lambda_s, params.gamma),
                params.lambda_s, params.tau,
            )
            q += cm.exp_outer(
                cm.group_norm(beta[design.cousin_group(j)], params.lambda_c, params.gamma),
                params.lambda_c, params.tau,
            )
        assert cm.objective(design, yc, beta, params) == pytest.approx(q, rel=1e-12)


def test_objective_dimension_mismatch():
    rng = np.random.default_rng(5)
    design, y, _ = random_instance(rng)
    with pytest.raises(DimensionMismatch):
        cm.objective(design, y[:-1], np.zeros(design.p_prime), random_params(rng))


def test_lasso_limit_of_penalty_part():
    # tau -> 0, gamma -> inf: penalty tends to (lambda_s + lambda_c) * ||beta||_1
    rng = np.random.default_rng(6)
    design, y, _ = random_instance(rng)
    yc = y - y.mean()
    params = cm.PenaltyParams(0.4, 0.3, 1e6, 1e-6)
    for _ in range(5):
        beta = np.zeros(design.p_prime)
        nz = rng.choice(design.p_prime, size=8, replace=False)
        beta[nz] = rng.standard_normal(8)
        r = yc - design.columns @ beta
        pen = cm.objective(design, yc, beta, params) - 0.5 * r @ r / design.n
        l1 = (params.lambda_s + params.lambda_c) * np.abs(beta).sum()
        assert pen == pytest.approx(l1, rel=1e-4)


def test_group_state_consistency_after_recompute():
    rng = np.random.default_rng(7)
    design, y, _ = random_instance(rng)
    params = random_params(rng)
    beta = rng.standard_normal(design.p_prime) * (rng.random(design.p_prime) < 0.1)
    gs = cm.GroupState.from_beta(design, beta, params)
    assert np.all(gs.slopes_s > 0) and np.all(gs.slopes_s <= params.lambda_s)
    assert np.all(gs.slopes_c > 0) and np.all(gs.slopes_c <= params.lambda_c)
    np.testing.assert_allclose(
        gs.slopes_s, cm.slope(gs.norms_s, params.lambda_s, params.tau), atol=1e-8
    )
    for j in range(1, design.p + 1):
        assert gs.norms_s[j - 1] == pytest.approx(
            cm.group_norm(beta[design.sibling_group(j)], params.lambda_s, params.gamma)
        )


def test_kkt_zero_solution_under_large_penalty():
    rng = np.random.default_rng(8)
    design, y, _ = random_instance(rng)
    yc = y - y.mean()
    lmax = cm.lambda_max(design, y)
    params = cm.PenaltyParams(0.6 * lmax, 0.6 * lmax, 3.0, 0.05)
    worst, idx = cm.kkt_residual(design, yc, np.zeros(design.p_prime), params)
    assert worst == 0.0
    assert idx.size == 0


def test_kkt_flags_perturbed_coordinate():
    rng = np.random.default_rng(9)
    design, y, _ = random_instance(rng, noise_sd=0.5)
    params = cm.PenaltyParams(0.05, 0.05, 3.0, 0.05)
    state = cm.fit(design, y, params)
    assert state.converged
    yc = y - y.mean()
    worst, idx = cm.kkt_residual(design, yc, state.beta, params)
    assert worst <= 1e-6

    active = state.active_set
    assert active.size > 0
    tampered = state.beta.copy()
    tampered[active[0]] += 0.1
    worst2, idx2 = cm.kkt_residual(design, yc, tampered, params, tol=1e-4)
    assert worst2 > 1e-4
    assert active[0] in idx2
