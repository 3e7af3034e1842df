import numpy as np
import pytest

from community_gnar import (CommunityPartition, EstimationError, NoiseSpec, Realization,
                            apply_missing, asymptotic_covariance, build_design, build_network,
                            equal_weights, error_bound, fit_community, fit_gls, fit_ols,
                            make_community_order, make_global_order, make_local_order,
                            periodic_weights_preset, sample_stationary_params, simulate,
                            stage_adjacency)
from community_gnar.order import OrderError, param_layout

from conftest import random_connected_edges


def three_community_case(rng, T=40, d=9):
    labels = rng.permutation([1, 1, 1, 2, 2, 2, 3, 3, 3])
    # every community is a clique so each stage-1 block has within-community neighbours
    within = [(i + 1, j + 1) for i in range(d) for j in range(i + 1, d) if labels[i] == labels[j]]
    net = build_network(random_connected_edges(rng, d) + within, d)
    stages = stage_adjacency(net, 2)
    part = CommunityPartition.from_labels(labels)
    order = make_community_order([2, 1, 1], [[1, 1], [1], [1]], [[2], [], [1]])
    w = equal_weights(net, stages)
    theta = sample_stationary_params(order, int(rng.integers(1 << 30)))
    real = simulate(order, theta, w, stages, part, T, noise=NoiseSpec(1.0, int(rng.integers(1 << 30))))
    return real, order, w, part, stages, theta


def test_ols_matches_normal_equations(rng):
    for _ in range(10):
        real, order, w, part, stages, _ = three_community_case(rng)
        design = build_design(real, order, w, part, stages)
        res = fit_ols(design)
        R, y = design.R, design.y
        oracle = np.linalg.solve(R.T @ R, R.T @ y)
        assert np.max(np.abs(res.theta - oracle)) <= 1e-8 * np.max(np.abs(oracle))
        e = y - R @ oracle
        assert res.sigma2_df == pytest.approx(e @ e / (R.shape[0] - R.shape[1]))
        assert res.sigma2_mle == pytest.approx(e @ e / R.shape[0])
        np.testing.assert_allclose(res.cov, res.sigma2 * np.linalg.inv(R.T @ R), rtol=1e-8, atol=1e-14)


def test_community_blocks_are_orthogonal(rng):
    real, order, w, part, stages, _ = three_community_case(rng)
    design = build_design(real, order, w, part, stages)
    lay = param_layout(order)
    for c in range(3):
        for c2 in range(3):
            if c != c2:
                block = design.R[:, lay.community_slices[c]].T @ design.R[:, lay.community_slices[c2]]
                assert np.all(block == 0.0)


def test_design_rows_match_hand_construction():
    # path 1-2-3, time-varying weights: the lag-k regressor uses W(t - k)
    net = build_network([(1, 2), (2, 3)], 3)
    stages = stage_adjacency(net, 2)
    part = CommunityPartition.from_labels([1, 2, 3])
    w = periodic_weights_preset(net, part)
    order = make_global_order(2, [2, 1])
    x = np.arange(1.0, 19.0).reshape(3, 6) ** 1.3
    design = build_design(Realization(x), order, w, CommunityPartition.single(3), stages)
    assert design.n_rows == 3 * 4
    # row for node 2 at time index 4 (1-based t = 4) is row (4 - 3) * 3 + 1
    row = design.R[(4 - 3) * 3 + 1]
    t = 4
    w1, w2 = w.at(t - 1), w.at(t - 2)
    s1, s2 = stages[0].matrix, stages[1].matrix
    expect = [x[1, t - 2], (w1 * s1)[1] @ x[:, t - 2], (w1 * s2)[1] @ x[:, t - 2],
              x[1, t - 3], (w2 * s1)[1] @ x[:, t - 3]]
    np.testing.assert_allclose(row, expect)
    assert design.y[(4 - 3) * 3 + 1] == x[1, t - 1]


def test_gls_identity_equals_ols(rng):
    real, order, w, part, stages, _ = three_community_case(rng)
    design = build_design(real, order, w, part, stages)
    ols = fit_ols(design)
    for s2 in (1.0, 2.5):
        gls = fit_gls(design, s2)
        assert np.max(np.abs(gls.theta - ols.theta)) <= 1e-10 * max(1, np.max(np.abs(ols.theta)))


def test_gls_matches_explicit_formula(rng):
    real, order, w, part, stages, _ = three_community_case(rng)
    design = build_design(real, order, w, part, stages)
    d = part.d
    a = rng.normal(size=(d, d))
    block = a @ a.T + d * np.eye(d)
    n_t = design.n_rows // d
    full = np.kron(np.eye(n_t), block)
    R, y = design.R, design.y
    si = np.linalg.inv(full)
    oracle = np.linalg.solve(R.T @ si @ R, R.T @ si @ y)
    for sigma in (block, full):
        res = fit_gls(design, sigma)
        np.testing.assert_allclose(res.theta, oracle, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(res.cov, np.linalg.inv(R.T @ si @ R), rtol=1e-8, atol=1e-14)
    v = rng.uniform(0.5, 2, d)
    wls = fit_gls(design, v)
    wt = 1 / v[design.row_nodes]
    np.testing.assert_allclose(wls.theta, np.linalg.solve((R.T * wt) @ R, (R.T * wt) @ y), rtol=1e-8)
    with pytest.raises(EstimationError):
        fit_gls(design, -block)
    with pytest.raises(EstimationError):
        fit_gls(design, np.zeros(d))


def test_fit_community_equals_joint_slice(rng):
    real, order, w, part, stages, _ = three_community_case(rng)
    design = build_design(real, order, w, part, stages)
    joint = fit_ols(design)
    lay = param_layout(order)
    for c in (1, 2, 3):
        res = fit_community(design, c)
        np.testing.assert_allclose(res.theta, joint.theta[lay.community_slices[c - 1]],
                                   rtol=1e-9, atol=1e-12)
        assert res.community_sigma2 == (joint.sigma2,)
    with pytest.raises(OrderError):
        fit_community(design, 4)


def test_rank_deficiency_names_columns():
    net = build_network([], 3)
    stages = []
    real = Realization(np.random.default_rng(0).normal(size=(3, 20)))
    order = make_global_order(1, [0])
    design = build_design(real, order, np.zeros((3, 3)), CommunityPartition.single(3), stages)
    fit_ols(design)
    net = build_network([(1, 2)], 3)
    stages = stage_adjacency(net, 1)
    part = CommunityPartition.from_labels([1, 1, 2])
    order = make_community_order([1, 1], [[0], [1]])
    design = build_design(real, order, equal_weights(net, stages), part, stages)
    with pytest.raises(EstimationError, match=r"beta\[1,1,2\]"):
        fit_ols(design)
    with pytest.warns(RuntimeWarning, match="near-singular"):
        assert fit_ols(design, ridge=1e-8).regularized


def test_underdetermined_design():
    real = Realization(np.random.default_rng(0).normal(size=(1, 3)))
    order = make_global_order(2, [0, 0])
    design = build_design(real, order, np.zeros((1, 1)), CommunityPartition.single(1), [])
    assert design.n_rows == 1
    with pytest.raises(EstimationError, match="underdetermined"):
        fit_ols(design)


def test_build_design_errors(five_node):
    m = five_node
    real = Realization(np.zeros((5, 1)))
    with pytest.raises(OrderError):
        build_design(real, m.order, m.weights, m.partition, m.stages)
    with pytest.raises(OrderError):
        build_design(Realization(np.zeros((5, 9))), m.order, m.weights, m.partition, m.stages[:0])


def test_missing_cells_drop_rows_and_renormalize(five_node):
    m = five_node
    real = simulate(m.order, [0.2, 0.3, 0.2, 0.2, 0.1, 0.1], m.weights, m.stages, m.partition, 30)
    vals = real.values.copy()
    vals[3, 10] = np.nan  # node 4 at t = 11
    miss = Realization(vals)
    design = build_design(miss, m.order, m.weights, m.partition, m.stages)
    full = build_design(real, m.order, m.weights, m.partition, m.stages)
    # response at t=11 and own-lag rows at t=12 (node 4, p=1); community-2 nodes lag 2 unaffected
    assert design.n_dropped == 2
    assert design.n_rows == full.n_rows - 2
    # node 2 at t = 12 uses weights with node 4 removed and renormalized
    w_miss = apply_missing(m.weights.at(0), [4], m.stages)
    r = np.flatnonzero((design.row_nodes == 1) & (design.row_times == 11))[0]
    x_prev = np.where(np.isnan(vals[:, 10]), 0.0, vals[:, 10])
    k1 = m.partition.indicator(1)
    expect = (np.where(np.outer(k1, k1), w_miss, 0) * m.stages[0].matrix)[1] @ x_prev
    assert design.R[r, 1] == pytest.approx(expect)
    fit_ols(design)


def test_sigma2_conventions(rng):
    real, order, w, part, stages, _ = three_community_case(rng)
    design = build_design(real, order, w, part, stages)
    a = fit_ols(design, "df")
    b = fit_ols(design, "mle")
    np.testing.assert_array_equal(a.theta, b.theta)
    assert b.sigma2 < a.sigma2
    with pytest.raises(ValueError):
        fit_ols(design, "other")


def test_fit_result_serialization(rng):
    real, order, w, part, stages, _ = three_community_case(rng)
    res = fit_ols(build_design(real, order, w, part, stages))
    doc = res.to_dict()
    assert [c["label"] for c in doc["coefficients"]] == list(order.labels())
    assert res.coefficient("alpha[1,1]") == res.theta[0]
    assert "Estimate" in res.table()


def test_asymptotic_covariance_scaling(rng):
    real, order, w, part, stages, _ = three_community_case(rng)
    design = build_design(real, order, w, part, stages)
    res = fit_ols(design)
    ac = asymptotic_covariance(design, res.sigma2)
    np.testing.assert_allclose(ac.finite_sample, res.cov, rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(ac.limit, ac.finite_sample * 9 * (real.T - 2), rtol=1e-12)


def test_error_bound_quantities(rng):
    real, order, w, part, stages, theta = three_community_case(rng, T=80)
    design = build_design(real, order, w, part, stages)
    rep = error_bound(design, 1.0, theta_true=theta)
    taus = []
    for c in (1, 2, 3):
        Rc, _ = design.community_block(c)
        lam = np.linalg.eigvalsh(Rc.T @ Rc)[0]
        taus.append(lam ** 2 / (3 * (80 - order.communities[c - 1].p)))
    assert rep.tau == pytest.approx(min(taus))
    n = min(3 * (80 - co.p) for co in order.communities)
    assert rep.gamma == pytest.approx(np.sqrt(n) * np.linalg.norm(design.R, axis=0).max())
    err = np.linalg.norm(fit_ols(design).theta - theta)
    assert err <= rep.deterministic + 1e-9
    assert rep.probability_floor(0.0) == -1.0
    assert rep.probabilistic(2.0) > rep.probabilistic(1.0)
    assert set(rep.to_dict([0.5, 1])["probabilistic"][0]) == {"delta", "bound", "probability_floor"}
    with pytest.raises(OrderError):
        error_bound(build_design(real, make_local_order(9, 1, [1]), w,
                                 CommunityPartition.from_labels(np.arange(1, 10)), stages), 1.0)
