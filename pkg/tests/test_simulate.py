import warnings

import numpy as np
import pytest

from community_gnar import (CommunityPartition, NoiseSpec, SimulationError, build_network,
                            check_stationary_sufficient, coefficient_scales, equal_weights,
                            interaction_mask, make_community_order, make_global_order,
                            neighborhood_regression, periodic_weights_preset,
                            sample_stationary_params, simulate, stage_adjacency)
from community_gnar.order import OrderError
from community_gnar.simulate import default_burn_in, replication_seed

from conftest import random_connected_edges


def test_neighborhood_regression_variants(rng):
    d = 6
    w = rng.random((d, d))
    np.fill_diagonal(w, 0)
    s = rng.random((d, d)) < 0.5
    part = CommunityPartition.from_labels([1, 2, 1, 2, 3, 3])
    x = rng.normal(size=d)
    np.testing.assert_allclose(neighborhood_regression(x, w, s), (w * s) @ x)
    got = neighborhood_regression(x, w, s, part, 1, 2)
    np.testing.assert_allclose(got, (interaction_mask(w, part, 1, 2) * s) @ x)


def test_simulation_is_deterministic(five_node):
    m = five_node
    theta = [0.2, 0.3, 0.1, 0.2, 0.1, 0.2]
    a = simulate(m.order, theta, m.weights, m.stages, m.partition, 50, noise=NoiseSpec(1.0, 7))
    b = simulate(m.order, theta, m.weights, m.stages, m.partition, 50, noise=NoiseSpec(1.0, 7))
    c = simulate(m.order, theta, m.weights, m.stages, m.partition, 50, noise=NoiseSpec(1.0, 8))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    np.testing.assert_array_equal(a.times, np.arange(1, 51))


def test_zero_coefficients_give_the_noise(five_node):
    m = five_node
    noise = NoiseSpec(2.0, 3)
    real = simulate(m.order, np.zeros(6), m.weights, m.stages, m.partition, 20, burn_in=10,
                    noise=noise)
    np.testing.assert_array_equal(real.values, noise.draw(30, 5)[10:].T)


@pytest.mark.parametrize("periodic", [False, True])
def test_dual_path_agreement(rng, periodic):
    for _ in range(5):
        d = 10
        net = build_network(random_connected_edges(rng, d), d)
        stages = stage_adjacency(net, 4)
        part = CommunityPartition.from_labels(rng.permutation([1] * 4 + [2] * 3 + [3] * 3))
        s = len(stages)
        order = make_community_order([2, 3, 1], [[s, 1], [1, 0, 2], [s]], [[3], [1, 3], [2]])
        if periodic:
            w = periodic_weights_preset(net, part)
            scales = coefficient_scales(order, w, stages, part, range(4))
        else:
            w, scales = equal_weights(net, stages), None
        theta = sample_stationary_params(order, int(rng.integers(1 << 30)), 0.9, scales)
        kw = dict(T=60, burn_in=30, noise=NoiseSpec(1.0, 11))
        a = simulate(order, theta, w, stages, part, method="compact", **kw)
        b = simulate(order, theta, w, stages, part, method="var", **kw)
        assert np.max(np.abs(a.values - b.values)) <= 1e-10


def test_explosive_path_raises():
    net = build_network([(1, 2)], 2)
    stages = stage_adjacency(net, 1)
    order = make_global_order(1, [0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SimulationError, match="non-finite values at time"):
            simulate(order, [1e200], equal_weights(net, stages), stages,
                     CommunityPartition.single(2), 5, burn_in=5)


def test_nonstationary_warning():
    net = build_network([(1, 2)], 2)
    stages = stage_adjacency(net, 1)
    with pytest.warns(RuntimeWarning, match="sufficient"):
        simulate(make_global_order(1, [1]), [0.6, 0.6], equal_weights(net, stages), stages,
                 CommunityPartition.single(2), 5)


def test_stationary_sampler(five_node):
    m = five_node
    for seed in range(50):
        theta = sample_stationary_params(m.order, seed)
        rep = check_stationary_sufficient(m.order, theta)
        assert rep.passed and rep.sums == pytest.approx((0.9, 0.9))
        assert theta[0] > 0 and theta[2] > 0
    np.testing.assert_array_equal(sample_stationary_params(m.order, 4),
                                  sample_stationary_params(m.order, 4))
    with pytest.raises(ValueError):
        sample_stationary_params(m.order, 1, total_mass=1.0)


def test_sampler_with_scales():
    from community_gnar.experiments import usa_study_model
    m = usa_study_model()
    scales = coefficient_scales(m.order, m.weights, m.stages, m.partition, range(4))
    theta = sample_stationary_params(m.order, 5, 0.9, scales)
    rep = check_stationary_sufficient(m.order, theta, scales)
    assert rep.sums == pytest.approx((0.9, 0.9, 0.9))


def test_sampler_rejects_tied_orders():
    from community_gnar import make_local_order
    with pytest.raises(OrderError):
        sample_stationary_params(make_local_order(3, 1, [1]), 0)


def test_seed_helpers():
    assert replication_seed(2024, 0) == 2024
    assert replication_seed(2024, 5) == 2024 ^ 5
    assert default_burn_in(1) == 200 and default_burn_in(10) == 500
    with pytest.raises(ValueError):
        NoiseSpec(0.0).draw(2, 2)
