import numpy as np
import pytest

from community_gnar import (CommunityPartition, NetworkError, PeriodicWeights, StaticWeights,
                            build_network, distance_matrix, periodic_weights_preset)


def test_static_weights_validation():
    with pytest.raises(NetworkError):
        StaticWeights(np.ones((2, 3)))
    with pytest.raises(NetworkError):
        StaticWeights(np.eye(2))
    with pytest.raises(NetworkError):
        StaticWeights(np.array([[0, -1.0], [1, 0]]))
    w = StaticWeights(np.array([[0, 1.0], [1, 0]]))
    assert w.is_static and w.key(5) == w.key(-3)
    with pytest.raises(ValueError):
        w.at(0)[0, 1] = 3.0


def test_periodic_weights_repeat():
    calls = []

    def factory(phase):
        calls.append(phase)
        return np.full((2, 2), float(phase))

    w = PeriodicWeights(3, factory)
    assert np.array_equal(w.at(7), w.at(7 + 3))
    assert w.at(-2)[0, 0] == 1.0  # -2 mod 3 = 1
    w.at(1)
    assert sorted(calls) == [1]
    assert w.distinct_keys(range(1, 10)) == {1: 1, 2: 2, 0: 3}


def test_preset_hand_values():
    # path 1-2-3 with communities 1, 2, 3
    net = build_network([(1, 2), (2, 3)], 3)
    part = CommunityPartition.from_labels([1, 2, 3])
    w = periodic_weights_preset(net, part)
    t = 1
    f1 = 1 + np.cos(t * np.pi / 2) + 0.1
    f2 = 1 + np.sin(t * np.pi / 2) + 0.1
    f3 = 1 + np.cos(t * np.pi / 4) * np.sin(t * np.pi / 4) + 0.1
    m = w.at(t)
    assert m[1, 0] == pytest.approx(f1 * 2 ** -0.5)   # target in community 1, distance 1
    assert m[2, 0] == pytest.approx(f1 * 2 ** -1.0)   # distance 2
    assert m[0, 1] == pytest.approx(f2 * 2 ** -1.0)
    assert m[0, 2] == pytest.approx(f3 * 2 ** -2.0)
    assert np.all(np.diag(m) == 0)
    np.testing.assert_array_equal(w.at(t), w.at(t + 4))


def test_preset_unreachable_zero_and_errors():
    net = build_network([(1, 2)], 3)
    part = CommunityPartition.from_labels([1, 2, 3])
    m = periodic_weights_preset(net, part).at(0)
    assert m[0, 2] == 0 and m[2, 0] == 0
    assert (distance_matrix(net)[0, 2]) == -1
    with pytest.raises(NetworkError):
        periodic_weights_preset(net, CommunityPartition.single(3))
    custom = periodic_weights_preset(net, CommunityPartition.single(3),
                                     formulas=[(lambda t: 1.0, 1.0)])
    assert custom.at(0)[0, 1] == pytest.approx(0.5)
