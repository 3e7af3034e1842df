import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from community_gnar import (CommunityPartition, NetworkError, apply_missing, build_network,
                            community_mask, distance_matrix, equal_weights, interaction_mask,
                            max_stage, stage_adjacency)

from conftest import random_connected_edges


def floyd_warshall(d, edges):
    inf = 10 ** 9
    dist = np.full((d, d), inf)
    np.fill_diagonal(dist, 0)
    for i, j in edges:
        dist[i - 1, j - 1] = dist[j - 1, i - 1] = 1
    for k in range(d):
        for i in range(d):
            for j in range(d):
                if dist[i, k] + dist[k, j] < dist[i, j]:
                    dist[i, j] = dist[i, k] + dist[k, j]
    return np.where(dist >= inf, -1, dist)


@st.composite
def graphs(draw):
    d = draw(st.integers(1, 9))
    pairs = [(i, j) for i in range(1, d + 1) for j in range(i + 1, d + 1)]
    edges = draw(st.lists(st.sampled_from(pairs), max_size=len(pairs))) if pairs else []
    return d, edges


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_distances_match_floyd_warshall(g):
    d, edges = g
    net = build_network(edges, d)
    np.testing.assert_array_equal(distance_matrix(net), floyd_warshall(d, edges))


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_stages_partition_reachable_pairs(g):
    d, edges = g
    net = build_network(edges, d)
    stages = stage_adjacency(net, 100)
    dist = distance_matrix(net)
    total = sum(s.matrix.astype(int) for s in stages) if stages else np.zeros((d, d), int)
    # every reachable off-diagonal pair is in exactly one stage
    np.testing.assert_array_equal(total, (dist > 0).astype(int))
    for s in stages:
        np.testing.assert_array_equal(s.matrix, s.matrix.T)
        assert not s.matrix.diagonal().any()
    assert len(stages) == max_stage(net)


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_equal_weights_rows_sum_to_stage_count(g):
    d, edges = g
    net = build_network(edges, d)
    stages = stage_adjacency(net, 100)
    w = equal_weights(net, stages)
    for s in stages:
        rows = np.where(s.matrix, w, 0).sum(axis=1)
        has = s.matrix.any(axis=1)
        np.testing.assert_allclose(rows[has], 1.0)
        np.testing.assert_array_equal(rows[~has], 0.0)


def test_path_graph_stages():
    net = build_network([(1, 2), (2, 3), (3, 4)], 4)
    stages = stage_adjacency(net, 5)
    assert len(stages) == 3
    assert stages[2].matrix[0, 3] and stages[2].matrix[3, 0]
    assert stage_adjacency(net, 2)[-1].r == 2


def test_isolated_nodes_have_zero_weights():
    net = build_network([(1, 2)], 3)
    w = equal_weights(net, stage_adjacency(net, 2))
    np.testing.assert_array_equal(w[2], 0.0)
    assert distance_matrix(net)[0, 2] == -1


def test_build_network_errors():
    with pytest.raises(NetworkError):
        build_network([(1, 1)], 2)
    with pytest.raises(NetworkError):
        build_network([(1, 3)], 2)
    with pytest.raises(NetworkError):
        build_network([], 2, labels=["a", "a"])
    net = build_network([(2, 1), (1, 2)], 2, labels=["x", "y"])
    assert net.edges == ((1, 2),)
    assert net.index_of("y") == 2
    with pytest.raises(NetworkError):
        net.index_of("z")


def brute_missing(w, missing, stages):
    d = w.shape[0]
    out = w.copy()
    for m in missing:
        out[:, m - 1] = 0
    for s in stages:
        for i in range(d):
            js = [j for j in range(d) if s.matrix[i, j]]
            tot = sum(out[i, j] for j in js)
            for j in js:
                out[i, j] = out[i, j] / tot if tot > 0 else 0.0
    return out


def test_apply_missing_matches_brute_force(rng):
    for _ in range(20):
        d = 8
        net = build_network(random_connected_edges(rng, d), d)
        stages = stage_adjacency(net, 10)
        w = equal_weights(net, stages) * rng.uniform(0.5, 2, (d, d))
        miss = set(rng.choice(np.arange(1, d + 1), size=2, replace=False).tolist())
        np.testing.assert_allclose(apply_missing(w, miss, stages), brute_missing(w, miss, stages),
                                   atol=1e-14)


def test_apply_missing_no_missing_is_copy(ring):
    _, stages, w = ring
    out = apply_missing(w, [], stages)
    np.testing.assert_array_equal(out, w)
    assert out is not w


def test_masks_match_brute_force(rng):
    d = 7
    w = rng.random((d, d))
    np.fill_diagonal(w, 0)
    part = CommunityPartition.from_labels([1, 2, 1, 3, 2, 1, 3])
    for c in (1, 2, 3):
        cm = community_mask(w, part, c)
        for ct in (1, 2, 3):
            if ct == c:
                continue
            im = interaction_mask(w, part, c, ct)
            for i in range(d):
                for j in range(d):
                    li, lj = part.labels[i], part.labels[j]
                    assert im[i, j] == (w[i, j] if (li == c and lj == ct) else 0.0)
        for i in range(d):
            for j in range(d):
                li, lj = part.labels[i], part.labels[j]
                assert cm[i, j] == (w[i, j] if li == lj == c else 0.0)
    with pytest.raises(NetworkError, match="community_mask"):
        interaction_mask(w, part, 2, 2)


def test_masks_sum_back_to_weights(rng):
    d = 6
    w = rng.random((d, d))
    np.fill_diagonal(w, 0)
    part = CommunityPartition.from_labels([1, 1, 2, 2, 3, 3])
    total = sum(community_mask(w, part, c) for c in (1, 2, 3))
    total = total + sum(interaction_mask(w, part, c, ct) for c in (1, 2, 3) for ct in (1, 2, 3)
                        if c != ct)
    np.testing.assert_allclose(total, w)


def test_community_mask_renormalize(ring):
    net, stages, w = ring
    part = CommunityPartition.from_labels([1, 1, 1, 2, 2, 2])
    m = community_mask(w, part, 1, renormalize=True, stages=stages)
    # node 1's only within-community stage-1 neighbour is node 2
    assert m[0, 1] == pytest.approx(1.0)
    with pytest.raises(NetworkError):
        community_mask(w, part, 1, renormalize=True)


def test_partition_basics():
    part = CommunityPartition.from_labels([2, 1, 1], 3)
    np.testing.assert_array_equal(part.sizes(), [2, 1, 0])
    np.testing.assert_array_equal(part.members(1), [1, 2])
    with pytest.raises(NetworkError):
        part.indicator(4)
    with pytest.raises(NetworkError):
        CommunityPartition.from_labels([0, 1])
