import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from netform.features import FeatureRecipe, build_features
from netform.graph import (
    UndefinedStatisticError,
    VillageNetwork,
    asymmetry,
    clustering,
    density,
    link_proportion_diagnostics,
    load_edges,
    mean_distance,
    network_stats,
    reachable_fraction,
    summarize_networks,
    write_adjacency,
    write_edges,
)
from netform.households import DataError, GeneratorSpec, generate_synthetic

from oracles import bfs_mean_distance, triple_clustering


@st.composite
def adjacency(draw, min_n=2, max_n=7):
    n = draw(st.integers(min_n, max_n))
    a = draw(arrays(np.uint8, (n, n), elements=st.integers(0, 1)))
    np.fill_diagonal(a, 0)
    return a


def net(a, vid=1):
    return VillageNetwork(vid, np.asarray(a, dtype=np.uint8))


def complete(n):
    return net(np.ones((n, n)) - np.eye(n))


def test_network_validation():
    with pytest.raises(ValueError):
        net([[1, 0], [0, 0]])
    with pytest.raises(ValueError):
        VillageNetwork(1, np.array([[0, 2], [0, 0]]))
    with pytest.raises(ValueError):
        VillageNetwork(1, np.zeros((2, 3)))
    x = net([[0, 1], [0, 0]])
    assert not x.adjacency.flags.writeable
    assert x == net([[0, 1], [0, 0]]) and x != net([[0, 0], [1, 0]])


def test_density_examples():
    assert density(VillageNetwork.empty(1, 4)) == 0
    assert density(complete(5)) == 1
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = a[2, 0] = 1
    assert density(net(a)) == 0.5


def test_clustering_examples():
    tri = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert clustering(net(tri)) == 1
    path = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    assert clustering(net(path)) == 0
    assert clustering(VillageNetwork.empty(1, 4)) == 0
    with pytest.raises(UndefinedStatisticError):
        clustering(net([[0, 1], [1, 0]]))


def test_asymmetry_examples():
    a = np.zeros((4, 4))
    a[0, 1] = a[1, 0] = a[2, 3] = a[3, 2] = a[0, 2] = a[2, 0] = 1
    assert density(net(a)) == 0.5 and asymmetry(net(a)) == 1
    assert asymmetry(complete(4)) == 0 and asymmetry(VillageNetwork.empty(1, 4)) == 0
    assert math.isclose(4 * 0.31 * 0.69, 0.8556)


def test_mean_distance_examples():
    assert mean_distance(complete(5)) == 1
    cycle = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert mean_distance(net(cycle)) == 1.5
    with pytest.raises(UndefinedStatisticError):
        mean_distance(VillageNetwork.empty(1, 3))
    path = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    assert mean_distance(net(path)) == (1 + 1 + 2) / 3
    assert reachable_fraction(net(path)) == 3 / 6


@given(adjacency(3, 6))
def test_clustering_matches_triple_scan(a):
    assert clustering(net(a)) == triple_clustering(a)


@given(adjacency(2, 8))
def test_mean_distance_matches_bfs(a):
    expected = bfs_mean_distance(a)
    if expected is None:
        with pytest.raises(UndefinedStatisticError):
            mean_distance(net(a))
    else:
        assert mean_distance(net(a)) == pytest.approx(expected, abs=1e-12)


@given(adjacency(3, 7), st.randoms(use_true_random=False))
def test_statistics_invariant_under_relabeling(a, rnd):
    perm = list(range(len(a)))
    rnd.shuffle(perm)
    b = a[np.ix_(perm, perm)]
    s, t = network_stats(net(a)), network_stats(net(b))
    for name in ("mean_degree", "density", "clustering", "asymmetry", "reachable_fraction"):
        assert getattr(s, name) == pytest.approx(getattr(t, name), abs=1e-12)
    assert (math.isnan(s.mean_distance) and math.isnan(t.mean_distance)) or s.mean_distance == pytest.approx(t.mean_distance)


@given(adjacency(2, 7))
def test_symmetrized_density_dominates(a):
    s = np.maximum(a, a.T)
    assert density(net(s)) >= density(net(a))
    stats = network_stats(net(a))
    assert 0 <= stats.density <= 1 and 0 <= stats.asymmetry <= 1
    assert sum(stats.degrees) == a.sum()


def _loop_proportions(a, g):
    n = len(a)
    direct = [(i, j) for i in range(n) for j in range(n) if i != j and a[i][j] and g[i][j]]
    paths = [(i, j, k) for i in range(n) for j in range(n) for k in range(n)
             if len({i, j, k}) == 3 and a[i][j] and a[j][k] and g[i][k]]

    def share(items, pred):
        return sum(map(pred, items)) / len(items) if items else math.nan

    return {
        "direct_links": len(direct),
        "indirect_links": len(paths),
        "direct_mutual": share(direct, lambda p: a[p[1]][p[0]]),
        "through_ij": share(paths, lambda p: g[p[0]][p[1]]),
        "through_jk": share(paths, lambda p: g[p[1]][p[2]]),
        "through_both": share(paths, lambda p: g[p[0]][p[1]] and g[p[1]][p[2]]),
        "indirect_nonmutual_direct": share(paths, lambda p: a[p[0]][p[2]] and not a[p[2]][p[0]]),
        "indirect_mutual_direct": share(paths, lambda p: a[p[0]][p[2]] and a[p[2]][p[0]]),
        "indirect_reciprocal": share(paths, lambda p: a[p[2]][p[0]] and not a[p[0]][p[2]]),
    }


@given(st.integers(0, 5000))
def test_link_proportions_match_loops(seed):
    v = generate_synthetic(GeneratorSpec.from_dict({"villages": 1, "size": {"min": 6, "max": 6}, "p_both": 0.3}), seed)[0]
    f = build_features(v, FeatureRecipe(u=("gender",)))
    rng = np.random.default_rng(seed)
    a = (rng.random((6, 6)) < 0.45).astype(np.uint8)
    np.fill_diagonal(a, 0)
    got = link_proportion_diagnostics(net(a), f)
    for key, value in _loop_proportions(a, f.gender).items():
        x = getattr(got, key)
        assert (math.isnan(x) and math.isnan(value)) or x == pytest.approx(value, abs=1e-12), key


def test_link_proportion_extremes(small_villages):
    v = small_villages[0]
    f = build_features(v, FeatureRecipe(u=("gender",)))
    mutual = f.gender.astype(np.uint8)
    assert link_proportion_diagnostics(net(mutual), f).direct_mutual in (1.0,) or f.gender.sum() == 0
    one_way = np.triu(f.gender, 1).astype(np.uint8)
    assert link_proportion_diagnostics(net(one_way), f).direct_mutual == 0
    empty = link_proportion_diagnostics(VillageNetwork.empty(v.village_id, v.n), f)
    assert math.isnan(empty.direct_mutual) and math.isnan(empty.through_both)


def test_edge_round_trip(tmp_path, small_villages):
    rng = np.random.default_rng(0)
    nets = []
    for v in small_villages:
        a = (rng.random((v.n, v.n)) < 0.3).astype(np.uint8)
        np.fill_diagonal(a, 0)
        nets.append(VillageNetwork(v.village_id, a))
    write_edges(nets, small_villages, tmp_path / "e.csv", header="# test\n")
    assert load_edges(tmp_path / "e.csv", small_villages) == nets
    write_adjacency(nets[0], tmp_path / "a.txt")
    assert np.array_equal(np.loadtxt(tmp_path / "a.txt"), nets[0].adjacency)


@pytest.mark.parametrize(
    "body, match",
    [("village_id,i,j\n1,1,1\n", "self-link"), ("village_id,i,j\n99,1,2\n", "unknown village"),
     ("village_id,i,j\n1,1,99\n", "unknown household"), ("a,b,c\n", "header"),
     ("village_id,i,j\n1,x,2\n", "line 2")],
)
def test_edge_errors(tmp_path, small_villages, body, match):
    (tmp_path / "e.csv").write_text(body)
    with pytest.raises(DataError, match=match):
        load_edges(tmp_path / "e.csv", small_villages)


def test_summarize_networks(small_villages):
    nets = [VillageNetwork.empty(v.village_id, v.n) for v in small_villages]
    t = summarize_networks(nets)
    assert t.loc["degree", "mean"] == 0 and t.loc["group_size", "mean"] == np.mean([v.n for v in small_villages])
    assert math.isnan(t.loc["mean_distance", "mean"])
