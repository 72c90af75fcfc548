from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imax.baselines import (
    RRSetCollection,
    Snapshots,
    celf,
    generate_rr_set,
    generate_snapshots,
    greedy_mc,
    max_coverage,
    ris_select,
    rr_set_from_root,
    sample_rr_sets,
    select_on_snapshots,
    sg_select,
    snapshot_gains,
)
from imax.diffusion import DiffusionSpec, Model
from imax.errors import DomainError, PreconditionError
from imax.graph import WeightPolicy, transpose
from imax.synthetic import erdos_renyi

from conftest import A, graph_from

a, b, c, d, e, f, g_, h, i, j = range(10)
EXPLICIT = WeightPolicy.explicit()
SIM = settings(max_examples=20, deadline=None)


def spec(model, r, seed=0, policy=EXPLICIT):
    return DiffusionSpec(Model(model), policy, r, seed)


def certain(edges, n=None):
    return graph_from([(u, v, 1.0) for u, v in edges], n=n)


# --- greedy / celf ------------------------------------------------------------

def test_greedy_picks_a_on_fig7(fig7):
    assert greedy_mc(fig7, 1, spec("lt", 200_000)).seeds == [A]
    assert celf(fig7, 1, spec("lt", 200_000)).seeds == [A]


def test_star_center():
    star = certain([(0, v) for v in range(1, 6)])
    for alg in (greedy_mc, celf):
        res = alg(star, 1, spec("ic", 100))
        assert res.seeds == [0] and res.gains == [6.0]


def test_celf_is_lazy_on_star():
    star = certain([(0, v) for v in range(1, 6)])
    res = celf(star, 3, spec("ic", 100))
    assert res.exact_mg_computations < star.n * 3


def test_k_equals_n_orders_by_gain(fig7):
    res = greedy_mc(fig7, 4, spec("ic", 2000))
    assert sorted(res.seeds) == [0, 1, 2, 3]
    assert all(x >= y for x, y in zip(res.gains, res.gains[1:]))
    assert celf(fig7, 4, spec("ic", 2000)).seeds == res.seeds


def test_celf_refreshes_only_the_stale_roots():
    # gains: c reaches 6, b reaches 4, d reaches 3; b collapses to 1 once c is in
    graph = certain([(c, a), (c, e), (c, f), (c, g_), (c, h), (b, a), (b, e), (b, f), (d, i), (d, j)])
    res = celf(graph, 2, spec("ic", 10))
    assert res.seeds == [c, d]
    assert res.extra["refreshes"][1] == [b, d]
    assert res.gains == [6.0, 3.0]


def test_k_out_of_range(fig7):
    for call in (
        lambda: greedy_mc(fig7, 5, spec("ic", 10)),
        lambda: celf(fig7, 5, spec("ic", 10)),
        lambda: sg_select(fig7, 5, 10),
        lambda: ris_select(fig7, 5, 10, spec("ic", 10)),
    ):
        with pytest.raises(DomainError):
            call()


@SIM
@given(st.integers(0, 100_000), st.sampled_from(["ic", "lt"]), st.integers(1, 4))
def test_celf_matches_greedy(seed, model, k):
    graph = erdos_renyi(12, 0.25, seed, policy=WeightPolicy.generalized(1.0))
    sp = spec(model, 500, seed, policy=graph.policy)
    lazy, eager = celf(graph, k, sp), greedy_mc(graph, k, sp)
    assert lazy.seeds == eager.seeds
    assert lazy.gains == eager.gains
    assert lazy.exact_mg_computations <= eager.exact_mg_computations


def test_greedy_reproducible(fig7):
    sp = spec("ic", 3000, 4)
    assert greedy_mc(fig7, 2, sp).gains == greedy_mc(fig7, 2, sp).gains


# --- StaticGreedy ---------------------------------------------------------------

SNAP_1 = [(c, f), (f, e), (e, g_), (g_, a), (c, h)]
SNAP_2 = [(c, f), (f, e), (c, h)]


def test_sg_two_snapshot_example():
    snaps = Snapshots.from_edge_lists(8, [SNAP_1, SNAP_2])
    res = select_on_snapshots(snaps, 1)
    assert res.seeds == [c]
    assert res.gains == [5.0]
    assert res.extra["first_round_average"][c] == 5.0


def test_sg_removes_reachable_nodes():
    snaps = Snapshots.from_edge_lists(8, [SNAP_1, SNAP_2])
    select_on_snapshots(snaps, 1)
    assert set(np.flatnonzero(snaps.removed[0])) == {c, f, e, g_, a, h}
    assert set(np.flatnonzero(snaps.removed[1])) == {c, f, e, h}
    # g is still worth one node in the second snapshot only
    assert snapshot_gains(snaps, [g_]).tolist() == [1]


def test_sg_single_certain_snapshot():
    graph = certain([(0, 1), (1, 2), (3, 4)])
    snaps = generate_snapshots(graph, 1, 0)
    assert snapshot_gains(snaps, range(5)).tolist() == [3, 2, 1, 2, 1]


def test_snapshot_edges_are_original_edges():
    graph = erdos_renyi(30, 0.2, 1, policy=WeightPolicy.generalized(1.0))
    original = {(u, v) for u, v, _ in graph.edges()}
    snaps = generate_snapshots(graph, 20, 3)
    for k in range(snaps.r):
        assert set(snaps.retained_edges(k)) <= original


def test_sg_gains_shrink_per_node():
    graph = erdos_renyi(40, 0.1, 2, policy=WeightPolicy.generalized(1.0))
    snaps = generate_snapshots(graph, 30, 5)
    before = snapshot_gains(snaps, range(graph.n))
    res = select_on_snapshots(snaps, 5)
    after = snapshot_gains(snaps, range(graph.n))
    assert np.all(after <= before)
    assert res.gains == sorted(res.gains, reverse=True)


def test_sg_reproducible():
    graph = erdos_renyi(40, 0.1, 2, policy=WeightPolicy.generalized(1.0))
    assert sg_select(graph, 4, 50, 7).seeds == sg_select(graph, 4, 50, 7).seeds


def test_sg_reports_snapshot_bytes():
    graph = erdos_renyi(40, 0.1, 2, policy=WeightPolicy.generalized(1.0))
    res = sg_select(graph, 2, 50, 7)
    assert res.extra["snapshot_bytes"] > 0 and res.extra["graph_bytes"] > 0


# --- RR sets ----------------------------------------------------------------------

def test_rr_set_example():
    graph = graph_from([(c, f, 1.0), (f, e, 1.0), (c, h, 1.0), (e, g_, 1.0), (g_, a, 1.0)], n=8)
    gT = transpose(graph)
    assert rr_set_from_root(gT, e, spec("ic", 1)) == {e, f, c}


def test_rr_isolated_root():
    graph = graph_from([(0, 1, 1.0)], n=3)
    assert rr_set_from_root(transpose(graph), 2, spec("ic", 1)) == {2}


def test_rr_certain_graph_is_ancestor_set():
    graph = certain([(0, 1), (1, 2), (3, 2), (2, 4), (5, 6)])
    gT = transpose(graph)
    assert rr_set_from_root(gT, 4, spec("ic", 1)) == {0, 1, 2, 3, 4}


def test_lt_rr_set_keeps_one_in_neighbour():
    graph = graph_from([(0, 2, 0.5), (1, 2, 0.5)])
    gT = transpose(graph)
    seen = {frozenset(rr_set_from_root(gT, 2, spec("lt", 1), idx)) for idx in range(200)}
    assert seen == {frozenset({0, 2}), frozenset({1, 2})}
    both = {frozenset(rr_set_from_root(gT, 2, spec("ic", 1), idx)) for idx in range(200)}
    assert frozenset({0, 1, 2}) in both


def test_rr_empty_graph():
    empty = graph_from([], n=0)
    with pytest.raises(PreconditionError):
        generate_rr_set(empty, spec("ic", 1), 0)


def test_rr_sampling_prefix_reuse():
    graph = erdos_renyi(30, 0.2, 4, policy=WeightPolicy.generalized(1.0))
    sp = spec("ic", 1, policy=graph.policy)
    small = sample_rr_sets(graph, 50, sp)
    big = sample_rr_sets(graph, 100, sp, previous=small)
    fresh = sample_rr_sets(graph, 100, sp)
    assert big.sets() == fresh.sets()
    assert fresh.sets()[:50] == small.sets()
    gT = transpose(graph)
    assert fresh.sets()[7] == generate_rr_set(gT, sp, 7)


def test_inverted_index_matches_sets():
    rr = RRSetCollection.from_sets(5, [{0, 1}, {1, 2, 3}, {4}, {1}])
    for v in range(5):
        assert rr.sets_of(v) == [k for k, s in enumerate(rr.sets()) if v in s]


# --- max coverage -----------------------------------------------------------

FIVE_SETS = [{e, f, c}, {c, h}, {g_, e, f, c}, {b}, {d}]


def test_ris_first_pick_covers_three():
    rr = RRSetCollection.from_sets(8, FIVE_SETS)
    seeds, gains = max_coverage(rr, 1)
    assert seeds == [c] and gains == [3]
    assert rr.covered.tolist() == [True, True, True, False, False]


def test_single_set_first_seed():
    graph = erdos_renyi(10, 0.3, 4, policy=WeightPolicy.generalized(1.0))
    sp = spec("ic", 1, policy=graph.policy)
    rr = sample_rr_sets(graph, 1, sp)
    res = ris_select(graph, 1, 1, sp)
    assert res.seeds[0] in rr.sets()[0]


def _greedy_cover_oracle(sets, n, k):
    covered = [False] * len(sets)
    out = []
    for _ in range(k):
        best, best_gain = None, -1
        for v in range(n):
            if any(v == x for x, _ in out):
                continue
            gain = sum(1 for s, cov in zip(sets, covered) if not cov and v in s)
            if gain > best_gain:
                best, best_gain = v, gain
        out.append((best, best_gain))
        covered = [cov or best in s for s, cov in zip(sets, covered)]
    return out


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sets(st.integers(0, 4), min_size=1, max_size=5), min_size=1, max_size=6))
def test_coverage_matches_bruteforce(sets):
    rr = RRSetCollection.from_sets(5, sets)
    seeds, gains = max_coverage(rr, 2)
    assert list(zip(seeds, gains)) == _greedy_cover_oracle(sets, 5, 2)


def test_coverage_optimal_against_exhaustive_for_k1():
    rs = np.random.default_rng(3)
    for _ in range(50):
        sets = [set(rs.choice(6, size=rs.integers(1, 4), replace=False).tolist()) for _ in range(6)]
        rr = RRSetCollection.from_sets(6, sets)
        _, gains = max_coverage(rr, 1)
        best = max(sum(1 for s in sets if v in s) for v in range(6))
        assert gains == [best]


def test_ris_coverage_bounded_and_spread_estimate():
    graph = erdos_renyi(40, 0.1, 6, policy=WeightPolicy.generalized(1.0))
    sp = spec("ic", 1, policy=graph.policy)
    res = ris_select(graph, 5, 2000, sp)
    cov = res.extra["coverage"]
    assert all(x >= 0 for x in cov)
    assert all(x >= y for x, y in zip(cov, cov[1:]))
    assert sum(cov) <= 2000
    assert res.spread == pytest.approx(graph.n * sum(cov) / 2000)


def test_ris_doubling_stops():
    graph = erdos_renyi(40, 0.1, 6, policy=WeightPolicy.generalized(1.0))
    sp = spec("ic", 1, policy=graph.policy)
    res = ris_select(graph, 3, 100, sp, doubling=True, max_theta=100 * 2**6)
    assert res.extra["rr_set_count"] <= 100 * 2**6
    assert res.extra["rounds"] >= 2


def test_ris_theta_must_be_positive(fig7):
    with pytest.raises(DomainError):
        ris_select(fig7, 1, 0, spec("ic", 1))


def test_ris_reproducible():
    graph = erdos_renyi(40, 0.1, 6, policy=WeightPolicy.generalized(1.0))
    sp = spec("lt", 1, 3, policy=graph.policy)
    assert ris_select(graph, 3, 500, sp).seeds == ris_select(graph, 3, 500, sp).seeds


def test_ris_agrees_with_greedy_on_certain_chain():
    graph = certain(list(itertools.pairwise(range(6))))
    res = ris_select(graph, 1, 3000, spec("ic", 1))
    assert res.seeds == [0]
    assert res.spread == pytest.approx(6.0)
