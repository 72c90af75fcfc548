from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imax.diffusion import DiffusionSpec, Model, exact_lt_probability
from imax.errors import DomainError, PreconditionError
from imax.graph import WeightPolicy, apply_contributions, init_residual
from imax.parallel import max_threads, set_threads
from imax.rcelf import mcsmg, select_seeds_rcelf, upper_bound_mg
from imax.synthetic import erdos_renyi, power_law

from conftest import A, B, C, D, graph_from

EXPLICIT = WeightPolicy.explicit()


def spec(model, r, seed=0, policy=EXPLICIT):
    return DiffusionSpec(Model(model), policy, r, seed)


def fig7b_state(fig7):
    """Residual capacities after seeding a, from the exact path probabilities."""
    s = init_residual(fig7)
    phi = {v: exact_lt_probability(fig7, A, v) for v in (B, C, D)}
    apply_contributions(s, phi, A)
    return s


def run_seeds(g, seeds, sp):
    state = init_residual(g)
    for it, s in enumerate(seeds):
        gain = mcsmg(g, state, s, sp, iteration=it)
        apply_contributions(state, gain.contributions, s)
    return state


# --- mcsmg --------------------------------------------------------------------

def test_fig7b_residuals(fig7):
    s = fig7b_state(fig7)
    assert s.rc.tolist() == pytest.approx([0.0, 0.3, 0.35, 0.47])


def test_lt_residual_gain_worked_example(fig7):
    gain = mcsmg(fig7, fig7b_state(fig7), B, spec("lt", 200_000))
    assert gain.mg == pytest.approx(0.48, abs=0.02)
    assert gain.contributions[C] == pytest.approx(0.15, abs=0.01)
    assert gain.contributions[D] == pytest.approx(0.03, abs=0.01)


def test_first_gain_matches_path_sums(fig7):
    gain = mcsmg(fig7, init_residual(fig7), A, spec("lt", 200_000))
    assert abs(gain.mg - 2.88) <= 3 * gain.std_error + 1e-3


def test_isolated_node_gain():
    g = graph_from([], n=2)
    s = init_residual(g)
    s.rc[0] = 0.5
    gain = mcsmg(g, s, 0, spec("ic", 100))
    assert gain.mg == 0.5 and gain.contributions == {}


def test_ic_contribution_worked_example(fig7):
    gain = mcsmg(fig7, init_residual(fig7), A, spec("ic", 500_000))
    assert gain.contributions[C] == pytest.approx(0.545, abs=0.01)


def test_dead_candidate_rejected(fig7):
    with pytest.raises(PreconditionError):
        mcsmg(fig7, fig7b_state(fig7), A, spec("lt", 10))


def test_out_of_range_candidate(fig7):
    with pytest.raises(DomainError):
        mcsmg(fig7, init_residual(fig7), 9, spec("lt", 10))


def test_contributions_capped_and_alive():
    g = erdos_renyi(15, 0.3, 3, policy=WeightPolicy.generalized(1.0))
    sp = spec("ic", 3000, policy=g.policy)
    state = run_seeds(g, [0, 1], sp)
    for u in np.flatnonzero(state.alive):
        gain = mcsmg(g, state, int(u), sp, iteration=2)
        for v, phi in gain.contributions.items():
            assert state.alive[v] and v != u
            assert 0.0 <= phi <= state.rc[v]


def test_mcsmg_is_deterministic(fig7):
    sp = spec("ic", 2000, 5)
    assert mcsmg(fig7, init_residual(fig7), A, sp) == mcsmg(fig7, init_residual(fig7), A, sp)


# --- upper bound --------------------------------------------------------------

def test_bound_without_out_edges(fig7):
    s = init_residual(fig7)
    s.rc[D] = 0.4
    assert upper_bound_mg(fig7, s, D, {}) == 0.4


def test_bound_zero_capacity(fig7):
    s = init_residual(fig7)
    s.rc[B] = 0.0
    assert upper_bound_mg(fig7, s, B, {C: (1.0, 2.0)}) == 0.0


def test_bound_formula(fig7):
    s = fig7b_state(fig7)
    prev = {C: (0.8, 1.1)}
    assert upper_bound_mg(fig7, s, B, prev) == pytest.approx(0.3 + 0.3 * 0.5 * 0.8 * 1.1)


def test_bound_missing_entry_falls_back_to_n(fig7):
    s = init_residual(fig7)
    assert upper_bound_mg(fig7, s, C, {}) == pytest.approx(1 + 0.2 * 4)


def test_bound_misses_capacity_counted_twice():
    """u -> v with w=1 after v lost half its capacity: the one-hop bound is too low.

    Its term for v is w·RC_o(v)·mg_o(v) = 0.5·0.5, while u still claims
    min(RC(v), 1) = 0.5 of v.
    """
    g = graph_from([(0, 1, 1.0)])
    s = init_residual(g)
    s.rc[1] = 0.5
    bound = upper_bound_mg(g, s, 0, {1: (0.5, 0.5)})
    exact = mcsmg(g, s, 0, spec("ic", 1000))
    assert bound == pytest.approx(1.25)
    assert exact.mg == pytest.approx(1.5)


LEMMA_GAP = pytest.mark.xfail(
    strict=True,
    reason="one-hop bound scales each neighbour by RC twice; fails once weights are large",
)


@LEMMA_GAP
@pytest.mark.parametrize("rho", [0.1, 1.0])
def test_bound_dominates_on_random_states(rho):
    """prev recorded at S_o, bound compared with the exact gain at S ⊇ S_o."""
    g = erdos_renyi(20, 0.15, 8, policy=WeightPolicy.generalized(rho))
    rs = np.random.default_rng(0)
    checked = 0
    for trial in range(100):
        sp = spec(("ic", "lt")[trial % 2], 100_000, trial, policy=g.policy)
        order = [int(x) for x in rs.permutation(g.n)]
        so_len = int(rs.integers(0, 3))
        s_len = so_len + int(rs.integers(0, 3))
        old = run_seeds(g, order[:so_len], sp)
        new = run_seeds(g, order[:s_len], sp)
        u = order[s_len]
        if not new.alive[u]:
            continue
        prev = {}
        for v, _ in g.out_edges(u):
            mg_o = mcsmg(g, old, v, sp, iteration=so_len).mg if old.alive[v] else 0.0
            prev[v] = (float(old.rc[v]), mg_o)
        exact = mcsmg(g, new, u, sp, iteration=s_len)
        assert upper_bound_mg(g, new, u, prev) >= exact.mg - 3 * exact.std_error
        checked += 1
    assert checked >= 80


# --- selection ----------------------------------------------------------------

def test_first_seed_is_a(fig7):
    res = select_seeds_rcelf(fig7, 1, spec("lt", 50_000))
    assert res.seeds == [A]
    assert res.gains[0] == pytest.approx(2.88, abs=0.02)


def test_k_equals_n(fig7):
    res = select_seeds_rcelf(fig7, 4, spec("ic", 2000))
    assert sorted(res.seeds) == [0, 1, 2, 3] or res.truncated
    assert res.total <= fig7.n + 1e-9


def test_second_seed_is_bruteforce_argmax(fig7):
    res = select_seeds_rcelf(fig7, 2, spec("lt", 200_000))
    oracle = spec("lt", 200_000, seed=99)
    state = run_seeds(fig7, [res.seeds[0]], oracle)
    gains = {v: mcsmg(fig7, state, v, oracle, iteration=1).mg for v in np.flatnonzero(state.alive)}
    assert res.seeds[1] == max(gains, key=lambda v: (gains[v], -v))


def test_k_out_of_range(fig7):
    with pytest.raises(DomainError):
        select_seeds_rcelf(fig7, 5, spec("lt", 10))
    with pytest.raises(DomainError):
        select_seeds_rcelf(fig7, 0, spec("lt", 10))


def test_truncates_when_candidates_run_out():
    g = graph_from([(0, 1, 1.0)])
    res = select_seeds_rcelf(g, 2, spec("ic", 100))
    assert res.seeds == [0] and res.truncated


def test_fewer_exact_computations_with_filter():
    g = power_law(3000, 4.1, 2, policy=WeightPolicy.generalized(0.1))
    sp = spec("ic", 200, policy=g.policy)
    with_f = select_seeds_rcelf(g, 30, sp, True)
    without = select_seeds_rcelf(g, 30, sp, False)
    assert with_f.exact_mg_computations <= without.exact_mg_computations
    assert with_f.extra["refresh_mg_computations"] == with_f.exact_mg_computations - g.n


def _run(model="ic", seed=0, k=10, threads=None, rho=1.0):
    g = power_law(800, 4.1, 5, policy=WeightPolicy.generalized(rho))
    if threads is not None:
        set_threads(threads)
    try:
        return select_seeds_rcelf(g, k, spec(model, 200, seed, policy=g.policy), record_trace=True)
    finally:
        set_threads(None)


@pytest.mark.parametrize("model", ["ic", "lt"])
def test_gains_non_negative_and_delta_monotone(model):
    res = _run(model)
    assert all(x >= 0 for x in res.gains)
    assert all(b >= a for a, b in zip(res.delta, res.delta[1:]))
    assert res.delta[-1] == pytest.approx(sum(res.gains))


@pytest.mark.parametrize("model", ["ic", "lt"])
def test_residual_gains_shrink_across_refreshes(model):
    res = _run(model)
    history: dict[int, list] = {}
    for it, node, mg, se in res.trace.exact():
        history.setdefault(node, []).append((mg, se))
    pairs = 0
    for seq in history.values():
        for (m0, s0), (m1, s1) in zip(seq, seq[1:]):
            assert m1 <= m0 + 3 * np.hypot(s0, s1) + 1e-12
            pairs += 1
    assert pairs > 0


@pytest.mark.parametrize("model, rho", [
    ("ic", 0.1), ("lt", 0.1), ("ic", 1.0), pytest.param("lt", 1.0, marks=LEMMA_GAP),
])
def test_bounds_dominate_later_exact_values(model, rho):
    res = _run(model, k=20, rho=rho)
    checks = res.trace.bound_checks()
    assert checks
    for node, bound, mg, se in checks:
        assert bound >= mg - 3 * se - 1e-12


def test_selection_reproducible_and_thread_independent():
    a = _run(threads=1)
    b = _run(threads=max_threads())
    c = _run()
    for other in (b, c):
        assert a.seeds == other.seeds
        assert a.delta == other.delta
        assert a.extra["contribution_digests"] == other.extra["contribution_digests"]


def test_different_seed_changes_stream():
    a, b = _run(seed=0), _run(seed=1)
    assert a.gains != b.gains


SIM = settings(max_examples=15, deadline=None)


@SIM
@given(st.integers(0, 10_000), st.sampled_from(["ic", "lt"]))
def test_filter_never_costs_more(seed, model):
    g = erdos_renyi(40, 0.08, seed, policy=WeightPolicy.generalized(0.5))
    sp = spec(model, 300, seed, policy=g.policy)
    a = select_seeds_rcelf(g, 8, sp, True)
    b = select_seeds_rcelf(g, 8, sp, False)
    assert a.exact_mg_computations <= b.exact_mg_computations
