"""Residual-capacity lazy greedy (RCELF).

Each node carries a residual capacity RC(v) that starts at 1.  The marginal
gain of a candidate u is RC(u) plus the contributions Φ(u, v) of the alive
nodes it reaches, estimated in one batch of Monte-Carlo runs (MCSMG).  When u
is chosen, each RC(v) drops by Φ(u, v) and u leaves the graph.  Candidates
sit in a max-heap; stale entries are first tightened with a cheap one-hop
upper bound and only recomputed when they come back to the root.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit, prange

from . import rng
from .diffusion import DiffusionSpec, model_code
from .errors import DomainError, PreconditionError
from .graph import Graph, ResidualState, apply_contributions, init_residual
from .result import SeedResult, digest_arrays, peak_rss_bytes

log = logging.getLogger(__name__)

EXACT = 0
UPPER_BOUND = 1
_BLOCK = 32


class Gain(NamedTuple):
    mg: float
    contributions: dict[int, float]
    std_error: float


# --- kernels ---------------------------------------------------------------

@njit(cache=True)
def _mcsmg_counts(out_ptr, out_dst, out_w, rc, alive, u, key, r, model,
                  mark, tag0, queue, acc, accmark, counts, touched):
    """Run r residual simulations from u.

    Fills ``counts[v]`` with activation counts (touched nodes listed in
    ``touched``) and returns (number touched, Σ a_j, Σ a_j²) where a_j is
    the number of nodes other than u activated in run j.

    IC: edge (x, v) fires with probability RC(x)·w(x, v).
    LT: v's threshold is drawn once per run and compared against the summed
    weights of its active in-neighbours.  Dead nodes never activate.
    """
    m = out_dst.shape[0]
    nt = 0
    s1 = 0.0
    s2 = 0.0
    for j in range(r):
        tag = tag0 + j
        mark[u] = tag
        queue[0] = u
        head = 0
        tail = 1
        while head < tail:
            x = queue[head]
            head += 1
            px = rc[x]
            for e in range(out_ptr[x], out_ptr[x + 1]):
                v = out_dst[e]
                if mark[v] == tag or not alive[v]:
                    continue
                if model == 0:
                    fire = rng.uniform(key, j, e) < px * out_w[e]
                else:
                    if accmark[v] != tag:
                        accmark[v] = tag
                        acc[v] = 0.0
                    acc[v] += out_w[e]
                    fire = acc[v] >= 1.0 - rng.uniform(key, j, m + v)
                if fire:
                    mark[v] = tag
                    queue[tail] = v
                    tail += 1
                    if counts[v] == 0:
                        touched[nt] = v
                        nt += 1
                    counts[v] += 1
        a = tail - 1
        s1 += a
        s2 += a * a
    return nt, s1, s2


@njit(cache=True)
def _finish(rc, u, r, nt, s1, s2, counts, touched, phis):
    """Turn counts into Φ values (capped at RC(v)) and the gain; clears counts."""
    ru = rc[u]
    mg = ru
    for i in range(nt):
        v = touched[i]
        phi = counts[v] / r * ru
        if phi > rc[v]:
            phi = rc[v]
        phis[i] = phi
        mg += phi
        counts[v] = 0
    if r > 1:
        mean = s1 / r
        var = (s2 - r * mean * mean) / (r - 1)
        if var < 0.0:
            var = 0.0
        se = ru * np.sqrt(var / r)
    else:
        se = 0.0
    return mg, se


@njit(cache=True)
def _mcsmg_one(out_ptr, out_dst, out_w, rc, alive, u, key, r, model,
               mark, tag0, queue, acc, accmark, counts, touched, phis):
    nt, s1, s2 = _mcsmg_counts(out_ptr, out_dst, out_w, rc, alive, u, key, r, model,
                               mark, tag0, queue, acc, accmark, counts, touched)
    mg, se = _finish(rc, u, r, nt, s1, s2, counts, touched, phis)
    return mg, se, nt


@njit(parallel=True, cache=True)
def _mcsmg_batch(out_ptr, out_dst, out_w, rc, alive, nodes, keys, r, model):
    n = out_ptr.shape[0] - 1
    cnt = nodes.shape[0]
    mg = np.zeros(cnt, dtype=np.float64)
    se = np.zeros(cnt, dtype=np.float64)
    nblocks = (cnt + _BLOCK - 1) // _BLOCK
    for b in prange(nblocks):
        mark = np.full(n, -1, dtype=np.int64)
        accmark = np.full(n, -1, dtype=np.int64)
        acc = np.zeros(n, dtype=np.float64)
        queue = np.empty(n, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        touched = np.empty(n, dtype=np.int64)
        phis = np.empty(n, dtype=np.float64)
        tag0 = 0
        for i in range(b * _BLOCK, min(cnt, (b + 1) * _BLOCK)):
            mg[i], se[i], _ = _mcsmg_one(out_ptr, out_dst, out_w, rc, alive, nodes[i], keys[i],
                                         r, model, mark, tag0, queue, acc, accmark,
                                         counts, touched, phis)
            tag0 += r
    return mg, se


class _Workspace:
    def __init__(self, n: int):
        self.mark = np.full(n, -1, dtype=np.int64)
        self.accmark = np.full(n, -1, dtype=np.int64)
        self.acc = np.zeros(n, dtype=np.float64)
        self.queue = np.empty(max(n, 1), dtype=np.int64)
        self.counts = np.zeros(n, dtype=np.int64)
        self.touched = np.empty(max(n, 1), dtype=np.int64)
        self.phis = np.empty(max(n, 1), dtype=np.float64)
        self.tag = 0


def _candidate_key(spec: DiffusionSpec, node: int, iteration: int):
    return rng.stream_key(spec.rng_seed, rng.DOMAIN_MCSMG, node, iteration)


def _run_one(g: Graph, state: ResidualState, u: int, spec: DiffusionSpec, iteration: int, ws: _Workspace):
    key = _candidate_key(spec, u, iteration)
    r = int(spec.r)
    mg, se, nt = _mcsmg_one(g.out_ptr, g.out_dst, g.out_w, state.rc, state.alive, u, key, r,
                            model_code(spec.model), ws.mark, ws.tag, ws.queue, ws.acc,
                            ws.accmark, ws.counts, ws.touched, ws.phis)
    ws.tag += r
    return float(mg), float(se), ws.touched[:nt].copy(), ws.phis[:nt].copy()


def mcsmg(g: Graph, state: ResidualState, u: int, spec: DiffusionSpec, *, iteration: int = 0) -> Gain:
    """Monte-Carlo marginal gain of ``u`` on the residual graph, with every Φ(u, v).

    Φ(u, v) = min(RC(v), RC(u) · activations(v) / r) and
    mg = RC(u) + Σ_v Φ(u, v).  The random stream is keyed by
    (spec.rng_seed, u, iteration).  ``std_error`` is the standard error of the
    uncapped per-run contribution total.
    """
    if not 0 <= u < g.n:
        raise DomainError(f"node {u} outside [0, {g.n})")
    if not state.alive[u]:
        raise PreconditionError(f"node {u} is not alive")
    mg, se, nodes, phis = _run_one(g, state, u, spec, iteration, _Workspace(g.n))
    return Gain(mg, dict(zip(nodes.tolist(), phis.tolist())), se)


def upper_bound_mg(g: Graph, state: ResidualState, u: int, prev) -> float:
    """One-hop bound ``RC(u) + RC(u) · Σ_{v in Out(u)} w(u,v) · RC_o(v) · mg_o(v)``.

    ``prev`` maps each out-neighbour v to (RC_o(v), mg_o(v)) as recorded when
    u's heap value was last computed.  A missing neighbour falls back to
    (1, n), which can only loosen the bound.
    """
    ru = float(state.rc[u])
    total = 0.0
    lo, hi = int(g.out_ptr[u]), int(g.out_ptr[u + 1])
    for e in range(lo, hi):
        v = int(g.out_dst[e])
        rec = prev.get(v)
        if rec is None:
            log.debug("no recorded gain for out-neighbour %d of %d; using n", v, u)
            rec = (1.0, float(g.n))
        total += float(g.out_w[e]) * rec[0] * rec[1]
    return ru + ru * total


# --- selection ---------------------------------------------------------------

@dataclass
class RcelfTrace:
    """Ordered event log of one selection run, used by the property tests.

    ``events`` rows are ("exact", iteration, node, mg, std_error) or
    ("bound", iteration, node, bound).  ``contributions`` holds, per chosen
    seed, the (nodes, Φ) arrays that were applied.
    """

    events: list = field(default_factory=list)
    contributions: list = field(default_factory=list)

    def exact(self):
        return [e[1:] for e in self.events if e[0] == "exact"]

    def bounds(self):
        return [e[1:] for e in self.events if e[0] == "bound"]

    def bound_checks(self):
        """(node, bound, next exact mg, its std_error) for every bound later recomputed."""
        pending: dict[int, list[float]] = {}
        pairs = []
        for ev in self.events:
            node = ev[2]
            if ev[0] == "bound":
                pending.setdefault(node, []).append(ev[3])
            elif node in pending:
                for b in pending.pop(node):
                    pairs.append((node, b, ev[3], ev[4]))
        return pairs


def select_seeds_rcelf(
    g: Graph,
    k: int,
    spec: DiffusionSpec,
    use_bound_filter: bool = True,
    *,
    record_trace: bool = False,
) -> SeedResult:
    """Pick k seeds by lazy greedy over residual marginal gains.

    A heap entry is only chosen when it holds an exact gain computed in the
    current iteration.  With ``use_bound_filter`` a stale entry is first
    replaced by min(stale value, one-hop upper bound); the exact MCSMG
    computation runs only if that bound reaches the root again.
    """
    n = g.n
    if not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, {n}], got {k}")
    t0 = time.perf_counter()
    state = init_residual(g)
    ws = _Workspace(n)
    model = model_code(spec.model)
    r = int(spec.r)
    result = SeedResult(algorithm="rcelf" if use_bound_filter else "rcelf-nobound")
    trace = RcelfTrace() if record_trace else None

    nodes = np.arange(n, dtype=np.int64)
    keys = np.array([_candidate_key(spec, v, 0) for v in range(n)], dtype=np.uint64)
    value, se0 = _mcsmg_batch(g.out_ptr, g.out_dst, g.out_w, state.rc, state.alive, nodes, keys, r, model)
    exact_count = n
    kind = np.zeros(n, dtype=np.int8)
    stamp = np.zeros(n, dtype=np.int64)
    if trace is not None:
        trace.events.extend(("exact", 0, v, float(value[v]), float(se0[v])) for v in range(n))

    prev_rc = np.ones(g.m, dtype=np.float64)
    prev_mg = value[g.out_dst].copy()

    heap = [(-float(value[v]), v) for v in range(n)]
    heapq.heapify(heap)
    current_maps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    digests = []

    for it in range(k):
        current_maps.clear()
        chosen = -1
        while heap:
            _, u = heapq.heappop(heap)
            if not state.alive[u]:
                continue
            if stamp[u] == it and kind[u] == EXACT:
                chosen = u
                break
            if stamp[u] == it or not use_bound_filter:
                mg, se, cn, cp = _run_one(g, state, u, spec, it, ws)
                exact_count += 1
                value[u] = mg
                kind[u] = EXACT
                stamp[u] = it
                lo, hi = g.out_ptr[u], g.out_ptr[u + 1]
                nb = g.out_dst[lo:hi]
                prev_rc[lo:hi] = state.rc[nb]
                prev_mg[lo:hi] = value[nb]
                current_maps[u] = (cn, cp)
                if trace is not None:
                    trace.events.append(("exact", it, u, mg, se))
            else:
                lo, hi = g.out_ptr[u], g.out_ptr[u + 1]
                ru = state.rc[u]
                bound = float(ru + ru * np.dot(g.out_w[lo:hi], prev_rc[lo:hi] * prev_mg[lo:hi]))
                if trace is not None:
                    trace.events.append(("bound", it, u, bound))
                value[u] = min(value[u], bound)
                kind[u] = UPPER_BOUND
                stamp[u] = it
            heapq.heappush(heap, (-float(value[u]), u))
        if chosen < 0:
            result.truncated = True
            log.info("ran out of alive candidates after %d seeds", len(result.seeds))
            break
        cn, cp = current_maps.get(chosen) or _run_one(g, state, chosen, spec, it, ws)[2:]
        result.add(chosen, float(value[chosen]))
        digests.append(digest_arrays(np.int64(chosen), cn, cp))
        if trace is not None:
            trace.contributions.append((chosen, cn, cp))
        apply_contributions(state, (cn, cp), chosen)

    result.spread = result.total
    result.exact_mg_computations = exact_count
    result.wall_time_s = time.perf_counter() - t0
    result.peak_rss_bytes = peak_rss_bytes()
    result.extra["refresh_mg_computations"] = exact_count - n
    result.extra["contribution_digests"] = digests
    result.extra["residual_sum"] = float(state.rc.sum())
    result.trace = trace
    return result
