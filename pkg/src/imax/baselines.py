"""Reference algorithms: Monte-Carlo greedy and CELF, StaticGreedy snapshots, and RIS.

Greedy and CELF estimate σ over a fixed set of ``r`` sampled worlds (common
random numbers).  Each world is a live-edge realization drawn from counters
keyed by (world, edge) or (world, node), so worlds are never stored and the
estimated σ is a coverage function: exactly monotone and submodular.  That
is what makes CELF return the same seeds as greedy.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import rng
from .diffusion import DiffusionSpec, Model, lt_interval_lo, model_code
from .errors import DomainError, PreconditionError
from .graph import Graph, transpose
from .result import SeedResult, peak_rss_bytes

log = logging.getLogger(__name__)

_BLOCK = 16
GREEDY_DEFAULT_R = 10_000
SG_DEFAULT_R = 200


def _check_k(g: Graph, k: int) -> None:
    if not 1 <= k <= g.n:
        raise DomainError(f"k must lie in [1, {g.n}], got {k}")


# --- live-edge worlds --------------------------------------------------------

@njit(inline="always")
def _live(model, key, j, e, v, m, w, lo):
    if model == 0:
        return rng.uniform(key, j, e) < w
    uv = rng.uniform(key, j, m + v)
    return lo <= uv and uv < lo + w


@njit(cache=True)
def _world_bfs(out_ptr, out_dst, out_w, lt_lo, key, model, j, src, covered, mark, tag, queue, commit):
    """Count nodes reachable from src in world j that are not yet covered.

    With ``commit`` the reached nodes are marked covered.
    """
    m = out_dst.shape[0]
    if covered[src]:
        return 0
    mark[src] = tag
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        x = queue[head]
        head += 1
        for e in range(out_ptr[x], out_ptr[x + 1]):
            v = out_dst[e]
            if mark[v] == tag or covered[v]:
                continue
            if _live(model, key, j, e, v, m, out_w[e], lt_lo[e]):
                mark[v] = tag
                queue[tail] = v
                tail += 1
    if commit:
        for i in range(tail):
            covered[queue[i]] = True
    return tail


@njit(parallel=True, cache=True)
def _world_gains(out_ptr, out_dst, out_w, lt_lo, key, model, covered, cands):
    r, n = covered.shape
    gains = np.zeros(cands.shape[0], dtype=np.int64)
    nblocks = (cands.shape[0] + _BLOCK - 1) // _BLOCK
    for b in prange(nblocks):
        mark = np.full(n, -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        tag = 0
        for i in range(b * _BLOCK, min(cands.shape[0], (b + 1) * _BLOCK)):
            tot = 0
            for j in range(r):
                tot += _world_bfs(out_ptr, out_dst, out_w, lt_lo, key, model, j, cands[i],
                                  covered[j], mark, tag, queue, False)
                tag += 1
            gains[i] = tot
    return gains


@njit(parallel=True, cache=True)
def _world_cover(out_ptr, out_dst, out_w, lt_lo, key, model, covered, src):
    r, n = covered.shape
    added = np.zeros(r, dtype=np.int64)
    nblocks = (r + _BLOCK - 1) // _BLOCK
    for b in prange(nblocks):
        mark = np.full(n, -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        for j in range(b * _BLOCK, min(r, (b + 1) * _BLOCK)):
            added[j] = _world_bfs(out_ptr, out_dst, out_w, lt_lo, key, model, j, src,
                                  covered[j], mark, j, queue, True)
    return added.sum()


class _Worlds:
    """r sampled worlds of g plus the per-world set of nodes reached by the seeds."""

    def __init__(self, g: Graph, spec: DiffusionSpec, r: int):
        self.g = g
        self.key = rng.stream_key(spec.rng_seed, rng.DOMAIN_WORLD)
        self.model = model_code(spec.model)
        self.lt_lo = lt_interval_lo(g.in_ptr, g.in_w, g.in_eid, g.m)
        self.covered = np.zeros((r, g.n), dtype=np.bool_)
        self.r = r

    def gains(self, cands) -> np.ndarray:
        g = self.g
        cands = np.asarray(cands, dtype=np.int64)
        return _world_gains(g.out_ptr, g.out_dst, g.out_w, self.lt_lo, self.key, self.model,
                            self.covered, cands)

    def cover(self, s: int) -> int:
        g = self.g
        return int(_world_cover(g.out_ptr, g.out_dst, g.out_w, self.lt_lo, self.key, self.model,
                                self.covered, np.int64(s)))


def greedy_mc(g: Graph, k: int, spec: DiffusionSpec) -> SeedResult:
    """Plain greedy: every iteration re-estimates every remaining candidate.

    Cost is k·n·r cascades; meant for graphs of at most a few hundred nodes.
    Gains are exact integer world counts divided by r.
    """
    _check_k(g, k)
    if g.n > 2000:
        log.warning("greedy_mc on %d nodes will be slow", g.n)
    t0 = time.perf_counter()
    worlds = _Worlds(g, spec, int(spec.r))
    res = SeedResult(algorithm="greedy")
    chosen = np.zeros(g.n, dtype=bool)
    evals = 0
    for _ in range(k):
        cands = np.flatnonzero(~chosen)
        gains = worlds.gains(cands)
        evals += cands.size
        best = int(cands[int(np.argmax(gains))])
        got = worlds.cover(best)
        res.add(best, got / worlds.r)
        chosen[best] = True
    res.spread = res.total
    res.exact_mg_computations = evals
    res.wall_time_s = time.perf_counter() - t0
    res.peak_rss_bytes = peak_rss_bytes()
    return res


def celf(g: Graph, k: int, spec: DiffusionSpec) -> SeedResult:
    """Lazy greedy over the same worlds as :func:`greedy_mc`; returns the same seeds.

    ``extra["refreshes"][i]`` lists the nodes recomputed in iteration i.
    """
    _check_k(g, k)
    t0 = time.perf_counter()
    worlds = _Worlds(g, spec, int(spec.r))
    res = SeedResult(algorithm="celf")
    value = worlds.gains(np.arange(g.n, dtype=np.int64))
    stamp = np.zeros(g.n, dtype=np.int64)
    evals = g.n
    refreshes = [list(range(g.n))]
    heap = [(-int(value[v]), v) for v in range(g.n)]
    heapq.heapify(heap)
    for it in range(k):
        if it:
            refreshes.append([])
        while True:
            _, u = heapq.heappop(heap)
            if stamp[u] == it:
                break
            value[u] = worlds.gains(np.array([u], dtype=np.int64))[0]
            stamp[u] = it
            evals += 1
            refreshes[it].append(u)
            heapq.heappush(heap, (-int(value[u]), u))
        got = worlds.cover(u)
        res.add(u, got / worlds.r)
    res.spread = res.total
    res.exact_mg_computations = evals
    res.wall_time_s = time.perf_counter() - t0
    res.peak_rss_bytes = peak_rss_bytes()
    res.extra["refreshes"] = refreshes
    return res


# --- StaticGreedy snapshots --------------------------------------------------

@dataclass
class Snapshots:
    """r materialized snapshots sharing one node set.

    Snapshot j's out-adjacency is ``dst[ptr[j, x]:ptr[j, x+1]]`` (offsets into
    the shared ``dst`` array).  ``removed[j]`` marks nodes already reached by
    chosen seeds in snapshot j.
    """

    ptr: np.ndarray
    dst: np.ndarray
    removed: np.ndarray

    @property
    def r(self) -> int:
        return int(self.ptr.shape[0])

    @property
    def n(self) -> int:
        return int(self.ptr.shape[1] - 1)

    def nbytes(self) -> int:
        return self.ptr.nbytes + self.dst.nbytes + self.removed.nbytes

    def retained_edges(self, j: int) -> list[tuple[int, int]]:
        out = []
        for x in range(self.n):
            for v in self.dst[self.ptr[j, x]:self.ptr[j, x + 1]]:
                out.append((x, int(v)))
        return out

    @classmethod
    def from_edge_lists(cls, n: int, snapshots) -> Snapshots:
        ptr = np.zeros((len(snapshots), n + 1), dtype=np.int64)
        dsts = []
        base = 0
        for j, edges in enumerate(snapshots):
            edges = sorted(edges)
            counts = np.bincount(np.array([u for u, _ in edges], dtype=np.int64), minlength=n)
            ptr[j, 1:] = base + np.cumsum(counts)
            ptr[j, 0] = base
            dsts.extend(v for _, v in edges)
            base += len(edges)
        return cls(ptr, np.asarray(dsts, dtype=np.int64), np.zeros((len(snapshots), n), dtype=np.bool_))


@njit(cache=True)
def _build_snapshots(out_ptr, out_dst, out_w, lt_lo, key, model, r):
    n = out_ptr.shape[0] - 1
    m = out_dst.shape[0]
    ptr = np.zeros((r, n + 1), dtype=np.int64)
    cap = max(16, m // 4)
    dst = np.empty(cap, dtype=np.int64)
    size = 0
    for j in range(r):
        ptr[j, 0] = size
        for x in range(n):
            for e in range(out_ptr[x], out_ptr[x + 1]):
                v = out_dst[e]
                if _live(model, key, j, e, v, m, out_w[e], lt_lo[e]):
                    if size == dst.shape[0]:
                        grown = np.empty(dst.shape[0] * 2, dtype=np.int64)
                        grown[:size] = dst[:size]
                        dst = grown
                    dst[size] = v
                    size += 1
            ptr[j, x + 1] = size
    return ptr, dst[:size].copy()


def generate_snapshots(g: Graph, r: int, rng_seed: int, model: Model = Model.IC) -> Snapshots:
    """Flip every edge coin once per snapshot (live-edge sampling for LT)."""
    key = rng.stream_key(rng_seed, rng.DOMAIN_SNAPSHOT)
    lt_lo = lt_interval_lo(g.in_ptr, g.in_w, g.in_eid, g.m)
    ptr, dst = _build_snapshots(g.out_ptr, g.out_dst, g.out_w, lt_lo, key, model_code(model), int(r))
    return Snapshots(ptr, dst, np.zeros((int(r), g.n), dtype=np.bool_))


@njit(cache=True)
def _snap_bfs(ptr, dst, removed, src, mark, tag, queue, commit):
    if removed[src]:
        return 0
    mark[src] = tag
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        x = queue[head]
        head += 1
        for i in range(ptr[x], ptr[x + 1]):
            v = dst[i]
            if mark[v] == tag or removed[v]:
                continue
            mark[v] = tag
            queue[tail] = v
            tail += 1
    if commit:
        for i in range(tail):
            removed[queue[i]] = True
    return tail


@njit(parallel=True, cache=True)
def _snap_gains(ptr, dst, removed, cands):
    r, n = removed.shape
    gains = np.zeros(cands.shape[0], dtype=np.int64)
    nblocks = (cands.shape[0] + _BLOCK - 1) // _BLOCK
    for b in prange(nblocks):
        mark = np.full(n, -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        tag = 0
        for i in range(b * _BLOCK, min(cands.shape[0], (b + 1) * _BLOCK)):
            tot = 0
            for j in range(r):
                tot += _snap_bfs(ptr[j], dst, removed[j], cands[i], mark, tag, queue, False)
                tag += 1
            gains[i] = tot
    return gains


@njit(cache=True)
def _snap_remove(ptr, dst, removed, src):
    r, n = removed.shape
    mark = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    tot = 0
    for j in range(r):
        tot += _snap_bfs(ptr[j], dst, removed[j], src, mark, j, queue, True)
    return tot


def snapshot_gains(snaps: Snapshots, cands) -> np.ndarray:
    """Total reachable non-removed nodes of each candidate, summed over snapshots."""
    return _snap_gains(snaps.ptr, snaps.dst, snaps.removed, np.asarray(cands, dtype=np.int64))


def select_on_snapshots(snaps: Snapshots, k: int, *, algorithm: str = "sg") -> SeedResult:
    """Greedy on fixed snapshots: pick the largest average reach, then delete what it reaches.

    Gains only shrink as nodes are removed, so stale heap values are upper
    bounds and lazy evaluation picks the same node as a full rescan.
    """
    n, r = snaps.n, snaps.r
    if not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, {n}], got {k}")
    res = SeedResult(algorithm=algorithm)
    value = snapshot_gains(snaps, np.arange(n))
    stamp = np.zeros(n, dtype=np.int64)
    evals = n
    first_round = value.copy()
    heap = [(-int(value[v]), v) for v in range(n)]
    heapq.heapify(heap)
    for it in range(k):
        while True:
            _, u = heapq.heappop(heap)
            if stamp[u] == it:
                break
            value[u] = snapshot_gains(snaps, [u])[0]
            stamp[u] = it
            evals += 1
            heapq.heappush(heap, (-int(value[u]), u))
        got = _snap_remove(snaps.ptr, snaps.dst, snaps.removed, np.int64(u))
        res.add(u, got / r)
    res.spread = res.total
    res.exact_mg_computations = evals
    res.extra["first_round_average"] = (first_round / r).tolist() if n <= 64 else None
    res.extra["snapshot_bytes"] = snaps.nbytes()
    return res


def sg_select(g: Graph, k: int, r: int = SG_DEFAULT_R, rng_seed: int = 0, model: Model = Model.IC) -> SeedResult:
    """StaticGreedy: sample r snapshots once, then run greedy on them."""
    _check_k(g, k)
    t0 = time.perf_counter()
    snaps = generate_snapshots(g, r, rng_seed, model)
    res = select_on_snapshots(snaps, k)
    res.extra["graph_bytes"] = g.nbytes()
    res.wall_time_s = time.perf_counter() - t0
    res.peak_rss_bytes = peak_rss_bytes()
    return res


# --- reverse influence sampling ---------------------------------------------

@njit(cache=True)
def _rr_from_root(ptr, dst, w, key, model, i, root, mark, tag, queue):
    """Reverse BFS on the transpose from ``root`` in sampled world i; returns size."""
    m = dst.shape[0]
    mark[root] = tag
    queue[0] = root
    head = 0
    tail = 1
    while head < tail:
        x = queue[head]
        head += 1
        if model == 0:
            for e in range(ptr[x], ptr[x + 1]):
                v = dst[e]
                if mark[v] != tag and rng.uniform(key, i, 1 + e) < w[e]:
                    mark[v] = tag
                    queue[tail] = v
                    tail += 1
        else:
            # live-edge LT: x keeps at most one in-neighbour
            ux = rng.uniform(key, i, 1 + m + x)
            acc = 0.0
            for e in range(ptr[x], ptr[x + 1]):
                acc += w[e]
                if ux < acc:
                    v = dst[e]
                    if mark[v] != tag:
                        mark[v] = tag
                        queue[tail] = v
                        tail += 1
                    break
    return tail


@njit(cache=True)
def _rr_batch(ptr, dst, w, key, model, start, stop, set_ptr, nodes, size):
    """Append RR sets ``start..stop-1``; buffers grow by doubling."""
    n = ptr.shape[0] - 1
    mark = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for i in range(start, stop):
        root = int(rng.uniform(key, i, 0) * n)
        if root >= n:
            root = n - 1
        cnt = _rr_from_root(ptr, dst, w, key, model, i, root, mark, i, queue)
        while size + cnt > nodes.shape[0]:
            grown = np.empty(nodes.shape[0] * 2, dtype=np.int32)
            grown[:size] = nodes[:size]
            nodes = grown
        for t in range(cnt):
            nodes[size + t] = queue[t]
        size += cnt
        set_ptr[i + 1] = size
    return nodes, size


def rr_set_from_root(gT: Graph, root: int, spec: DiffusionSpec, index: int = 0) -> set[int]:
    """RR set of a given root in sampled world ``index``."""
    key = rng.stream_key(spec.rng_seed, rng.DOMAIN_RRSET)
    mark = np.full(gT.n, -1, dtype=np.int64)
    queue = np.empty(gT.n, dtype=np.int64)
    cnt = _rr_from_root(gT.out_ptr, gT.out_dst, gT.out_w, key, model_code(spec.model), index,
                        root, mark, 0, queue)
    return set(queue[:cnt].tolist())


def generate_rr_set(gT: Graph, spec: DiffusionSpec, index: int) -> set[int]:
    """RR set number ``index``: uniform root, then one sampled reverse cascade.

    ``gT`` is the transpose of the influence graph.
    """
    if gT.n == 0:
        raise PreconditionError("cannot sample an RR set from an empty graph")
    key = rng.stream_key(spec.rng_seed, rng.DOMAIN_RRSET)
    root = min(int(rng.uniform(key, index, 0) * gT.n), gT.n - 1)
    return rr_set_from_root(gT, root, spec, index)


@dataclass
class RRSetCollection:
    """RR sets in CSR form plus the node -> set inverted index."""

    n: int
    set_ptr: np.ndarray
    nodes: np.ndarray
    cover_ptr: np.ndarray = None
    cover_sets: np.ndarray = None
    covered: np.ndarray = None

    def __post_init__(self):
        if self.cover_ptr is None:
            self.build_index()

    @property
    def count(self) -> int:
        return int(self.set_ptr.shape[0] - 1)

    def __len__(self):
        return self.count

    def sets(self) -> list[set[int]]:
        return [set(self.nodes[self.set_ptr[i]:self.set_ptr[i + 1]].tolist()) for i in range(self.count)]

    def build_index(self) -> None:
        owner = np.repeat(np.arange(self.count, dtype=np.int64), np.diff(self.set_ptr))
        order = np.argsort(self.nodes, kind="stable")
        self.cover_sets = owner[order].astype(np.int32)
        self.cover_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.nodes, minlength=self.n), out=self.cover_ptr[1:])
        self.covered = np.zeros(self.count, dtype=np.bool_)

    def sets_of(self, v: int) -> list[int]:
        return self.cover_sets[self.cover_ptr[v]:self.cover_ptr[v + 1]].tolist()

    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.set_ptr, self.nodes, self.cover_ptr, self.cover_sets, self.covered))

    @classmethod
    def from_sets(cls, n: int, sets) -> RRSetCollection:
        sets = [sorted(set(s)) for s in sets]
        ptr = np.zeros(len(sets) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(s) for s in sets])
        nodes = np.fromiter((v for s in sets for v in s), dtype=np.int32, count=int(ptr[-1]))
        return cls(n, ptr, nodes)


def sample_rr_sets(g: Graph, theta: int, spec: DiffusionSpec, *, gT: Graph | None = None,
                   previous: RRSetCollection | None = None) -> RRSetCollection:
    """Sample RR sets 0..theta-1 (reusing ``previous`` as a prefix when given)."""
    gT = transpose(g) if gT is None else gT
    if gT.n == 0:
        raise PreconditionError("cannot sample RR sets from an empty graph")
    key = rng.stream_key(spec.rng_seed, rng.DOMAIN_RRSET)
    set_ptr = np.zeros(theta + 1, dtype=np.int64)
    if previous is not None:
        start = previous.count
        set_ptr[: start + 1] = previous.set_ptr
        size = int(previous.set_ptr[-1])
        nodes = np.empty(max(16, 2 * size), dtype=np.int32)
        nodes[:size] = previous.nodes
    else:
        start, size = 0, 0
        nodes = np.empty(max(16, 2 * theta), dtype=np.int32)
    nodes, size = _rr_batch(gT.out_ptr, gT.out_dst, gT.out_w, key, model_code(spec.model),
                            start, theta, set_ptr, nodes, size)
    return RRSetCollection(g.n, set_ptr, nodes[:size].copy())


@njit(cache=True)
def _max_cover(set_ptr, nodes, cover_ptr, cover_sets, covered, n, k):
    count = np.zeros(n, dtype=np.int64)
    for i in range(nodes.shape[0]):
        count[nodes[i]] += 1
    for s in range(covered.shape[0]):
        if covered[s]:
            for t in range(set_ptr[s], set_ptr[s + 1]):
                count[nodes[t]] -= 1
    seeds = np.empty(k, dtype=np.int64)
    gains = np.empty(k, dtype=np.int64)
    for it in range(k):
        best = 0
        for v in range(1, n):
            if count[v] > count[best]:
                best = v
        seeds[it] = best
        gains[it] = count[best]
        count[best] = -1
        for t in range(cover_ptr[best], cover_ptr[best + 1]):
            s = cover_sets[t]
            if covered[s]:
                continue
            covered[s] = True
            for q in range(set_ptr[s], set_ptr[s + 1]):
                if nodes[q] != best:
                    count[nodes[q]] -= 1
    return seeds, gains


def max_coverage(rr: RRSetCollection, k: int) -> tuple[list[int], list[int]]:
    """Greedy max coverage; returns seeds and the number of newly covered sets per pick.

    Ties go to the smaller node id.  Sets covered by a pick are ignored from
    then on.  ``rr.covered`` is updated in place.
    """
    seeds, gains = _max_cover(rr.set_ptr, rr.nodes, rr.cover_ptr, rr.cover_sets, rr.covered,
                              rr.n, int(k))
    return seeds.tolist(), gains.tolist()


def ris_select(
    g: Graph,
    k: int,
    theta: int,
    spec: DiffusionSpec,
    *,
    doubling: bool = False,
    max_theta: int = 1 << 22,
    tol: float = 0.01,
) -> SeedResult:
    """Reverse influence sampling with a fixed number of RR sets.

    With ``doubling`` the sample is doubled until the coverage fraction of the
    k chosen seeds changes by less than ``tol`` (relative) between rounds, or
    ``max_theta`` is reached.  The spread estimate is n · covered fraction.
    """
    _check_k(g, k)
    if theta < 1:
        raise DomainError(f"theta must be >= 1, got {theta}")
    t0 = time.perf_counter()
    gT = transpose(g)
    rr = sample_rr_sets(g, theta, spec, gT=gT)
    peak_bytes = rr.nbytes()
    seeds, gains = max_coverage(rr, k)
    frac = sum(gains) / rr.count
    rounds = 1
    while doubling and rr.count < max_theta:
        nxt = min(2 * rr.count, max_theta)
        rr = sample_rr_sets(g, nxt, spec, gT=gT, previous=rr)
        peak_bytes = max(peak_bytes, rr.nbytes())
        seeds, gains = max_coverage(rr, k)
        new_frac = sum(gains) / rr.count
        rounds += 1
        done = abs(new_frac - frac) <= tol * max(frac, 1e-300)
        frac = new_frac
        if done:
            break
    res = SeedResult(algorithm="ris")
    for s, c in zip(seeds, gains):
        res.add(s, g.n * c / rr.count)
    res.spread = g.n * frac
    res.exact_mg_computations = 0
    res.wall_time_s = time.perf_counter() - t0
    res.peak_rss_bytes = peak_rss_bytes()
    res.extra.update(
        rr_set_count=rr.count,
        rr_total_nodes=int(rr.set_ptr[-1]),
        rr_bytes=int(peak_bytes),
        rounds=rounds,
        coverage=[int(c) for c in gains],
    )
    return res
