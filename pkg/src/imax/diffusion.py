"""Diffusion models, the Monte-Carlo spread estimator and exact small-graph oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit, prange

from . import rng
from .errors import CyclicGraphError, DomainError, PreconditionError, SharedEdgeError
from .graph import Graph, ResidualState, WeightPolicy, init_residual

BLOCK = 64


class Model(str, Enum):
    IC = "ic"
    LT = "lt"


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion model plus simulation settings.

    WC is IC on a graph weighted with ``WeightPolicy.generalized(rho)``; the
    weights live on the Graph, ``policy`` here is recorded for reporting.
    """

    model: Model = Model.IC
    policy: WeightPolicy | None = None
    r: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if int(self.r) < 1:
            raise DomainError(f"simulation count r must be >= 1, got {self.r}")

    def with_r(self, r: int) -> DiffusionSpec:
        return DiffusionSpec(self.model, self.policy, int(r), self.rng_seed)


@dataclass(frozen=True)
class SpreadEstimate:
    mean: float
    std_error: float
    runs: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> SpreadEstimate:
        samples = np.asarray(samples, dtype=np.float64)
        runs = samples.size
        mean = float(samples.mean())
        se = float(samples.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
        return cls(mean, se, runs)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "runs": self.runs}


# --- kernels ---------------------------------------------------------------

@njit(cache=True)
def lt_interval_lo(in_ptr, in_w, in_eid, m):
    """For each forward edge e into v: total weight of v's in-edges listed before e.

    Under live-edge LT, v keeps edge e iff ``lo[e] <= U_v < lo[e] + w[e]``.
    """
    lo = np.empty(m, dtype=np.float64)
    n = in_ptr.shape[0] - 1
    for v in range(n):
        acc = 0.0
        for s in range(in_ptr[v], in_ptr[v + 1]):
            lo[in_eid[s]] = acc
            acc += in_w[s]
    return lo


@njit(cache=True)
def _cascade(out_ptr, out_dst, out_w, lt_lo, seeds, key, run, model, live_edge,
             mark, tag, queue, acc, accmark):
    """One forward run; returns the number of active nodes (seeds included).

    model 0 = IC (edge e fires iff U(e) < w[e]); model 1 = LT.  LT uses
    per-node thresholds unless ``live_edge`` is set.
    """
    m = out_dst.shape[0]
    head = 0
    tail = 0
    for s in seeds:
        if mark[s] != tag:
            mark[s] = tag
            queue[tail] = s
            tail += 1
    while head < tail:
        x = queue[head]
        head += 1
        for e in range(out_ptr[x], out_ptr[x + 1]):
            v = out_dst[e]
            if mark[v] == tag:
                continue
            fire = False
            if model == 0:
                fire = rng.uniform(key, run, e) < out_w[e]
            elif live_edge:
                uv = rng.uniform(key, run, m + v)
                fire = lt_lo[e] <= uv and uv < lt_lo[e] + out_w[e]
            else:
                if accmark[v] != tag:
                    accmark[v] = tag
                    acc[v] = 0.0
                acc[v] += out_w[e]
                fire = acc[v] >= 1.0 - rng.uniform(key, run, m + v)
            if fire:
                mark[v] = tag
                queue[tail] = v
                tail += 1
    return tail


@njit(parallel=True, cache=True)
def _spread_runs(out_ptr, out_dst, out_w, lt_lo, seeds, key, runs, model, live_edge):
    n = out_ptr.shape[0] - 1
    counts = np.zeros(runs, dtype=np.int64)
    nblocks = (runs + BLOCK - 1) // BLOCK
    for b in prange(nblocks):
        mark = np.full(n, -1, dtype=np.int64)
        accmark = np.full(n, -1, dtype=np.int64)
        acc = np.zeros(n, dtype=np.float64)
        queue = np.empty(n, dtype=np.int64)
        for j in range(b * BLOCK, min(runs, (b + 1) * BLOCK)):
            counts[j] = _cascade(out_ptr, out_dst, out_w, lt_lo, seeds, key, j, model,
                                 live_edge, mark, j, queue, acc, accmark)
    return counts


def model_code(model: Model) -> int:
    return 0 if Model(model) is Model.IC else 1


def _lt_lo(g: Graph) -> np.ndarray:
    return lt_interval_lo(g.in_ptr, g.in_w, g.in_eid, g.m)


def check_seeds(g: Graph, seeds) -> np.ndarray:
    arr = np.unique(np.asarray(list(seeds), dtype=np.int64))
    if arr.size == 0:
        raise PreconditionError("seed set must be non-empty")
    if arr.min() < 0 or arr.max() >= g.n:
        raise DomainError(f"seed ids must lie in [0, {g.n})")
    return arr


def simulate_spread(
    g: Graph,
    seeds,
    spec: DiffusionSpec,
    *,
    live_edge: bool = False,
    domain: int = rng.DOMAIN_SPREAD,
) -> SpreadEstimate:
    """Monte-Carlo estimate of σ(S): mean final active-set size over ``spec.r`` runs.

    Run j only draws from counter (key, j, ·), so results do not depend on the
    thread count.  ``live_edge`` switches LT to the equivalent live-edge
    sampler (one in-edge kept per node).
    """
    seeds = check_seeds(g, seeds)
    key = rng.stream_key(spec.rng_seed, domain)
    counts = _spread_runs(g.out_ptr, g.out_dst, g.out_w, _lt_lo(g), seeds, key,
                          int(spec.r), model_code(spec.model), bool(live_edge))
    return SpreadEstimate.from_samples(counts)


def spread_samples(g: Graph, seeds, spec: DiffusionSpec, *, live_edge=False, domain=rng.DOMAIN_SPREAD) -> np.ndarray:
    seeds = check_seeds(g, seeds)
    key = rng.stream_key(spec.rng_seed, domain)
    return _spread_runs(g.out_ptr, g.out_dst, g.out_w, _lt_lo(g), seeds, key,
                        int(spec.r), model_code(spec.model), bool(live_edge))


# --- exact oracles ---------------------------------------------------------

def _alive_mask(g: Graph, rc: ResidualState | None) -> tuple[np.ndarray, np.ndarray]:
    if rc is None:
        rc = init_residual(g)
    return rc.rc, rc.alive


def _reachable_topo(g: Graph, source: int, alive: np.ndarray) -> list[int]:
    """Topological order of alive nodes reachable from ``source``; raises on a cycle."""
    order: list[int] = []
    state = {source: 1}
    stack = [(source, int(g.out_ptr[source]))]
    while stack:
        x, e = stack[-1]
        if e < g.out_ptr[x + 1]:
            stack[-1] = (x, e + 1)
            v = int(g.out_dst[e])
            if not alive[v]:
                continue
            st = state.get(v, 0)
            if st == 1:
                raise CyclicGraphError(f"cycle through node {v} reachable from {source}")
            if st == 0:
                state[v] = 1
                stack.append((v, int(g.out_ptr[v])))
        else:
            stack.pop()
            state[x] = 2
            order.append(x)
    order.reverse()
    return order


def exact_lt_probability(g: Graph, source: int, target: int, rc: ResidualState | None = None) -> float:
    """Sum over source->target paths of the product of edge weights.

    Only alive nodes may appear on a path.  Weights are used as they are;
    residual capacity enters LT contributions as the single factor RC(source)
    applied by the caller.  The alive subgraph reachable from ``source`` must
    be acyclic, since the path sum is not defined otherwise.
    """
    _, alive = _alive_mask(g, rc)
    if not alive[source]:
        raise PreconditionError(f"source {source} is not alive")
    if source == target:
        return 1.0
    if not alive[target]:
        return 0.0
    order = _reachable_topo(g, source, alive)
    prob = {source: 1.0}
    for x in order:
        px = prob.get(x, 0.0)
        if px == 0.0:
            continue
        for e in range(g.out_ptr[x], g.out_ptr[x + 1]):
            v = int(g.out_dst[e])
            if alive[v]:
                prob[v] = prob.get(v, 0.0) + px * float(g.out_w[e])
    return prob.get(target, 0.0)


def simple_paths(g: Graph, source: int, target: int, alive: np.ndarray) -> list[list[int]]:
    """All simple source->target paths through alive nodes, as lists of edge ids."""
    paths: list[list[int]] = []
    on_path = {source}
    edges: list[int] = []

    def walk(x: int) -> None:
        for e in range(int(g.out_ptr[x]), int(g.out_ptr[x + 1])):
            v = int(g.out_dst[e])
            if not alive[v] or v in on_path:
                continue
            edges.append(e)
            if v == target:
                paths.append(list(edges))
            else:
                on_path.add(v)
                walk(v)
                on_path.discard(v)
            edges.pop()

    walk(source)
    return paths


def exact_ic_shared_nothing_probability(
    g: Graph, source: int, target: int, rc: ResidualState | None = None
) -> float:
    """``1 - Π_P (1 - Pr(P))`` over edge-disjoint source->target paths.

    ``Pr(P) = Π RC(v_i) · w(v_i, v_{i+1})`` over the edges of P, so with all
    capacities at 1 this is the plain IC activation probability.
    """
    rcv, alive = _alive_mask(g, rc)
    if not alive[source]:
        raise PreconditionError(f"source {source} is not alive")
    if source == target:
        return 1.0
    if not alive[target]:
        return 0.0
    _reachable_topo(g, source, alive)
    paths = simple_paths(g, source, target, alive)
    seen: dict[int, int] = {}
    for i, p in enumerate(paths):
        for e in p:
            if e in seen:
                src = int(g.edge_sources()[e])
                raise SharedEdgeError(
                    f"paths {seen[e]} and {i} share edge ({src}, {int(g.out_dst[e])})",
                    edge=(src, int(g.out_dst[e])),
                )
            seen[e] = i
    srcs = g.edge_sources()
    miss = 1.0
    for p in paths:
        pr = 1.0
        for e in p:
            pr *= float(rcv[srcs[e]]) * float(g.out_w[e])
        miss *= 1.0 - pr
    return 1.0 - miss
