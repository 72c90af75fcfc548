"""Random graph generators used for tests and desk-scale benchmarks."""

from __future__ import annotations

import numpy as np

from .graph import Graph, WeightPolicy, build_graph


def erdos_renyi(n: int, p: float, seed: int, *, policy: WeightPolicy, directed: bool = True) -> Graph:
    """G(n, p); for small n only (materializes the n x n coin matrix)."""
    rng = np.random.default_rng(seed)
    coins = rng.random((n, n)) < p
    np.fill_diagonal(coins, False)
    if not directed:
        coins = np.triu(coins, 1)
    src, dst = np.nonzero(coins)
    return build_graph(src, dst, directed=directed, policy=policy, n=n)


def power_law(
    n: int,
    avg_degree: float,
    seed: int,
    *,
    policy: WeightPolicy,
    exponent: float = 2.3,
    directed: bool = False,
) -> Graph:
    """Chung-Lu style graph with a power-law expected degree sequence.

    ``avg_degree`` counts undirected pairs per node when ``directed`` is
    False (each pair becomes two arcs), arcs per node otherwise.  The default
    ``directed=False`` mirrors collaboration networks such as NetHEPT.
    """
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    weight = ranks ** (-1.0 / (exponent - 1.0))
    rng.shuffle(weight)
    prob = weight / weight.sum()
    target = int(round(avg_degree * n / (1 if directed else 2)))
    # oversample a little to make up for dropped loops and repeats
    draws = int(target * 1.15) + 16
    src = rng.choice(n, size=draws, p=prob)
    dst = rng.choice(n, size=draws, p=prob)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    if not directed:
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        src, dst = lo, hi
    pair = src.astype(np.int64) * n + dst
    _, first = np.unique(pair, return_index=True)
    first.sort()
    first = first[:target]
    return build_graph(src[first], dst[first], directed=directed, policy=policy, n=n)


def nethept_like(seed: int = 7, *, policy: WeightPolicy, n: int = 15_000) -> Graph:
    """Stand-in for NetHEPT: ~15k nodes, ~31k undirected pairs (~62k arcs)."""
    return power_law(n, 4.1, seed, policy=policy, directed=False)
