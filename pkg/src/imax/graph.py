"""Weighted digraphs, edge-list ingestion, probability assignment and residual state.

Graphs are stored as two CSR adjacency structures (forward and reverse) over
dense node ids ``0..n-1``.  The original ids read from the input file are kept
in ``Graph.labels`` so results can be reported in the caller's id space.
"""

from __future__ import annotations

import csv
import logging
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, GraphFormatError, PreconditionError

log = logging.getLogger(__name__)

DISCARD_THRESHOLD = 1e-12


class WeightKind(str, Enum):
    GENERALIZED_IN_DEGREE = "generalized-in-degree"
    UNIFORM = "uniform"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class WeightPolicy:
    """How edge probabilities are assigned after loading.

    ``generalized(rho)`` gives every edge ``(u, v)`` the weight
    ``min(1, rho / |In(v)|)``; ``uniform(w)`` gives every edge ``w``;
    ``explicit()`` takes the third column of the edge list.
    """

    kind: WeightKind
    value: float | None = None

    def __post_init__(self):
        if self.kind is WeightKind.GENERALIZED_IN_DEGREE:
            if self.value is None or not self.value > 0:
                raise DomainError(f"rho must be > 0, got {self.value}")
        elif self.kind is WeightKind.UNIFORM:
            if self.value is None or not 0.0 <= self.value <= 1.0:
                raise DomainError(f"uniform weight must lie in [0, 1], got {self.value}")

    @classmethod
    def generalized(cls, rho: float) -> WeightPolicy:
        return cls(WeightKind.GENERALIZED_IN_DEGREE, float(rho))

    @classmethod
    def uniform(cls, w: float) -> WeightPolicy:
        return cls(WeightKind.UNIFORM, float(w))

    @classmethod
    def explicit(cls) -> WeightPolicy:
        return cls(WeightKind.EXPLICIT)

    def describe(self) -> str:
        if self.kind is WeightKind.EXPLICIT:
            return "explicit"
        return f"{self.kind.value}({self.value:g})"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable weighted digraph with forward and reverse CSR adjacency.

    Edge ``e`` (a position in the forward arrays) runs from the node whose
    ``out_ptr`` range contains it to ``out_dst[e]``.  ``in_eid`` maps each
    reverse-adjacency slot back to its forward edge id.
    """

    n: int
    out_ptr: np.ndarray
    out_dst: np.ndarray
    out_w: np.ndarray
    in_ptr: np.ndarray
    in_src: np.ndarray
    in_w: np.ndarray
    in_eid: np.ndarray
    labels: np.ndarray
    directed: bool = True
    policy: WeightPolicy | None = field(default=None, compare=False)

    @property
    def node_count(self) -> int:
        return self.n

    @property
    def m(self) -> int:
        return int(self.out_dst.shape[0])

    edge_count = m

    def out_edges(self, v: int) -> list[tuple[int, float]]:
        lo, hi = self.out_ptr[v], self.out_ptr[v + 1]
        return list(zip(self.out_dst[lo:hi].tolist(), self.out_w[lo:hi].tolist()))

    def in_edges(self, v: int) -> list[tuple[int, float]]:
        lo, hi = self.in_ptr[v], self.in_ptr[v + 1]
        return list(zip(self.in_src[lo:hi].tolist(), self.in_w[lo:hi].tolist()))

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def edge_sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.out_ptr))

    def edges(self) -> Iterable[tuple[int, int, float]]:
        src = self.edge_sources()
        return zip(src.tolist(), self.out_dst.tolist(), self.out_w.tolist())

    def weight(self, u: int, v: int) -> float:
        lo, hi = self.out_ptr[u], self.out_ptr[u + 1]
        hits = np.nonzero(self.out_dst[lo:hi] == v)[0]
        if hits.size == 0:
            raise KeyError((u, v))
        return float(self.out_w[lo + hits[0]])

    def index_of(self, label: int) -> int:
        """Dense id of an original node id."""
        i = int(np.searchsorted(self.labels, label))
        if i >= self.n or self.labels[i] != label:
            raise KeyError(label)
        return i

    def nbytes(self) -> int:
        return sum(
            a.nbytes
            for a in (self.out_ptr, self.out_dst, self.out_w, self.in_ptr,
                      self.in_src, self.in_w, self.in_eid, self.labels)
        )

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if self.n != other.n or self.directed != other.directed:
            return False
        pairs = [
            (self.out_ptr, other.out_ptr), (self.out_dst, other.out_dst),
            (self.out_w, other.out_w), (self.in_ptr, other.in_ptr),
            (self.in_src, other.in_src), (self.in_w, other.in_w),
            (self.in_eid, other.in_eid), (self.labels, other.labels),
        ]
        return all(np.array_equal(a, b) for a, b in pairs)

    __hash__ = None

    def __repr__(self):
        kind = "directed" if self.directed else "undirected-source"
        return f"Graph(n={self.n}, m={self.m}, {kind})"


def from_edges(
    n: int,
    src,
    dst,
    weights,
    *,
    directed: bool = True,
    labels=None,
    policy: WeightPolicy | None = None,
) -> Graph:
    """Build a Graph from parallel arrays of dense endpoints and weights.

    Edges are sorted by (source, target); the arrays must already be free of
    self-loops and duplicates.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if not (src.shape == dst.shape == w.shape):
        raise ValueError("src, dst and weights must have the same length")
    if src.size:
        if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n:
            raise DomainError("edge endpoint outside [0, n)")
        if np.any((w < 0.0) | (w > 1.0)) or np.any(np.isnan(w)):
            raise DomainError("edge weights must lie in [0, 1]")

    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=out_ptr[1:])

    rorder = np.lexsort((src, dst))
    in_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(dst, minlength=n), out=in_ptr[1:])

    if labels is None:
        labels = np.arange(n, dtype=np.int64)
    return Graph(
        n=int(n),
        out_ptr=_frozen(out_ptr),
        out_dst=_frozen(dst.astype(np.int64)),
        out_w=_frozen(w),
        in_ptr=_frozen(in_ptr),
        in_src=_frozen(src[rorder]),
        in_w=_frozen(w[rorder]),
        in_eid=_frozen(rorder.astype(np.int64)),
        labels=_frozen(np.asarray(labels, dtype=np.int64)),
        directed=directed,
        policy=policy,
    )


def assign_weights(n: int, src: np.ndarray, dst: np.ndarray, policy: WeightPolicy, explicit=None) -> np.ndarray:
    """Edge weights under ``policy``, computed from the final in-degrees.

    Nodes without in-edges never receive a weight, so they need no special case.
    """
    if policy.kind is WeightKind.GENERALIZED_IN_DEGREE:
        indeg = np.bincount(dst, minlength=n).astype(np.float64)
        if dst.size == 0:
            return np.zeros(0, dtype=np.float64)
        return np.minimum(1.0, policy.value / indeg[dst])
    if policy.kind is WeightKind.UNIFORM:
        return np.full(src.shape[0], policy.value, dtype=np.float64)
    if explicit is None:
        raise GraphFormatError("explicit weight policy requires a weight column")
    return np.asarray(explicit, dtype=np.float64)


def build_graph(
    src,
    dst,
    *,
    directed: bool,
    policy: WeightPolicy,
    weights=None,
    n: int | None = None,
    labels=None,
) -> Graph:
    """Normalize raw dense edges (drop self-loops and repeats, mirror if undirected) and weight them."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if n is None:
        n = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
    w_raw = None if weights is None else np.asarray(weights, dtype=np.float64)

    if not directed:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        if w_raw is not None:
            w_raw = np.concatenate([w_raw, w_raw])
        # interleave so the reverse copy of line i follows line i, not the whole file
        k = src.size // 2
        idx = np.empty(2 * k, dtype=np.int64)
        idx[0::2] = np.arange(k)
        idx[1::2] = np.arange(k) + k
        src, dst = src[idx], dst[idx]
        if w_raw is not None:
            w_raw = w_raw[idx]

    keep = src != dst
    src, dst = src[keep], dst[keep]
    if w_raw is not None:
        w_raw = w_raw[keep]
    # first occurrence of each (u, v) wins
    pair = src * np.int64(max(n, 1)) + dst
    _, first = np.unique(pair, return_index=True)
    first.sort()
    src, dst = src[first], dst[first]
    if w_raw is not None:
        w_raw = w_raw[first]

    w = assign_weights(n, src, dst, policy, w_raw)
    return from_edges(n, src, dst, w, directed=directed, labels=labels, policy=policy)


def parse_edge_list(path: str | os.PathLike, *, explicit: bool = False):
    """Read ``u v`` / ``u v w`` lines.  Returns (src ids, dst ids, weights or None)."""
    us: list[int] = []
    vs: list[int] = []
    ws: list[float] = []
    with open(path, "r", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) not in (2, 3):
                raise GraphFormatError(f"expected 'u v' or 'u v w', got {s!r}", lineno, path)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"non-integer endpoint in {s!r}", lineno, path) from None
            if explicit:
                if len(parts) != 3:
                    raise GraphFormatError("explicit weight policy requires a weight column", lineno, path)
                try:
                    w = float(parts[2])
                except ValueError:
                    raise GraphFormatError(f"bad weight in {s!r}", lineno, path) from None
                if not 0.0 <= w <= 1.0:
                    raise DomainError(f"{path}:{lineno}: weight {w} outside [0, 1]")
                ws.append(w)
            elif len(parts) == 3:
                try:
                    float(parts[2])
                except ValueError:
                    raise GraphFormatError(f"bad weight in {s!r}", lineno, path) from None
            us.append(u)
            vs.append(v)
    return (
        np.asarray(us, dtype=np.int64),
        np.asarray(vs, dtype=np.int64),
        np.asarray(ws, dtype=np.float64) if explicit else None,
    )


def load_graph(
    path: str | os.PathLike,
    *,
    directed: bool = True,
    policy: WeightPolicy | None = None,
    fmt: str = "edgelist",
) -> Graph:
    """Load a whitespace-separated edge list.

    Original node ids may be sparse; they are compacted to ``0..n-1`` in
    ascending order and kept in ``Graph.labels``.  Undirected input is mirrored
    before in-degrees (and therefore weights) are computed.
    """
    if fmt != "edgelist":
        raise GraphFormatError(f"unsupported format {fmt!r}")
    if policy is None:
        policy = WeightPolicy.generalized(1.0)
    explicit = policy.kind is WeightKind.EXPLICIT
    us, vs, ws = parse_edge_list(path, explicit=explicit)
    labels, dense = np.unique(np.concatenate([us, vs]), return_inverse=True)
    k = us.size
    return build_graph(
        dense[:k], dense[k:], directed=directed, policy=policy, weights=ws,
        n=int(labels.size), labels=labels,
    )


def save_edge_list(g: Graph, path: str | os.PathLike, *, weights: bool = True) -> None:
    """Write ``g`` as a directed edge list in original ids."""
    with open(path, "w") as fh:
        fh.write(f"# n={g.n} m={g.m}\n")
        lab = g.labels
        for u, v, w in g.edges():
            if weights:
                fh.write(f"{lab[u]} {lab[v]} {w!r}\n")
            else:
                fh.write(f"{lab[u]} {lab[v]}\n")


def write_id_map(g: Graph, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["original_id", "dense_id"])
        for dense, orig in enumerate(g.labels.tolist()):
            out.writerow([orig, dense])


def read_id_map(path: str | os.PathLike) -> dict[int, int]:
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        return {int(r["original_id"]): int(r["dense_id"]) for r in rows}


def transpose(g: Graph) -> Graph:
    """Reverse every edge, keeping weights.  ``transpose(transpose(g)) == g``."""
    # forward edge ids of the transpose are the reverse slots of g
    rev = np.empty_like(g.in_eid)
    rev[g.in_eid] = np.arange(g.in_eid.size, dtype=np.int64)
    return Graph(
        n=g.n,
        out_ptr=g.in_ptr,
        out_dst=g.in_src,
        out_w=g.in_w,
        in_ptr=g.out_ptr,
        in_src=g.out_dst,
        in_w=g.out_w,
        in_eid=_frozen(rev),
        labels=g.labels,
        directed=g.directed,
        policy=g.policy,
    )


@dataclass
class ResidualState:
    """Residual capacity per node, and whether the node still takes part in selection.

    Single writer: only the selection loop that owns the state mutates it.
    """

    rc: np.ndarray
    alive: np.ndarray
    threshold: float = DISCARD_THRESHOLD

    @property
    def n(self) -> int:
        return int(self.rc.shape[0])

    def copy(self) -> ResidualState:
        return ResidualState(self.rc.copy(), self.alive.copy(), self.threshold)

    def reset(self) -> ResidualState:
        self.rc[:] = 1.0
        self.alive[:] = True
        return self


def init_residual(g: Graph | int) -> ResidualState:
    n = g if isinstance(g, int) else g.n
    return ResidualState(np.ones(n, dtype=np.float64), np.ones(n, dtype=bool))


def apply_contributions(state: ResidualState, contributions, seed: int) -> ResidualState:
    """Retire ``seed`` and subtract each Φ(seed, v) from RC(v), flooring at zero.

    ``contributions`` is a mapping node -> Φ or a pair of (nodes, values)
    arrays.  Entries for dead nodes or for the seed itself are ignored.  The
    state is updated in place and returned.
    """
    if not state.alive[seed]:
        raise PreconditionError(f"seed {seed} is not alive")
    if isinstance(contributions, Mapping):
        nodes = np.fromiter(contributions.keys(), dtype=np.int64, count=len(contributions))
        vals = np.fromiter(contributions.values(), dtype=np.float64, count=len(contributions))
    else:
        nodes, vals = contributions
        nodes = np.asarray(nodes, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
    if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
        raise DomainError("contributions must lie in [0, 1]")

    state.rc[seed] = 0.0
    state.alive[seed] = False
    live = state.alive[nodes]
    nodes, vals = nodes[live], vals[live]
    state.rc[nodes] = np.maximum(0.0, state.rc[nodes] - vals)
    state.alive[nodes] = state.rc[nodes] > state.threshold
    return state
