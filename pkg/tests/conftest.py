from __future__ import annotations

import numpy as np
import pytest

from imax.graph import WeightPolicy, build_graph

# four-node DAG used by the residual worked examples: a=0, b=1, c=2, d=3
FIG7_EDGES = [(0, 1, 0.7), (0, 2, 0.3), (0, 3, 0.4), (1, 2, 0.5), (2, 3, 0.2)]
A, B, C, D = 0, 1, 2, 3


def graph_from(edges, n=None, *, directed=True, policy=None):
    """Build a graph from (u, v) or (u, v, w) tuples; weights make it explicit."""
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    weights = None
    if edges and len(edges[0]) == 3 and policy is None:
        weights = np.array([e[2] for e in edges], dtype=np.float64)
        policy = WeightPolicy.explicit()
    if policy is None:
        policy = WeightPolicy.uniform(1.0)
    if n is None:
        n = int(max(max(src, default=-1), max(dst, default=-1)) + 1)
    return build_graph(src, dst, directed=directed, policy=policy, weights=weights, n=n)


def write_edges(path, edges):
    with open(path, "w") as fh:
        for e in edges:
            fh.write(" ".join(str(x) for x in e) + "\n")
    return str(path)


@pytest.fixture
def fig7():
    return graph_from(FIG7_EDGES)


@pytest.fixture
def fig7_file(tmp_path):
    return write_edges(tmp_path / "fig7.txt", FIG7_EDGES)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict: ``criterion(n, ok, detail)``; then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
