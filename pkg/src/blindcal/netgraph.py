"""Directed communication topology, the weight matrix Gamma and reachability checks.

Arc convention: ``weights[i, j] = gamma_ij > 0`` means node ``j`` sends its
output to node ``i`` (``j -> i``).  All reachability follows that direction.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "WeightedDigraph",
    "build_gamma",
    "has_spanning_tree",
    "reachable_from_set",
    "restrict_gamma",
    "random_digraph",
    "read_edge_list",
    "write_edge_list",
]


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Weighted digraph with ``weights[i, j] = gamma_ij`` for the arc ``j -> i``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise ValueError(f"weights must be a non-empty square matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            i, j = np.argwhere(w < 0)[0]
            raise ValueError(f"negative weight gamma[{i},{j}] = {w[i, j]}")
        if np.any(np.diag(w) != 0):
            raise ValueError("self-loops are not allowed (gamma_ii must be 0)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_arcs(cls, n, arcs):
        """Build from ``(j, i, gamma)`` triples, each meaning ``j -> i``."""
        w = np.zeros((n, n))
        for j, i, gamma in arcs:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"arc {j}->{i} outside node range 0..{n - 1}")
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            w[i, j] = gamma
        return cls(w)

    @property
    def n(self):
        return self.weights.shape[0]

    def arcs(self):
        """Arcs as ``(src, dst, gamma)`` arrays sorted by destination, then source."""
        dst, src = np.nonzero(self.weights)
        return src.astype(np.intp), dst.astype(np.intp), self.weights[dst, src].copy()

    def in_neighbors(self, i):
        return [int(j) for j in np.flatnonzero(self.weights[i])]

    def out_neighbors(self, j):
        return [int(i) for i in np.flatnonzero(self.weights[:, j])]

    def scaled(self, factor):
        return WeightedDigraph(self.weights * factor)

    def row_sums(self):
        return self.weights.sum(axis=1)


def build_gamma(g: WeightedDigraph) -> np.ndarray:
    """Off-diagonal ``gamma_ij``, diagonal ``-sum_j gamma_ij``; rows sum to zero."""
    gamma = np.array(g.weights, dtype=float)
    np.fill_diagonal(gamma, -gamma.sum(axis=1))
    return gamma


def _reach(g, start):
    """Nodes reachable from ``start`` by walks of length >= 1."""
    seen = set()
    queue = deque(g.out_neighbors(start))
    while queue:
        v = queue.popleft()
        if v in seen:
            continue
        seen.add(v)
        queue.extend(u for u in g.out_neighbors(v) if u not in seen)
    return seen


def has_spanning_tree(g: WeightedDigraph) -> bool:
    """True iff some center node reaches every other node along ``j -> i`` arcs."""
    everyone = set(range(g.n))
    return any(_reach(g, c) | {c} == everyone for c in range(g.n))


def reachable_from_set(g: WeightedDigraph, src) -> set[int]:
    """Nodes reachable (walk length >= 1) from *every* member of ``src``."""
    src = set(int(s) for s in src)
    if not src:
        raise ValueError("source set must be non-empty")
    if not src <= set(range(g.n)):
        raise ValueError(f"source set {sorted(src)} has nodes outside 0..{g.n - 1}")
    common = None
    for s in sorted(src):
        r = _reach(g, s)
        common = r if common is None else common & r
    return common


def restrict_gamma(gamma: np.ndarray, fixed):
    """Split ``gamma`` for a set of fixed (pinned) nodes.

    Returns ``(gamma_free, gamma_cross, free)`` where ``gamma_free`` is the
    principal submatrix on the free nodes (its diagonal keeps the row sums
    over the full node set) and ``gamma_cross`` holds weights from free rows
    to fixed columns.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0]
    fixed = sorted(set(int(k) for k in fixed))
    if any(k < 0 or k >= n for k in fixed):
        raise ValueError(f"fixed nodes {fixed} outside 0..{n - 1}")
    free = [i for i in range(n) if i not in fixed]
    if not free:
        raise ValueError("every node is fixed; nothing left to calibrate")
    return gamma[np.ix_(free, free)], gamma[np.ix_(free, fixed)], np.array(free, dtype=np.intp)


def random_digraph(n, edge_prob, rng, weight=1.0, require="spanning-tree", max_tries=10_000):
    """Uniform random digraph (each ordered pair independently), rejection-sampled.

    ``require`` is ``"spanning-tree"``, ``"strong"`` (strongly connected) or ``None``.
    """
    if not 0 < edge_prob <= 1:
        raise ValueError("edge_prob must lie in (0, 1]")
    if require not in ("spanning-tree", "strong", None):
        raise ValueError(f"unknown requirement {require!r}")
    for _ in range(max_tries):
        mask = rng.random((n, n)) < edge_prob
        np.fill_diagonal(mask, False)
        g = WeightedDigraph(mask * float(weight))
        if require is None:
            return g
        if require == "spanning-tree" and has_spanning_tree(g):
            return g
        if require == "strong" and all(_reach(g, c) | {c} == set(range(n)) for c in range(n)):
            return g
    raise RuntimeError(f"no digraph satisfying {require!r} after {max_tries} draws")


def read_edge_list(path) -> WeightedDigraph:
    """Parse ``j i gamma`` lines (``j -> i``); ``#`` starts a comment.

    A ``# nodes: N`` comment fixes the node count, which otherwise is the
    largest index plus one.
    """
    arcs = []
    n = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("nodes:"):
                n = int(body.split(":", 1)[1])
            continue
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'j i gamma', got {raw!r}")
        arcs.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if n is None:
        n = 1 + max((max(j, i) for j, i, _ in arcs), default=0)
    return WeightedDigraph.from_arcs(n, arcs)


def write_edge_list(g: WeightedDigraph, path):
    src, dst, gam = g.arcs()
    lines = [f"# nodes: {g.n}"]
    lines += [f"{int(j)} {int(i)} {float(w)!r}" for j, i, w in zip(src, dst, gam)]
    Path(path).write_text("\n".join(lines) + "\n")
