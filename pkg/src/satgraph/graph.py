"""Graph containers, neighbor indexing, and permutation utilities.

A Graph is a dense node-feature matrix plus a directed edge list.
Message passing treats an edge (s, t) as carrying information from s
into t, so the neighbor set N(i) collects the sources of i's incoming
edges (plus i itself when self-loops are on).

Node features may be partly symbolic: `feature_refs` mark rows whose
content comes from a trainable embedding table instead of the stored
matrix. The model materializes those rows at forward time, which keeps
the tables learnable without the graph holding parameter state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FeatureRef:
    """Marks node `node` as scale * embeddings[field][row]."""

    field: str
    row: int
    node: int
    scale: float = 1.0


@dataclass(frozen=True)
class Graph:
    node_features: np.ndarray           # (n, d) float64
    edges: np.ndarray                   # (m, 2) int64 rows of (src, dst)
    feature_refs: tuple = ()

    @property
    def n(self) -> int:
        return self.node_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]


def build_graph(features, edges) -> tuple[Graph, int]:
    """Validate and construct a Graph.

    Returns (graph, n_duplicates): duplicate directed edges are dropped
    and counted rather than rejected. Endpoints outside [0, n) and empty
    node sets are errors.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1:
        raise ValueError(f"node features must be a nonempty 2-D matrix, got shape {f.shape}")
    n = f.shape[0]
    e = np.asarray(edges, dtype=np.int64)
    if e.size == 0:
        e = np.zeros((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise ValueError(f"edges must be (src, dst) pairs, got shape {e.shape}")
    bad = (e < 0) | (e >= n)
    if bad.any():
        i = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise ValueError(
            f"edge {(int(e[i, 0]), int(e[i, 1]))} out of range for {n} nodes")
    seen = set()
    keep = []
    dups = 0
    for k in range(e.shape[0]):
        pair = (int(e[k, 0]), int(e[k, 1]))
        if pair in seen:
            dups += 1
        else:
            seen.add(pair)
            keep.append(k)
    if dups:
        e = e[keep]
    return Graph(node_features=f, edges=e), dups


@dataclass(frozen=True)
class AdjacencyIndex:
    """Edge-array form of the aggregation structure.

    src[k] -> dst[k] is the k-th message (self-loops included when
    enabled); coef[k] is the normalization constant c_ij for that pair,
    aligned with the edge arrays. Layers divide messages by coef.
    """

    n: int
    src: np.ndarray                     # (E,) int64
    dst: np.ndarray                     # (E,) int64
    coef: np.ndarray                    # (E,) float64, all > 0
    scheme: str = "symmetric"
    self_loops: bool = True

    def in_neighbors(self, i: int) -> list[int]:
        return [int(s) for s, t in zip(self.src, self.dst) if t == i]

    def c(self, i: int, j: int) -> float:
        """Normalization constant for aggregator i and neighbor j."""
        hit = (self.dst == i) & (self.src == j)
        if not hit.any():
            raise KeyError(f"no indexed pair ({i}, {j})")
        return float(self.coef[hit][0])


def normalize_adjacency(g: Graph, scheme: str = "symmetric",
                        self_loops: bool = True) -> AdjacencyIndex:
    """Build the neighbor index with per-pair normalization constants.

    symmetric: c_ij = sqrt(deg(i) * deg(j)); mean: c_ij = deg(i).
    deg counts in-neighbors, including the self-loop when enabled.
    """
    if scheme not in ("symmetric", "mean"):
        raise ValueError(f"unknown normalization scheme {scheme!r}")
    n = g.n
    src = g.edges[:, 0]
    dst = g.edges[:, 1]
    if self_loops:
        loops = np.arange(n, dtype=np.int64)
        src = np.concatenate([src, loops])
        dst = np.concatenate([dst, loops])
    deg = np.bincount(dst, minlength=n).astype(np.float64)
    # guard isolated sources when self-loops are off; never fires otherwise
    deg = np.maximum(deg, 1.0)
    if scheme == "symmetric":
        coef = np.sqrt(deg[dst] * deg[src])
    else:
        coef = deg[dst].copy()
    return AdjacencyIndex(n=n, src=src, dst=dst, coef=coef,
                          scheme=scheme, self_loops=self_loops)


def check_permutation(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=np.int64)
    if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
        raise ValueError(f"mapping is not a bijection on [0, {n})")
    return p


def permute_graph(g: Graph, p) -> Graph:
    """Relabel nodes: row i moves to row p[i], edge (s,t) -> (p[s], p[t])."""
    p = check_permutation(p, g.n)
    feats = np.empty_like(g.node_features)
    feats[p] = g.node_features
    edges = p[g.edges] if g.edges.size else g.edges
    refs = tuple(FeatureRef(r.field, r.row, int(p[r.node]), r.scale)
                 for r in g.feature_refs)
    return Graph(node_features=feats, edges=edges, feature_refs=refs)
