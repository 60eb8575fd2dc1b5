"""Weighted graphs: stars of rays, mixed models with positive-spectrum parts.

A graph carries vertex weights m > 0 and symmetric edges with conductances,
by default c(u, v) = (m(u) + m(v)) / 2. Vertex labels are (component, depth)
pairs, the root being (-1, 0).

Binary-tree components are stored radially lumped: one node per shell, with
weight 2^n (the sum of the unit weights on the shell) and conductance 2^n to
the previous shell (one parent edge of conductance 1 per vertex). Walks
started at the root, radial functions and ball volumes about the root are
exact on the lumped graph; per-vertex operators (delta f, Poincare) need the
explicit tree, available for small depths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

ROOT_LABEL = (-1, 0)
# deeper than this the lumped tree weights 2^n and the e^{2n} ray weights
# would leave float range; a walk that gets there returns with probability
# about 2^-600 (resp. e^-600), far below anything measured
TREE_DEPTH_CAP = 600
EXP_RAY_DEPTH_CAP = 300
GF_MODELS = ("binary_tree", "weighted_ray")


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    weights: np.ndarray
    edges: np.ndarray
    conductance: np.ndarray
    labels: tuple | None = None
    lumped: bool = False
    name: str = "graph"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(self.conductance, dtype=float).reshape(-1)
        if len(w) == 0:
            raise ValueError("graph needs at least one vertex")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("vertex weights must be finite and positive")
        if len(c) != len(e):
            raise ValueError("one conductance per edge")
        if len(e):
            if e.min() < 0 or e.max() >= len(w):
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            if not np.all(np.isfinite(c)) or np.any(c <= 0):
                raise ValueError("conductances must be finite and positive")
            e = np.sort(e, axis=1)
            if len(np.unique(e, axis=0)) != len(e):
                raise ValueError("duplicate edge")
        if self.labels is not None and len(self.labels) != len(w):
            raise ValueError("one label per vertex")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "conductance", c)

    @property
    def n(self) -> int:
        return len(self.weights)

    def conductance_matrix(self) -> sparse.csr_matrix:
        e, c = self.edges, self.conductance
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((np.concatenate([c, c]), (rows, cols)), shape=(self.n, self.n))

    def adjacency(self) -> sparse.csr_matrix:
        a = self.conductance_matrix()
        a.data[:] = 1.0
        return a

    def measure(self) -> np.ndarray:
        """Reversing measure of the conductance walk, pi(x) = sum_y c(x, y)."""
        return np.asarray(self.conductance_matrix().sum(axis=1)).ravel()

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        k, _ = csgraph.connected_components(self.adjacency(), directed=False)
        return k == 1

    def distances_from(self, x: int) -> np.ndarray:
        """Graph distances from x (inf where unreachable), as floats."""
        return csgraph.shortest_path(self.adjacency(), unweighted=True, indices=[x], directed=False)[0]

    def ball(self, x: int, r: float) -> np.ndarray:
        return np.nonzero(self.distances_from(x) <= r)[0]

    def root(self) -> int:
        if self.labels is not None and ROOT_LABEL in self.labels:
            return self.labels.index(ROOT_LABEL)
        return 0

    def depth(self) -> np.ndarray:
        return self.distances_from(self.root())

    def induced(self, vertices) -> "WeightedGraph":
        """Subgraph on ``vertices`` (edges leaving it are dropped: reflecting)."""
        vertices = np.asarray(vertices, dtype=np.int64)
        pos = -np.ones(self.n, dtype=np.int64)
        pos[vertices] = np.arange(len(vertices))
        keep = (pos[self.edges[:, 0]] >= 0) & (pos[self.edges[:, 1]] >= 0)
        labels = None if self.labels is None else tuple(self.labels[i] for i in vertices)
        return WeightedGraph(
            self.weights[vertices], pos[self.edges[keep]], self.conductance[keep], labels, self.lumped,
            self.name, dict(self.meta),
        )

    def require_explicit(self, what: str):
        if self.lumped:
            raise ValueError(f"{what} needs an explicit graph, not radially lumped shells")


def _mean_conductance(weights, edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return (weights[edges[:, 0]] + weights[edges[:, 1]]) / 2


def graph_from_edges(weights, edges, labels=None, name="graph") -> WeightedGraph:
    weights = np.asarray(weights, dtype=float)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= len(weights)):
        raise ValueError("edge endpoint out of range")
    return WeightedGraph(weights, edges, _mean_conductance(weights, edges), labels, name=name)


# --- builders -------------------------------------------------------------------


class _Builder:
    def __init__(self):
        self.weights = [1.0]
        self.labels = [ROOT_LABEL]
        self.edges = []
        self.cond = []

    def chain(self, comp: int, weights, conds=None):
        """Append a ray root - v1 - v2 - ... with the given weights (depth 1..)."""
        prev = 0
        prev_w = self.weights[0]
        for i, w in enumerate(weights):
            v = len(self.weights)
            self.weights.append(float(w))
            self.labels.append((comp, i + 1))
            self.edges.append((prev, v))
            self.cond.append((prev_w + w) / 2 if conds is None else float(conds[i]))
            prev, prev_w = v, w

    def tree(self, comp: int, depth: int):
        """Explicit binary tree hanging from the root (root has 2 children)."""
        level = [0]
        for dpt in range(1, depth + 1):
            nxt = []
            for parent in level:
                for _ in range(2):
                    v = len(self.weights)
                    self.weights.append(1.0)
                    self.labels.append((comp, dpt))
                    self.edges.append((parent, v))
                    self.cond.append((self.weights[parent] + 1.0) / 2)
                    nxt.append(v)
            level = nxt

    def graph(self, lumped=False, name="graph", meta=None) -> WeightedGraph:
        return WeightedGraph(
            np.array(self.weights), np.array(self.edges, dtype=np.int64).reshape(-1, 2),
            np.array(self.cond), tuple(self.labels), lumped, name, meta or {},
        )


def build_star(d: int, L: int) -> WeightedGraph:
    """d unit-weight rays of length L glued at a root: 1 + dL vertices."""
    if d < 1 or L < 1:
        raise ValueError("need d >= 1 and L >= 1")
    b = _Builder()
    for k in range(d):
        b.chain(k, np.ones(L))
    return b.graph(name=f"star(d={d},L={L})", meta={"kind": "star", "d": d, "L": L})


def ray_weights(L: int, kind: str) -> np.ndarray:
    """Weights at depths 1..L for the ray models."""
    n = np.arange(1, L + 1, dtype=float)
    if kind == "unit":
        return np.ones(L)
    if kind == "quadratic":
        return (1 + n) ** 2
    if kind == "exp":
        return np.exp(2 * n)
    raise ValueError(f"unknown ray kind {kind!r}")


def build_ray(L: int, kind: str = "unit") -> WeightedGraph:
    """One ray of length L from a root of weight 1: unit, (1+n)^2 or e^{2n}."""
    if L < 1:
        raise ValueError("need L >= 1")
    if kind == "exp" and L > EXP_RAY_DEPTH_CAP:
        raise ValueError(f"e^(2n) ray deeper than {EXP_RAY_DEPTH_CAP} overflows")
    b = _Builder()
    b.chain(0, ray_weights(L, kind))
    return b.graph(name=f"ray({kind},L={L})", meta={"kind": "ray", "ray": kind, "L": L})


def build_tree(L: int, lumped: bool = True) -> WeightedGraph:
    """Binary tree of depth L, unit weights; lumped into shells by default."""
    if L < 1:
        raise ValueError("need L >= 1")
    b = _Builder()
    if lumped:
        if L > TREE_DEPTH_CAP:
            raise ValueError(f"lumped tree deeper than {TREE_DEPTH_CAP} overflows")
        n = np.arange(1, L + 1, dtype=float)
        b.chain(0, 2.0**n, conds=2.0**n)
    else:
        b.tree(0, L)
    return b.graph(lumped=lumped, name=f"tree(L={L})", meta={"kind": "tree", "L": L})


def build_mixed(d: int, p: int, L: int, gf_model: str = "binary_tree", *, gf_depth: int | None = None,
                lumped: bool = True) -> WeightedGraph:
    """Star of d rays with weight (1+n)^2 plus p positive-spectrum components.

    GF components are binary trees (lumped unless ``lumped=False``) or rays
    with weight e^{2n}; their depth defaults to L, capped where the weights
    would overflow (see TREE_DEPTH_CAP and EXP_RAY_DEPTH_CAP).
    """
    if d < 1:
        raise ValueError("the mixed model needs at least one degenerate ray (d >= 1)")
    if p < 0 or L < 1:
        raise ValueError("need p >= 0 and L >= 1")
    if gf_model not in GF_MODELS:
        raise ValueError(f"gf_model must be one of {GF_MODELS}")
    depth = L if gf_depth is None else gf_depth
    b = _Builder()
    for k in range(d):
        b.chain(k, ray_weights(L, "quadratic"))
    for j in range(p):
        comp = d + j
        if gf_model == "weighted_ray":
            b.chain(comp, ray_weights(min(depth, EXP_RAY_DEPTH_CAP), "exp"))
        elif lumped:
            n = np.arange(1, min(depth, TREE_DEPTH_CAP) + 1, dtype=float)
            b.chain(comp, 2.0**n, conds=2.0**n)
        else:
            b.tree(comp, depth)
    is_lumped = lumped and p > 0 and gf_model == "binary_tree"
    return b.graph(
        lumped=is_lumped,
        name=f"mixed(d={d},p={p},L={L},{gf_model})",
        meta={"kind": "mixed", "d": d, "p": p, "L": L, "gf_model": gf_model},
    )


# --- files ------------------------------------------------------------------


def graph_to_dict(G: WeightedGraph) -> dict:
    out = {
        "vertices": [{"id": i, "weight": float(w)} for i, w in enumerate(G.weights)],
        "edges": [[int(u), int(v)] for u, v in G.edges],
    }
    default = _mean_conductance(G.weights, G.edges)
    if not np.allclose(G.conductance, default, rtol=1e-15, atol=0):
        out["conductance"] = [float(c) for c in G.conductance]
    if G.labels is not None:
        for v, lab in zip(out["vertices"], G.labels):
            v["label"] = list(lab)
    if G.lumped:
        out["lumped"] = True
    return out


def graph_from_dict(data: dict, name="graph") -> WeightedGraph:
    try:
        verts = data["vertices"]
        raw_edges = data["edges"]
    except (KeyError, TypeError) as exc:
        raise ValueError("graph file needs 'vertices' and 'edges'") from exc
    ids = [v["id"] for v in verts]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate vertex id")
    pos = {vid: i for i, vid in enumerate(ids)}
    weights = np.array([float(v["weight"]) for v in verts])
    try:
        edges = np.array([[pos[u], pos[v]] for u, v in raw_edges], dtype=np.int64).reshape(-1, 2)
    except KeyError as exc:
        raise ValueError(f"edge refers to unknown vertex {exc}") from exc
    cond = np.asarray(data["conductance"], dtype=float) if "conductance" in data else _mean_conductance(weights, edges)
    labels = None
    if all("label" in v for v in verts):
        labels = tuple(tuple(v["label"]) for v in verts)
    return WeightedGraph(weights, edges, cond, labels, bool(data.get("lumped", False)), name)


def save_graph(G: WeightedGraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(G), sort_keys=True, indent=1) + "\n")


def load_graph(path) -> WeightedGraph:
    return graph_from_dict(json.loads(Path(path).read_text()), name=Path(path).stem)


def ball_volumes(G: WeightedGraph, x: int, r_max: int) -> np.ndarray:
    """mu(B(x, r)) = sum of m over the ball, for r = 0..r_max."""
    dist = G.distances_from(x)
    finite = np.isfinite(dist)
    dist_i = dist[finite].astype(np.int64)
    per = np.bincount(np.minimum(dist_i, r_max + 1), weights=G.weights[finite], minlength=r_max + 2)
    return np.cumsum(per[: r_max + 1])


def graph_radius(G: WeightedGraph, x: int) -> float:
    d = G.distances_from(x)
    return float(d[np.isfinite(d)].max())

