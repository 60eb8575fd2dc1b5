"""Discretisation of point clouds in hyperbolic 3-space into weighted graphs.

A net is a greedy maximal eps-separated subset; net points are joined when
their hyperbolic distance is at most 2 eps, and each carries the volume of
a hyperbolic eps-ball (constant weight: the ambient space is homogeneous).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from .graphs import WeightedGraph, graph_from_edges
from .groups import GroupPresentation
from .heat import vol_h3
from .hyperbolic import Isometry, PointH3, apply, dist
from .orbits import OrbitBall

EDGE_SLACK = 1e-9
# cloud spacing relative to eps: above eps (every cloud point on an isolated
# geodesic survives) and at most 2 eps / 1.6 (consecutive ones are joined)
CLOUD_SPACING = 1.25


def _coords(points) -> np.ndarray:
    return np.array([p.as_tuple() for p in points], dtype=float).reshape(-1, 3)


def pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hyperbolic distances between rows of two (n, 3) coordinate arrays."""
    diff = a[:, None, :] - b[None, :, :]
    s = np.sum(diff * diff, axis=2) / (4 * a[:, None, 2] * b[None, :, 2])
    return 2 * np.arcsinh(np.sqrt(s))


def _to_hyperboloid(p: PointH3) -> np.ndarray:
    r2 = p.x1 ** 2 + p.x2 ** 2 + p.h ** 2
    return np.array([(r2 + 1) / (2 * p.h), p.x1 / p.h, p.x2 / p.h, (r2 - 1) / (2 * p.h)])


def _from_hyperboloid(X: np.ndarray) -> PointH3:
    h = 1 / (X[0] - X[3])
    return PointH3(float(X[1] * h), float(X[2] * h), float(h))


def geodesic_point(p: PointH3, q: PointH3, s: float) -> PointH3:
    """Point at fraction s of the way from p to q along the geodesic."""
    P, Q = _to_hyperboloid(p), _to_hyperboloid(q)
    c = P[0] * Q[0] - P[1:] @ Q[1:]
    d = math.acosh(max(c, 1.0))
    if d < 1e-12:
        return p
    X = (math.sinh((1 - s) * d) * P + math.sinh(s * d) * Q) / math.sinh(d)
    return _from_hyperboloid(X)


def orbit_points(ball: OrbitBall) -> list[PointH3]:
    """gamma.y for every gamma in the ball, in ball order (nearest first)."""
    return [apply(Isometry.from_matrix(m), ball.y) for m in ball.matrices]


def cayley_cloud(group: GroupPresentation, ball: OrbitBall, spacing: float) -> list[PointH3]:
    """Orbit points together with points at most ``spacing`` apart along the
    geodesics gamma.y -- gamma s.y for every generator s, whenever both ends
    lie in the ball. The result is a connected coarse model of the orbit."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if ball.words is None:
        raise ValueError("cayley_cloud needs an enumeration with keep_words=True")
    pts = orbit_points(ball)
    index = {w: i for i, w in enumerate(ball.words)}
    out = list(pts)
    for i, w in enumerate(ball.words):
        # each Cayley edge once: from the shorter word to its one-letter extension
        for s in range(len(group.generators)):
            j = index.get(tuple(w) + (s,))
            if j is None:
                continue
            p, q = pts[i], pts[j]
            k = max(1, math.ceil(dist(p, q) / spacing - 1e-9))
            out.extend(geodesic_point(p, q, t / k) for t in range(1, k))
    return out


def discretise(points, eps: float, name: str = "net") -> tuple[WeightedGraph, list[PointH3]]:
    """Greedy maximal eps-separated net and its 2 eps graph.

    Points are visited in order of distance to the first point (ties keep
    input order); a point is kept when it is more than eps away from every
    point kept so far. Returns the graph and the net points (vertex order).
    """
    points = list(points)
    if not points:
        raise ValueError("empty point set")
    if not eps > 0:
        raise ValueError("eps must be positive")
    X = _coords(points)
    d0 = pairwise_dist(X[:1], X)[0]
    order = np.argsort(d0, kind="stable")
    kept: list[int] = []
    K = np.empty((0, 3))
    for i in order:
        if len(kept) and pairwise_dist(X[i : i + 1], K)[0].min() <= eps:
            continue
        kept.append(int(i))
        K = np.vstack([K, X[i]])
    D = pairwise_dist(K, K)
    iu, ju = np.nonzero(np.triu(D <= 2 * eps * (1 + EDGE_SLACK), k=1))
    edges = np.column_stack([iu, ju])
    weights = np.full(len(kept), float(vol_h3(eps)))
    G = graph_from_edges(weights, edges, name=name)
    return G, [points[i] for i in kept]


@dataclass(frozen=True)
class QuasiIsometryReport:
    """Fitted constants of d_H / a - b <= d_G <= a d_H + b over net pairs.

    d_G counts edges, d_H is hyperbolic distance. ``slope`` is the least
    squares ratio d_G / d_H; a = max(slope, 1 / slope) and b is the
    smallest additive constant that makes the two-sided bound hold.
    """
    a: float
    b: float
    slope: float
    graph_diameter: float
    hyperbolic_diameter: float
    connected: bool
    n_vertices: int
    n_edges: int

    @property
    def diameter_ratio(self) -> float:
        return self.graph_diameter / self.hyperbolic_diameter if self.hyperbolic_diameter > 0 else float("nan")

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "slope": self.slope,
            "graph_diameter": self.graph_diameter,
            "hyperbolic_diameter": self.hyperbolic_diameter,
            "diameter_ratio": self.diameter_ratio,
            "connected": self.connected,
            "n_vertices": self.n_vertices, "n_edges": self.n_edges,
        }


def quasi_isometry_report(G: WeightedGraph, net) -> QuasiIsometryReport:
    X = _coords(net)
    DH = pairwise_dist(X, X)
    DG = csgraph.shortest_path(G.adjacency(), unweighted=True, directed=False)
    connected = bool(np.all(np.isfinite(DG)))
    if G.n == 1:
        return QuasiIsometryReport(1.0, 0.0, 1.0, 0.0, 0.0, True, 1, 0)
    if not connected:
        return QuasiIsometryReport(math.inf, math.inf, math.nan, math.inf,
                                   float(DH.max()), False, G.n, len(G.edges))
    iu = np.triu_indices(G.n, k=1)
    dh, dg = DH[iu], DG[iu]
    slope = float(dg @ dh / (dh @ dh))
    a = max(slope, 1 / slope)
    b = float(max(0.0, np.max(dg - a * dh), np.max(dh / a - dg)))
    return QuasiIsometryReport(a, b, slope, float(dg.max()), float(dh.max()),
                               True, G.n, len(G.edges))
