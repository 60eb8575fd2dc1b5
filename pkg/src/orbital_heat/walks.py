"""Random walks on weighted graphs and power-law fits of their return series.

The walk moves from x to a neighbour y with probability c(x, y) / pi(x),
pi(x) = sum_y c(x, y), and holds with probability ``hold`` (1/2 by default,
which removes the parity oscillation of bipartite graphs). It is reversible
for pi, so the kernel density p_n(x, y) / pi(y) is symmetric in x and y.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse

from .graphs import WeightedGraph

BOUNDARY_MASS_WARN = 1e-9


class TruncationWarning(UserWarning):
    """Noticeable walk mass reached the truncation boundary."""


@dataclass(frozen=True)
class WalkSeries:
    n: np.ndarray         # 1..n_max
    density: np.ndarray   # p_n(x, y) / pi(y)
    x: int
    y: int
    pi_y: float
    mass: np.ndarray      # total probability at each n (1 for reflecting walks)
    boundary_mass: float  # largest mass seen on the truncation boundary

    @property
    def prob(self) -> np.ndarray:
        return self.density * self.pi_y


def transition_matrix(G: WeightedGraph, hold: float = 0.5) -> sparse.csr_matrix:
    if not 0 <= hold < 1:
        raise ValueError("hold probability must lie in [0, 1)")
    C = G.conductance_matrix()
    pi = G.measure()
    if np.any(pi == 0):
        raise ValueError("isolated vertex: the walk is undefined there")
    P = sparse.diags(1 / pi) @ C * (1 - hold)
    return (P + hold * sparse.identity(G.n)).tocsr()


def walk_kernel(G: WeightedGraph, x: int, y: int, n_max: int, *, hold: float = 0.5,
                radius: float | None = None) -> WalkSeries:
    """p_n(x, y) / pi(y) for n = 1..n_max.

    Without ``radius`` the walk runs on the whole (finite) graph, whose far
    boundary is reflecting. With ``radius`` it runs on the ball B(x, radius),
    reflecting at its boundary; a TruncationWarning is issued if more than
    BOUNDARY_MASS_WARN of the mass ever sits on the boundary sphere. A graph
    built to depth n_max + 1 around x is exact: the walk cannot reach its edge.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if not G.is_connected():
        raise ValueError("walk_kernel needs a connected graph")
    sub = G
    boundary = np.zeros(0, dtype=np.int64)
    if radius is not None:
        dist = G.distances_from(x)
        inside = np.nonzero(dist <= radius)[0]
        if y not in set(inside.tolist()):
            raise ValueError("y lies outside the truncation radius")
        sub = G.induced(inside)
        pos = {int(v): i for i, v in enumerate(inside)}
        x, y = pos[x], pos[y]
        boundary = np.nonzero(dist[inside] == dist[inside].max())[0] if dist[inside].max() >= radius else boundary
    P = transition_matrix(sub, hold)
    PT = P.T.tocsr()
    pi = sub.measure()
    v = np.zeros(sub.n)
    v[x] = 1.0
    dens = np.empty(n_max)
    mass = np.empty(n_max)
    worst = 0.0
    for k in range(n_max):
        v = PT @ v
        dens[k] = v[y] / pi[y]
        mass[k] = v.sum()
        if len(boundary):
            worst = max(worst, float(v[boundary].sum()))
    if worst > BOUNDARY_MASS_WARN:
        warnings.warn(
            f"walk mass {worst:.2e} reached the truncation boundary at radius {radius}",
            TruncationWarning, stacklevel=2,
        )
    return WalkSeries(np.arange(1, n_max + 1), dens, x, y, float(pi[y]), mass, worst)


def walk_distribution(G: WeightedGraph, x: int, n: int, hold: float = 0.5) -> np.ndarray:
    """Full vector p_n(x, .)."""
    PT = transition_matrix(G, hold).T.tocsr()
    v = np.zeros(G.n)
    v[x] = 1.0
    for _ in range(n):
        v = PT @ v
    return v


@dataclass(frozen=True)
class AbsorbedSeries:
    n: np.ndarray
    p_return: np.ndarray   # P(X_n = 1, not yet absorbed | X_0 = 1)
    absorbed: np.ndarray   # P(absorbed at 0 by step n)


def absorbed_ray_return(n_max: int, hold: float = 0.5) -> AbsorbedSeries:
    """Walk on {0, 1, 2, ...} started at 1, killed on reaching 0.

    From k >= 1 it steps to k +- 1 with probability (1 - hold)/2 each and
    holds otherwise. Exact dynamic programming on {0, ..., n_max + 1}.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if not 0 <= hold < 1:
        raise ValueError("hold probability must lie in [0, 1)")
    size = n_max + 3
    v = np.zeros(size)
    v[1] = 1.0
    q = (1 - hold) / 2
    ret = np.empty(n_max)
    dead = np.empty(n_max)
    gone = 0.0
    for k in range(n_max):
        w = hold * v
        w[1:] += q * v[:-1]
        w[:-1] += q * v[1:]
        gone += w[0]
        w[0] = 0.0
        v = w
        ret[k] = v[1]
        dead[k] = gone
    return AbsorbedSeries(np.arange(1, n_max + 1), ret, dead)


# --- fitting -------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    intercept: float
    rms: float
    window: tuple[int, int]
    n_points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def dyadic_points(n, window) -> np.ndarray:
    lo, hi = window
    n = np.asarray(n)
    pows = 2 ** np.arange(0, 63)
    pows = pows[(pows >= lo) & (pows <= hi)]
    return np.intersect1d(pows, n)


def decay_fit(n, p, window=None) -> DecayFit:
    """Least-squares fit ln p = -alpha ln n + c at the dyadic n in ``window``."""
    n = np.asarray(n)
    p = np.asarray(p, dtype=float)
    if window is None:
        window = (int(n.min()), int(n.max()))
    pts = dyadic_points(n, window)
    if len(pts) < 5:
        raise ValueError(f"only {len(pts)} dyadic times in window {window}; need >= 5")
    idx = np.searchsorted(n, pts)
    vals = p[idx]
    if np.any(vals <= 0):
        raise ValueError("series must be positive at the fitted times")
    X = np.log(pts.astype(float))
    Y = np.log(vals)
    A = np.column_stack([X, np.ones_like(X)])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    return DecayFit(float(-coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2))),
                    (int(window[0]), int(window[1])), len(pts))


def write_series_csv(n, p, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "p_n"])
        for a, b in zip(n, p):
            w.writerow([int(a), repr(float(b))])


def write_fit_json(fit: DecayFit, path) -> None:
    with open(path, "w") as fh:
        json.dump(fit.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")

