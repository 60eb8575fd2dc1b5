"""Functional inequalities on weighted graphs.

Conventions: delta f(x) = sqrt(sum_{y ~ x} |f(y) - f(x)|^2) and norms are
taken against the vertex weights m. With unit weights this is the counting
measure; in general sum_x m(x) delta f(x)^2 = 2 sum_edges c_e (f(u) - f(v))^2
with c_e = (m(u) + m(v)) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .graphs import WeightedGraph, ball_volumes, graph_radius


def delta_f_all(G: WeightedGraph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if len(f) != G.n:
        raise ValueError("f must have one value per vertex")
    u, v = G.edges[:, 0], G.edges[:, 1]
    sq = (f[u] - f[v]) ** 2
    acc = np.bincount(u, weights=sq, minlength=G.n) + np.bincount(v, weights=sq, minlength=G.n)
    return np.sqrt(acc)


def delta_f(G: WeightedGraph, f, x: int) -> float:
    """Discrete gradient length at x."""
    G.require_explicit("delta f")
    return float(delta_f_all(G, f)[x])


def _laplacian(G: WeightedGraph, vertices=None) -> np.ndarray:
    """Dense weighted Laplacian sum_e c_e (f(u) - f(v))^2 on induced edges."""
    if vertices is not None:
        G = G.induced(vertices)
    L = np.zeros((G.n, G.n))
    u, v, c = G.edges[:, 0], G.edges[:, 1], G.conductance
    np.add.at(L, (u, v), -c)
    np.add.at(L, (v, u), -c)
    np.add.at(L, (u, u), c)
    np.add.at(L, (v, v), c)
    return L


# --- Poincare ------------------------------------------------------------------


@dataclass(frozen=True)
class PoincareForms:
    """Quadratic forms on functions on B(x, 2r), in a basis orthogonal to
    constants: numerator A (variance on B(x, r)) and denominator B."""
    A: np.ndarray
    B: np.ndarray
    basis: np.ndarray
    vertices: np.ndarray


def poincare_forms(G: WeightedGraph, x: int, r: int) -> PoincareForms:
    G.require_explicit("the Poincare constant")
    dist = G.distances_from(x)
    big = np.nonzero(dist <= 2 * r)[0]
    inner = dist[big] <= r
    m = G.weights[big]
    mi = np.where(inner, m, 0.0)
    # variance form: sum_{B(r)} m (f - f_r)^2 with the m-weighted mean f_r
    A = np.diag(mi) - np.outer(mi, mi) / mi.sum()
    # denominator: r^2 sum_{B(2r)} m (delta f)^2 with f extended outside the
    # ball by copying its neighbour's value; on trees that extension is the
    # minimiser, in general it only enlarges the quotient (conservative)
    B = 2 * r * r * _laplacian(G, big)
    Q, _ = np.linalg.qr(np.column_stack([np.ones(len(big)), np.eye(len(big))[:, : len(big) - 1]]))
    basis = Q[:, 1:]
    return PoincareForms(basis.T @ A @ basis, basis.T @ B @ basis, basis, big)


def poincare_sup(G: WeightedGraph, x: int, r: int) -> float:
    """Sharp P at (x, r): top generalized eigenvalue of A against B.

    B is positive definite on the complement of constants (the ball is
    connected), which is where the quotient is taken.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0:
        return 0.0
    F = poincare_forms(G, x, r)
    if F.A.shape[0] == 0:
        return 0.0
    w = linalg.eigh(F.A, F.B, eigvals_only=True, subset_by_index=[F.A.shape[0] - 1, F.A.shape[0] - 1])
    return float(w[0])


def poincare_quotient(G: WeightedGraph, x: int, r: int, f) -> float:
    """Direct evaluation of the Poincare quotient for one function f on G."""
    dist = G.distances_from(x)
    inner = dist <= r
    m = G.weights
    fr = np.sum(m[inner] * f[inner]) / np.sum(m[inner])
    num = np.sum(m[inner] * (f[inner] - fr) ** 2)
    big = np.nonzero(dist <= 2 * r)[0]
    den = r * r * float(f[big] @ (2 * _laplacian(G, big)) @ f[big])
    return num / den


def random_poincare_check(G: WeightedGraph, x: int, r: int, trials: int = 10_000, seed: int = 0):
    """(max quotient over random test functions, eigen-solve value)."""
    lam = poincare_sup(G, x, r)
    if r == 0:
        return 0.0, lam
    F = poincare_forms(G, x, r)
    rng = np.random.default_rng(seed)
    k = F.A.shape[0]
    best = 0.0
    for start in range(0, trials, 1000):
        n = min(1000, trials - start)
        # mix of smooth (cumulative) and rough random functions
        z = rng.standard_normal((n, len(F.vertices)))
        z[: n // 2] = np.cumsum(z[: n // 2], axis=1)
        c = z @ F.basis
        num = np.sum((c @ F.A) * c, axis=1)
        den = np.sum((c @ F.B) * c, axis=1)
        best = max(best, float(np.max(num / den)))
    return best, lam


# --- volume ------------------------------------------------------------------


@dataclass(frozen=True)
class DoublingReport:
    constant: float
    ratios: np.ndarray  # mu(B(2r)) / mu(B(r)) for r = 1..r_max


def doubling_constant(G: WeightedGraph, x: int, r_max: int) -> DoublingReport:
    """max over 1 <= r <= r_max of mu(B(x, 2r)) / mu(B(x, r))."""
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    if 2 * r_max > graph_radius(G, x):
        raise ValueError("graph too shallow: B(x, 2 r_max) reaches the truncation")
    vol = ball_volumes(G, x, 2 * r_max)
    r = np.arange(1, r_max + 1)
    ratios = vol[2 * r] / vol[r]
    return DoublingReport(float(ratios.max()), ratios)


# --- Sobolev ---------------------------------------------------------------------


def lp_norm(G: WeightedGraph, g, p: float) -> float:
    g = np.abs(np.asarray(g, dtype=float))
    if math.isinf(p):
        return float(g.max())
    return float(np.sum(G.weights * g**p) ** (1 / p))


def sobolev_ratio(G: WeightedGraph, f, q: float, p: float) -> float:
    """||f||_{L^p(m)} / ||delta f||_{L^q(m)}."""
    G.require_explicit("the Sobolev quotient")
    den = lp_norm(G, delta_f_all(G, f), q)
    if den == 0:
        raise ValueError("delta f vanishes: f is constant on a component")
    return lp_norm(G, f, p) / den


@dataclass(frozen=True)
class SobolevReport:
    radii: np.ndarray
    ratios: np.ndarray      # sup per support radius
    best_profile: tuple     # name of the maximising profile per radius
    q: float
    p: float

    @property
    def sup(self) -> float:
        return float(self.ratios.max())


def sobolev_report(G: WeightedGraph, q: float = 2, p: float = 6, trials: int = 32, seed: int = 0,
                   x: int | None = None, radii=None) -> SobolevReport:
    """Empirical sup of ||f||_p / ||delta f||_q by support radius.

    At each dyadic radius s the family is the indicator of B(x, s), the tent
    max(0, 1 - d/s), a smooth bump cos^2(pi d / 2s) and ``trials`` random
    functions supported in B(x, s). Supports stay one step inside the graph
    so delta f is never cut by the truncation.
    """
    if p < 1 or q < 1:
        raise ValueError("need p, q >= 1")
    x = G.root() if x is None else x
    dist = G.distances_from(x)
    depth = float(dist[np.isfinite(dist)].max())
    if radii is None:
        radii = [2**j for j in range(0, 62) if 2**j <= depth - 1]
    rng = np.random.default_rng(seed)
    out_r, out_v, out_name = [], [], []
    for s in radii:
        if s > depth - 1:
            raise ValueError(f"support radius {s} touches the graph truncation")
        inside = dist <= s
        d = np.where(inside, dist, s)
        profiles = {
            "indicator": inside.astype(float),
            "tent": np.where(inside, np.maximum(0.0, 1 - d / (s + 1)), 0.0),
            "bump": np.where(inside, np.cos(np.pi * d / (2 * (s + 1))) ** 2, 0.0),
        }
        for k in range(trials):
            profiles[f"random{k}"] = np.where(inside, rng.random(G.n), 0.0)
        vals = {name: sobolev_ratio(G, f, q, p) for name, f in profiles.items()}
        name = max(vals, key=vals.get)
        out_r.append(s)
        out_v.append(vals[name])
        out_name.append(name)
    return SobolevReport(np.array(out_r), np.array(out_v), tuple(out_name), q, p)


@dataclass(frozen=True)
class RadialProfile:
    """A function of r >= 1 with its derivative and compact support [a, b]."""
    f: object
    df: object
    support: tuple[float, float]
    breaks: tuple = ()
    name: str = "profile"

    def scaled(self, lam: float) -> "RadialProfile":
        """r -> f(r / lam), support [lam a, lam b]."""
        a, b = self.support
        return RadialProfile(
            lambda r: self.f(r / lam),
            lambda r: self.df(r / lam) / lam,
            (a * lam, b * lam),
            tuple(x * lam for x in self.breaks),
            f"{self.name}(r/{lam:g})",
        )


def tent(center: float, half_width: float) -> RadialProfile:
    """max(0, h - |r - c|) with h the half width."""
    return RadialProfile(
        lambda r: max(0.0, half_width - abs(r - center)),
        lambda r: 0.0 if abs(r - center) >= half_width else (-1.0 if r > center else 1.0),
        (center - half_width, center + half_width),
        (center,),
        f"tent({center:g},{half_width:g})",
    )


def radial_sobolev_ratio(prof: RadialProfile) -> float:
    """(4 pi)^{1/6} ||f||_{L^6(r^2 dr)} / (2 sqrt(pi) ||f'||_{L^2(r^2 dr)}) on r >= 1."""
    a, b = prof.support
    if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
        raise ValueError("profile must have compact support")
    lo = max(a, 1.0)
    if b <= lo:
        raise ValueError("support does not meet [1, inf)")
    pts = [x for x in prof.breaks if lo < x < b] or None
    opts = dict(points=pts, epsabs=0, epsrel=1e-12, limit=200)
    n6, _ = integrate.quad(lambda r: prof.f(r) ** 6 * r * r, lo, b, **opts)
    d2, _ = integrate.quad(lambda r: prof.df(r) ** 2 * r * r, lo, b, **opts)
    if n6 <= 0:
        raise ValueError("zero function")
    if d2 <= 0:
        raise ValueError("f' vanishes: not a compactly supported nonzero profile")
    return (4 * math.pi) ** (1 / 6) * n6 ** (1 / 6) / (2 * math.sqrt(math.pi) * math.sqrt(d2))


def radial_sobolev_check(profiles) -> float:
    """sup of the radial Sobolev ratio over a family of profiles."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("empty family")
    return max(radial_sobolev_ratio(p) for p in profiles)


# --- spectral bottom ---------------------------------------------------------------


def spectral_bottom(G: WeightedGraph, root: int | None = None) -> float:
    """inf of sum m (delta f)^2 / sum m f^2 over f vanishing on the outermost
    sphere about the root (Dirichlet there, free at the root)."""
    root = G.root() if root is None else root
    dist = G.distances_from(root)
    outer = dist == dist[np.isfinite(dist)].max()
    keep = np.nonzero(~outer)[0]
    E = 2 * _laplacian(G)[np.ix_(keep, keep)]
    M = np.diag(G.weights[keep])
    w = linalg.eigh(E, M, eigvals_only=True, subset_by_index=[0, 0])
    return float(w[0])


@dataclass(frozen=True)
class SpectralSweep:
    depths: tuple[int, ...]
    raw: np.ndarray        # lambda_0 of the depth-L truncation
    estimates: np.ndarray  # Richardson in L^-2 from depths L/2 and L
    loglog_slope: float    # slope of ln raw against ln L

    @property
    def estimate(self) -> float:
        return float(self.estimates[-1])

    @property
    def spread(self) -> float:
        """(max - min) / min of the per-depth estimates."""
        e = self.estimates
        return float((e.max() - e.min()) / abs(e.min()))


def spectral_bottom_sweep(builder, depths=(16, 32, 64)) -> SpectralSweep:
    """lambda_0 on depth-L truncations and the per-depth extrapolation.

    ``builder(n)`` must return the component built to depth n with its root
    at label depth 0; the truncation at depth L supports functions up to
    depth L (Dirichlet at L + 1). The estimate at depth L assumes
    lambda(L) ~ lambda_inf + a / L^2 and eliminates a using depth L / 2.
    """
    depths = tuple(int(L) for L in depths)
    if min(depths) < 2:
        raise ValueError("depths must be >= 2")
    cache: dict[int, float] = {}

    def lam(L):
        if L not in cache:
            cache[L] = spectral_bottom(builder(L + 1))
        return cache[L]

    raw = np.array([lam(L) for L in depths])
    est = []
    for L in depths:
        h = L // 2
        w1, w2 = h**-2.0, L**-2.0
        est.append((lam(L) * w1 - lam(h) * w2) / (w1 - w2))
    slope = float(np.polyfit(np.log(depths), np.log(raw), 1)[0])
    return SpectralSweep(depths, raw, np.array(est), slope)
