import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from orbital_heat.analysis import (
    RadialProfile, delta_f, delta_f_all, doubling_constant, lp_norm, poincare_quotient,
    poincare_sup, radial_sobolev_check, radial_sobolev_ratio, random_poincare_check,
    sobolev_ratio, sobolev_report, spectral_bottom, spectral_bottom_sweep, tent,
)
from orbital_heat.graphs import build_mixed, build_ray, build_star, build_tree, graph_from_edges


def test_delta_f_on_a_path():
    G = graph_from_edges([1, 1, 1], [[0, 1], [1, 2]])
    f = np.array([0.0, 3.0, 7.0])
    assert np.allclose(delta_f_all(G, f), [3, 5, 4])
    assert delta_f(G, f, 1) == 5
    with pytest.raises(ValueError):
        delta_f(build_tree(3), np.zeros(4), 0)
    with pytest.raises(ValueError):
        delta_f_all(G, [1, 2])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_identity(seed):
    # sum m (delta f)^2 = 2 sum_e c_e (df)^2 when m is constant
    rng = np.random.default_rng(seed)
    G = build_star(3, 6)
    f = rng.normal(size=G.n)
    lhs = np.sum(G.weights * delta_f_all(G, f) ** 2)
    u, v = G.edges.T
    assert lhs == pytest.approx(2 * np.sum(G.conductance * (f[u] - f[v]) ** 2), rel=1e-12)


def _poincare_reference(G, x, r):
    """Independent sharp constant: explicit forms, projection by null_space."""
    dist = G.distances_from(x)
    big = np.nonzero(dist <= 2 * r)[0]
    n = len(big)
    pos = {int(v): i for i, v in enumerate(big)}
    m = G.weights[big]
    inner = dist[big] <= r
    A = np.zeros((n, n))
    mi = m * inner
    for i in range(n):
        for j in range(n):
            A[i, j] = mi[i] * (i == j) - mi[i] * mi[j] / mi.sum()
    B = np.zeros((n, n))
    for (a, b), c in zip(G.edges, G.conductance):
        if a in pos and b in pos:
            i, j = pos[a], pos[b]
            e = np.zeros(n)
            e[i], e[j] = 1, -1
            B += 2 * r * r * c * np.outer(e, e)
    N = linalg.null_space(np.ones((1, n)))
    return float(linalg.eigh(N.T @ A @ N, N.T @ B @ N, eigvals_only=True)[-1])


@pytest.mark.parametrize("G,x,r", [
    (build_star(2, 9), 0, 2),
    (build_star(3, 9), 4, 3),
    (build_tree(6, lumped=False), 0, 2),
    (build_mixed(1, 0, 12), 0, 4),
])
def test_poincare_against_reference(G, x, r):
    assert poincare_sup(G, x, r) == pytest.approx(_poincare_reference(G, x, r), rel=1e-9)


def test_poincare_eigenvector_attains_the_constant():
    G, r = build_star(2, 20), 5
    from orbital_heat.analysis import poincare_forms
    F = poincare_forms(G, 0, r)
    w, V = linalg.eigh(F.A, F.B)
    f = np.zeros(G.n)
    f[F.vertices] = F.basis @ V[:, -1]
    assert poincare_quotient(G, 0, r, f) == pytest.approx(w[-1], rel=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_random_functions_stay_below_eigen_solve(d):
    G = build_star(d, 33)
    best, lam = random_poincare_check(G, 0, 8, trials=3000, seed=d)
    assert 0 < best <= lam * (1 + 1e-9)
    assert lam <= 2 * d**3


def test_poincare_edge_cases():
    G = build_star(2, 5)
    assert poincare_sup(G, 0, 0) == 0
    with pytest.raises(ValueError):
        poincare_sup(G, 0, -1)
    with pytest.raises(ValueError):
        poincare_sup(build_tree(4), 0, 1)


def test_doubling_star_and_weighted_ray():
    rep = doubling_constant(build_star(3, 200), 0, 100)
    # (1 + 6r) / (1 + 3r) increases to 2
    assert rep.ratios[0] == pytest.approx(7 / 4)
    assert rep.constant < 2
    ray = doubling_constant(build_mixed(1, 0, 400), 0, 200)
    assert 7.5 < ray.constant < 8
    with pytest.raises(ValueError):
        doubling_constant(build_star(3, 10), 0, 6)


def test_lp_norm():
    G = graph_from_edges([1, 4], [[0, 1]])
    assert lp_norm(G, [1, 1], 2) == pytest.approx(math.sqrt(5))
    assert lp_norm(G, [-3, 1], math.inf) == 3


def test_sobolev_indicator_of_root():
    G = build_star(3, 10)
    f = np.zeros(G.n)
    f[G.root()] = 1
    # ||f||_6 = 1 and delta f = sqrt 3 at the root and 1 at its three neighbours
    assert sobolev_ratio(G, f, 2, 6) == pytest.approx(6**-0.5, rel=1e-14)
    with pytest.raises(ValueError):
        sobolev_ratio(G, np.ones(G.n), 2, 6)


def test_sobolev_grows_on_unit_star_and_not_on_weighted_ray():
    star = sobolev_report(build_star(3, 129), trials=4)
    assert star.ratios[-1] > 10 * star.ratios[0]
    ray = sobolev_report(build_mixed(1, 0, 129), trials=4)
    assert ray.sup < 1
    assert ray.ratios[-1] < 1.5 * ray.ratios[2]
    with pytest.raises(ValueError):
        sobolev_report(build_star(1, 5), radii=[5])


def _radial_reference(c, h, lo=1.0):
    mpmath.mp.dps = 30
    a, b = max(c - h, lo), c + h
    f = lambda r: max(0, h - abs(r - c))
    n6 = mpmath.quad(lambda r: f(r) ** 6 * r**2, [a, c, b])
    d2 = mpmath.quad(lambda r: r**2, [a, b])
    return float((4 * mpmath.pi) ** (mpmath.mpf(1) / 6) * n6 ** (mpmath.mpf(1) / 6) / (2 * mpmath.sqrt(mpmath.pi) * mpmath.sqrt(d2)))


@pytest.mark.parametrize("c,h", [(3, 2), (2, 2), (10, 1)])
def test_radial_ratio_against_reference(c, h):
    assert radial_sobolev_ratio(tent(c, h)) == pytest.approx(_radial_reference(c, h), rel=1e-9)


@pytest.mark.parametrize("lam", [1.5, 2.0, 4.0, 10.0])
def test_radial_ratio_scale_invariant(lam):
    # supported in r >= 1 before and after scaling
    base = tent(3, 2)
    assert radial_sobolev_ratio(base.scaled(lam)) == pytest.approx(radial_sobolev_ratio(base), rel=1e-9)


def test_radial_profile_errors():
    with pytest.raises(ValueError):
        radial_sobolev_ratio(tent(0.5, 0.4))
    flat = RadialProfile(lambda r: 1.0, lambda r: 0.0, (2, 3))
    with pytest.raises(ValueError):
        radial_sobolev_ratio(flat)
    with pytest.raises(ValueError):
        radial_sobolev_check([])
    assert radial_sobolev_check([tent(3, 2), tent(2, 2)]) == pytest.approx(0.21641, abs=1e-5)


def test_spectral_bottom_oracles():
    tree = spectral_bottom_sweep(lambda n: build_tree(n))
    assert tree.spread < 0.1
    assert tree.estimate == pytest.approx(2 * (3 - 2 * math.sqrt(2)), rel=0.1)
    ray = spectral_bottom_sweep(lambda n: build_ray(n, "exp"))
    assert ray.spread < 0.1
    assert ray.estimate == pytest.approx((1 + math.e**2) * (1 - math.exp(-1)) ** 2, rel=0.1)
    unit = spectral_bottom_sweep(lambda n: build_ray(n, "unit"))
    assert unit.loglog_slope == pytest.approx(-2, abs=0.2)


def test_spectral_bottom_small_paths():
    # f(1) = 0: quotient 2 c f0^2 / (m0 f0^2) = 2
    H = graph_from_edges([1, 1], [[0, 1]])
    assert spectral_bottom(H) == pytest.approx(2.0)
    # three vertices, Dirichlet at the last: least eigenvalue of 2 [[1, -1], [-1, 2]]
    G = graph_from_edges([1, 1, 1], [[0, 1], [1, 2]])
    assert spectral_bottom(G) == pytest.approx(3 - math.sqrt(5), rel=1e-12)
