import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbital_heat.groups import cyclic_group, parabolic_group, presentation, schottky_group, trivial_group
from orbital_heat.hyperbolic import BASEPOINT, Isometry, PointH3, apply, compose, dist
from orbital_heat.orbits import (
    DiscretenessSuspect, IncompleteBall, averaged_orbital, critical_exponent_estimate,
    enumerate_ball, kernel_restrict, orbital_count, rough_decrease_report, separation_radius,
    word_labels, write_jumps_csv,
)


def brute_force(group, R, max_len, x=BASEPOINT, y=BASEPOINT):
    """Sorted distances of all reduced words up to max_len within R, and the
    number found at the last two lengths (should be 0 for a complete list)."""
    gens = [s.g for s in group.generators]
    inv = group.inverse_of
    found, at_end = [dist(x, y)], 0
    level = [((), Isometry.identity())]
    for n in range(1, max_len + 1):
        nxt = []
        for w, g in level:
            for s, h in enumerate(gens):
                if w and inv[w[-1]] == s:
                    continue
                gh = compose(g, h)
                nxt.append((w + (s,), gh))
                d = dist(x, apply(gh, y))
                if d <= R:
                    found.append(d)
                    if n >= max_len - 1:
                        at_end += 1
        level = nxt
    return np.sort(found), at_end


def test_trivial_ball():
    b = enumerate_ball(trivial_group(), radius=5)
    assert len(b) == 1 and b.distances[0] == 0 and b.words == ((),)
    assert orbital_count(b, 3) == 1


def test_cyclic_ball_size():
    b = enumerate_ball(cyclic_group(1.0), radius=5.5)
    assert len(b) == 11
    assert np.allclose(b.distances, np.repeat(np.arange(6), [1] + [2] * 5))


@pytest.mark.parametrize("R", [4.0, 6.5, 8.0])
def test_schottky_matches_brute_force(R):
    g = schottky_group(3.0)
    ball = enumerate_ball(g, radius=R)
    ref, tail = brute_force(g, R, 8)
    assert tail == 0
    assert len(ball) == len(ref)
    assert np.allclose(ball.distances, ref, atol=1e-10)


def test_schottky_off_basepoint_matches_brute_force():
    g = schottky_group(3.0)
    x, y = PointH3(0.2, -0.1, 1.3), PointH3(-0.3, 0.4, 0.8)
    ball = enumerate_ball(g, x, y, radius=7.0)
    ref, tail = brute_force(g, 7.0, 8, x, y)
    assert tail == 0
    assert np.allclose(ball.distances, ref, atol=1e-10)


def test_parabolic_matches_powers():
    g = parabolic_group(1.0)
    R = 9.0
    ball = enumerate_ball(g, radius=R)
    # d(j, j + n) = 2 asinh(|n|/2)
    n = np.arange(-400, 401)
    ref = np.sort(2 * np.arcsinh(np.abs(n) / 2))
    ref = ref[ref <= R]
    assert len(ball) == len(ref)
    assert np.allclose(ball.distances, ref, atol=1e-12)


def test_words_reproduce_matrices():
    g = schottky_group(3.0)
    ball = enumerate_ball(g, radius=7.0)
    for w, m in zip(ball.words, ball.matrices):
        h = Isometry.identity()
        for s in w:
            h = compose(h, g.generators[s].g)
        assert np.allclose(Isometry.from_matrix(m).matrix(), h.matrix(), atol=1e-9)
    labels = word_labels(ball, g)
    assert labels[0] == ""
    assert all(len(lab.split()) == len(w) for lab, w in zip(labels, ball.words))


@settings(max_examples=15, deadline=None)
@given(st.permutations([0, 2]))
def test_generator_order_does_not_matter(order):
    g = schottky_group(3.0)
    idx = [i for k in order for i in (k, k + 1)]
    a = enumerate_ball(g, radius=8.0)
    b = enumerate_ball(g.permuted(idx), radius=8.0)
    assert np.array_equal(a.distances, b.distances)
    assert np.allclose(a.matrices, b.matrices, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.5, 2.0), st.floats(2.0, 6.0))
def test_basepoint_change_sandwich(x1, x2, h, rho):
    g = schottky_group(3.0)
    y = PointH3(x1, x2, h)
    d = dist(BASEPOINT, y)
    R = rho + d + 0.1
    bxy = enumerate_ball(g, BASEPOINT, y, radius=R)
    bxx = enumerate_ball(g, radius=R)
    lower = orbital_count(bxx, rho - d) if rho >= d else 0
    assert lower <= orbital_count(bxy, rho) <= orbital_count(bxx, rho + d)


def test_counting_functions():
    b = enumerate_ball(cyclic_group(1.0), radius=10.5)
    assert orbital_count(b, 2.5) == 5
    assert averaged_orbital(b, 2.5) == pytest.approx(5 * math.exp(-5))
    with pytest.raises(ValueError):
        orbital_count(b, 11.5)
    rho, counts = b.jumps()
    assert np.allclose(rho, np.arange(11))
    assert list(counts) == [1 + 2 * k for k in range(11)]


def test_critical_exponent_of_cyclic_is_small():
    est = critical_exponent_estimate(enumerate_ball(cyclic_group(1.0), radius=20.0))
    assert abs(est.estimate) <= 0.15
    assert critical_exponent_estimate(enumerate_ball(trivial_group(), radius=10)).estimate == 0


def test_critical_exponent_of_schottky_is_positive():
    est = critical_exponent_estimate(enumerate_ball(schottky_group(3.0), radius=16.0))
    assert 0.1 < est.estimate < 2


def test_rough_decrease():
    # trivial: Ntilde = e^{-2 rho} is decreasing
    assert rough_decrease_report(enumerate_ball(trivial_group(), radius=6), 1.0) == 1.0
    # cyclic: N jumps 1 -> 3 at rho = 1 with no decay across the jump; later
    # jumps multiply N by (2k+3)/(2k+1) < 3 after a full e^{-2} of decay
    r = rough_decrease_report(enumerate_ball(cyclic_group(1.0), radius=10), 0.5)
    assert r == pytest.approx(3.0)
    # a short translation makes jumps outpace the decay just after rho0
    r = rough_decrease_report(enumerate_ball(cyclic_group(0.05), radius=3), 0.01)
    assert r > 1


def test_kernel_restrict():
    g = schottky_group(3.0).with_hom({"a": [1, 0], "b": [0, 1]})
    ball = enumerate_ball(g, radius=10.0)
    ker = kernel_restrict(ball, g)
    for w in ker.words:
        counts = np.zeros(2, int)
        for s in w:
            counts += np.array(g.generators[s].hom)
        assert not counts.any()
    assert len(ker) < len(ball) and ker.words[0] == ()
    # with hom onto Z via a only, b-words stay
    ker_a = kernel_restrict(ball, g, {"a": [1], "b": [0]})
    assert len(ker_a) > len(ker)


def test_jumps_csv(tmp_path):
    b = enumerate_ball(cyclic_group(1.0), radius=3.0)
    write_jumps_csv(b, tmp_path / "j.csv")
    lines = (tmp_path / "j.csv").read_text().splitlines()
    assert lines[0] == "rho_jump,count"
    assert lines[1:] == ["0.0,1", "1.0,3", "2.0,5", "3.0,7"]


def test_separation_radius():
    assert separation_radius(enumerate_ball(schottky_group(3.0), radius=8.0)) == pytest.approx(1.5)
    assert separation_radius(enumerate_ball(trivial_group(), radius=4.0)) == 2.0
    with pytest.raises(ValueError):
        separation_radius(enumerate_ball(cyclic_group(1.0), BASEPOINT, PointH3(0, 0, 2), radius=4.0))


def test_element_cap_marks_ball_partial():
    b = enumerate_ball(schottky_group(3.0), radius=12.0, max_elements=50)
    assert not b.complete
    with pytest.raises(IncompleteBall):
        orbital_count(b, 5)
    b = enumerate_ball(parabolic_group(1.0), radius=20.0, max_elements=100)
    assert not b.complete


def test_thread_count_does_not_change_output():
    g = schottky_group(3.0)
    runs = [enumerate_ball(g, radius=14.0, threads=n) for n in (1, 4)]
    assert np.array_equal(runs[0].distances, runs[1].distances)
    assert np.array_equal(runs[0].matrices, runs[1].matrices)
    assert runs[0].words == runs[1].words


def test_non_discrete_generators_raise():
    a = Isometry.loxodromic(1.0)
    b = Isometry.loxodromic(1.0 + 5e-8)
    g = presentation([a, b], ["a", "b"])
    with pytest.raises(DiscretenessSuspect):
        enumerate_ball(g, radius=3.0)


def test_negative_radius():
    with pytest.raises(ValueError):
        enumerate_ball(trivial_group(), radius=-1)
