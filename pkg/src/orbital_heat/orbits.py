"""Orbit balls {gamma : d(x, gamma.y) <= R} and the orbital counting function.

Enumeration is a level-by-level breadth first search over reduced words.
For every candidate ``gamma.s`` the distance d(x, gamma s.y) is evaluated as
the displacement of ``X gamma s Y`` at j, where ``Y`` sends j to y and ``X``
sends x to j. A candidate is kept for further expansion while a lower bound
on what its extensions can reach stays within ``R``:

* reverse triangle inequality, iterated ``lookahead`` times:
  d(x, gamma s w.y) >= d(x, gamma s.y) - |w| max_s d(y, s.y);
* Frobenius (displacement) bound:
  d(x, gamma.y) >= d(j, gamma.j) - d(x, j) - d(y, j), used as a cheap prefilter.

Neither bound says anything about arbitrarily long extensions, so ``complete``
records that the frontier emptied under this rule; the builtin groups are
checked against exhaustive word enumeration.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _parallel
from .groups import GroupPresentation
from .hyperbolic import (
    BASEPOINT,
    Isometry,
    PointH3,
    canonicalize_array,
    dist,
    displacement,
    displacement_array,
    inverse,
    renormalize_array,
)

DEFAULT_MAX_ELEMENTS = 50_000_000
DEDUP_GRID = 1e-8
ALARM_GRID = 1e-6


class DiscretenessSuspect(RuntimeError):
    """Two words land within the alarm grid without matching on the dedup grid."""


class IncompleteBall(ValueError):
    """An operation needing every element within R got a partial ball."""


@dataclass(frozen=True)
class OrbitBall:
    x: PointH3
    y: PointH3
    radius: float
    distances: np.ndarray
    matrices: np.ndarray
    words: tuple | None
    complete: bool
    group: str = "group"
    inj_radius: float | None = None

    def __len__(self):
        return len(self.distances)

    def require_complete(self):
        if not self.complete:
            raise IncompleteBall(
                f"orbit ball of radius {self.radius} is partial (element cap hit)"
            )

    def jumps(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct jump points of rho -> N(rho) and the count just after each."""
        d = self.distances
        if len(d) == 0:
            return np.empty(0), np.empty(0, dtype=np.int64)
        rho, first = np.unique(d, return_index=True)
        counts = np.append(first[1:], len(d)).astype(np.int64)
        return rho, counts


def _mul(m: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Stack (n,2,2) times one 2x2, entrywise so results never depend on batching."""
    out = np.empty_like(m)
    out[:, 0, 0] = m[:, 0, 0] * g[0, 0] + m[:, 0, 1] * g[1, 0]
    out[:, 0, 1] = m[:, 0, 0] * g[0, 1] + m[:, 0, 1] * g[1, 1]
    out[:, 1, 0] = m[:, 1, 0] * g[0, 0] + m[:, 1, 1] * g[1, 0]
    out[:, 1, 1] = m[:, 1, 0] * g[0, 1] + m[:, 1, 1] * g[1, 1]
    return out


def _lmul(g: np.ndarray, m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    out[:, 0, 0] = g[0, 0] * m[:, 0, 0] + g[0, 1] * m[:, 1, 0]
    out[:, 0, 1] = g[0, 0] * m[:, 0, 1] + g[0, 1] * m[:, 1, 1]
    out[:, 1, 0] = g[1, 0] * m[:, 0, 0] + g[1, 1] * m[:, 1, 0]
    out[:, 1, 1] = g[1, 0] * m[:, 0, 1] + g[1, 1] * m[:, 1, 1]
    return out


EPS = np.finfo(float).eps


def _bucket_keys(m: np.ndarray, shift: int, sign: int) -> list[bytes]:
    """Cell keys on the alarm grid ALARM_GRID * 2^bucket, bucket ~ log2 |M|."""
    flat = sign * m.reshape(-1, 4)
    norm = np.linalg.norm(flat, axis=1)
    b = np.maximum(0, np.ceil(np.log2(np.maximum(1.0, norm))).astype(np.int64) + shift)
    parts = np.concatenate([flat.real, flat.imag], axis=1) / (ALARM_GRID * np.exp2(b))[:, None]
    rows = np.concatenate([b[:, None], np.rint(parts).astype(np.int64)], axis=1)
    rows[b < 0] = -1
    return [r.tobytes() for r in rows]


def _quotient_gap(g: np.ndarray, h: np.ndarray) -> float:
    """max |g^{-1} h -+ I| over both signs; zero exactly when g = +-h."""
    gi = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]])
    u = gi @ h
    eye = np.eye(2)
    return float(min(np.max(np.abs(u - eye)), np.max(np.abs(u + eye))))


class _Store:
    """Insert-if-absent store of group elements, sign-blind.

    Matrices are bucketed on a coarse grid (ALARM_GRID times the power of two
    above the norm); every candidate sharing a cell is compared through
    g^{-1} h, which is the identity exactly for duplicates. Rounding in that
    product grows like eps |M|^2, so the duplicate tolerance is
    max(DEDUP_GRID, 1e3 eps |M|^2); a quotient closer to +-I than ALARM_GRID
    but not within that tolerance is a discreteness alarm.
    """

    PROBES = [(shift, sign) for shift in (0, -1, 1) for sign in (1, -1)]

    def __init__(self):
        self.cells: dict[bytes, list[np.ndarray]] = {}

    def insert_many(self, mats: np.ndarray) -> np.ndarray:
        if len(mats) == 0:
            return np.zeros(0, dtype=bool)
        probe_keys = [_bucket_keys(mats, sh, sg) for sh, sg in self.PROBES]
        norms = np.linalg.norm(mats.reshape(-1, 4), axis=1)
        fresh = np.zeros(len(mats), dtype=bool)
        for i, m in enumerate(mats):
            tol = max(DEDUP_GRID, 1e3 * EPS * norms[i] ** 2)
            dup = False
            seen = set()
            for keys in probe_keys:
                k = keys[i]
                if k in seen:
                    continue
                seen.add(k)
                for other in self.cells.get(k, ()):
                    gap = _quotient_gap(other, m)
                    if gap <= tol:
                        dup = True
                        break
                    if gap <= ALARM_GRID:
                        raise DiscretenessSuspect(
                            f"two group elements differ by {gap:.2e} from the identity "
                            "quotient; generators may not generate a discrete group"
                        )
                if dup:
                    break
            if not dup:
                self.cells.setdefault(probe_keys[0][i], []).append(m)
                fresh[i] = True
        return fresh


def _power_chain(g, X, Y, pre_slack, slack, radius, room):
    """g, g^2, ... while the BFS keep rule holds; returns (mats, dists, complete).

    Powers are produced in blocks g^{n+j} = g^n g^j with block sizes doubling
    up to 4096, so very long chains (parabolic elements, whose orbit distance
    grows only like 2 log n) cost O(n) vectorised work instead of n levels.
    """
    pows = canonicalize_array(renormalize_array(g[None].copy()))
    mats, dists = [], []
    base = np.eye(2, dtype=complex)
    total = 0
    block = 16
    while True:
        while len(pows) < block:
            pows = np.concatenate([pows, canonicalize_array(renormalize_array(_lmul(pows[-1], pows)))])
        cand = canonicalize_array(renormalize_array(_lmul(base, pows[:block])))
        ok = displacement_array(cand) - pre_slack <= radius
        d = displacement_array(_lmul(X, _mul(cand, Y)))
        ok &= d - slack <= radius
        stop = int(np.argmin(ok)) if not ok.all() else block
        take = min(stop, room - total)
        mats.append(cand[:take])
        dists.append(d[:take])
        total += take
        if take < stop:
            return np.concatenate(mats), np.concatenate(dists), False
        if stop < block:
            return np.concatenate(mats), np.concatenate(dists), True
        base = cand[-1]
        block = min(2 * block, 4096)


def enumerate_ball(
    group: GroupPresentation,
    x: PointH3 = BASEPOINT,
    y: PointH3 = BASEPOINT,
    radius: float = 5.0,
    *,
    lookahead: int = 1,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
    keep_words: bool = True,
    threads: int | None = None,
    dedup: bool | None = None,
) -> OrbitBall:
    """All group elements gamma with d(x, gamma.y) <= radius.

    Output is sorted by distance, then by the canonical matrix, and is
    identical for every thread count. ``dedup=None`` deduplicates matrices
    unless the presentation is flagged free (then distinct reduced words are
    distinct elements and float comparison is both unnecessary and, past
    norms of ~1e8, unreliable).
    """
    if dedup is None:
        dedup = not group.meta.get("free", False)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    gens = group.matrices()
    inv = np.array(group.inverse_of, dtype=np.int64)
    tx = Isometry.moving_basepoint_to(x)
    ty = Isometry.moving_basepoint_to(y)
    X = inverse(tx).matrix()
    Y = ty.matrix()
    dx, dy = dist(x, BASEPOINT), dist(y, BASEPOINT)
    step = max((displacement(s.g, y) for s in group.generators), default=0.0)
    slack = lookahead * step

    ident = np.eye(2, dtype=complex)[None]
    store = _Store()
    store.insert_many(ident)
    d0 = dist(x, y)

    # global arrays over every element visited (inside the ball or not)
    all_mats = [ident]
    all_dist = [np.array([d0])]
    parent = [np.array([-1])]
    via = [np.array([-1])]
    n_visited = 1

    frontier = ident
    frontier_idx = np.array([0])
    frontier_last = np.array([-1])
    complete = True
    nthreads = _parallel.thread_count(threads)

    def expand(bounds):
        lo, hi = bounds
        F = frontier[lo:hi]
        last = frontier_last[lo:hi]
        idx = frontier_idx[lo:hi]
        mats, dists, par, gen = [], [], [], []
        for s in range(len(gens)):
            mask = last != inv[s]
            if not mask.any():
                continue
            cand = canonicalize_array(renormalize_array(_mul(F[mask], gens[s])))
            pidx = idx[mask]
            pre = displacement_array(cand) - dx - dy - slack <= radius
            cand, pidx = cand[pre], pidx[pre]
            d = displacement_array(_lmul(X, _mul(cand, Y)))
            keep = d - slack <= radius
            mats.append(cand[keep])
            dists.append(d[keep])
            par.append(pidx[keep])
            gen.append(np.full(int(keep.sum()), s))
        if not mats:
            return (np.empty((0, 2, 2), complex), np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64))
        return tuple(np.concatenate(v) for v in (mats, dists, par, gen))

    cyclic = len(gens) == 2 and list(inv) == [1, 0]
    if cyclic:
        # one generator and its inverse: the search is two chains of powers
        # (no dedup needed: distinct powers of a loxodromic or parabolic
        # element are distinct)
        for s in (0, 1):
            room = max(0, max_elements - n_visited)
            cm, cd, full = _power_chain(gens[s], X, Y, dx + dy + slack, slack, radius, room)
            complete &= full
            new_idx = np.arange(n_visited, n_visited + len(cm))
            all_mats.append(cm)
            all_dist.append(cd)
            parent.append(np.concatenate([[0], new_idx[:-1]]) if len(cm) else new_idx)
            via.append(np.full(len(cm), s))
            n_visited += len(cm)
        frontier = frontier[:0]

    while len(frontier) and len(gens):
        parts = _parallel.ordered_map(expand, _parallel.chunk_bounds(len(frontier)), nthreads)
        cm = np.concatenate([p[0] for p in parts])
        cd = np.concatenate([p[1] for p in parts])
        cp = np.concatenate([p[2] for p in parts])
        cg = np.concatenate([p[3] for p in parts])
        if dedup:
            fresh = store.insert_many(cm)
            cm, cd, cp, cg = cm[fresh], cd[fresh], cp[fresh], cg[fresh]
        if n_visited + len(cm) > max_elements:
            room = max(0, max_elements - n_visited)
            cm, cd, cp, cg = cm[:room], cd[:room], cp[:room], cg[:room]
            complete = False
        new_idx = np.arange(n_visited, n_visited + len(cm))
        n_visited += len(cm)
        all_mats.append(cm)
        all_dist.append(cd)
        parent.append(cp)
        via.append(cg)
        if not complete:
            break
        frontier, frontier_idx, frontier_last = cm, new_idx, cg

    mats = np.concatenate(all_mats)
    dists = np.concatenate(all_dist)
    parent_a = np.concatenate(parent)
    via_a = np.concatenate(via)

    inside = np.nonzero(dists <= radius)[0]
    flat = mats[inside].reshape(-1, 4)
    # lexsort: last key is primary -> distance, then a.re, a.im, b.re, ...
    keys = []
    for k in (3, 2, 1, 0):
        keys += [flat[:, k].imag, flat[:, k].real]
    order = np.lexsort(keys + [dists[inside]])
    inside = inside[order]

    words = None
    if keep_words:
        words = tuple(_word(i, parent_a, via_a) for i in inside)
    return OrbitBall(
        x=x,
        y=y,
        radius=float(radius),
        distances=dists[inside].copy(),
        matrices=mats[inside].copy(),
        words=words,
        complete=complete,
        group=group.name,
        inj_radius=group.meta.get("inj_radius"),
    )


def _word(i: int, parent: np.ndarray, via: np.ndarray) -> tuple[int, ...]:
    out = []
    while parent[i] >= 0:
        out.append(int(via[i]))
        i = int(parent[i])
    return tuple(reversed(out))


def word_labels(ball: OrbitBall, group: GroupPresentation) -> list[str]:
    if ball.words is None:
        raise ValueError("ball carries no words")
    labels = group.labels()
    return [" ".join(labels[s] for s in w) for w in ball.words]


# --- counting ----------------------------------------------------------------


def orbital_count(ball: OrbitBall, rho: float) -> int:
    """N(x, y, rho) = #{gamma : d(x, gamma.y) <= rho}."""
    ball.require_complete()
    if rho > ball.radius:
        raise ValueError(f"rho={rho} exceeds the ball radius {ball.radius}")
    return bisect.bisect_right(ball.distances, rho)


def averaged_orbital(ball: OrbitBall, rho: float) -> float:
    """N(x, y, rho) e^{-2 rho}."""
    return orbital_count(ball, rho) * math.exp(-2 * rho)


def separation_radius(ball: OrbitBall) -> float:
    """Half the least displacement d(y, gamma.y), gamma != 1, seen in a ball
    with x = y. Balls of that radius around orbit points are disjoint.

    When the ball holds no other element the least displacement exceeds R,
    so R/2 is still a valid (conservative) answer.
    """
    ball.require_complete()
    if ball.x != ball.y:
        raise ValueError("separation radius needs a ball centred at its own orbit point")
    d = ball.distances
    if len(d) <= 1:
        return ball.radius / 2
    if d[1] <= 0:
        raise DiscretenessSuspect("a non-identity element fixes the orbit point")
    return float(d[1]) / 2


@dataclass(frozen=True)
class ExponentEstimate:
    estimate: float
    stderr: float
    band: tuple[float, float]
    residual_rms: float
    window: tuple[float, float]
    n_points: int


def critical_exponent_estimate(ball: OrbitBall, n_grid: int = 64) -> ExponentEstimate:
    """Least-squares slope of ln N(rho) against rho on [R/2, R]."""
    ball.require_complete()
    R = ball.radius
    lo, hi = R / 2, R
    jumps, _ = ball.jumps()
    inside = jumps[(jumps > lo) & (jumps <= hi)]
    n0 = orbital_count(ball, lo)
    if n0 > 0 and len(inside) == 0:
        # N constant on the window (finite group, e.g. trivial): slope 0
        return ExponentEstimate(0.0, 0.0, (0.0, 0.0), 0.0, (lo, hi), n_grid)
    if n0 == 0 or len(inside) < 4:
        raise ValueError(
            f"too few jump points in [{lo:g}, {hi:g}] to fit a growth rate; enlarge R"
        )
    grid = np.linspace(lo, hi, n_grid)
    logn = np.log([orbital_count(ball, r) for r in grid])
    fit = stats.linregress(grid, logn)
    resid = logn - (fit.intercept + fit.slope * grid)
    band = (fit.slope - 2 * fit.stderr, fit.slope + 2 * fit.stderr)
    return ExponentEstimate(
        float(fit.slope), float(fit.stderr), band, float(np.sqrt(np.mean(resid**2))), (lo, hi), n_grid
    )


def rough_decrease_report(ball: OrbitBall, rho0: float) -> float:
    """sup over rho0 <= r1 <= r2 <= R of Ntilde(r2) / Ntilde(r1).

    Ntilde decreases between jumps, so the sup is taken over jump values for
    r2 and over left limits at jumps (plus rho0 and R) for r1.
    """
    ball.require_complete()
    R = ball.radius
    if not 0 <= rho0 <= R:
        raise ValueError("rho0 must lie in [0, R]")
    rho, counts = ball.jumps()
    n_start = orbital_count(ball, rho0)
    if n_start == 0:
        # Ntilde vanishes at rho0: unbounded unless N stays 0
        return 1.0 if orbital_count(ball, R) == 0 else math.inf
    best = 1.0
    log_min = math.log(n_start) - 2 * rho0
    for r, n in zip(rho, counts):
        if r <= rho0:
            continue
        # the left limit at r is approached before the jump value is attained
        log_min = min(log_min, math.log(_count_left(ball, r)) - 2 * r)
        best = max(best, math.exp(math.log(n) - 2 * r - log_min))
    return best


def _count_left(ball: OrbitBall, r: float) -> int:
    return bisect.bisect_left(ball.distances, r)


def kernel_restrict(ball: OrbitBall, group: GroupPresentation, hom=None) -> OrbitBall:
    """Sub-ball of elements whose exponent-sum vector under ``hom`` is zero.

    ``hom`` maps generator labels to integer vectors; defaults to the
    homomorphism carried by ``group``.
    """
    if ball.words is None:
        raise ValueError("kernel_restrict needs a ball enumerated with words")
    if hom is not None:
        group = group.with_hom(hom)
    if not group.generators:
        return ball
    if not group.has_hom:
        raise ValueError("no homomorphism given")
    vecs = np.array([s.hom for s in group.generators], dtype=np.int64)
    keep = [i for i, w in enumerate(ball.words) if not vecs[list(w)].sum(axis=0).any()]
    keep = np.array(keep, dtype=np.int64)
    return OrbitBall(
        x=ball.x,
        y=ball.y,
        radius=ball.radius,
        distances=ball.distances[keep],
        matrices=ball.matrices[keep],
        words=tuple(ball.words[i] for i in keep),
        complete=ball.complete,
        group=ball.group + "/ker",
        inj_radius=ball.inj_radius,
    )


def write_jumps_csv(ball: OrbitBall, path) -> None:
    rho, counts = ball.jumps()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho_jump", "count"])
        for r, n in zip(rho, counts):
            w.writerow([repr(float(r)), int(n)])
