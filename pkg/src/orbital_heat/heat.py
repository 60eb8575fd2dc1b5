"""Heat kernels of H^3 and of its quotients by discrete groups.

p3(rho, t) = (4 pi t)^{-3/2} (rho / sinh rho) exp(-t - rho^2 / 4t) is the
kernel at distance rho. The kernel of a quotient is the orbit sum

    p_G(x, y, t) = sum_gamma p3(d(x, gamma.y), t) = -int N(x, y, rho) dp3/drho,

the second form being a Stieltjes integral against the orbital counting
function. Truncated sums carry a certified bound on the missing mass from a
packing estimate for N beyond the enumeration radius.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .hyperbolic import BASEPOINT, dist
from .orbits import OrbitBall, orbital_count, separation_radius

SERIES_CUT = 1e-6       # rho / sinh rho by series below this
COTH_SERIES_CUT = 0.1   # (rho coth rho - 1) / rho by series below this
TAIL_RATIO_LIMIT = 1e-2


class InadequateTail(RuntimeError):
    """The truncated orbit sum misses too much mass for the requested check."""


def _as_float_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _check_t(t):
    if np.any(np.asarray(t) <= 0):
        raise ValueError("time must be positive")


def rho_over_sinh(rho):
    """rho / sinh(rho) without overflow or 0/0."""
    r, scalar = _as_float_array(rho)
    r = np.atleast_1d(r)
    out = np.empty_like(r)
    small = r < SERIES_CUT
    rs = r[small]
    out[small] = 1 - rs**2 / 6 + 7 * rs**4 / 360
    rb = r[~small]
    out[~small] = 2 * rb * np.exp(-rb) / -np.expm1(-2 * rb)
    return float(out[0]) if scalar else out


def _coth_bracket(rho):
    """(rho coth rho - 1) / rho, positive for rho > 0."""
    r = np.atleast_1d(np.asarray(rho, dtype=float))
    out = np.empty_like(r)
    small = r < COTH_SERIES_CUT
    rs = r[small]
    r2 = rs * rs
    out[small] = rs * (1 / 3 + r2 * (-1 / 45 + r2 * (2 / 945 + r2 * (-1 / 4725 + r2 * 2 / 93555))))
    rb = r[~small]
    out[~small] = (rb / np.tanh(rb) - 1) / rb
    return out


def p3(rho, t):
    """Heat kernel of H^3 at distance rho and time t."""
    _check_t(t)
    r, scalar = _as_float_array(rho)
    if np.any(r < 0):
        raise ValueError("distance must be nonnegative")
    t = np.asarray(t, dtype=float)
    val = (4 * np.pi * t) ** -1.5 * rho_over_sinh(r) * np.exp(-t - r * r / (4 * t))
    return float(val) if np.ndim(val) == 0 else val


def log_p3(rho, t):
    """ln p3, finite far beyond the range where p3 underflows."""
    _check_t(t)
    r = np.asarray(rho, dtype=float)
    # ln(rho / sinh rho) = ln(2 rho) - rho - ln(1 - e^{-2 rho})
    with np.errstate(divide="ignore"):
        lrs = np.where(
            r < SERIES_CUT,
            np.log1p(-(np.minimum(r, SERIES_CUT) ** 2) / 6),
            np.log(2 * np.maximum(r, SERIES_CUT)) - r - np.log(-np.expm1(-2 * np.maximum(r, SERIES_CUT))),
        )
    val = -1.5 * np.log(4 * np.pi * t) + lrs - t - r * r / (4 * t)
    return float(val) if np.ndim(val) == 0 else val


def dp3_drho(rho, t):
    """Radial derivative of p3; strictly negative for rho > 0."""
    _check_t(t)
    r, scalar = _as_float_array(rho)
    if np.any(r <= 0):
        raise ValueError("dp3/drho is evaluated for rho > 0 only")
    g = -_coth_bracket(r) - r / (2 * np.asarray(t, dtype=float))
    val = p3(r, t) * g.reshape(np.shape(r)) if not scalar else p3(float(r), t) * float(g[0])
    return float(val) if np.ndim(val) == 0 else val


def p5(rho, t):
    """Heat kernel of H^5 from the dimension recurrence
    p5 = -e^{-3t} / (2 pi sinh rho) dp3/drho."""
    r, scalar = _as_float_array(rho)
    val = -np.exp(-3 * np.asarray(t, dtype=float)) / (2 * np.pi * np.sinh(r)) * dp3_drho(r, t)
    return float(val) if np.ndim(val) == 0 else val


def vol_h3(r):
    """Volume of a hyperbolic ball of radius r, pi (sinh 2r - 2r)."""
    x, scalar = _as_float_array(r)
    x = np.atleast_1d(x)
    u = 2 * x
    small = u < 1e-2
    out = np.empty_like(x)
    us = u[small]
    # sinh u - u = u^3/6 + u^5/120 + u^7/5040 + ...
    out[small] = np.pi * us**3 / 6 * (1 + us**2 / 20 * (1 + us**2 / 42))
    out[~small] = np.pi * (np.sinh(u[~small]) - u[~small])
    return float(out[0]) if scalar else out


def annulus_lower_constant(t: float, n: int = 401) -> float:
    """min over rho in [2t, 2t+1] of -dp3/drho * sqrt(t) * e^{4t}.

    A positive value is the constant in the annulus lower bound
    -dp3 >= C t^{-1/2} e^{-4t} at this t.
    """
    rho = np.linspace(2 * t, 2 * t + 1, n)
    vals = -dp3_drho(rho, t) * math.sqrt(t) * math.exp(4 * t)
    return float(vals.min())


# --- quotient kernel ---------------------------------------------------------------


@dataclass(frozen=True)
class HeatValue:
    value: float
    tail_bound: float
    t: float
    rho: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("heat kernel values are positive")
        if not (math.isfinite(self.tail_bound) and self.tail_bound >= 0):
            raise ValueError("tail bound must be finite and nonnegative")

    @property
    def tail_ratio(self) -> float:
        return self.tail_bound / self.value


def packing_count_bound(rho, d_xy: float, r0: float):
    """N(x, y, rho) <= vol(rho + d(x,y) + r0) / vol(r0) when balls of radius
    r0 around orbit points are disjoint."""
    return vol_h3(np.asarray(rho, dtype=float) + d_xy + r0) / vol_h3(r0)


def _log_packing_integrand(rho, t, d_xy, r0):
    # ln of vol(rho + d + r0) / vol(r0) * (-dp3/drho)
    r = np.asarray(rho, dtype=float)
    s = r + d_xy + r0
    # for large s, ln(sinh 2s - 2s) = 2s - ln 2 + ln(1 - e^{-4s} - 4 s e^{-2s})
    big = math.log(math.pi) + 2 * s - math.log(2) + np.log1p(-np.exp(-4 * s) - 4 * s * np.exp(-2 * s))
    lvol = np.where(s < 20, np.log(vol_h3(np.minimum(s, 20.0))), big)
    lv0 = math.log(vol_h3(r0))
    lg = np.log(_coth_bracket(r) + r / (2 * t)).reshape(r.shape)
    out = lvol - lv0 + log_p3(r, t) + lg
    return float(out) if np.ndim(out) == 0 else out


def packing_tail(R: float, t: float, d_xy: float, r0: float) -> float:
    """-int_R^inf Nbar(rho) dp3/drho(rho, t) drho with the packing bound Nbar.

    The integrand behaves like exp(rho - rho^2/4t) and peaks near 2t; it is
    integrated in rescaled form on [R, U] where the log-integrand has dropped
    by more than 60 below its peak, and the Gaussian remainder past U is
    bounded and added.
    """
    if math.isinf(r0):
        return 0.0
    if r0 <= 0:
        raise ValueError("packing radius must be positive")
    R = max(float(R), 1e-9)
    peak = max(R, 2 * t + 2 * (d_xy + r0))
    lpeak = float(_log_packing_integrand(peak, t, d_xy, r0))
    if R < peak:
        grid = np.linspace(R, peak, 64)
        lpeak = max(lpeak, float(np.max(_log_packing_integrand(grid, t, d_xy, r0))))
    U = peak
    while _log_packing_integrand(U, t, d_xy, r0) > lpeak - 60:
        U += math.sqrt(t) + 1
    f = lambda r: math.exp(float(_log_packing_integrand(r, t, d_xy, r0)) - lpeak)
    pts = [p for p in (2 * t,) if R < p < U]
    val, _ = integrate.quad(f, R, U, points=pts or None, epsabs=0, epsrel=1e-10, limit=400)
    # past U the log-integrand is concave, so it stays below its tangent at U;
    # a backward difference under-states the tangent's (negative) slope
    h = 1e-3
    slope = float(_log_packing_integrand(U, t, d_xy, r0) - _log_packing_integrand(U - h, t, d_xy, r0)) / h
    if slope >= 0:
        raise RuntimeError("packing tail integrand not decaying at the cutoff")
    rem = f(U) / -slope
    return math.exp(lpeak) * (val + rem)


def _packing_radius(ball: OrbitBall, inj_lower):
    if inj_lower is not None:
        return float(inj_lower)
    if ball.inj_radius is not None and math.isinf(ball.inj_radius):
        return math.inf
    if ball.x == ball.y:
        return separation_radius(ball)
    if ball.inj_radius is not None and ball.y == BASEPOINT:
        return float(ball.inj_radius)
    raise ValueError("pass inj_lower: no packing radius is known at y")


def quotient_kernel(ball: OrbitBall, t: float, inj_lower: float | None = None) -> HeatValue:
    """p_G(x, y, t) as the orbit sum over the ball, plus a packing tail bound.

    ``inj_lower`` is a radius r0 such that balls B(gamma.y, r0) are disjoint;
    by default it comes from the ball itself (x = y) or the group's metadata.
    """
    ball.require_complete()
    _check_t(t)
    d = ball.distances
    k = _significant_prefix(d, t)
    value = math.fsum(np.atleast_1d(p3(d[:k], t)))
    # terms past k are each below e^-42 p3(d[0]) / n; their sum is bounded
    # by the count times the largest and joins the tail
    dropped = (len(d) - k) * float(p3(d[k], t)) if k < len(d) else 0.0
    r0 = _packing_radius(ball, inj_lower)
    d_xy = dist(ball.x, ball.y)
    tail = packing_tail(ball.radius, t, d_xy, r0) + dropped
    return HeatValue(value, tail, float(t), d_xy, {"r0": r0, "radius": ball.radius, "count": len(d)})


NEGLIGIBLE_LOG = 42.0


def _significant_prefix(d: np.ndarray, t: float) -> int:
    """Length of the sorted prefix of d whose p3 terms can matter in double
    precision (p3 decreases in rho)."""
    n = len(d)
    if n < 4096:
        return n
    cut = float(log_p3(d[0], t)) - NEGLIGIBLE_LOG - math.log(n)
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if float(log_p3(d[mid], t)) < cut:
            hi = mid
        else:
            lo = mid + 1
    return lo


def stieltjes_integral(ball: OrbitBall, t: float) -> float:
    """-int_0^R N drho(p3) + N(R) p3(R) by exact piecewise integration.

    N is constant between consecutive jumps, so each piece integrates to
    N_k (p3(r_k) - p3(r_{k+1})).
    """
    ball.require_complete()
    rho, counts = ball.jumps()
    if len(rho) == 0:
        return 0.0
    ends = np.append(rho[1:], ball.radius)
    pieces = counts * (np.atleast_1d(p3(rho, t)) - np.atleast_1d(p3(ends, t)))
    return math.fsum(np.append(pieces, len(ball) * p3(ball.radius, t)))


def stieltjes_check(ball: OrbitBall, t: float) -> float:
    """Relative residual between the Stieltjes form and the orbit sum."""
    direct = quotient_kernel(ball, t, inj_lower=math.inf).value
    return abs(stieltjes_integral(ball, t) - direct) / direct


# --- counting upper bound ---------------------------------------------------------------


@dataclass(frozen=True)
class RatioRow:
    rho: float
    ratio: float
    count: int
    p_gamma: float
    tail_ratio: float


def upper_bound_ratio(ball: OrbitBall, rho: float, *, inj_lower=None, max_tail_ratio=TAIL_RATIO_LIMIT) -> RatioRow:
    """[N(rho) e^{-2 rho}] / [sqrt(rho) p_G(x, y, rho/2)] from one ball.

    The ball must reach rho for the count and be large enough that the
    truncated kernel at t = rho/2 misses at most ``max_tail_ratio`` of it.
    """
    if rho <= 1:
        raise ValueError("the counting bound is stated for rho > 1")
    n = orbital_count(ball, rho)
    hv = quotient_kernel(ball, rho / 2, inj_lower)
    if hv.tail_ratio >= max_tail_ratio:
        raise InadequateTail(
            f"tail/value = {hv.tail_ratio:.3g} at t = {rho / 2:g}; enlarge the radius beyond {ball.radius:g}"
        )
    ratio = n * math.exp(-2 * rho) / (math.sqrt(rho) * hv.value)
    return RatioRow(float(rho), ratio, n, hv.value, hv.tail_ratio)


def upper_bound_table(ball: OrbitBall, rhos, **kw) -> tuple[list[RatioRow], np.ndarray]:
    """Rows for each rho plus the running sup of the ratio."""
    rows = [upper_bound_ratio(ball, float(r), **kw) for r in rhos]
    sup = np.maximum.accumulate([r.ratio for r in rows]) if rows else np.empty(0)
    return rows, sup


def min_adequate_radius(t: float, r0: float, d_xy: float = 0.0, max_tail_ratio=TAIL_RATIO_LIMIT, value=None):
    """Smallest radius (to 0.25) at which the packing tail falls below
    ``max_tail_ratio * value``; ``value`` defaults to p3(d_xy, t), a lower
    bound for every orbit sum."""
    target = max_tail_ratio * (p3(d_xy, t) if value is None else value)
    R = 0.25
    while packing_tail(R, t, d_xy, r0) >= target:
        R += 0.25
    return R


# --- sandwich and chopping -----------------------------------------------------------


def sandwich_ratio(t, rho):
    """-e^{2 rho} dp3/drho divided by t^{-1/2} e^{-t - rho^2/4t + rho}.

    Closed form: (4 pi)^{-3/2} t^{-1} (rho coth rho - 1 + rho^2/2t) e^{rho}/sinh rho.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(rho, dtype=float)
    bracket = r * _coth_bracket(r).reshape(r.shape) + r * r / (2 * t)
    e_over_sinh = 2 / -np.expm1(-2 * r)
    val = (4 * np.pi) ** -1.5 / t * bracket * e_over_sinh
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class SandwichConstants:
    c_lower: float
    c_upper: float
    t_range: tuple[float, float]
    n_t: int
    n_rho: int


def sandwich_constants(t_min=1.5, t_max=20.0, n_t=64, n_rho=64) -> SandwichConstants:
    """Extrema of the sandwich ratio over t in [t_min, t_max], rho in (t, 3t).

    The rho grid is interior (midpoints) since the claim is for the open
    annulus; t is sampled geometrically.
    """
    ts = np.geomspace(t_min, t_max, n_t)
    frac = (np.arange(n_rho) + 0.5) / n_rho
    T = ts[:, None]
    Rho = T * (1 + 2 * frac[None, :])
    vals = sandwich_ratio(T, Rho)
    return SandwichConstants(float(vals.min()), float(vals.max()), (t_min, t_max), n_t, n_rho)


def annulus_sandwich_check(t: float, rho: float, constants: SandwichConstants | None = None):
    """(lower_ok, upper_ok, constants) for one (t, rho) with t > 1, t < rho < 3t."""
    if not (t > 1 and t < rho < 3 * t):
        raise ValueError("the sandwich is claimed for t > 1 and rho in (t, 3t)")
    c = constants or sandwich_constants()
    v = sandwich_ratio(t, rho)
    return v >= c.c_lower, v <= c.c_upper, c


@dataclass(frozen=True)
class ChopResult:
    t: float
    k: float
    I1: float
    I2: float
    I3: float
    bound: float  # e^{-k^2/4} t^{-alpha}

    @property
    def ratio1(self) -> float:
        return self.I1 / self.bound

    @property
    def ratio3(self) -> float:
        return self.I3 / self.bound


def chopped_integrals(profile, t: float, k: float, alpha: float = 0.0, *, clip: bool = False) -> ChopResult:
    """I1, I2, I3: integrals of Ntilde(rho) t^{-1/2} e^{-t - rho^2/4t + rho}
    over [t, 2t - k sqrt t], [2t -+ k sqrt t], [2t + k sqrt t, 3t].

    ``profile`` is a callable Ntilde (vectorised or not) or an OrbitBall.
    With ``clip`` a window sticking out of [t, 3t] is cut back and the outer
    pieces become empty instead of raising.
    """
    if k <= 0 or t <= 0:
        raise ValueError("need k > 0 and t > 0")
    half = k * math.sqrt(t)
    lo, hi = 2 * t - half, 2 * t + half
    if lo < t or hi > 3 * t:
        if not clip:
            raise ValueError(f"k = {k:g} too large for t = {t:g} (needs k <= sqrt t)")
        lo, hi = max(lo, t), min(hi, 3 * t)
    if isinstance(profile, OrbitBall):
        ball = profile
        fn = lambda r: orbital_count(ball, r) * math.exp(-2 * r)
        breaks = ball.jumps()[0]
    else:
        fn = profile
        breaks = np.empty(0)
    sq = math.sqrt(t)

    def piece(a, b):
        if b <= a:
            return 0.0
        g = lambda r: float(fn(r)) * math.exp(-((r - 2 * t) ** 2) / (4 * t)) / sq
        pts = [float(p) for p in breaks if a < p < b][:300]
        val, _ = integrate.quad(g, a, b, points=pts or None, epsabs=0, epsrel=1e-10, limit=max(200, 4 * len(pts)))
        return val

    return ChopResult(t, k, piece(t, lo), piece(lo, hi), piece(hi, 3 * t), math.exp(-k * k / 4) * t**-alpha)


# --- Gaussian tail ---------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianTail:
    k: float
    estimate: float
    remainder: float  # certified |true - estimate| bound
    bound: float      # e^{-k^2/4}
    ok: bool


def gaussian_tail_check(k: float, span: float = 10.0, n: int = 4000) -> GaussianTail:
    """Certify int_{k/2}^inf e^{-u^2} du <= e^{-k^2/4}.

    Composite Simpson on [k/2, k/2 + span] has error at most
    span h^4 max|f''''| / 180 with max|f''''| = 12 for e^{-u^2}; the part past
    b = k/2 + span is below e^{-b^2} / (2b). The check passes when the
    estimate plus both remainders stays below the bound.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    a = k / 2
    b = a + span
    n += n % 2
    u = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    h = (b - a) / n
    est = h / 3 * math.fsum(w * np.exp(-u * u))
    simpson_err = span * h**4 * 12 / 180
    tail = math.exp(-b * b) / (2 * b)
    rem = simpson_err + tail + 1e-15 * est
    bound = math.exp(-k * k / 4)
    return GaussianTail(k, est, rem, bound, est + rem <= bound)


def gaussian_tail_exact(k: float) -> float:
    return math.sqrt(math.pi) / 2 * special.erfc(k / 2)


# --- long-time behaviour --------------------------------------------------------------


@dataclass(frozen=True)
class LogLimit:
    slope: float            # s in ln p = s t + beta ln t + c
    power: float            # beta
    naive_slope: float      # plain slope of ln p against t
    window: tuple[float, float]
    max_tail_ratio: float
    rms: float


def log_limit_estimate(balls, t_grid, max_tail_ratio: float = 1e-3, inj_lower=None) -> LogLimit:
    """Exponential rate of p_G(x, x, t) over the top dyadic window of t_grid.

    ln p is fitted as s t + beta ln t + c so that the polynomial prefactor of
    the kernel does not leak into the rate; the plain slope is reported too.
    """
    if isinstance(balls, OrbitBall):
        balls = [balls]
    ball = max(balls, key=lambda b: b.radius)
    ts = np.sort(np.asarray(list(t_grid), dtype=float))
    top = ts.max()
    ts = ts[ts >= top / 2]
    if len(ts) < 3:
        raise ValueError("need at least 3 times in the top dyadic window")
    vals, worst = [], 0.0
    for t in ts:
        hv = quotient_kernel(ball, float(t), inj_lower)
        if hv.tail_ratio >= max_tail_ratio:
            raise InadequateTail(f"tail/value = {hv.tail_ratio:.3g} at t = {t:g}")
        worst = max(worst, hv.tail_ratio)
        vals.append(math.log(hv.value))
    y = np.array(vals)
    A = np.column_stack([ts, np.log(ts), np.ones_like(ts)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    naive = np.polyfit(ts, y, 1)[0]
    return LogLimit(float(coef[0]), float(coef[1]), float(naive), (float(ts[0]), float(top)), worst,
                    float(np.sqrt(np.mean(resid**2))))


# --- semigroup property ------------------------------------------------------------


def semigroup_integral(D: float, s: float, t: float) -> float:
    """int_{H^3} p3(d(x,z), s) p3(d(z,y), t) dmu(z) for d(x,y) = D.

    Polar coordinates at x: cosh d(z,y) = cosh r cosh D - sinh r sinh D u
    with u the cosine of the angle to y, and dmu = 2 pi sinh^2 r dr du.
    """

    def inner(r):
        def g(u):
            c = math.cosh(r) * math.cosh(D) - math.sinh(r) * math.sinh(D) * u
            return p3(math.acosh(max(c, 1.0)), t)

        val, _ = integrate.quad(g, -1, 1, epsabs=0, epsrel=1e-11)
        return p3(r, s) * math.sinh(r) ** 2 * val

    top = 2 * (s + t) + D + 12 * math.sqrt(s + t) + 10
    val, _ = integrate.quad(inner, 0, top, epsabs=0, epsrel=1e-10, limit=200)
    return 2 * math.pi * val


def semigroup_check(D: float, s: float, t: float) -> float:
    """Relative error of the semigroup identity at one configuration."""
    exact = p3(D, s + t)
    return abs(semigroup_integral(D, s, t) - exact) / exact


def stochastic_mass(t: float) -> float:
    """int_0^inf p3(rho, t) 4 pi sinh^2 rho drho (should be 1)."""
    f = lambda r: math.exp(float(log_p3(r, t)) + 2 * _log_sinh(r)) * 4 * math.pi if r > 0 else 0.0
    top = 2 * t + 40 * math.sqrt(t) + 40
    val, _ = integrate.quad(f, 0, top, points=[2 * t], epsabs=0, epsrel=1e-12, limit=400)
    return val


def _log_sinh(r: float) -> float:
    return r + math.log(-math.expm1(-2 * r)) - math.log(2)


# --- output ------------------------------------------------------------------------


def write_kernel_csv(rows, path) -> None:
    """rows: iterable of HeatValue; columns t, p_gamma, tail_bound."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "p_gamma", "tail_bound"])
        for hv in rows:
            w.writerow([repr(hv.t), repr(hv.value), repr(hv.tail_bound)])


def write_ratio_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "ratio"])
        for r in rows:
            w.writerow([repr(r.rho), repr(r.ratio)])
