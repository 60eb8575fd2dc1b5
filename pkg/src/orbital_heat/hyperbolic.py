"""Upper half-space model of hyperbolic 3-space.

Points are ``(x1, x2, h)`` with ``h > 0``; orientation preserving isometries
are unit-determinant 2x2 complex matrices acting by Moebius transformations
extended to the upper half-space through the quaternion formula

    g.(z + h j) = (a (z + h j) + b) (c (z + h j) + d)^{-1}.

Matrices are stored in a canonical sign form so that the projective
ambiguity ``M ~ -M`` disappears; this is what orbit deduplication keys on.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

SIGN_EPS = 1e-12
DET_TOL = 1e-10
_EPS = 2.0**-52


@dataclass(frozen=True)
class PointH3:
    x1: float
    x2: float
    h: float

    def __post_init__(self):
        for v in (self.x1, self.x2, self.h):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate in {self!r}")
        if self.h <= 0:
            raise ValueError(f"height must be positive, got {self.h}")

    @property
    def z(self) -> complex:
        return complex(self.x1, self.x2)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x1, self.x2, self.h)


BASEPOINT = PointH3(0.0, 0.0, 1.0)


def _canonical_sign(a: complex, b: complex, c: complex, d: complex):
    for z in (a, b, c, d):
        if abs(z) > SIGN_EPS:
            if z.real > 0 or (z.real == 0 and z.imag > 0):
                return a, b, c, d
            return -a, -b, -c, -d
    raise ValueError("zero matrix is not an isometry")


def _det_is_drifted(a, b, c, d) -> bool:
    # rounding in ad - bc scales with |ad| + |bc|, not with 1
    det = a * d - b * c
    scale = max(1.0, abs(a * d) + abs(b * c))
    return abs(det - 1) > DET_TOL * scale


@dataclass(frozen=True)
class Isometry:
    """A point of PSL(2, C) held as a canonical unit-determinant matrix."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        a, b, c, d = (complex(v) for v in (self.a, self.b, self.c, self.d))
        if not all(cmath.isfinite(v) for v in (a, b, c, d)):
            raise ValueError("non-finite matrix entry")
        det = a * d - b * c
        scale = max(1.0, abs(a * d) + abs(b * c))
        if abs(det) <= 16 * _EPS * scale:
            # past |M|^2 ~ 1/eps the determinant is not resolvable in doubles;
            # below that a vanishing one means a singular matrix
            if 16 * _EPS * scale < 0.5:
                raise ValueError("singular matrix")
        elif _det_is_drifted(a, b, c, d):
            s = cmath.sqrt(det)
            a, b, c, d = a / s, b / s, c / s, d / s
        a, b, c, d = _canonical_sign(a, b, c, d)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_matrix(cls, m) -> "Isometry":
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def identity(cls) -> "Isometry":
        return cls(1, 0, 0, 1)

    @classmethod
    def loxodromic(cls, length: float, twist: float = 0.0) -> "Isometry":
        """Translation of the given length along the geodesic 0 -> infinity."""
        lam = cmath.exp(complex(length, twist) / 2)
        return cls(lam, 0, 0, 1 / lam)

    @classmethod
    def parabolic(cls, tau: complex) -> "Isometry":
        return cls(1, tau, 0, 1)

    @classmethod
    def moving_basepoint_to(cls, p: PointH3) -> "Isometry":
        """The isometry z + h j -> p.h (z + h j) + p.z, sending j to ``p``."""
        s = math.sqrt(p.h)
        return cls(s, p.z / s, 0, 1 / s)

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    @property
    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return compose(self, other)

    def __call__(self, p: PointH3) -> PointH3:
        return apply(self, p)


def compose(g: Isometry, h: Isometry) -> Isometry:
    return Isometry(
        g.a * h.a + g.b * h.c,
        g.a * h.b + g.b * h.d,
        g.c * h.a + g.d * h.c,
        g.c * h.b + g.d * h.d,
    )


def inverse(g: Isometry) -> Isometry:
    return Isometry(g.d, -g.b, -g.c, g.a)


def apply(g: Isometry, p: PointH3) -> PointH3:
    z, h = p.z, p.h
    u = g.c * z + g.d
    denom = abs(u) ** 2 + abs(g.c) ** 2 * h * h
    w = ((g.a * z + g.b) * u.conjugate() + g.a * g.c.conjugate() * h * h) / denom
    return PointH3(w.real, w.imag, h / denom)


def _sinh_half_sq(p: PointH3, q: PointH3) -> float:
    num = (p.x1 - q.x1) ** 2 + (p.x2 - q.x2) ** 2 + (p.h - q.h) ** 2
    return num / (4 * p.h * q.h)


def dist(p: PointH3, q: PointH3) -> float:
    """Hyperbolic distance, arccosh(1 + |p - q|^2 / (2 h h')).

    Evaluated as 2 asinh(sqrt(.)) which keeps full relative precision for
    nearby points.
    """
    return 2.0 * math.asinh(math.sqrt(_sinh_half_sq(p, q)))


def displacement(g: Isometry, basepoint: PointH3 | None = None) -> float:
    """d(p, g.p), by default at p = j = (0, 0, 1).

    At j this is arccosh(|g|_F^2 / 2); for unit determinant
    |g|_F^2 - 2 = |a - conj(d)|^2 + |b + conj(c)|^2, which avoids the
    cancellation of the naive form near the identity.
    """
    if basepoint is not None and basepoint != BASEPOINT:
        t = Isometry.moving_basepoint_to(basepoint)
        g = compose(inverse(t), compose(g, t))
    s = abs(g.a - g.d.conjugate()) ** 2 + abs(g.b + g.c.conjugate()) ** 2
    return 2.0 * math.asinh(math.sqrt(s) / 2)


# --- vectorised helpers over stacks of matrices, shape (n, 2, 2) ----------


def as_array(gs) -> np.ndarray:
    return np.array([g.matrix() for g in gs], dtype=complex).reshape(-1, 2, 2)


def displacement_array(m: np.ndarray) -> np.ndarray:
    a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    s = np.abs(a - np.conj(d)) ** 2 + np.abs(b + np.conj(c)) ** 2
    return 2.0 * np.arcsinh(np.sqrt(s) / 2)


def canonicalize_array(m: np.ndarray) -> np.ndarray:
    """Sign-normalise a stack in place of the scalar rule (first big entry
    gets argument in (-pi/2, pi/2])."""
    flat = m.reshape(-1, 4)
    big = np.abs(flat) > SIGN_EPS
    first = np.argmax(big, axis=1)
    lead = flat[np.arange(len(flat)), first]
    flip = (lead.real < 0) | ((lead.real == 0) & (lead.imag < 0))
    out = flat.copy()
    out[flip] *= -1
    return out.reshape(-1, 2, 2)


def renormalize_array(m: np.ndarray) -> np.ndarray:
    a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    det = a * d - b * c
    scale = np.maximum(1.0, np.abs(a * d) + np.abs(b * c))
    bad = np.abs(det - 1) > DET_TOL * scale
    if np.any(bad):
        m = m.copy()
        m[bad] /= np.sqrt(det[bad])[:, None, None]
    return m
