"""Finitely generated matrix groups: presentations, builtins and group files.

A group file is JSON::

    {"generators": [{"label": "a", "a": [re, im], "b": [..], "c": [..], "d": [..]}],
     "hom": {"a": [1, 0], "b": [0, 1]}}

Generators are closed under inversion on load; an inverse inherits the
negated ``hom`` vector. Optional keys: ``inj_radius`` (a lower bound used by
the packing tail estimate at j) and ``free`` (the listed generators are known
to generate a free group, so reduced words need no deduplication).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hyperbolic import Isometry, compose, inverse

# below this translation length the two builtin Schottky generators stop
# playing ping-pong (isometric disks of radius e^{-l/2} around 0 must stay
# inside the disk |z| < sqrt(2) - 1)
SCHOTTKY_MIN_LENGTH = 2 * math.log(1 + math.sqrt(2))


@dataclass(frozen=True)
class Generator:
    label: str
    g: Isometry
    hom: tuple[int, ...] | None = None


@dataclass(frozen=True)
class GroupPresentation:
    generators: tuple[Generator, ...]
    inverse_of: tuple[int, ...]
    name: str = "group"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def has_hom(self) -> bool:
        return bool(self.generators) and all(s.hom is not None for s in self.generators)

    @property
    def hom_rank(self) -> int:
        return len(self.generators[0].hom) if self.has_hom else 0

    def matrices(self) -> np.ndarray:
        return np.array([s.g.matrix() for s in self.generators], dtype=complex).reshape(-1, 2, 2)

    def labels(self) -> list[str]:
        return [s.label for s in self.generators]

    def permuted(self, order) -> "GroupPresentation":
        """Same group with the generator list reordered (inverses follow)."""
        order = list(order)
        pos = {old: new for new, old in enumerate(order)}
        gens = tuple(self.generators[i] for i in order)
        inv = tuple(pos[self.inverse_of[i]] for i in order)
        return GroupPresentation(gens, inv, self.name, self.meta)

    def with_hom(self, hom: dict[str, list[int]]) -> "GroupPresentation":
        gens = list(self.generators)
        for i, s in enumerate(gens):
            j = self.inverse_of[i]
            if s.label in hom:
                vec = tuple(int(v) for v in hom[s.label])
            elif gens[j].label in hom:
                vec = tuple(-int(v) for v in hom[gens[j].label])
            else:
                raise ValueError(f"hom has no value for generator {s.label!r}")
            gens[i] = Generator(s.label, s.g, vec)
        return GroupPresentation(tuple(gens), self.inverse_of, self.name, self.meta)


def _inverse_label(label: str) -> str:
    if len(label) == 1 and label.isalpha():
        return label.swapcase()
    return label + "^-1"


def _same(g: Isometry, h: Isometry, tol: float = 1e-9) -> bool:
    scale = max(1.0, float(np.linalg.norm(g.matrix())))
    return float(np.max(np.abs(g.matrix() - h.matrix()))) <= tol * scale


def presentation(gens, labels=None, hom=None, inverse_closed=False, name="group"):
    """Build an inverse-closed presentation from a list of isometries.

    With ``inverse_closed=False`` each generator's inverse is appended right
    after it. With ``inverse_closed=True`` the list must already contain
    every inverse, which is checked.
    """
    gens = list(gens)
    labels = list(labels) if labels is not None else [f"g{i}" for i in range(len(gens))]
    if len(labels) != len(gens):
        raise ValueError("one label per generator")
    if len(set(labels)) != len(labels):
        raise ValueError("generator labels must be unique")
    out: list[Generator] = []
    inv: list[int] = []
    if inverse_closed:
        out = [Generator(lab, g) for lab, g in zip(labels, gens)]
        for i, g in enumerate(gens):
            gi = inverse(g)
            match = [j for j, h in enumerate(gens) if _same(gi, h)]
            if not match:
                raise ValueError(f"generator {labels[i]!r} has no inverse in the list")
            inv.append(match[0])
    else:
        for lab, g in zip(labels, gens):
            k = len(out)
            out.append(Generator(lab, g))
            out.append(Generator(_inverse_label(lab), inverse(g)))
            inv.extend([k + 1, k])
    p = GroupPresentation(tuple(out), tuple(inv), name)
    if hom is not None:
        p = p.with_hom(hom)
    return p


# --- builtins ----------------------------------------------------------------


def trivial_group() -> GroupPresentation:
    return GroupPresentation((), (), "trivial", {"inj_radius": math.inf, "free": True})


def cyclic_group(length: float = 1.0) -> GroupPresentation:
    """Cyclic group of a pure translation of ``length`` along the 0-inf axis."""
    if length <= 0:
        raise ValueError("translation length must be positive")
    p = presentation([Isometry.loxodromic(length)], ["a"], name=f"cyclic:{length:g}")
    return GroupPresentation(p.generators, p.inverse_of, p.name, {"inj_radius": length / 2, "free": True})


def schottky_group(length: float = 3.0) -> GroupPresentation:
    """Rank-2 Schottky group with perpendicular axes through j = (0,0,1).

    ``a`` translates by ``length`` along 0 -> inf; ``b`` is ``a`` conjugated
    by the elliptic rotation sending that axis to the geodesic -1 -> 1.
    """
    if length <= SCHOTTKY_MIN_LENGTH:
        raise ValueError(
            f"translation length must exceed {SCHOTTKY_MIN_LENGTH:.4f} for ping-pong"
        )
    a = Isometry.loxodromic(length)
    r = 1 / math.sqrt(2)
    k = Isometry(r, -r, r, r)
    b = compose(k, compose(a, inverse(k)))
    p = presentation([a, b], ["a", "b"], name=f"schottky:{length:g}")
    # both axes pass through j, so j is moved by exactly `length` by each
    # generator; the minimal displacement over the group is attained by them
    return GroupPresentation(p.generators, p.inverse_of, p.name, {"inj_radius": length / 2, "free": True})


def parabolic_group(tau: float = 1.0) -> GroupPresentation:
    """Cyclic parabolic group z -> z + tau. Orbit counts grow like e^{rho/2}."""
    p = presentation([Isometry.parabolic(tau)], ["a"], name=f"parabolic:{tau:g}")
    inj = math.asinh(abs(tau) / 2)  # half of d(j, j + tau)
    return GroupPresentation(p.generators, p.inverse_of, p.name, {"inj_radius": inj, "free": True})


BUILTINS = {
    "trivial": trivial_group,
    "cyclic": cyclic_group,
    "schottky": schottky_group,
    "parabolic": parabolic_group,
}


def builtin(spec: str) -> GroupPresentation:
    """Parse ``name`` or ``name:param``, e.g. ``cyclic:1.0``."""
    name, _, arg = spec.partition(":")
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin group {name!r}")
    if name == "trivial":
        if arg:
            raise ValueError("trivial group takes no parameter")
        return trivial_group()
    return BUILTINS[name](float(arg)) if arg else BUILTINS[name]()


# --- group files ---------------------------------------------------------------


def _cx(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    re, im = v
    return complex(float(re), float(im))


def load_group(path) -> GroupPresentation:
    data = json.loads(Path(path).read_text())
    return group_from_dict(data, name=Path(path).stem)


def group_from_dict(data: dict, name: str = "group") -> GroupPresentation:
    try:
        entries = data["generators"]
    except (KeyError, TypeError) as exc:
        raise ValueError("group file needs a 'generators' list") from exc
    if not isinstance(entries, list):
        raise ValueError("'generators' must be a list")
    if not entries:
        return GroupPresentation((), (), name, {"inj_radius": math.inf, "free": True})
    gens, labels = [], []
    for e in entries:
        labels.append(str(e["label"]))
        gens.append(Isometry(_cx(e["a"]), _cx(e["b"]), _cx(e["c"]), _cx(e["d"])))
    closed = bool(data.get("inverse_closed", False))
    p = presentation(gens, labels, hom=data.get("hom"), inverse_closed=closed, name=name)
    meta = {}
    if "inj_radius" in data:
        meta["inj_radius"] = float(data["inj_radius"])
    if data.get("free"):
        meta["free"] = True
    return GroupPresentation(p.generators, p.inverse_of, p.name, meta)


def group_to_dict(p: GroupPresentation) -> dict:
    """Serialise the listed generators (inverses included, flagged closed)."""
    gens = []
    for s in p.generators:
        gens.append({
            "label": s.label,
            **{k: [getattr(s.g, k).real, getattr(s.g, k).imag] for k in "abcd"},
        })
    out = {"generators": gens, "inverse_closed": True}
    if p.has_hom:
        out["hom"] = {s.label: list(s.hom) for s in p.generators}
    for key in ("inj_radius", "free"):
        if key in p.meta and not (key == "inj_radius" and math.isinf(p.meta[key])):
            out[key] = p.meta[key]
    return out


def resolve_group(spec: str) -> GroupPresentation:
    """A builtin spec or a path to a JSON group file."""
    name = spec.partition(":")[0]
    if name in BUILTINS:
        return builtin(spec)
    return load_group(spec)
