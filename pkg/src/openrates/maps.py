"""Piecewise monotone expanding interval maps, holes and periodic returns.

Maps are given by monotone branches on a partition of [0, 1]. Affine
branches with rational data support exact (Fraction) evaluation, which the
Markov-partition and interval-enumeration code paths rely on. Analytic
branches are accepted through ``forward``/``derivative`` callables but only
the float code paths can use them.

At a partition point the map takes the value of the branch to the right
(right-continuous convention); ``x = 1`` belongs to the last branch.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .intervals import as_fraction, merge


class MapError(ValueError):
    """Raised for malformed map data or unsupported map operations."""


class NotMarkovError(MapError):
    pass


@dataclass(frozen=True)
class Branch:
    lo: object
    hi: object
    a: object = None
    b: object = None
    forward: Callable | None = field(default=None, compare=False)
    derivative: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise MapError(f"empty branch domain [{self.lo}, {self.hi})")
        if self.is_affine:
            if abs(self.a) <= 1:
                raise MapError(f"branch on [{self.lo}, {self.hi}) is not expanding (slope {self.a})")
        else:
            if self.forward is None or self.derivative is None:
                raise MapError("non-affine branch needs forward and derivative")
            xs = np.linspace(float(self.lo), float(self.hi), 33)[:-1]
            ds = np.array([self.derivative(x) for x in xs], dtype=float)
            if np.any(np.abs(ds) <= 1):
                raise MapError(f"branch on [{self.lo}, {self.hi}) is not uniformly expanding")
            if not (np.all(ds > 0) or np.all(ds < 0)):
                raise MapError(f"branch on [{self.lo}, {self.hi}) is not monotone")

    @classmethod
    def affine(cls, lo, hi, a, b) -> "Branch":
        return cls(as_fraction(lo), as_fraction(hi), as_fraction(a), as_fraction(b))

    @property
    def is_affine(self) -> bool:
        return self.a is not None

    def __call__(self, x):
        if self.is_affine:
            return self.a * x + self.b
        return self.forward(x)

    def slope(self, x=None):
        if self.is_affine:
            return self.a
        return self.derivative(x)

    def image(self):
        """Closure of the branch image as ``(min, max)``."""
        y0, y1 = self(self.lo), self(self.hi)
        return (y0, y1) if y0 <= y1 else (y1, y0)

    def preimage(self, lo, hi):
        """Points of the branch domain mapped into ``[lo, hi)`` (affine only)."""
        x0 = (lo - self.b) / self.a
        x1 = (hi - self.b) / self.a
        if x0 > x1:
            x0, x1 = x1, x0
        x0, x1 = max(x0, self.lo), min(x1, self.hi)
        return (x0, x1) if x1 > x0 else None


@dataclass(frozen=True)
class IntervalMap:
    branches: tuple
    marked: tuple = ()
    name: str = ""

    def __post_init__(self):
        bs = self.branches
        if not bs:
            raise MapError("map needs at least one branch")
        if bs[0].lo != 0 or bs[-1].hi != 1:
            raise MapError("branches must cover [0, 1]")
        for left, right in zip(bs, bs[1:]):
            if left.hi != right.lo:
                raise MapError(f"branches not contiguous at {left.hi} / {right.lo}")
        for br in bs:
            if br.is_affine:
                y0, y1 = br.image()
                if y0 < 0 or y1 > 1:
                    raise MapError(f"branch on [{br.lo}, {br.hi}) leaves [0, 1]")
        for p in self.marked:
            if not 0 <= p <= 1:
                raise MapError(f"marked point {p} outside [0, 1]")

    @classmethod
    def from_affine(cls, pieces: Iterable[Sequence], marked=(), name="") -> "IntervalMap":
        return cls(tuple(Branch.affine(*p) for p in pieces),
                   tuple(sorted({as_fraction(p) for p in marked})), name)

    @property
    def is_affine(self) -> bool:
        return all(b.is_affine for b in self.branches)

    @property
    def breakpoints(self) -> tuple:
        return tuple(b.lo for b in self.branches[1:])

    @property
    def singular_set(self) -> tuple:
        pts = {0, 1, *self.breakpoints, *self.marked}
        return tuple(sorted(pts))

    @property
    def min_expansion(self) -> float:
        if self.is_affine:
            return float(min(abs(b.a) for b in self.branches))
        return float(min(abs(b.derivative(x)) for b in self.branches
                         for x in np.linspace(float(b.lo), float(b.hi), 65)[:-1]))

    def with_marked(self, points: Iterable) -> "IntervalMap":
        pts = set(self.marked)
        pts.update(as_fraction(p) if self.is_affine else p for p in points)
        return IntervalMap(self.branches, tuple(sorted(pts)), self.name)

    def branch_index(self, x) -> int:
        los = [b.lo for b in self.branches]
        return min(max(bisect_right(los, x) - 1, 0), len(self.branches) - 1)

    def branch_at(self, x) -> Branch:
        return self.branches[self.branch_index(x)]

    def __call__(self, x):
        return eval_map(self, x)

    def affine_arrays(self):
        if not self.is_affine:
            raise MapError("map has non-affine branches")
        return tuple(np.array([float(getattr(b, f)) for b in self.branches])
                     for f in ("lo", "hi", "a", "b"))


def eval_map(imap: IntervalMap, x):
    """T(x), using the right-hand branch at partition points."""
    y = imap.branch_at(x)(x)
    if isinstance(y, float):
        y = min(max(y, 0.0), 1.0)
    return y


def eval_many(imap: IntervalMap, xs: np.ndarray) -> np.ndarray:
    """Vectorized float evaluation for affine maps."""
    lo, _, a, b = imap.affine_arrays()
    idx = np.clip(np.searchsorted(lo, xs, side="right") - 1, 0, len(lo) - 1)
    return np.clip(a[idx] * xs + b[idx], 0.0, 1.0)


def derivative(imap: IntervalMap, x):
    return imap.branch_at(x).slope(x)


def orbit(imap: IntervalMap, x, n: int) -> list:
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = [x]
    for _ in range(n):
        x = eval_map(imap, x)
        out.append(x)
    return out


def detect_period(imap: IntervalMap, x, k_max: int = 32, tol: float = 1e-12):
    """Minimal p <= k_max with |T^p x - x| < tol, else None."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = x
    for p in range(1, k_max + 1):
        y = eval_map(imap, y)
        if abs(y - x) < tol:
            return p
    return None


# --- presets ---------------------------------------------------------------

def doubling() -> IntervalMap:
    return IntervalMap.from_affine([(0, Fraction(1, 2), 2, 0), (Fraction(1, 2), 1, 2, -1)],
                                   name="doubling")


def times_d(d: int) -> IntervalMap:
    """x -> d x mod 1."""
    return IntervalMap.from_affine([(Fraction(k, d), Fraction(k + 1, d), d, -k) for k in range(d)],
                                   name=f"times{d}")


def tent() -> IntervalMap:
    return IntervalMap.from_affine([(0, Fraction(1, 2), 2, 0), (Fraction(1, 2), 1, -2, 2)],
                                   name="tent")


def golden() -> IntervalMap:
    """Two-branch linear Markov map with golden-mean transition graph.

    [0, 1/3) -> [1/3, 1) with slope 2 and [1/3, 1] -> [0, 1] with slope 3/2.
    """
    return IntervalMap.from_affine([(0, Fraction(1, 3), 2, Fraction(1, 3)),
                                    (Fraction(1, 3), 1, Fraction(3, 2), Fraction(-1, 2))],
                                   name="golden")


PRESETS = {"doubling": doubling, "tent": tent, "golden": golden}


def map_from_dict(doc: dict) -> IntervalMap:
    """Build a map from ``{"preset": name}`` or ``{"branches": [{lo, hi, a, b}, ...]}``."""
    marked = doc.get("marked", ())
    if "preset" in doc:
        name = doc["preset"]
        if name.startswith("times") and name[5:].isdigit():
            imap = times_d(int(name[5:]))
        elif name in PRESETS:
            imap = PRESETS[name]()
        else:
            raise MapError(f"unknown preset {name!r}")
        return imap.with_marked(marked) if marked else imap
    if "branches" in doc:
        try:
            pieces = [(b["lo"], b["hi"], b["a"], b["b"]) for b in doc["branches"]]
        except (KeyError, TypeError) as exc:
            raise MapError(f"branch entries need lo, hi, a, b: {exc}") from None
        return IntervalMap.from_affine(pieces, marked, doc.get("name", ""))
    raise MapError("map spec needs 'preset' or 'branches'")


def map_from_json(text: str) -> IntervalMap:
    return map_from_dict(json.loads(text))


# --- holes -------------------------------------------------------------------

@dataclass(frozen=True)
class Hole:
    """Finite union of subintervals of [0, 1].

    Built either as radius-``radius`` neighbourhoods of ``centers`` or directly
    from intervals. Rational inputs give Fraction endpoints.
    """

    intervals: tuple
    centers: tuple = ()
    radius: object = None

    @classmethod
    def around(cls, centers: Iterable, radius) -> "Hole":
        centers = tuple(centers)
        if radius <= 0:
            raise ValueError("radius must be positive")
        exact = not any(isinstance(c, float) for c in (*centers, radius))
        if exact:
            centers = tuple(as_fraction(c) for c in centers)
            radius = as_fraction(radius)
        zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
        ivs = merge((max(c - radius, zero), min(c + radius, one)) for c in centers)
        return cls(tuple(ivs), centers, radius)

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence]) -> "Hole":
        ivs = []
        for lo, hi in intervals:
            if isinstance(lo, float) or isinstance(hi, float):
                ivs.append((max(float(lo), 0.0), min(float(hi), 1.0)))
            else:
                ivs.append((max(as_fraction(lo), Fraction(0)), min(as_fraction(hi), Fraction(1))))
        return cls(tuple(merge(ivs)))

    @classmethod
    def empty(cls) -> "Hole":
        return cls(())

    @property
    def endpoints(self) -> tuple:
        return tuple(p for iv in self.intervals for p in iv)

    @property
    def length(self):
        return sum((hi - lo for lo, hi in self.intervals), 0)

    def contains(self, x) -> bool:
        return any(lo < x < hi or x == lo for lo, hi in self.intervals)

    def is_exact(self) -> bool:
        return all(isinstance(p, Fraction) for p in self.endpoints)


# --- returns to the centre set -------------------------------------------------

@dataclass(frozen=True)
class PiPair:
    x: object
    k: int
    weight: float
    target: object


@dataclass(frozen=True)
class PiSet:
    """Pairs (x, k): x in V returns to V after k + 1 steps, avoiding it before."""

    pairs: tuple
    centers: tuple

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def _close(x, y, tol) -> bool:
    if isinstance(x, Fraction) and isinstance(y, Fraction):
        return x == y
    return abs(x - y) < tol


def pi_set(imap: IntervalMap, centers: Sequence, k_max: int = 32, tol: float = 1e-12) -> PiSet:
    """Enumerate first returns of V to itself within k_max + 1 steps.

    The weight of (x, k) is 1/|(T^{k+1})'(x)|.
    """
    interior = imap.breakpoints
    centers = tuple(centers)
    pairs = []
    for v in centers:
        y, deriv = v, 1
        for j in range(1, k_max + 2):
            if any(_close(y, p, tol) for p in interior):
                raise MapError(f"orbit of {v} hits partition point {y} after {j - 1} steps")
            deriv *= abs(derivative(imap, y))
            y = eval_map(imap, y)
            hit = next((w for w in centers if _close(y, w, tol)), None)
            if hit is not None:
                pairs.append(PiPair(v, j - 1, 1 / deriv if isinstance(deriv, Fraction) else 1.0 / deriv, hit))
                break
    return PiSet(tuple(pairs), centers)


def _side_count(v) -> int:
    return 1 if v == 0 or v == 1 else 2


def theta_analytic(pi: PiSet, density: Callable | None = None) -> float:
    """Extremal index of shrinking neighbourhoods of the centre set.

    Each return pair contributes its weight times the invariant mass near its
    start point, relative to the total mass near V. For a single centre this is
    ``1 - sum(weights)``. ``density`` is the invariant density (default 1);
    boundary centres carry one-sided holes.
    """
    rho = density or (lambda x: 1)
    total = sum(_side_count(v) * rho(v) for v in pi.centers)
    if not pi.centers or total == 0:
        return 1.0
    ret = sum(min(_side_count(p.x), _side_count(p.target)) * rho(p.x) * p.weight for p in pi.pairs)
    theta = 1 - ret / total
    return float(min(max(theta, 0), 1))


def tail_weight_bound(imap: IntervalMap, k_max: int) -> float:
    """Geometric bound on the weight of returns longer than k_max + 1 steps."""
    q = 1.0 / imap.min_expansion
    return q ** (k_max + 2) / (1 - q)


def is_digit_map(imap: IntervalMap):
    """Return d if the map is x -> d x mod 1, else None."""
    if not imap.is_affine:
        return None
    d = len(imap.branches)
    for k, br in enumerate(imap.branches):
        if br.lo != Fraction(k, d) or br.a != d or br.b != -k:
            return None
    return d

