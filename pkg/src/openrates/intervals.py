"""Exact interval and step-function arithmetic over rationals.

Intervals are half-open ``(lo, hi)`` pairs; endpoints only matter up to
Lebesgue-null sets, so no closedness bookkeeping is done.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

Interval = tuple


def as_fraction(x) -> Fraction:
    """Convert ``x`` to a Fraction; floats go through their shortest repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


def merge(intervals: Iterable[Interval]) -> list[Interval]:
    """Sort and merge overlapping or touching intervals, dropping empty ones."""
    ivs = sorted((lo, hi) for lo, hi in intervals if hi > lo)
    out: list[Interval] = []
    for lo, hi in ivs:
        if out and lo <= out[-1][1]:
            if hi > out[-1][1]:
                out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return out


def complement(intervals: Sequence[Interval], lo=0, hi=1) -> list[Interval]:
    out = []
    cur = lo
    for a, b in merge(intervals):
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            continue
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        out.append((cur, hi))
    return out


def intersect(xs: Sequence[Interval], ys: Sequence[Interval]) -> list[Interval]:
    """Intersection of two merged (sorted, disjoint) interval lists."""
    out = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        lo = max(xs[i][0], ys[j][0])
        hi = min(xs[i][1], ys[j][1])
        if hi > lo:
            out.append((lo, hi))
        if xs[i][1] < ys[j][1]:
            i += 1
        else:
            j += 1
    return out


def length(intervals: Iterable[Interval]):
    return sum((hi - lo for lo, hi in intervals), Fraction(0))


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function, zero outside ``[xs[0], xs[-1])``.

    ``values[i]`` is the value on ``[xs[i], xs[i+1])``.
    """

    xs: tuple
    values: tuple

    def __post_init__(self):
        if len(self.xs) != len(self.values) + 1 and not (not self.xs and not self.values):
            raise ValueError("need len(xs) == len(values) + 1")

    @classmethod
    def zero(cls) -> "StepFunction":
        return cls((), ())

    @classmethod
    def constant(cls, value, lo=Fraction(0), hi=Fraction(1)) -> "StepFunction":
        return cls((lo, hi), (value,))

    @classmethod
    def from_pieces(cls, pieces: Iterable[tuple]) -> "StepFunction":
        """Sum possibly overlapping ``(lo, hi, value)`` pieces."""
        events: dict = {}
        for lo, hi, v in pieces:
            if hi <= lo or v == 0:
                continue
            events[lo] = events.get(lo, 0) + v
            events[hi] = events.get(hi, 0) - v
        if not events:
            return cls.zero()
        pts = sorted(events)
        xs = [pts[0]]
        vals = []
        acc = 0
        for p, q in zip(pts, pts[1:]):
            acc += events[p]
            if vals and vals[-1] == acc:
                xs[-1] = q
            else:
                vals.append(acc)
                xs.append(q)
        # trim zero tails
        while vals and vals[0] == 0:
            vals.pop(0)
            xs.pop(0)
        while vals and vals[-1] == 0:
            vals.pop()
            xs.pop()
        return cls(tuple(xs), tuple(vals))

    def pieces(self):
        return zip(self.xs, self.xs[1:], self.values)

    def __call__(self, x):
        if not self.xs or x < self.xs[0] or x >= self.xs[-1]:
            # right endpoint belongs to the last piece
            if self.xs and x == self.xs[-1]:
                return self.values[-1]
            return 0
        return self.values[bisect_right(self.xs, x) - 1]

    def integral(self, over: Sequence[Interval] | None = None):
        """Integral over ``[0, 1]`` or over a merged list of intervals."""
        if over is None:
            return sum(((b - a) * v for a, b, v in self.pieces()), Fraction(0))
        total = Fraction(0)
        for lo, hi in over:
            i = max(bisect_right(self.xs, lo) - 1, 0)
            k = min(bisect_left(self.xs, hi), len(self.values))
            for a, b, v in zip(self.xs[i:k], self.xs[i + 1:k + 1], self.values[i:k]):
                w = min(b, hi) - max(a, lo)
                if w > 0:
                    total += w * v
        return total

    def restrict(self, intervals: Sequence[Interval]) -> "StepFunction":
        """Multiply by the indicator of ``intervals``."""
        pieces = []
        for a, b, v in self.pieces():
            for lo, hi in intervals:
                if hi <= a:
                    continue
                if lo >= b:
                    break
                pieces.append((max(a, lo), min(b, hi), v))
        return StepFunction.from_pieces(pieces)

    def scale(self, c) -> "StepFunction":
        return StepFunction(self.xs, tuple(v * c for v in self.values)) if c else StepFunction.zero()

    def sup(self, intervals: Sequence[Interval] | None = None):
        if intervals is None:
            return max(self.values, default=0)
        vals = [v for a, b, v in self.pieces() for lo, hi in intervals if min(b, hi) > max(a, lo)]
        return max(vals, default=0)

    def inf(self, intervals: Sequence[Interval]):
        vals = []
        for lo, hi in intervals:
            covered = Fraction(0)
            for a, b, v in self.pieces():
                w = min(b, hi) - max(a, lo)
                if w > 0:
                    vals.append(v)
                    covered += w
            if covered < hi - lo:
                vals.append(0)
        return min(vals, default=0)
