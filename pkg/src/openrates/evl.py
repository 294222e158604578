"""Extreme value laws for distance observables via hole hitting times.

For X(x) = h(|x - z*|) with h strictly decreasing, {X > z} is the ball of
radius h^{-1}(z) around z*, so max(X_0..X_{n-1}) <= z exactly when the orbit
avoids that ball for n steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .intervals import StepFunction, as_fraction
from .maps import Hole, IntervalMap
from .montecarlo import first_hits


def _neg(r):
    return -r


@dataclass(frozen=True)
class Observable:
    """X(x) = h(|x - center|); ``h_inv`` maps a level back to a radius."""

    center: object
    h: Callable = _neg
    h_inv: Callable = _neg

    @property
    def z_max(self):
        return self.h(0)

    def __call__(self, x):
        return self.h(abs(x - self.center))

    def radius(self, z):
        """Radius of the level set {X > z}; zero when z >= z_max."""
        if z >= self.z_max:
            return 0
        return self.h_inv(z)

    def level_hole(self, z) -> Hole:
        r = self.radius(z)
        if r <= 0:
            return Hole.empty()
        return Hole.around([self.center], r)


@dataclass(frozen=True)
class LevelSequence:
    t: float
    n: tuple
    z: tuple
    radii: tuple
    masses: tuple

    def scaled_masses(self) -> tuple:
        return tuple(n * float(m) for n, m in zip(self.n, self.masses))


def ball_mass(phi0: StepFunction, center, r):
    """mu0 of [center - r, center + r] intersected with [0, 1]."""
    lo = max(center - r, 0 * r)
    hi = min(center + r, 0 * r + 1)
    if hi <= lo:
        return 0 * r
    return phi0.integral([(lo, hi)])


def solve_radius(phi0: StepFunction, center, target):
    """Radius r with mu0(B(center, r)) = target.

    The ball mass is piecewise linear in r with kinks where center +- r meets
    a density breakpoint or the boundary, so the root is found exactly on the
    bracketing linear piece.
    """
    center = as_fraction(center)
    target = as_fraction(target)
    kinks = sorted({abs(x - center) for x in (*phi0.xs, Fraction(0), Fraction(1))} - {Fraction(0)})
    lo_r, lo_m = Fraction(0), Fraction(0)
    for r in kinks:
        m = ball_mass(phi0, center, r)
        if m >= target:
            if m == lo_m:
                return r
            return lo_r + (r - lo_r) * (target - lo_m) / (m - lo_m)
        lo_r, lo_m = r, m
    raise ValueError(f"t/n = {float(target):.6g} exceeds the mass available around the center")


def levels_for(t: float, n_list: Sequence[int], obs: Observable, phi0: StepFunction) -> LevelSequence:
    """Levels z_n with n * mu0{X > z_n} = t for each n."""
    if t <= 0:
        raise ValueError("t must be positive")
    tf = as_fraction(t)
    zs, radii, masses = [], [], []
    for n in n_list:
        if n < 1:
            raise ValueError("n must be positive")
        r = solve_radius(phi0, obs.center, tf / n)
        radii.append(r)
        masses.append(ball_mass(phi0, as_fraction(obs.center), r))
        zs.append(obs.h(r))
    return LevelSequence(float(t), tuple(n_list), tuple(zs), tuple(radii), tuple(masses))


def levels_for_bisect(t: float, n_list: Sequence[int], obs: Observable, mass: Callable[[float], float],
                      tol: float = 1e-14) -> LevelSequence:
    """Same as ``levels_for`` for an arbitrary monotone ball-mass function, by bisection in r."""
    if t <= 0:
        raise ValueError("t must be positive")
    zs, radii, masses = [], [], []
    r_top = max(float(obs.center), 1 - float(obs.center))
    for n in n_list:
        target = t / n
        if mass(r_top) < target:
            raise ValueError(f"t/n = {target:.6g} exceeds the mass available around the center")
        a, b = 0.0, r_top
        while b - a > 0 and mass(b) - mass(a) > tol:
            c = 0.5 * (a + b)
            if c in (a, b):
                break
            if mass(c) < target:
                a = c
            else:
                b = c
        r = 0.5 * (a + b)
        radii.append(r)
        masses.append(mass(r))
        zs.append(obs.h(r))
    return LevelSequence(float(t), tuple(n_list), tuple(zs), tuple(radii), tuple(masses))


def max_law_predicted(t: float, theta: float) -> float:
    if t <= 0:
        raise ValueError("t must be positive")
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    return math.exp(-t * theta)


@dataclass(frozen=True)
class MaxLawRow:
    n: int
    z: float
    empirical: float
    stderr: float
    predicted: float = float("nan")


def max_law_empirical(imap: IntervalMap, obs: Observable, levels: LevelSequence, samples: int,
                      seed: int, theta: float | None = None, measure_kind: str = "nu0",
                      density: StepFunction | None = None) -> list:
    """Sampled nu0{max(X_0..X_{n-1}) <= z_n} for each level of ``levels``.

    Each level uses its own substream family (seed, level index), so rows do
    not depend on the order in which levels are evaluated. ``measure_kind``
    "mu0" samples starts from the invariant density instead.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    bins = None
    if measure_kind == "mu0" and density is not None and len(set(density.values)) > 1:
        bins = ([float(x) for x in density.xs], [float(v) for v in density.values])
    rows = []
    for k, (n, z, r) in enumerate(zip(levels.n, levels.z, levels.radii)):
        pred = max_law_predicted(levels.t, theta) if theta is not None else float("nan")
        if r <= 0:
            rows.append(MaxLawRow(n, float(z), 1.0, 0.0, pred))
            continue
        hole = Hole.around([as_fraction(obs.center)], as_fraction(r))
        tau = first_hits(imap, hole, n, samples, _level_seed(seed, k), density=bins)
        p = float(np.count_nonzero(tau >= n)) / samples
        rows.append(MaxLawRow(n, float(z), p, math.sqrt(p * (1 - p) / samples), pred))
    return rows


def _level_seed(seed: int, k: int) -> int:
    return (int(seed) * 1_000_003 + k) % 2**64


def theta_from_law(p: float, stderr: float, t: float) -> tuple:
    """theta = -log(p)/t and its delta-method standard error."""
    if not 0 < p <= 1:
        return float("nan"), float("nan")
    return -math.log(p) / t, stderr / (p * t)


def exceedance_matches_hitting(obs: Observable, z, orbit: Sequence) -> bool:
    """Check max(X(x_i)) > z iff some x_i lies in {X > z}, along one orbit."""
    exceed = max(obs(x) for x in orbit) > z
    hole = obs.level_hole(z)
    hit = any(hole.contains(x) for x in orbit)
    return exceed == hit
