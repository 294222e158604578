"""Monte Carlo first-hitting times.

Every sample draws from its own splitmix64 stream derived from ``(seed,
sample index)``, so results do not depend on how samples are chunked.

Two engines:

* ``digits`` for x -> d x mod 1: a uniform point is a stream of iid base-d
  digits and the map is a shift, so orbits of any length are exact. Hole
  membership is decided on a sliding window of the next K digits
  (d^K < 2^63); cells straddling a hole endpoint count as misses, an error
  of at most 2 d^-K per step.
* ``float`` for general affine maps, iterated in float64. Maps with dyadic
  data (doubling, tent) collapse to 0 in float64 after ~55 steps, so those
  should go through ``digits``.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from numba import njit

from .intervals import as_fraction
from .maps import Hole, IntervalMap, is_digit_map

@njit(cache=True)
def _splitmix(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True)
def _stream_start(seed, index):
    # hash (seed, index) to a pseudo-random point of the Weyl sequence; using
    # the raw state would make neighbouring samples share shifted streams
    _, z = _splitmix(np.uint64(seed))
    _, z = _splitmix(z ^ (np.uint64(index) * np.uint64(0xD1B54A32D192ED03)))
    return z


@njit(cache=True)
def _in_cells(w, lo, hi):
    for k in range(lo.shape[0]):
        if lo[k] <= w and w <= hi[k]:
            return True
    return False


@njit(cache=True)
def _binary_hits(seed, start, count, n_max, K, lo, hi):
    out = np.empty(count, dtype=np.int64)
    mask = (np.int64(1) << K) - 1
    single = lo.shape[0] == 1
    lo0 = np.int64(lo[0]) if lo.shape[0] > 0 else np.int64(1)
    hi0 = np.int64(hi[0]) if lo.shape[0] > 0 else np.int64(0)
    slo = lo.astype(np.int64)
    shi = hi.astype(np.int64)
    for s in range(count):
        state = _stream_start(seed, start + s)
        state, bits = _splitmix(state)
        w = np.int64(bits >> np.uint64(2)) & mask
        tau = n_max
        i = 0
        while i < n_max and tau == n_max:
            state, bits = _splitmix(state)
            r = np.int64(bits >> np.uint64(1))
            for _ in range(63):
                if single:
                    if lo0 <= w and w <= hi0:
                        tau = i
                        break
                else:
                    hit = False
                    for k in range(slo.shape[0]):
                        if slo[k] <= w and w <= shi[k]:
                            hit = True
                    if hit:
                        tau = i
                        break
                i += 1
                if i >= n_max:
                    break
                w = ((w << 1) & mask) | (r & 1)
                r >>= 1
        out[s] = tau
    return out


@njit(cache=True)
def _digit_hits(seed, start, count, n_max, d, K, lo, hi):
    out = np.empty(count, dtype=np.int64)
    top = np.uint64(1)
    for _ in range(K - 1):
        top *= np.uint64(d)
    ud = np.uint64(d)
    for s in range(count):
        state = _stream_start(seed, start + s)
        w = np.uint64(0)
        for _ in range(K):
            state, r = _splitmix(state)
            w = w * ud + (r % ud)
        tau = n_max
        for i in range(n_max):
            if _in_cells(w, lo, hi):
                tau = i
                break
            state, r = _splitmix(state)
            w = (w % top) * ud + (r % ud)
        out[s] = tau
    return out


@njit(cache=True)
def _float_hits(seed, start, count, n_max, blo, ba, bb, hlo, hhi, cdf, edges):
    out = np.empty(count, dtype=np.int64)
    nb = blo.shape[0]
    for s in range(count):
        state = _stream_start(seed, start + s)
        state, r = _splitmix(state)
        u = (r >> np.uint64(11)) * (1.0 / 9007199254740992.0)
        if cdf.shape[0] > 0:
            j = np.searchsorted(cdf, u, side="right")
            if j >= cdf.shape[0]:
                j = cdf.shape[0] - 1
            state, r = _splitmix(state)
            v = (r >> np.uint64(11)) * (1.0 / 9007199254740992.0)
            x = edges[j] + v * (edges[j + 1] - edges[j])
        else:
            x = u
        tau = n_max
        for i in range(n_max):
            hit = False
            for k in range(hlo.shape[0]):
                if hlo[k] < x and x < hhi[k]:
                    hit = True
            if hit:
                tau = i
                break
            b = np.searchsorted(blo, x, side="right") - 1
            if b < 0:
                b = 0
            if b >= nb:
                b = nb - 1
            x = ba[b] * x + bb[b]
            if x < 0.0:
                x = 0.0
            if x > 1.0:
                x = 1.0
        out[s] = tau
    return out


def _cell_bounds(hole: Hole, d: int, K: int):
    D = d ** K
    lo, hi = [], []
    for a, b in hole.intervals:
        a, b = as_fraction(a), as_fraction(b)
        lo_i = math.ceil(a * D)
        hi_i = math.floor(b * D) - 1
        if hi_i >= lo_i:
            lo.append(lo_i)
            hi.append(hi_i)
    return np.array(lo, dtype=np.uint64), np.array(hi, dtype=np.uint64)


def window_digits(d: int) -> int:
    K = 1
    while d ** (K + 1) < 2**63:
        K += 1
    return K


def first_hits(imap: IntervalMap, hole: Hole, n_max: int, samples: int, seed: int,
               start: int = 0, engine: str = "auto", density=None, chunk: int = 1 << 16) -> np.ndarray:
    """First-hitting times of ``samples`` random orbits, capped at ``n_max``.

    ``density`` is an optional ``(edges, values)`` bin density for the initial
    law (float engine only); by default points are Lebesgue-uniform.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    d = is_digit_map(imap)
    if engine == "auto":
        engine = "digits" if d is not None and density is None else "float"
    seed = int(seed) % 2**64
    parts = []
    if engine == "digits":
        if d is None:
            raise ValueError("digits engine needs a map of the form x -> d x mod 1")
        K = window_digits(d)
        lo, hi = _cell_bounds(hole, d, K)
        for s0 in range(0, samples, chunk):
            c = min(chunk, samples - s0)
            if d == 2:
                parts.append(_binary_hits(np.uint64(seed), start + s0, c, n_max, K, lo, hi))
            else:
                parts.append(_digit_hits(np.uint64(seed), start + s0, c, n_max, d, K, lo, hi))
    elif engine == "float":
        blo, _, ba, bb = imap.affine_arrays()
        hlo = np.array([float(a) for a, _ in hole.intervals])
        hhi = np.array([float(b) for _, b in hole.intervals])
        if density is None:
            cdf, edges = np.zeros(0), np.zeros(0)
        else:
            edges, vals = (np.asarray(x, dtype=float) for x in density)
            mass = vals * np.diff(edges)
            cdf = np.cumsum(mass) / mass.sum()
        for s0 in range(0, samples, chunk):
            c = min(chunk, samples - s0)
            parts.append(_float_hits(np.uint64(seed), start + s0, c, n_max, blo, ba, bb,
                                     hlo, hhi, cdf, edges))
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def survival_from_hits(tau: np.ndarray, n_max: int) -> np.ndarray:
    """s(n) = fraction of samples with tau >= n, n = 0..n_max."""
    counts = np.bincount(np.minimum(tau, n_max), minlength=n_max + 1)
    hit_before = np.concatenate([[0], np.cumsum(counts[:n_max])])
    return 1.0 - hit_before / len(tau)


def digit_orbit(imap: IntervalMap, n: int, seed: int, index: int = 0) -> list:
    """Orbit T^i x, i = 0..n, of one digits-engine sample as the engine sees it.

    Each point is the K-digit window as an exact Fraction, reproducing the
    kernel's random stream in pure Python.
    """
    d = is_digit_map(imap)
    if d is None:
        raise ValueError("map is not of the form x -> d x mod 1")
    K = window_digits(d)
    state = int(_stream_start(np.uint64(seed % 2**64), index))
    digits = []
    if d == 2:
        state, bits = _py_splitmix(state)
        digits = [(bits >> 2 >> (K - 1 - j)) & 1 for j in range(K)]
        while len(digits) < n + K:
            state, bits = _py_splitmix(state)
            r = bits >> 1
            digits.extend((r >> j) & 1 for j in range(63))
    else:
        while len(digits) < n + K:
            state, r = _py_splitmix(state)
            digits.append(r % d)
    out = []
    for i in range(n + 1):
        w = 0
        for dig in digits[i:i + K]:
            w = w * d + dig
        out.append(Fraction(w, d ** K))
    return out


def _py_splitmix(state: int):
    m = 2**64 - 1
    state = (state + 0x9E3779B97F4A7C15) & m
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & m
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & m
    return state, z ^ (z >> 31)
