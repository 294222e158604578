"""Return-time series, truncated extremal indices and their small-hole limit."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .intervals import StepFunction, complement
from .maps import Hole, IntervalMap, NotMarkovError
from .transfer import (TransferMatrix, UlamGrid, assemble_markov_exact, assemble_ulam,
                       density_on_grid, hole_coverage, invariant_density_exact, leading_triple,
                       open_operator, transfer_step)

log = logging.getLogger(__name__)


class UndefinedSeriesError(ValueError):
    """The hole carries no invariant mass, so return probabilities are undefined."""


@dataclass(frozen=True)
class QSeries:
    epsilon: object
    q: tuple
    delta: float
    eta: float
    method: str

    @property
    def partial_sum(self) -> float:
        return float(sum(self.q))


@dataclass(frozen=True)
class ExtremalIndexEstimate:
    theta_N_eps: tuple
    theta_extrapolated: float
    epsilons: tuple
    N: int
    diagnostics: tuple
    deltas: tuple = ()
    lambdas: tuple = ()
    kac_partial_sums: tuple = ()
    diag_extrapolated: float = float("nan")
    order: float = 1.0
    fit_residual: float = 0.0
    gaps: tuple = ()
    rows: tuple = field(default=(), repr=False)


def mu0_hole(phi0: np.ndarray, hole: Hole, grid: UlamGrid) -> float:
    """Invariant mass of the hole, prorating partially covered bins."""
    return float(np.sum(phi0 * grid.widths * hole_coverage(grid, hole)))


def eta_proxy(delta: float, phi0: np.ndarray, hole: Hole, grid: UlamGrid) -> float:
    """delta * sup over the hole of 1/phi0."""
    cov = hole_coverage(grid, hole) > 0
    if not cov.any():
        return 0.0
    inf_phi = float(phi0[cov].min())
    return delta / inf_phi if inf_phi > 0 else float("inf")


def q_series_matrix(closed: TransferMatrix, opened: TransferMatrix, phi0: np.ndarray, N: int,
                    epsilon=None) -> QSeries:
    """q_k = nu0(1_A P_eps^k P_0(1_A phi0)) / Delta on a grid."""
    h = closed.grid.widths
    cov = hole_coverage(closed.grid, opened.hole)
    delta = float(h @ (cov * phi0))
    if delta <= 0:
        raise UndefinedSeriesError("hole has zero invariant mass")
    w = h * cov
    v = closed.matrix @ (cov * phi0)
    q = []
    for _ in range(N):
        q.append(float(w @ v) / delta)
        v = opened.matrix @ v
    return QSeries(epsilon, tuple(q), delta, eta_proxy(delta, phi0, opened.hole, closed.grid), "matrix")


def q_series_exact(imap: IntervalMap, hole: Hole, N: int, density: StepFunction | None = None,
                   epsilon=None) -> tuple:
    """Exact rational q_k by pushing the restricted density forward interval by interval.

    Returns ``(q, delta)`` as Fractions. Breakpoints only come from forward
    images of the hole endpoints and branch ends, so the work stays polynomial
    in N for rational affine maps.
    """
    if not hole.is_exact():
        raise ValueError("exact enumeration needs rational hole endpoints")
    rho = density if density is not None else invariant_density_exact(imap)
    A = list(hole.intervals)
    Ac = complement(A, Fraction(0), Fraction(1))
    f = rho.restrict(A)
    delta = f.integral()
    if delta == 0:
        raise UndefinedSeriesError("hole has zero invariant mass")
    g = transfer_step(imap, f)
    q = []
    for _ in range(N):
        q.append(g.integral(A) / delta)
        g = transfer_step(imap, g.restrict(Ac))
    return tuple(q), delta


def q_k_series(imap: IntervalMap, hole: Hole, N: int, phi0=None, method: str = "exact",
               grid: UlamGrid | None = None) -> QSeries:
    """Return-probability series q_0..q_{N-1} of the hole.

    ``method="exact"`` enumerates intervals in rational arithmetic; ``phi0``
    may then be an exact StepFunction density. ``method="matrix"`` uses the
    Markov partition refined by the hole endpoints, or ``grid`` if given.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    eps = hole.radius
    if method == "exact":
        density = phi0 if isinstance(phi0, StepFunction) else None
        q, delta = q_series_exact(imap, hole, N, density)
        rho = density or invariant_density_exact(imap)
        inf_phi = rho.inf(list(hole.intervals))
        eta = float(delta / inf_phi) if inf_phi > 0 else float("inf")
        return QSeries(eps, tuple(float(x) for x in q), float(delta), eta, "exact")
    if method != "matrix":
        raise ValueError(f"unknown method {method!r}")
    closed, opened, phi = operators_for(imap, hole, grid)
    if phi0 is not None and not isinstance(phi0, StepFunction):
        phi = np.asarray(phi0, dtype=float)
    s = q_series_matrix(closed, opened, phi, N, eps)
    return s


def operators_for(imap: IntervalMap, hole: Hole, grid: UlamGrid | None = None,
                  max_cells: int = 20000):
    """Closed operator, open operator and invariant density for a (map, hole) pair.

    Without a grid the Markov partition refined by the hole endpoints is used;
    if that is not finite, a uniform 4096-bin Ulam grid.
    """
    if grid is None:
        try:
            closed = assemble_markov_exact(imap.with_marked(hole.endpoints), max_cells=max_cells)
        except NotMarkovError:
            log.info("no finite Markov partition, falling back to a uniform Ulam grid")
            closed = assemble_ulam(imap, UlamGrid.uniform(4096))
    else:
        closed = assemble_ulam(imap, grid)
    phi0 = closed_density(closed, imap)
    return closed, open_operator(closed, hole), phi0


def closed_density(closed: TransferMatrix, imap: IntervalMap | None = None) -> np.ndarray:
    if closed.exact is not None and imap is not None:
        try:
            return density_on_grid(invariant_density_exact(imap), closed.grid)
        except Exception:  # fall back to the numerical eigenvector
            pass
    return leading_triple(closed).phi


def theta_truncated(lambda_eps: float, qs: QSeries | Sequence[float], N: int) -> float:
    """1 - sum_{k<N} lambda^{-k} q_k."""
    q = qs.q if isinstance(qs, QSeries) else tuple(qs)
    if N > len(q):
        raise ValueError(f"need {N} terms, series has {len(q)}")
    if not 0 < lambda_eps <= 1:
        raise ValueError("lambda_eps must lie in (0, 1]")
    return 1.0 - sum(lambda_eps ** (-k) * q[k] for k in range(N))


def eigenvalue_prediction(theta: float, delta: float) -> float:
    return math.exp(-theta * delta)


def select_N(eta: float, gap: float, n_min: int = 1, n_max: int = 10**4) -> int:
    """N(eps) = ceil(log eta / log(1 - gap))."""
    if eta <= 0 or not 0 < gap < 1:
        return n_min
    return int(min(max(math.ceil(math.log(eta) / math.log(1 - gap)), n_min), n_max))


def richardson(eps: Sequence[float], values: Sequence[float], order: float | None = None):
    """Extrapolate ``values(eps)`` to eps = 0 assuming ``v = L + c eps^p``.

    The order p is estimated from the last three points when not given
    (falling back to 1 when the estimate is not in [0.25, 4]); L and c are
    then fitted by least squares on the last three points. Returns
    ``(L, p, residual)``.
    """
    e = np.asarray(eps, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(e) < 2:
        return float(v[-1]), float("nan"), float("nan")
    p = order
    if p is None:
        p = 1.0
        if len(e) >= 3:
            d1, d2 = v[-3] - v[-2], v[-2] - v[-1]
            r1, r2 = e[-3] / e[-2], e[-2] / e[-1]
            if d1 != 0 and d2 != 0 and d1 * d2 > 0 and abs(r1 - r2) < 1e-9 * r1:
                est = math.log(abs(d1 / d2)) / math.log(r1)
                if 0.25 <= est <= 4:
                    p = est
    k = min(3, len(e))
    X = np.column_stack([np.ones(k), e[-k:] ** p])
    coef, *_ = np.linalg.lstsq(X, v[-k:], rcond=None)
    resid = float(np.abs(X @ coef - v[-k:]).max())
    return float(coef[0]), float(p), resid


def sweep_point(imap: IntervalMap, centers: Sequence, eps, N: int, grid: UlamGrid | None = None) -> dict:
    """Everything the extremal-index sweep records for one hole size."""
    return hole_point(imap, Hole.around(centers, eps), N, grid)


def hole_point(imap: IntervalMap, hole: Hole, N: int, grid: UlamGrid | None = None) -> dict:
    """Eigenvalue, hole mass, truncated index and diagnostics for one hole."""
    eps = float(hole.radius) if hole.radius is not None else float("nan")
    closed, opened, phi0 = operators_for(imap, hole, grid)
    h = closed.grid.widths
    delta = mu0_hole(phi0, hole, closed.grid)
    if delta <= 0:
        return {"epsilon": eps, "delta": 0.0, "lambda": 1.0, "theta_N_eps": float("nan"),
                "diag": float("nan"), "kac_partial_sum": float("nan"), "gap": float("nan"),
                "eta": 0.0, "cells": int(h.size), "flag": "zero-mass hole"}
    triple = leading_triple(opened)
    qs = q_series_matrix(closed, opened, phi0, N, eps)
    lam = triple.lam
    return {"epsilon": eps, "delta": delta, "lambda": lam,
            "theta_N_eps": theta_truncated(lam, qs, N) if lam > 0 else float("nan"),
            "diag": (1 - lam) / delta, "kac_partial_sum": qs.partial_sum,
            "gap": triple.gap, "eta": qs.eta, "cells": int(h.size), "flag": ""}


def theta_limit(imap: IntervalMap, centers: Sequence, eps_list: Sequence, N: int = 40,
                grid: UlamGrid | None = None, jobs: int = 1) -> ExtremalIndexEstimate:
    """Truncated extremal indices along a decreasing eps sweep, extrapolated to eps = 0."""
    eps_list = list(eps_list)
    if len(eps_list) < 3:
        raise ValueError("need at least three hole sizes")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(sweep_point, *zip(*[(imap, tuple(centers), e, N, grid) for e in eps_list])))
    else:
        rows = [sweep_point(imap, centers, e, N, grid) for e in eps_list]
    if any(r["delta"] <= 0 for r in rows):
        raise UndefinedSeriesError("a hole in the sweep has zero invariant mass")
    eps_f = [r["epsilon"] for r in rows]
    th = [r["theta_N_eps"] for r in rows]
    diag = [r["diag"] for r in rows]
    theta_hat, p, resid = richardson(eps_f, th)
    diag_hat, _, _ = richardson(eps_f, diag)
    gaps = [abs(d - t) for d, t in zip(diag, th)]
    if any(b > a * 1.05 + 1e-12 for a, b in zip(gaps, gaps[1:])):
        warnings.warn("|diag - theta_N_eps| is not decreasing along the sweep; "
                      "N may be too small or the grid too coarse", RuntimeWarning, stacklevel=2)
    return ExtremalIndexEstimate(
        theta_N_eps=tuple(th), theta_extrapolated=theta_hat, epsilons=tuple(eps_f), N=N,
        diagnostics=tuple(diag), deltas=tuple(r["delta"] for r in rows),
        lambdas=tuple(r["lambda"] for r in rows),
        kac_partial_sums=tuple(r["kac_partial_sum"] for r in rows),
        diag_extrapolated=diag_hat, order=p, fit_residual=resid,
        gaps=tuple(r["gap"] for r in rows), rows=tuple(rows))
