"""Survival curves nu{tau >= n} by interval pullback, operator powers, spectral data and sampling."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .intervals import StepFunction, as_fraction, complement, merge
from .maps import Hole, IntervalMap
from .montecarlo import first_hits, survival_from_hits
from .transfer import SpectralTriple, TransferMatrix, invariant_density_exact

log = logging.getLogger(__name__)

MEASURES = ("nu0", "mu0")


@dataclass(frozen=True)
class SurvivalCurve:
    """s(n) = measure{tau >= n} for n = 0..len(values)-1.

    ``truncated_at`` is set when an exact computation stopped early; values
    then end at that index. ``stderr`` holds binomial standard errors for
    sampled curves.
    """

    measure_kind: str
    values: np.ndarray
    epsilon: float = float("nan")
    method: str = ""
    truncated_at: int | None = None
    stderr: np.ndarray | None = field(default=None, repr=False)
    exact_values: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.measure_kind not in MEASURES:
            raise ValueError(f"measure_kind must be one of {MEASURES}")

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, n):
        return self.values[n]


@dataclass(frozen=True)
class ScalingReport:
    xi_eps: float
    delta_eps: float
    error_curve: tuple  # (t, n, observed error, bound shape)
    C_hat: float
    hole_mass: float
    small_n: tuple = ()
    omitted: tuple = ()

    def rows(self):
        for (t, n, err, shape), small in zip(self.error_curve, self.small_n):
            yield {"t": t, "n": n, "error": err, "bound": shape, "small_n": small}


# --- exact pullback oracle ---------------------------------------------------------

def _pullback(imap: IntervalMap, intervals: list) -> list:
    out = []
    for br in imap.branches:
        for lo, hi in intervals:
            pre = br.preimage(lo, hi)
            if pre is not None:
                out.append(pre)
    return merge(out)


def _clip(intervals: list, keep: list) -> list:
    out = []
    for lo, hi in intervals:
        for a, b in keep:
            x, y = max(lo, a), min(hi, b)
            if y > x:
                out.append((x, y))
    return merge(out)


def survival_exact(imap: IntervalMap, hole: Hole, n_max: int, measure_kind: str = "nu0",
                   density: StepFunction | None = None, cap: int = 200_000) -> SurvivalCurve:
    """Exact survival by pulling back the surviving set one step at a time.

    S_0 = [0, 1] and S_{n+1} = A^c intersected with T^{-1} S_n, so s(n) is the
    measure of S_n. Measures use Lebesgue (nu0) or the invariant density (mu0).
    If S_n needs more than ``cap`` intervals the curve stops there and
    ``truncated_at`` records n.
    """
    if not (imap.is_affine and hole.is_exact()):
        raise ValueError("exact survival needs an affine map and rational hole")
    if measure_kind == "mu0":
        rho = density if density is not None else invariant_density_exact(imap)
        measure = rho.integral
    elif measure_kind == "nu0":
        def measure(ivs):
            return sum((b - a for a, b in ivs), Fraction(0))
    else:
        raise ValueError(f"unknown measure {measure_kind!r}")
    keep = complement(list(hole.intervals), Fraction(0), Fraction(1))
    S = [(Fraction(0), Fraction(1))]
    vals = []
    truncated = None
    for n in range(n_max + 1):
        vals.append(measure(S) if S else Fraction(0))
        if n == n_max:
            break
        S = _clip(_pullback(imap, S), keep)
        if len(S) > cap:
            truncated = n + 1
            log.warning("surviving set needs %d intervals at n=%d; truncating", len(S), n + 1)
            break
    return SurvivalCurve(measure_kind, np.array([float(v) for v in vals]),
                         float(hole.radius) if hole.radius is not None else float("nan"),
                         "exact", truncated, None, tuple(vals))


# --- operator and spectral curves --------------------------------------------------

def survival_operator(M_eps: TransferMatrix, init_density: np.ndarray, n_max: int,
                      measure_kind: str = "nu0", exact: bool = False) -> SurvivalCurve:
    """s(n) = nu0(M^n f) by repeated products.

    With ``exact=True`` and rational matrix entries the products run in
    Fractions (``init_density`` must then hold rationals).
    """
    widths = M_eps.grid.widths
    if exact:
        if M_eps.exact is None or M_eps.grid.exact is None:
            raise ValueError("matrix has no exact entries")
        ex = M_eps.grid.exact
        w = [ex[i + 1] - ex[i] for i in range(M_eps.m)]
        f = [as_fraction(v) for v in init_density]
        cols: dict = {}
        for (i, j), v in M_eps.exact.items():
            cols.setdefault(i, []).append((j, v))
        vals = []
        for n in range(n_max + 1):
            vals.append(sum((a * b for a, b in zip(w, f)), Fraction(0)))
            if n < n_max:
                f = [sum((v * f[j] for j, v in cols.get(i, ())), Fraction(0)) for i in range(M_eps.m)]
        return SurvivalCurve(measure_kind, np.array([float(v) for v in vals]), method="operator-exact",
                             exact_values=tuple(vals), epsilon=_radius(M_eps))
    f = np.asarray(init_density, dtype=float)
    M = M_eps.matrix.toarray() if M_eps.m <= 512 else M_eps.matrix
    vals = np.empty(n_max + 1)
    for n in range(n_max + 1):
        vals[n] = widths @ f
        if n < n_max:
            f = M @ f
    return SurvivalCurve(measure_kind, vals, method="operator", epsilon=_radius(M_eps))


def _radius(tm: TransferMatrix) -> float:
    if tm.hole is not None and tm.hole.radius is not None:
        return float(tm.hole.radius)
    return float("nan")


def nu_eps_of(triple: SpectralTriple, f: np.ndarray) -> float:
    """nu_eps(f) with nu0(phi_eps) = 1 and nu_eps(phi_eps) = 1."""
    return float(triple.nu @ np.asarray(f, dtype=float))


def survival_spectral(triple: SpectralTriple, nu_eps_of_phi: float, n, C: float = 1.0):
    """Leading-term estimate lambda^n nu_eps(phi) and band C lambda^n (1-gap)^n."""
    n = np.asarray(n, dtype=float)
    lam_n = triple.lam ** n
    return lam_n * nu_eps_of_phi, C * lam_n * (1.0 - triple.gap) ** n


def fit_band_constant(values: Sequence[float], lam: float, nu_phi: float, gap: float,
                      n_fit: Sequence[int]) -> float:
    """Smallest C with |s(n) - lam^n nu(phi)| <= C lam^n (1-gap)^n over ``n_fit``."""
    C = 0.0
    for n in n_fit:
        scale = lam ** n * (1 - gap) ** n
        if scale > 0:
            C = max(C, abs(values[n] - lam ** n * nu_phi) / scale)
    return C


@dataclass(frozen=True)
class PreciseSpectrum:
    """Leading eigendata of a rational matrix in extended precision (mpmath)."""

    lam: object
    second: object
    left: list
    right: list
    widths: list
    dps: int

    def nu_of(self, f: Sequence) -> object:
        import mpmath as mp
        with mp.workdps(self.dps):
            lf = mp.fsum(a * mp.mpf(Fraction(b).numerator) / Fraction(b).denominator
                         for a, b in zip(self.left, f))
            lr = mp.fsum(a * b for a, b in zip(self.left, self.right))
            wr = mp.fsum(a * b for a, b in zip(self.widths, self.right))
            return lf * wr / lr

    @property
    def gap(self):
        return 1 - self.second / self.lam


def precise_spectrum(tm: TransferMatrix, dps: int = 150) -> PreciseSpectrum:
    """Eigen-decomposition of an exact matrix at ``dps`` digits.

    Used to test the spectral expansion of survival curves far past the point
    where double precision bottoms out (lambda^n (1-gap)^n ~ 1e-90 at n = 200).
    """
    import mpmath as mp

    if tm.exact is None or tm.grid.exact is None:
        raise ValueError("matrix has no exact entries")
    m = tm.m
    with mp.workdps(dps):
        A = mp.matrix(m, m)
        for (i, j), v in tm.exact.items():
            A[i, j] = mp.mpf(v.numerator) / v.denominator
        E, L, R = mp.eig(A, left=True, right=True)
        order = sorted(range(m), key=lambda k: -abs(E[k]))
        k0 = order[0]
        lam = mp.re(E[k0])
        second = abs(E[order[1]]) if m > 1 else mp.mpf(0)
        ex = tm.grid.exact
        widths = [mp.mpf((ex[i + 1] - ex[i]).numerator) / (ex[i + 1] - ex[i]).denominator for i in range(m)]
        left = [mp.re(L[k0, i]) for i in range(m)]
        right = [mp.re(R[i, k0]) for i in range(m)]
    return PreciseSpectrum(lam, second, left, right, widths, dps)


# --- scaling of the hitting-time law ---------------------------------------------------

def xi_epsilon(theta_N_eps: float, kappa_N_fit: float) -> float:
    """Scaling factor xi_eps = theta_{N,eps} + kappa, kappa the measured truncation correction."""
    return theta_N_eps + kappa_N_fit


def kappa_from_eigenvalue(lam: float, hole_mass: float, theta_N_eps: float) -> float:
    """Correction kappa with theta_{N,eps} + kappa = -log(lambda)/mu0(A)."""
    return -math.log(lam) / hole_mass - theta_N_eps


def delta_epsilon(eta: float, gap: float, n_limit: int = 10**6) -> tuple:
    """min over N >= 1 of N eta + (1-gap)^N / gap; returns ``(delta, N)``."""
    if not 0 < gap <= 1:
        raise ValueError("gap must lie in (0, 1]")
    if eta <= 0:
        return 0.0, n_limit
    r = 1.0 - gap
    if r == 0:
        return eta, 1
    # the objective is convex in N; start at the stationary point
    n0 = max(1.0, math.log(eta * gap / -math.log(r)) / math.log(r)) if eta * gap < -math.log(r) else 1.0
    best = None
    for N in {max(1, int(n0) + d) for d in (-2, -1, 0, 1, 2)}:
        v = N * eta + r ** N / gap
        if best is None or v < best[0]:
            best = (v, N)
    return best


def exp_error_curve(curve: SurvivalCurve, xi: float, hole_mass: float, delta_eps: float,
                    t_grid: Sequence[float], eta: float | None = None,
                    gap: float | None = None) -> ScalingReport:
    """Compare s(floor(t / (xi mu0(A)))) with e^{-t} against (t v 1) e^{-t} delta_eps."""
    if xi <= 0 or hole_mass <= 0:
        raise ValueError("xi and the hole mass must be positive")
    rows, small, omitted = [], [], []
    n_small = 0
    if eta is not None and gap is not None and 0 < eta < 1 and 0 < gap < 1:
        n_small = abs(math.log(eta) / math.log(1 - gap))
    C_hat = 0.0
    for t in t_grid:
        n = math.floor(t / (xi * hole_mass))
        if n > curve.n_max or (curve.truncated_at is not None and n >= curve.truncated_at):
            omitted.append(t)
            continue
        err = abs(float(curve.values[n]) - math.exp(-t))
        shape = max(t, 1.0) * math.exp(-t) * delta_eps
        rows.append((float(t), int(n), err, shape))
        small.append(n <= n_small)
        if shape > 0:
            C_hat = max(C_hat, err / shape)
    if omitted:
        warnings.warn(f"{len(omitted)} t values lie beyond the curve horizon and were omitted",
                      RuntimeWarning, stacklevel=2)
    return ScalingReport(xi, delta_eps, tuple(rows), C_hat, hole_mass, tuple(small), tuple(omitted))


# --- sampling ---------------------------------------------------------------------------

def survival_montecarlo(imap: IntervalMap, hole: Hole, n_max: int, samples: int, seed: int,
                        measure_kind: str = "nu0", density: StepFunction | None = None,
                        engine: str = "auto") -> SurvivalCurve:
    """Empirical survival from ``samples`` orbits with binomial standard errors.

    mu0 starts are drawn by inverse CDF of the invariant density; for maps
    with a constant density this coincides with uniform sampling.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    bins = None
    if measure_kind == "mu0":
        rho = density if density is not None else invariant_density_exact(imap)
        if len(set(rho.values)) > 1 or rho.xs[0] != 0 or rho.xs[-1] != 1:
            bins = ([float(x) for x in rho.xs], [float(v) for v in rho.values])
    elif measure_kind != "nu0":
        raise ValueError(f"unknown measure {measure_kind!r}")
    tau = first_hits(imap, hole, n_max, samples, seed, engine=engine, density=bins)
    s = survival_from_hits(tau, n_max)
    se = np.sqrt(np.clip(s * (1 - s), 0, None) / samples)
    return SurvivalCurve(measure_kind, s, float(hole.radius) if hole.radius is not None else float("nan"),
                         "montecarlo", None, se)
