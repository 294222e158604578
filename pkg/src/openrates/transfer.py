"""Finite-rank transfer operators of interval maps and their leading spectral data.

Densities are column vectors over the bins of a grid, and a matrix acts on
them from the left. The reference measure (Lebesgue) pairs with a density
``f`` as ``widths @ f``, so a closed operator satisfies
``widths @ M == widths``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .intervals import StepFunction, as_fraction
from .maps import Hole, IntervalMap, MapError, NotMarkovError

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Power iteration did not settle within the iteration budget."""


@dataclass(frozen=True)
class UlamGrid:
    edges: np.ndarray
    exact: tuple | None = None

    def __post_init__(self):
        e = self.edges
        if e.ndim != 1 or len(e) < 2:
            raise ValueError("grid needs at least two edges")
        if e[0] != 0.0 or e[-1] != 1.0 or np.any(np.diff(e) <= 0):
            raise ValueError("grid edges must increase strictly from 0 to 1")

    @classmethod
    def uniform(cls, m: int) -> "UlamGrid":
        exact = tuple(Fraction(i, m) for i in range(m + 1)) if m <= 1 << 16 else None
        return cls(np.linspace(0.0, 1.0, m + 1), exact)

    @classmethod
    def from_points(cls, points) -> "UlamGrid":
        pts = sorted({as_fraction(p) for p in points} | {Fraction(0), Fraction(1)})
        return cls(np.array([float(p) for p in pts]), tuple(pts))

    @property
    def m(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def locate(self, x) -> int:
        return int(np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.m - 1))


@dataclass(frozen=True)
class TransferMatrix:
    matrix: sp.csr_matrix
    grid: UlamGrid
    kind: str = "closed"
    hole: Hole | None = None
    exact: dict | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.grid.m

    def pairing(self, f: np.ndarray) -> float:
        return float(self.grid.widths @ f)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class SpectralTriple:
    lam: float
    phi: np.ndarray
    nu: np.ndarray
    gap: float
    iterations: int
    residual: float = 0.0
    second: float = 0.0
    degenerate: bool = False

    def record(self) -> dict:
        return {"lambda": self.lam, "gap": self.gap, "iterations": self.iterations,
                "residual": self.residual}


# --- Markov partitions --------------------------------------------------------

def markov_partition(imap: IntervalMap, max_cells: int = 20000) -> tuple:
    """Forward-orbit closure of the singular set (branch ends and marked points).

    For an affine map this is a Markov partition: every cell is mapped by one
    branch onto a union of cells. Raises NotMarkovError if the closure exceeds
    ``max_cells`` points.
    """
    if not imap.is_affine:
        raise NotMarkovError("Markov partitions need affine branches")
    pts = set(imap.singular_set)
    todo = list(pts)
    while todo:
        p = todo.pop()
        for br in imap.branches:
            if br.lo <= p <= br.hi:
                y = br(p)
                if y not in pts:
                    pts.add(y)
                    todo.append(y)
                    if len(pts) > max_cells + 1:
                        raise NotMarkovError(f"forward orbits of the singular set exceed {max_cells} points")
    return tuple(sorted(pts))


def check_markov(imap: IntervalMap, partition) -> None:
    pset = set(partition)
    for lo, hi in zip(partition, partition[1:]):
        br = imap.branch_at(lo)
        if hi > br.hi:
            raise NotMarkovError(f"cell [{lo}, {hi}) straddles a branch boundary")
        y0, y1 = br(lo), br(hi)
        if y0 not in pset or y1 not in pset:
            raise NotMarkovError(f"image of cell [{lo}, {hi}) is not a union of cells")


def assemble_markov_exact(imap: IntervalMap, partition=None, max_cells: int = 20000) -> TransferMatrix:
    """Exact transfer matrix on densities constant over a Markov partition.

    Entry (i, j) is 1/|slope| when cell i lies in the image of cell j. Exact
    Fraction entries are kept in ``.exact``.
    """
    if partition is None:
        partition = markov_partition(imap, max_cells)
    else:
        partition = tuple(sorted(as_fraction(p) for p in partition))
    check_markov(imap, partition)
    index = {p: i for i, p in enumerate(partition)}
    exact = {}
    for j, (lo, hi) in enumerate(zip(partition, partition[1:])):
        br = imap.branch_at(lo)
        y0, y1 = sorted((br(lo), br(hi)))
        w = 1 / abs(br.a)
        for i in range(index[y0], index[y1]):
            exact[(i, j)] = w
    grid = UlamGrid(np.array([float(p) for p in partition]), partition)
    return TransferMatrix(_csr(exact, grid.m), grid, "closed", None, exact)


def _csr(entries: dict, m: int) -> sp.csr_matrix:
    if not entries:
        return sp.csr_matrix((m, m))
    rows, cols = zip(*entries)
    vals = [float(v) for v in entries.values()]
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


def assemble_ulam(imap: IntervalMap, grid: UlamGrid, snap: float = 1e-11) -> TransferMatrix:
    """Ulam discretization: conditional expectation of P onto bin-constant densities.

    ``M[i, j] = Leb(B_j & T^-1 B_i) / Leb(B_i)``. Affine maps only; image
    endpoints within ``snap`` bin widths of a grid edge are snapped to it so
    that grid-aligned images do not leave rounding slivers.
    """
    lo_b, hi_b, a_b, b_b = imap.affine_arrays()
    e = grid.edges
    h = grid.widths
    tol = snap * h.min()
    rows, cols, vals = [], [], []
    for lo, hi, a, b in zip(lo_b, hi_b, a_b, b_b):
        j0 = np.searchsorted(e, lo, side="right") - 1
        j1 = np.searchsorted(e, hi, side="left")
        js = np.arange(j0, j1)
        c = np.maximum(e[js], lo)
        d = np.minimum(e[js + 1], hi)
        keep = d > c
        js, c, d = js[keep], c[keep], d[keep]
        y0, y1 = a * c + b, a * d + b
        y0, y1 = np.minimum(y0, y1), np.maximum(y0, y1)
        y0, y1 = _snap(y0, e, tol), _snap(y1, e, tol)
        i0 = np.clip(np.searchsorted(e, y0, side="right") - 1, 0, grid.m - 1)
        i1 = np.clip(np.searchsorted(e, y1, side="left") - 1, 0, grid.m - 1)
        counts = np.maximum(i1 - i0 + 1, 0)
        jj = np.repeat(js, counts)
        start = np.repeat(i0, counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        ii = start + offs
        yy0, yy1 = np.repeat(y0, counts), np.repeat(y1, counts)
        ov = np.minimum(yy1, e[ii + 1]) - np.maximum(yy0, e[ii])
        ok = ov > 0
        rows.append(ii[ok])
        cols.append(jj[ok])
        vals.append(ov[ok] / abs(a) / h[ii[ok]])
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.m, grid.m))
    M.sum_duplicates()
    return TransferMatrix(M, grid, "closed")


def _snap(y: np.ndarray, edges: np.ndarray, tol: float) -> np.ndarray:
    k = np.clip(np.searchsorted(edges, y), 1, len(edges) - 1)
    left, right = edges[k - 1], edges[k]
    near = np.where(y - left < right - y, left, right)
    return np.where(np.abs(y - near) <= tol, near, y)


def hole_coverage(grid: UlamGrid, hole: Hole) -> np.ndarray:
    """Fraction of each bin covered by the hole."""
    m = grid.m
    cov = np.zeros(m)
    if not hole.intervals:
        return cov
    if grid.exact is not None and hole.is_exact():
        ex = grid.exact
        for lo, hi in hole.intervals:
            j0 = grid.locate(float(lo))
            while j0 > 0 and ex[j0] > lo:
                j0 -= 1
            j = j0
            while j < m and ex[j] < hi:
                w = min(ex[j + 1], hi) - max(ex[j], lo)
                if w > 0:
                    cov[j] += float(w / (ex[j + 1] - ex[j]))
                j += 1
        return np.minimum(cov, 1.0)
    e = grid.edges
    for lo, hi in hole.intervals:
        ov = np.minimum(e[1:], float(hi)) - np.maximum(e[:-1], float(lo))
        cov += np.clip(ov, 0, None) / grid.widths
    cov = np.where(cov < 1e-12, 0.0, cov)
    return np.where(cov > 1 - 1e-12, 1.0, cov)


def open_operator(closed: TransferMatrix, hole: Hole, grid: UlamGrid | None = None) -> TransferMatrix:
    """P_eps f = P_0(1_{outside hole} f): scale column j by the uncovered share of bin j."""
    grid = grid or closed.grid
    keep = 1.0 - hole_coverage(grid, hole)
    M = (closed.matrix @ sp.diags(keep)).tocsr()
    M.eliminate_zeros()
    exact = None
    if closed.exact is not None and hole.is_exact() and grid.exact is not None:
        ex = grid.exact
        keep_exact = [1 - _covered(ex[j], ex[j + 1], hole) / (ex[j + 1] - ex[j]) for j in range(grid.m)]
        exact = {(i, j): v * keep_exact[j] for (i, j), v in closed.exact.items() if keep_exact[j]}
    return TransferMatrix(M, grid, "open", hole, exact)


def _covered(lo, hi, hole: Hole):
    return sum((w for w in (min(hi, b) - max(lo, a) for a, b in hole.intervals) if w > 0), Fraction(0))


# --- spectral data ------------------------------------------------------------

def surviving_support_is_irreducible(tm: TransferMatrix) -> bool:
    """True if the bins that keep mass form one strongly connected class."""
    M = tm.matrix
    alive = np.flatnonzero(np.asarray(abs(M).sum(axis=0)).ravel() > 0)
    if len(alive) == 0:
        return False
    sub = M[alive][:, alive]
    n, labels = connected_components(sub, directed=True, connection="strong")
    if n == 1:
        return True
    # only classes carrying a cycle matter
    sizes = np.bincount(labels)
    diag = sub.diagonal() > 0
    cyclic = {lab for lab in range(n) if sizes[lab] > 1 or diag[labels == lab].any()}
    return len(cyclic) <= 1


def leading_triple(tm: TransferMatrix, tol: float = 1e-13, max_iter: int = 10**6,
                   gap_iter: int = 5000) -> SpectralTriple:
    """Leading eigenvalue and eigenvectors by power iteration on M and M^T.

    ``phi`` is normalized by ``widths @ phi == 1`` and ``nu`` by
    ``nu @ phi == 1``. The gap is ``1 - |second eigenvalue| / lam`` where the
    second eigenvalue comes from subspace iteration on the deflated operator
    ``f -> M f - lam * phi * (nu @ f)``.
    """
    M = tm.matrix
    h = tm.grid.widths
    m = tm.m
    if M.nnz == 0 or not np.any(M.data):
        return SpectralTriple(0.0, np.zeros(0), np.zeros(0), float("nan"), 0, 0.0, 0.0, True)
    if not surviving_support_is_irreducible(tm):
        warnings.warn("transfer matrix is reducible on its surviving support", RuntimeWarning,
                      stacklevel=2)
    MT = M.T.tocsr()
    phi = np.ones(m)
    nu = h / h.sum()
    lam_old = lam_l_old = np.inf
    for it in range(1, max_iter + 1):
        y = M @ phi
        lam = float(h @ y) / float(h @ phi)
        if lam <= 0:
            return SpectralTriple(0.0, np.zeros(0), np.zeros(0), float("nan"), it, 0.0, 0.0, True)
        res = float(h @ np.abs(y - lam * phi)) / float(h @ phi)
        z = MT @ nu
        lam_l = float(z.sum()) / float(nu.sum())
        res_l = float(np.abs(z - lam_l * nu).sum()) / float(np.abs(nu).sum())
        done = (abs(lam - lam_old) < tol and abs(lam_l - lam_l_old) < tol
                and res < tol * max(lam, 1e-300) * 10 and res_l < tol * max(lam, 1e-300) * 10)
        if done:
            break
        phi = y / float(h @ y)
        nu = z / float(z.sum())
        lam_old, lam_l_old = lam, lam_l
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} steps "
                               f"(last change {abs(lam - lam_old):.3e})")
    phi = phi / float(h @ phi)
    nu = nu / float(nu @ phi)
    # two-sided Rayleigh quotient: error is the product of both eigenvector errors
    lam = float(nu @ (M @ phi))
    second = _second_modulus(M, lam, phi, nu, gap_iter)
    gap = 1.0 - second / lam
    return SpectralTriple(lam, phi, nu, gap, it, res, second, False)


def _second_modulus(M, lam, phi, nu, max_iter, dense_limit=2000) -> float:
    """Spectral radius of the deflated operator ``f -> M f - lam phi (nu @ f)``.

    Small matrices are handled densely. Larger ones use deflated power
    iteration, reading the rate off the telescoped growth over the second half
    of the run; equal-modulus clusters and Jordan blocks only cost an
    O(1/n) bias there.
    """
    m = M.shape[0]
    if m <= 1:
        return 0.0
    if m <= dense_limit:
        D = M.toarray() - lam * np.outer(phi, nu)
        return float(np.abs(np.linalg.eigvals(D)).max())
    y = np.random.default_rng(20111222).standard_normal(m)
    y -= phi * (nu @ y)
    logs = []
    for n in range(1, max_iter + 1):
        z = M @ y - lam * phi * (nu @ y)
        z -= phi * (nu @ z)
        ny, nz = np.abs(y).max(), np.abs(z).max()
        if nz <= 1e-15 * lam * ny:
            return 0.0
        logs.append(np.log(nz / ny))
        y = z / nz
        if n >= 64 and n % 32 == 0:
            half = np.mean(logs[n // 2:])
            quarter = np.mean(logs[3 * n // 4:])
            if abs(half - quarter) < 1e-4:
                return float(np.exp(half))
    return float(np.exp(np.mean(logs[len(logs) // 2:])))


def escape_rate(triple: SpectralTriple) -> float:
    if triple.lam < 0:
        raise ValueError("negative leading eigenvalue")
    if triple.lam == 0:
        return float("inf")
    return -float(np.log(triple.lam))


# --- exact action on step functions ------------------------------------------------

def transfer_step(imap: IntervalMap, f: StepFunction) -> StepFunction:
    """Exact P_0 f for an affine map and a rational step function."""
    pieces = []
    for a, b, v in f.pieces():
        for br in imap.branches:
            lo, hi = max(a, br.lo), min(b, br.hi)
            if hi <= lo:
                continue
            y0, y1 = sorted((br(lo), br(hi)))
            pieces.append((y0, y1, v / abs(br.a)))
    return StepFunction.from_pieces(pieces)


def invariant_density_exact(imap: IntervalMap, max_cells: int = 20000) -> StepFunction:
    """Invariant density as an exact step function over the map's Markov partition."""
    import sympy

    tm = assemble_markov_exact(IntervalMap(imap.branches, (), imap.name), max_cells=max_cells)
    m = tm.m
    A = sympy.zeros(m, m)
    for (i, j), v in tm.exact.items():
        A[i, j] = sympy.Rational(v.numerator, v.denominator)
    null = (A - sympy.eye(m)).nullspace()
    if len(null) != 1:
        raise MapError(f"invariant density is not unique ({len(null)} solutions)")
    vec = [Fraction(int(sympy.fraction(x)[0]), int(sympy.fraction(x)[1])) for x in null[0]]
    edges = tm.grid.exact
    mass = sum(v * (edges[i + 1] - edges[i]) for i, v in enumerate(vec))
    if mass == 0:
        raise MapError("degenerate invariant density")
    return StepFunction(edges, tuple(v / mass for v in vec))


def density_on_grid(f: StepFunction, grid: UlamGrid) -> np.ndarray:
    """Bin averages of a step function."""
    ex = grid.exact or tuple(as_fraction(x) for x in grid.edges)
    return np.array([float(f.integral([(lo, hi)]) / (hi - lo)) for lo, hi in zip(ex, ex[1:])])


# --- export ----------------------------------------------------------------------

def write_triplets_csv(tm: TransferMatrix, path) -> None:
    coo = tm.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for k in order:
            w.writerow([int(coo.row[k]), int(coo.col[k]), format(float(coo.data[k]), ".17g")])


def markov_grid_operator(imap: IntervalMap, hole: Hole, max_cells: int = 20000):
    """Closed and open exact operators on the Markov partition refined by the hole endpoints."""
    marked = imap.with_marked(hole.endpoints)
    closed = assemble_markov_exact(marked, max_cells=max_cells)
    return closed, open_operator(closed, hole)

