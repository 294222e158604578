"""Subshifts of finite type: entropy, Parry measure and entropy drop under block deletion.

A subshift is stored as an alphabet size plus a list of forbidden words. It is
presented as a vertex shift on allowed words of length ``order - 1`` (the
higher-block, de Bruijn-style graph), trimmed to its essential part.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components


class SFTError(ValueError):
    pass


class NotPrimitiveError(SFTError):
    def __init__(self, msg: str, period: int | None = None, components: int = 1):
        super().__init__(msg)
        self.period = period
        self.components = components


Word = tuple


def as_word(block, alphabet: int | None = None) -> Word:
    """Accept "0110", [0, 1, 1, 0] or (0, 1, 1, 0)."""
    if isinstance(block, str):
        w = tuple(int(c, 36) for c in block)
    else:
        w = tuple(int(c) for c in block)
    if not w:
        raise SFTError("empty word")
    if alphabet is not None and any(not 0 <= c < alphabet for c in w):
        raise SFTError(f"word {block!r} uses symbols outside the alphabet")
    return w


def _contains(word: Word, sub: Word) -> bool:
    n = len(sub)
    return any(word[i:i + n] == sub for i in range(len(word) - n + 1))


@dataclass(frozen=True)
class Presentation:
    """Essential vertex-shift graph on words of length ``k``."""

    k: int
    words: tuple
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.words)

    @cached_property
    def index(self) -> dict:
        return {w: i for i, w in enumerate(self.words)}


@dataclass(frozen=True)
class SFTSpec:
    alphabet: int
    forbidden: tuple = ()

    def __post_init__(self):
        if self.alphabet < 1:
            raise SFTError("alphabet must have at least one symbol")
        fb = tuple(sorted({as_word(b, self.alphabet) for b in self.forbidden}, key=lambda w: (len(w), w)))
        object.__setattr__(self, "forbidden", fb)

    @classmethod
    def full(cls, alphabet: int) -> "SFTSpec":
        return cls(alphabet)

    @classmethod
    def from_matrix(cls, matrix) -> "SFTSpec":
        """Order-1 transition matrix: symbol b may follow a iff matrix[a][b] = 1."""
        M = np.asarray(matrix)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise SFTError("transition matrix must be square")
        if not np.isin(M, (0, 1)).all():
            raise SFTError("transition matrix must have 0/1 entries")
        A = M.shape[0]
        return cls(A, tuple((a, b) for a in range(A) for b in range(A) if M[a, b] == 0))

    @classmethod
    def from_dict(cls, doc: dict) -> "SFTSpec":
        if "matrix" in doc:
            return cls.from_matrix(doc["matrix"])
        if "alphabet" not in doc:
            raise SFTError("SFT needs 'alphabet' or 'matrix'")
        return cls(int(doc["alphabet"]), tuple(doc.get("forbidden_blocks", ())))

    @property
    def memory(self) -> int:
        """Longest forbidden word length (at least 2)."""
        return max([2, *(len(w) for w in self.forbidden)])

    def allows_word(self, word: Word) -> bool:
        return not any(_contains(word, f) for f in self.forbidden)

    def presentation(self, k: int | None = None) -> Presentation:
        """Essential graph on allowed words of length ``k >= memory - 1``."""
        k = max(self.memory - 1, 1) if k is None else k
        if k < self.memory - 1:
            raise SFTError(f"presentation length {k} is below memory {self.memory - 1}")
        A = self.alphabet
        words = _allowed_words(self, k)
        index = {w: i for i, w in enumerate(words)}
        rows, cols = [], []
        for i, w in enumerate(words):
            for c in range(A):
                path = w + (c,)
                if any(path[-len(f):] == f for f in self.forbidden if len(f) <= len(path)):
                    continue
                j = index.get(path[1:])
                if j is not None:
                    rows.append(i)
                    cols.append(j)
        M = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(words), len(words)))
        keep = _essential(M)
        words = tuple(w for w, kp in zip(words, keep) if kp)
        M = M[keep][:, keep].tocsr()
        return Presentation(k, words, M)


def _allowed_words(sft: SFTSpec, k: int) -> list:
    """Allowed words of length k, grown symbol by symbol (pruned on the fly)."""
    words = [()]
    for _ in range(k):
        nxt = []
        for w in words:
            for c in range(sft.alphabet):
                u = w + (c,)
                if all(not (len(u) >= len(f) and u[-len(f):] == f) for f in sft.forbidden):
                    nxt.append(u)
        words = nxt
    return words


def _essential(M: sp.csr_matrix) -> np.ndarray:
    """Vertices with a bi-infinite path through them (iteratively drop sources and sinks)."""
    keep = np.ones(M.shape[0], dtype=bool)
    while True:
        sub = M[keep][:, keep]
        good = (np.asarray(sub.sum(axis=1)).ravel() > 0) & (np.asarray(sub.sum(axis=0)).ravel() > 0)
        if good.all():
            return keep
        idx = np.flatnonzero(keep)
        keep[idx[~good]] = False
        if not keep.any():
            return keep


def period(M: sp.csr_matrix) -> int:
    """Period of an irreducible graph (gcd of level differences along edges)."""
    order, _ = breadth_first_order(M, 0, directed=True, return_predecessors=True)
    level = np.full(M.shape[0], -1)
    level[0] = 0
    coo = M.tocoo()
    adj = [[] for _ in range(M.shape[0])]
    for i, j in zip(coo.row, coo.col):
        adj[i].append(j)
    for u in order:
        for v in adj[u]:
            if level[v] < 0:
                level[v] = level[u] + 1
    g = 0
    for i, j in zip(coo.row, coo.col):
        g = math.gcd(g, int(level[i] + 1 - level[j]))
    return abs(g)


def check_primitive(P: Presentation) -> None:
    if P.size == 0:
        raise SFTError("the subshift is empty")
    n_comp, _ = connected_components(P.matrix, directed=True, connection="strong")
    if n_comp > 1:
        raise NotPrimitiveError(f"presentation is reducible ({n_comp} strong components)",
                                components=n_comp)
    p = period(P.matrix)
    if p != 1:
        raise NotPrimitiveError(f"presentation is irreducible with period {p}", period=p)


def is_primitive(sft: SFTSpec) -> bool:
    try:
        check_primitive(sft.presentation())
    except SFTError:  # empty or not primitive
        return False
    return True


@dataclass(frozen=True)
class PerronData:
    lam: float
    left: np.ndarray
    right: np.ndarray
    iterations: int


def perron(M: sp.csr_matrix, tol: float = 1e-12, max_iter: int = 10**6) -> PerronData:
    """Leading eigenvalue with left and right eigenvectors by power iteration.

    Iterates (I + M)/2, which has the same Perron vectors and converges for
    any primitive M.
    """
    n = M.shape[0]
    MT = M.T.tocsr()
    r = np.full(n, 1.0 / n)
    l = np.full(n, 1.0 / n)
    lam_old = 0.0
    for it in range(1, max_iter + 1):
        r_new = 0.5 * (r + M @ r)
        l_new = 0.5 * (l + MT @ l)
        mu = r_new.sum()
        r_new /= mu
        l_new /= l_new.sum()
        lam = 2.0 * mu - 1.0
        if it > 1 and abs(lam - lam_old) <= tol * lam and np.abs(r_new - r).max() <= tol and np.abs(l_new - l).max() <= tol:
            r, l = r_new, l_new
            break
        r, l, lam_old = r_new, l_new, lam
    else:
        raise SFTError("power iteration did not converge")
    lam = float((l @ (M @ r)) / (l @ r))
    return PerronData(lam, l, r, it)


def topological_entropy(sft: SFTSpec, k: int | None = None, tol: float = 1e-12) -> float:
    """log of the Perron eigenvalue of the (recoded) transition matrix."""
    P = sft.presentation(k)
    check_primitive(P)
    return math.log(perron(P.matrix, tol).lam)


def delete_block(sft: SFTSpec, block) -> SFTSpec:
    """The subshift with ``block`` added to the forbidden words."""
    w = as_word(block, sft.alphabet)
    if not block_allowed(sft, w):
        raise SFTError(f"block {block!r} is already forbidden")
    return SFTSpec(sft.alphabet, sft.forbidden + (w,))


def blocks_overlap(a: Word, b: Word) -> bool:
    """True if a proper suffix of one is a prefix of the other, or one contains the other."""
    if _contains(a, b) or _contains(b, a):
        return True
    for x, y in ((a, b), (b, a)):
        for s in range(1, min(len(x), len(y))):
            if x[-s:] == y[:s]:
                return True
    return False


def delete_blocks(sft: SFTSpec, blocks: Iterable) -> SFTSpec:
    ws = [as_word(b, sft.alphabet) for b in blocks]
    for a, b in itertools.combinations(ws, 2):
        if blocks_overlap(a, b):
            raise SFTError(f"blocks {a} and {b} overlap; only non-overlapping sets are supported")
    out = sft
    for w in ws:
        out = delete_block(out, w)
    return out


def block_allowed(sft: SFTSpec, block) -> bool:
    """Whether the cylinder of ``block`` meets the (essential) subshift."""
    w = as_word(block, sft.alphabet)
    P = sft.presentation(max(sft.memory - 1, len(w)))
    return any(v[:len(w)] == w for v in P.words)


def _hole_presentation(sft: SFTSpec, w: Word):
    P = sft.presentation(max(sft.memory - 1, len(w)))
    check_primitive(P)
    hole = np.array([v[:len(w)] == w for v in P.words])
    return P, hole


def parry_chain(P: Presentation):
    """Stochastic matrix and stationary law of the maximal-entropy Markov chain."""
    pd = perron(P.matrix)
    r = pd.right
    D = sp.diags(1.0 / r)
    S = (D @ P.matrix @ sp.diags(r)).tocsr() / pd.lam
    pi = pd.left * r
    return S, pi / pi.sum(), pd


def block_measure_maxentropy(sft: SFTSpec, block) -> float:
    """Parry measure of the cylinder of ``block``."""
    w = as_word(block, sft.alphabet)
    P, hole = _hole_presentation(sft, w)
    _, pi, _ = parry_chain(P)
    return float(pi[hole].sum())


def word_measure(sft: SFTSpec, word, P: Presentation | None = None, pd: PerronData | None = None) -> float:
    """Parry measure of a cylinder via the path formula u[first] v[last] / (lambda^edges u.v)."""
    w = as_word(word, sft.alphabet)
    P = P or sft.presentation()
    k = P.k
    if len(w) < k:
        raise SFTError("word shorter than the presentation length")
    pd = pd or perron(P.matrix)
    try:
        verts = [P.index[w[i:i + k]] for i in range(len(w) - k + 1)]
    except KeyError:
        return 0.0
    for a, b in zip(verts, verts[1:]):
        if P.matrix[a, b] == 0:
            return 0.0
    norm = float(pd.left @ pd.right)
    return float(pd.left[verts[0]] * pd.right[verts[-1]] / (pd.lam ** (len(verts) - 1) * norm))


@dataclass(frozen=True)
class ThetaBlock:
    theta: float
    q: tuple
    N: int
    tail: float
    mass: float
    theta_overlap: float = float("nan")


def theta_block(sft: SFTSpec, block, N: int | None = None) -> ThetaBlock:
    """1 - sum_{k<N} q_k for the cylinder hole of ``block`` under the Parry chain.

    q_k is the chance, starting in the cylinder, to be outside it at times
    1..k and back at time k+1. ``tail`` is N times the late per-step return
    rate q_{N-1}, a size estimate for long returns already counted.
    ``theta_overlap`` keeps only returns at times 1..L, where the new
    occurrence overlaps or abuts the old one; it is the part that survives
    as the block grows along a family.
    """
    w = as_word(block, sft.alphabet)
    N = 4 * len(w) if N is None else N
    if N < 1:
        raise SFTError("N must be positive")
    P, hole = _hole_presentation(sft, w)
    S, pi, _ = parry_chain(P)
    mass = float(pi[hole].sum())
    if mass <= 0:
        raise SFTError("block has zero Parry measure")
    ST = S.T.tocsr()
    v = np.where(hole, pi, 0.0) / mass
    q = []
    for _ in range(N):
        v = ST @ v
        q.append(float(v[hole].sum()))
        v[hole] = 0.0
    L = len(w)
    overlap = 1.0 - sum(q[:L]) if N >= L else float("nan")
    return ThetaBlock(1.0 - sum(q), tuple(q), N, N * q[-1], mass, overlap)


def q_bruteforce(sft: SFTSpec, block, N: int) -> tuple:
    """q_0..q_{N-1} by enumerating every allowed word that starts with ``block``."""
    w = as_word(block, sft.alphabet)
    L = len(w)
    P = sft.presentation(max(sft.memory - 1, L))
    pd = perron(P.matrix)
    mass = sum(word_measure(sft, w + tail, P, pd)
               for tail in itertools.product(range(sft.alphabet), repeat=max(P.k - L, 0)))
    q = []
    for k in range(N):
        total = 0.0
        for tail in itertools.product(range(sft.alphabet), repeat=k + 1):
            u = w + tail
            if not sft.allows_word(u):
                continue
            if any(u[j:j + L] == w for j in range(1, k + 1)) or u[k + 1:k + 1 + L] != w:
                continue
            pad = max(P.k - len(u), 0)
            if pad:
                total += sum(word_measure(sft, u + e, P, pd)
                             for e in itertools.product(range(sft.alphabet), repeat=pad))
            else:
                total += word_measure(sft, u, P, pd)
        q.append(total / mass)
    return tuple(q)


@dataclass(frozen=True)
class EntropyReport:
    block: str
    length: int
    h_closed: float
    h_open: float
    drop: float
    predicted_drop: float
    mu_block: float
    theta_block: float
    theta_used: float

    @property
    def ratio(self) -> float:
        return self.drop / self.predicted_drop if self.predicted_drop > 0 else float("nan")


def word_str(w: Word) -> str:
    return "".join(np.base_repr(c, 36).lower() for c in w)


def entropy_drop_report(base: SFTSpec, block, theta: float | None = None,
                        h_closed: float | None = None) -> EntropyReport:
    w = as_word(block, base.alphabet)
    if h_closed is None:
        h_closed = topological_entropy(base)
    h_open = topological_entropy(delete_block(base, w))
    mu = block_measure_maxentropy(base, w)
    tb = theta_block(base, w).theta
    th = tb if theta is None else theta
    return EntropyReport(word_str(w), len(w), h_closed, h_open, h_closed - h_open, th * mu, mu, tb, th)


def entropy_drop_study(base: SFTSpec, blocks: Sequence, theta: float | None = None,
                       jobs: int = 1) -> list:
    """Exact entropy drop and first-order prediction theta * mu0(block) for each block.

    ``theta`` overrides the per-block theta_block in the prediction.
    """
    h0 = topological_entropy(base)
    for b in blocks:
        if not block_allowed(base, b):
            raise SFTError(f"block {b!r} is not allowed in the base shift")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(entropy_drop_report, [base] * len(blocks), blocks,
                               [theta] * len(blocks), [h0] * len(blocks)))
    return [entropy_drop_report(base, b, theta, h0) for b in blocks]


def avoiding_ones_entropy(L: int) -> float:
    """Entropy of binary sequences without L consecutive ones: log of the largest root of x^{L+1} - 2x^L + 1."""
    roots = np.roots([1, -2] + [0] * (L - 1) + [1])
    real = [r.real for r in roots if abs(r.imag) < 1e-9 and r.real > 1 + 1e-12]
    x = max(real) if real else 1.0
    # polish with Newton in float
    for _ in range(50):
        f = x ** (L + 1) - 2 * x ** L + 1
        df = (L + 1) * x ** L - 2 * L * x ** (L - 1)
        if df == 0:  # double root at x = 1 when L = 1
            break
        x -= f / df
    return math.log(x)
