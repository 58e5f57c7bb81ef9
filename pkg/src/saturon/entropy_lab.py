"""Word complexity and separated-set counting on subshifts."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from .measures import (MeasureSpec, distance, entropy, measure_from_json, measure_to_json,
                       word_empirical)
from .shift_core import BudgetExceeded, ShiftSpace, full_shift, words_of_length

EXACT_MAX_N = 10
BRUTE_MAX_N = 14
NODE_BUDGET = 2_000_000


def word_complexity(space: ShiftSpace, n: int) -> tuple[int, float]:
    """(#admissible words of length n, log2(count) / n)."""
    if n < 1:
        raise ValueError("length must be positive")
    count = len(words_of_length(space, n))
    if space.kind == "full":
        return count, math.log2(space.alphabet)
    return count, math.log2(count) / n


def sft_count(matrix, n: int) -> int:
    """Sum of the entries of A^(n-1) in exact integer arithmetic."""
    A = [[int(v) for v in row] for row in matrix]
    k = len(A)
    vec = [1] * k
    for _ in range(n - 1):
        vec = [sum(A[i][j] * vec[j] for j in range(k)) for i in range(k)]
    return sum(vec)


@dataclass(frozen=True)
class Neighborhood:
    """Weak* ball F around a center, evaluated on depth-m cyclic empiricals."""
    center: MeasureSpec
    radius: float
    depth: int = 1
    terms: int = 3

    def contains(self, word, k: int) -> bool:
        m = min(self.depth, len(word))
        emp = word_empirical(word, m, k)
        return distance(emp, self.center, self.terms) <= self.radius


@dataclass(frozen=True)
class SeparationQuery:
    n: int
    agreement_depth: int
    delta: float
    neighborhood: Neighborhood | None = None

    def __post_init__(self):
        if self.agreement_depth < 1:
            raise ValueError("agreement depth must be at least 1")
        if not 0 < self.delta <= 1 or self.delta * self.n < 1:
            raise ValueError("need 0 < delta <= 1 and delta * n >= 1")

    @property
    def threshold(self) -> int:
        """Least number of separated times that meets delta * n."""
        return math.ceil(self.delta * self.n - 1e-12)

    def to_json(self) -> dict:
        out = {"n": self.n, "r": self.agreement_depth, "delta": self.delta}
        if self.neighborhood is not None:
            nb = self.neighborhood
            out["F"] = {"center": measure_to_json(nb.center), "radius": nb.radius,
                        "depth": nb.depth, "terms": nb.terms}
        return out


def candidate_words(space: ShiftSpace, q: SeparationQuery) -> np.ndarray:
    """Members of X_{n,F} as rows of a uint8 matrix."""
    if space.alphabet ** q.n > space.alphabet ** BRUTE_MAX_N:
        raise BudgetExceeded(f"n = {q.n} is beyond the brute-force budget")
    words = words_of_length(space, q.n)
    if q.neighborhood is not None:
        words = [w for w in words if q.neighborhood.contains(w, space.alphabet)]
    return np.array(words, dtype=np.uint8).reshape(len(words), q.n)


def window_signatures(words: np.ndarray, r: int, k: int) -> np.ndarray:
    """Code of the (possibly truncated) length-r window at every time j."""
    count, n = words.shape
    sig = np.zeros((count, n), dtype=np.int64)
    for j in range(n):
        for i in range(j, min(n, j + r)):
            sig[:, j] = sig[:, j] * k + words[:, i]
    return sig


def separation_matrix(words: np.ndarray, q: SeparationQuery, k: int) -> np.ndarray:
    """Boolean matrix: pairs separated at >= delta * n times."""
    return separation_pair_mask(words, words, q, k)


def greedy_separated(words: np.ndarray, q: SeparationQuery, k: int) -> list[int]:
    """Scan words in lexicographic order keeping each one separated from all kept."""
    sig = window_signatures(words, q.agreement_depth, k)
    kept: list[int] = []
    kept_sig = np.empty_like(sig)
    for i in range(len(sig)):
        c = len(kept)
        if c == 0 or ((kept_sig[:c] != sig[i]).sum(axis=1) >= q.threshold).all():
            kept_sig[c] = sig[i]
            kept.append(i)
    return kept


def _bitsets(adj: np.ndarray) -> list[int]:
    rows = np.packbits(adj, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in rows]


class _NodeBudget(Exception):
    pass


class _Done(Exception):
    pass


def translation_lp_bound(space: ShiftSpace, q: SeparationQuery) -> float | None:
    """Delsarte-style LP upper bound on the clique number of the separation
    graph, which on a full shift is a Cayley graph on Z_k^n.

    Separation of x and y depends only on z = x - y mod k, so the autocorrelation
    a_z of any separated set is a feasible point of
        max sum a_z  s.t.  a_0 = 1, a >= 0, a_z = 0 off the separating set,
                           sum_z a_z cos(2 pi <u, z> / k) >= 0 for every u.
    A neighborhood restriction only passes to an induced subgraph, so the
    bound stays valid there too. Returns None off full shifts or when the
    group is too large.
    """
    k, n = space.alphabet, q.n
    if space.kind != "full" or k ** n > 1 << 12:
        return None
    grid = np.indices((k,) * n).reshape(n, -1).T if n else np.zeros((1, 0), dtype=int)
    zero = np.zeros((1, n), dtype=np.uint8)
    sep = separation_pair_mask(zero, grid.astype(np.uint8), q, k)[0]
    sep[0] = True
    idx = np.flatnonzero(sep)
    chars = np.cos(2 * np.pi * (grid @ grid[idx].T % k) / k)
    res = linprog(-np.ones(len(idx)), A_ub=-chars, b_ub=np.zeros(len(grid)),
                  A_eq=(idx == 0)[None, :].astype(float), b_eq=[1.0],
                  bounds=[(0, None)] * len(idx), method="highs")
    if res.status != 0:
        return None
    return -res.fun


def separation_pair_mask(a: np.ndarray, b: np.ndarray, q: SeparationQuery, k: int) -> np.ndarray:
    """Boolean matrix over rows of a and b: separated at >= delta * n times."""
    sa = window_signatures(a, q.agreement_depth, k)
    sb = window_signatures(b, q.agreement_depth, k)
    apart = np.zeros((len(sa), len(sb)), dtype=np.int32)
    for j in range(sa.shape[1]):
        apart += sa[:, j][:, None] != sb[:, j][None, :]
    return apart >= q.threshold


def max_clique(adj: np.ndarray, lower: int = 0, node_budget: int = NODE_BUDGET,
               upper: int | None = None) -> int:
    """Exact maximum clique size by branch and bound with greedy coloring bounds.

    ``upper`` is an externally proven bound; the search stops once it is met.
    """
    n = adj.shape[0]
    if upper is not None and lower >= upper:
        return lower
    nbr = _bitsets(adj & ~np.eye(n, dtype=bool))
    best = [lower]
    nodes = [0]

    def color_order(cand: int):
        order, bounds = [], []
        color = 0
        uncolored = cand
        while uncolored:
            color += 1
            avail = uncolored
            while avail:
                v = (avail & -avail).bit_length() - 1
                avail &= ~(1 << v)
                avail &= ~nbr[v]
                uncolored &= ~(1 << v)
                order.append(v)
                bounds.append(color)
        return order, bounds

    def expand(size: int, cand: int):
        nodes[0] += 1
        if nodes[0] > node_budget:
            raise _NodeBudget
        order, bounds = color_order(cand)
        for v, b in zip(reversed(order), reversed(bounds)):
            if size + b <= best[0]:
                return
            new = cand & nbr[v]
            if new:
                expand(size + 1, new)
            elif size + 1 > best[0]:
                best[0] = size + 1
            if upper is not None and best[0] >= upper:
                raise _Done
            cand &= ~(1 << v)

    try:
        expand(0, (1 << n) - 1 if n else 0)
    except _Done:
        pass
    return best[0]


class SeparatedCount(NamedTuple):
    greedy: int
    exact: int | None
    candidates: int

    @property
    def best(self) -> int:
        return self.exact if self.exact is not None else self.greedy


def separated_bounds(space: ShiftSpace, q: SeparationQuery, exact: bool | None = None) -> SeparatedCount:
    """Greedy lower bound and, when n is small enough, the exact maximum."""
    words = candidate_words(space, q)
    k = space.alphabet
    if len(words) == 0:
        return SeparatedCount(0, 0, 0)
    greedy = len(greedy_separated(words, q, k))
    want_exact = q.n <= EXACT_MAX_N if exact is None else exact
    best = None
    if want_exact:
        lp = translation_lp_bound(space, q)
        upper = None if lp is None else math.floor(lp + 1e-7)
        try:
            best = max_clique(separation_matrix(words, q, k), lower=greedy, upper=upper)
        except _NodeBudget:
            best = None
    return SeparatedCount(greedy, best, len(words))


def separated_count(space: ShiftSpace, q: SeparationQuery) -> int:
    """Maximal (delta, n, r)-separated subset size of X_{n,F}; exact for n <= 10,
    otherwise the greedy lower bound."""
    return separated_bounds(space, q).best


def brute_force_separated(space: ShiftSpace, q: SeparationQuery) -> int:
    """Exhaustive subset search; only for tiny candidate sets."""
    words = candidate_words(space, q)
    adj = separation_matrix(words, q, space.alphabet)
    n = len(words)
    if n > 20:
        raise BudgetExceeded("brute force limited to 20 candidates")
    best = 0
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        if len(members) <= best:
            continue
        if all(adj[a, b] for i, a in enumerate(members) for b in members[i + 1:]):
            best = len(members)
    return best


@dataclass
class GrowthRow:
    n: int
    count: int
    threshold: float
    ratio: float
    method: str


def separation_growth_report(mu: MeasureSpec, eta: float, delta: float, r: int,
                             n_range: Sequence[int], F: Neighborhood | None = None,
                             space: ShiftSpace | None = None, exact: bool = False) -> list[GrowthRow]:
    """Table of separated counts against 2^{n (h_mu - eta)}; evidence only."""
    space = full_shift(mu.alphabet) if space is None else space
    h = entropy(mu)
    rows = []
    for n in n_range:
        q = SeparationQuery(n, r, delta, F)
        res = separated_bounds(space, q, exact=exact and n <= EXACT_MAX_N)
        count = res.best
        thr = 2.0 ** (n * (h - eta))
        rows.append(GrowthRow(n, count, thr, count / thr, "exact" if res.exact is not None else "greedy"))
    return rows


def growth_csv(rows: Sequence[GrowthRow]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "N", "threshold", "ratio", "method"])
    for row in rows:
        wr.writerow([row.n, row.count, repr(row.threshold), repr(row.ratio), row.method])
    return buf.getvalue()


def query_from_json(obj) -> SeparationQuery:
    if isinstance(obj, str):
        obj = json.loads(obj)
    F = None
    if "F" in obj:
        f = obj["F"]
        F = Neighborhood(measure_from_json(f["center"]), float(f["radius"]), int(f.get("depth", 1)),
                         int(f.get("terms", 3)))
    return SeparationQuery(int(obj["n"]), int(obj["r"]), float(obj["delta"]), F)

