"""Invariant measures, empirical word frequencies and the weak* metric.

Cylinder masses of all words of a given length are kept as flat vectors
indexed by the base-k code of the word, so the length-lex enumeration of the
test family is a concatenation of these vectors for lengths 0, 1, 2, ...
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .shift_core import ShiftError, SymbolicSeq, Word, as_word, code_word, word_code, word_str


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class Bernoulli:
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2 or (p < 0).any() or abs(p.sum() - 1) > 1e-12:
            raise MeasureError(f"not a probability vector: {self.probs}")

    @property
    def alphabet(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class Markov:
    matrix: tuple
    stationary: tuple

    def __post_init__(self):
        P = np.asarray(self.matrix, dtype=float)
        pi = np.asarray(self.stationary, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or (P < 0).any():
            raise MeasureError("transition matrix must be square and nonnegative")
        if np.abs(P.sum(axis=1) - 1).max() > 1e-12:
            raise MeasureError("transition rows must sum to 1")
        if pi.shape != (P.shape[0],) or (pi < 0).any() or abs(pi.sum() - 1) > 1e-12:
            raise MeasureError("stationary vector must be a probability vector")
        if np.abs(pi @ P - pi).max() > 1e-10:
            raise MeasureError("stationary vector is not invariant")

    @property
    def alphabet(self) -> int:
        return len(self.stationary)


@dataclass(frozen=True)
class Convex:
    components: tuple  # of (weight, measure)

    def __post_init__(self):
        if not self.components:
            raise MeasureError("convex combination needs components")
        w = np.array([c[0] for c in self.components], dtype=float)
        if (w <= 0).any() or abs(w.sum() - 1) > 1e-12:
            raise MeasureError("convex weights must be positive and sum to 1")

    @property
    def alphabet(self) -> int:
        return max(spec.alphabet for _, spec in self.components)


MeasureSpec = Union[Bernoulli, Markov, Convex]


def bernoulli(*probs) -> Bernoulli:
    """Bernoulli measure; a single float p means the binary vector (1-p, p)."""
    if len(probs) == 1 and np.ndim(probs[0]) == 0:
        p = float(probs[0])
        return Bernoulli((1.0 - p, p))
    if len(probs) == 1:
        probs = tuple(probs[0])
    return Bernoulli(tuple(float(v) for v in probs))


def stationary_vector(P) -> np.ndarray:
    """Solve pi P = pi, sum(pi) = 1 by least squares on the stacked system."""
    P = np.asarray(P, dtype=float)
    k = P.shape[0]
    A = np.vstack([P.T - np.eye(k), np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi[pi < 1e-14] = 0.0
    return pi / pi.sum()


def markov(P, stationary=None) -> Markov:
    P = np.asarray(P, dtype=float)
    pi = stationary_vector(P) if stationary is None else np.asarray(stationary, dtype=float)
    return Markov(tuple(tuple(float(v) for v in row) for row in P), tuple(float(v) for v in pi))


def convex(*pairs) -> MeasureSpec:
    """Convex combination from (weight, measure) pairs; zero weights are dropped."""
    kept = tuple((float(w), s) for w, s in pairs if w > 0)
    if len(kept) == 1:
        return kept[0][1]
    total = sum(w for w, _ in kept)
    return Convex(tuple((w / total, s) for w, s in kept))


def mix(mu: MeasureSpec, nu: MeasureSpec, theta: float) -> MeasureSpec:
    """theta * mu + (1 - theta) * nu."""
    if not 0.0 <= theta <= 1.0:
        raise MeasureError("mixing parameter outside [0, 1]")
    return convex((theta, mu), (1.0 - theta, nu))


def mass_vectors(mu: MeasureSpec, depth: int, k: int | None = None) -> list[np.ndarray]:
    """Cylinder masses for every word length 0..depth, padded to alphabet k."""
    k = mu.alphabet if k is None else k
    if k < mu.alphabet:
        raise MeasureError("alphabet smaller than the measure's")
    if isinstance(mu, Convex):
        out = [np.zeros(k ** n) for n in range(depth + 1)]
        for w, spec in mu.components:
            for acc, v in zip(out, mass_vectors(spec, depth, k)):
                acc += w * v
        return out
    if isinstance(mu, Bernoulli):
        p = np.zeros(k)
        p[: mu.alphabet] = mu.probs
        out = [np.ones(1)]
        for _ in range(depth):
            out.append(np.outer(out[-1], p).ravel())
        return out
    P = np.zeros((k, k))
    a = mu.alphabet
    P[:a, :a] = mu.matrix
    pi = np.zeros(k)
    pi[:a] = mu.stationary
    out = [np.ones(1)]
    if depth >= 1:
        out.append(pi.copy())
    for n in range(2, depth + 1):
        prev = out[-1]
        last = np.arange(prev.size) % k
        out.append((prev[:, None] * P[last]).ravel())
    return out


def cylinder_mass(mu: MeasureSpec, w) -> float:
    w = as_word(w)
    if isinstance(mu, Convex):
        return float(sum(c * cylinder_mass(s, w) for c, s in mu.components))
    if not w:
        return 1.0
    if any(s >= mu.alphabet for s in w):
        return 0.0
    if isinstance(mu, Bernoulli):
        return float(np.prod([mu.probs[s] for s in w]))
    m = mu.stationary[w[0]]
    for a, b in zip(w, w[1:]):
        m *= mu.matrix[a][b]
    return float(m)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Depth-m word frequencies over a sample of n positions."""
    depth: int
    alphabet: int
    counts: np.ndarray
    n: int

    def __post_init__(self):
        if self.counts.shape != (self.alphabet ** self.depth,):
            raise MeasureError("count vector does not match depth and alphabet")
        if self.n <= 0 or int(self.counts.sum()) != self.n:
            raise MeasureError("counts must sum to the sample length")

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def freq(self) -> dict[str, float]:
        f = self.frequencies
        return {word_str(code_word(c, self.depth, self.alphabet)): float(f[c])
                for c in np.flatnonzero(self.counts)}

    def marginal(self, length: int) -> np.ndarray:
        """Frequencies of the length-``length`` prefixes of the sampled windows."""
        if length > self.depth:
            raise MeasureError("marginal deeper than the table")
        f = self.frequencies.reshape(self.alphabet ** length, -1)
        return f.sum(axis=1)

    def support(self, threshold: float = 0.0) -> frozenset:
        f = self.frequencies
        return frozenset(code_word(c, self.depth, self.alphabet) for c in np.flatnonzero(f > threshold))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["depth", "n"])
        wr.writerow([self.depth, self.n])
        wr.writerow(["word", "frequency"])
        for w, v in self.freq.items():
            wr.writerow([w, repr(v)])
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str, alphabet: int) -> "EmpiricalMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        depth, n = int(rows[1][0]), int(rows[1][1])
        counts = np.zeros(alphabet ** depth, dtype=np.int64)
        for w, v in rows[3:]:
            counts[word_code(as_word(w), alphabet)] = round(float(v) * n)
        return EmpiricalMeasure(depth, alphabet, counts, n)


def window_codes(arr: np.ndarray, m: int, k: int, count: int) -> np.ndarray:
    """Base-k codes of arr[j:j+m] for j < count (needs count + m - 1 symbols)."""
    dtype = np.int64 if k ** m > 2 ** 31 else np.int32
    codes = np.zeros(count, dtype=dtype)
    for i in range(m):
        codes *= k
        codes += arr[i: i + count]
    return codes


def counts_of(arr: np.ndarray, m: int, k: int, count: int, chunk: int = 1 << 22) -> np.ndarray:
    """Word counts over positions [0, count) computed in memory-bounded chunks."""
    total = np.zeros(k ** m, dtype=np.int64)
    for start in range(0, count, chunk):
        stop = min(count, start + chunk)
        codes = window_codes(arr[start: stop + m - 1], m, k, stop - start)
        total += np.bincount(codes, minlength=k ** m)
    return total


def empirical(x: SymbolicSeq, n: int, m: int) -> EmpiricalMeasure:
    """Frequencies of length-m words starting at positions 0..n-1."""
    return window_empirical(x, 0, n, m)


def window_empirical(x: SymbolicSeq, a: int, b: int, m: int) -> EmpiricalMeasure:
    """Frequencies of length-m words starting at positions a..b-1."""
    if m < 1 or b - a < m or a < 0:
        raise ShiftError("window must satisfy 0 <= a and b - a >= m >= 1")
    arr = x.prefix(b + m - 1)
    k = x.space.alphabet
    return EmpiricalMeasure(m, k, counts_of(arr[a:], m, k, b - a), b - a)


def word_empirical(w, m: int, k: int) -> EmpiricalMeasure:
    """Cyclic depth-m frequencies of a finite word (the measure of w repeated)."""
    arr = np.asarray(as_word(w) if not isinstance(w, np.ndarray) else w, dtype=np.uint8)
    n = arr.size
    if n == 0:
        raise ShiftError("empty word has no empirical measure")
    reps = -(-(m - 1) // n) if m > 1 else 0
    ext = np.concatenate([arr] + [arr] * reps) if reps else arr
    return EmpiricalMeasure(m, k, counts_of(ext, m, k, n), n)


def terms_for_depth(depth: int, k: int = 2) -> int:
    """Number of test functions covering all words of length <= depth."""
    return sum(k ** n for n in range(depth + 1))


def depth_for_terms(terms: int, k: int = 2) -> int:
    """Longest word length touched by the first ``terms`` test functions."""
    depth, covered = 0, 1
    while covered < terms:
        depth += 1
        covered += k ** depth
    return depth


class Distance(NamedTuple):
    value: float
    tail_bound: float
    terms: int


Measurable = Union[Bernoulli, Markov, Convex, EmpiricalMeasure]


def integral_vector(xi: Measurable, terms: int, k: int) -> np.ndarray:
    """Integrals of the first ``terms`` cylinder indicators in length-lex order."""
    depth = depth_for_terms(terms, k)
    if isinstance(xi, EmpiricalMeasure):
        if xi.alphabet != k:
            raise MeasureError("empirical alphabet mismatch")
        parts = [xi.marginal(n) for n in range(depth + 1)]
    else:
        parts = mass_vectors(xi, depth, k)
    return np.concatenate(parts)[:terms]


def weight_vector(terms: int) -> np.ndarray:
    return 2.0 ** -(np.arange(terms, dtype=float) + 1.0)


def weak_star_distance(xi: Measurable, tau: Measurable, terms: int) -> Distance:
    """Truncated series metric with the 2^-J tail bound attached.

    Empirical inputs that are too shallow for the requested number of terms
    lower it to the largest count their depth supports.
    """
    if terms < 1:
        raise MeasureError("need at least one term")
    k = max(xi.alphabet, tau.alphabet)
    for side in (xi, tau):
        if isinstance(side, EmpiricalMeasure):
            terms = min(terms, terms_for_depth(side.depth, k))
    a = integral_vector(xi, terms, k)
    b = integral_vector(tau, terms, k)
    value = float(np.dot(weight_vector(terms), np.abs(a - b)))
    return Distance(value, 2.0 ** -terms, terms)


def distance(xi: Measurable, tau: Measurable, terms: int) -> float:
    return weak_star_distance(xi, tau, terms).value


def _plogp(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def entropy(mu: MeasureSpec) -> float:
    """Metric entropy in bits per symbol."""
    if isinstance(mu, Bernoulli):
        return _plogp(mu.probs)
    if isinstance(mu, Markov):
        return float(sum(pi * _plogp(row) for pi, row in zip(mu.stationary, mu.matrix)))
    return float(sum(w * entropy(s) for w, s in mu.components))


def support_words(mu: MeasureSpec, m: int) -> frozenset:
    if m < 1:
        raise MeasureError("depth must be at least 1")
    k = mu.alphabet
    masses = mass_vectors(mu, m, k)[m]
    return frozenset(code_word(int(c), m, k) for c in np.flatnonzero(masses > 0))


def measure_to_json(mu: MeasureSpec) -> dict:
    if isinstance(mu, Bernoulli):
        return {"variant": "bernoulli", "probs": list(mu.probs)}
    if isinstance(mu, Markov):
        return {"variant": "markov", "matrix": [list(r) for r in mu.matrix],
                "stationary": list(mu.stationary)}
    return {"variant": "convex",
            "components": [{"weight": w, "measure": measure_to_json(s)} for w, s in mu.components]}


def measure_from_json(obj) -> MeasureSpec:
    if isinstance(obj, str):
        obj = json.loads(obj)
    v = obj["variant"]
    if v == "bernoulli":
        return Bernoulli(tuple(float(p) for p in obj["probs"]))
    if v == "markov":
        return markov(obj["matrix"], obj.get("stationary"))
    if v == "convex":
        return Convex(tuple((float(c["weight"]), measure_from_json(c["measure"]))
                            for c in obj["components"]))
    raise MeasureError(f"unknown measure variant {v!r}")


def parse_measure(text: str) -> MeasureSpec:
    """Parse compact forms: ``bernoulli:0.7``, ``bernoulli:0.2,0.3,0.5``,
    ``markov:0.9,0.1;0.5,0.5`` or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        return measure_from_json(text)
    kind, _, body = text.partition(":")
    kind = kind.lower()
    try:
        if kind == "bernoulli":
            vals = [float(v) for v in body.split(",")]
            return bernoulli(vals[0]) if len(vals) == 1 else bernoulli(vals)
        if kind == "markov":
            rows = [[float(v) for v in r.split(",")] for r in body.split(";")]
            return markov(rows)
    except ValueError as exc:
        raise MeasureError(f"cannot parse measure {text!r}: {exc}") from exc
    raise MeasureError(f"cannot parse measure {text!r}")


def sample(mu: MeasureSpec, n: int, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """Draw ``count`` independent length-n words from mu as a (count, n) array.

    Convex combinations are realized by concatenating component samples with
    lengths apportioned by weight, which is what a typical word of a
    non-ergodic mixture looks like.
    """
    if isinstance(mu, Bernoulli):
        return rng.choice(mu.alphabet, size=(count, n), p=mu.probs).astype(np.uint8)
    if isinstance(mu, Markov):
        P = np.asarray(mu.matrix)
        cum = np.cumsum(P, axis=1)
        cum[:, -1] = 1.0
        out = np.empty((count, n), dtype=np.uint8)
        if n == 0:
            return out
        out[:, 0] = rng.choice(mu.alphabet, size=count, p=mu.stationary)
        u = rng.random((count, n))
        for j in range(1, n):
            rows = cum[out[:, j - 1]]
            out[:, j] = (u[:, j, None] > rows).sum(axis=1)
        return out
    lengths = apportion([w for w, _ in mu.components], n)
    parts = [sample(s, ln, rng, count) for (_, s), ln in zip(mu.components, lengths) if ln]
    return np.concatenate(parts, axis=1) if parts else np.empty((count, 0), dtype=np.uint8)


def apportion(weights: Sequence[float], n: int) -> list[int]:
    """Largest-remainder integer split of n proportional to weights."""
    w = np.asarray(weights, dtype=float)
    raw = w / w.sum() * n
    base = np.floor(raw).astype(int)
    short = n - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return [int(v) for v in base]


def two_cylinder_positive(mu: MeasureSpec) -> np.ndarray:
    """Boolean k x k matrix of transitions with positive mass under mu."""
    k = mu.alphabet
    return (mass_vectors(mu, 2, k)[2] > 0).reshape(k, k)

