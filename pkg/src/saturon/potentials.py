"""Potentials, Birkhoff sums, ratio functionals and the level-set solver."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .measures import Convex, MeasureSpec, mass_vectors, mix, sample
from .shift_core import SymbolicSeq, as_word, code_word, word_code


class PotentialError(ValueError):
    pass


class OutsideInterval(PotentialError):
    pass


class DegenerateDenominator(PotentialError):
    pass


@dataclass(frozen=True, eq=False)
class LocallyConstant:
    """phi(x) = table[code of x_0 .. x_{r-1}]."""
    depth: int
    alphabet: int
    table: np.ndarray

    def __post_init__(self):
        if self.depth < 1 or self.table.shape != (self.alphabet ** self.depth,):
            raise PotentialError("value table must have one entry per word of the depth")

    def values(self, arr: np.ndarray, n: int) -> np.ndarray:
        codes = np.zeros(n, dtype=np.int64)
        for i in range(self.depth):
            codes = codes * self.alphabet + arr[i: i + n]
        return self.table[codes]


@dataclass(frozen=True, eq=False)
class MatrixCocycle:
    """phi_n(x) = log ||A(x_{n-1}) ... A(x_0)|| (operator 2-norm, natural log)."""
    matrices: tuple  # indexed by symbol

    def __post_init__(self):
        for A in self.matrices:
            A = np.asarray(A, dtype=float)
            if A.shape != (2, 2) or abs(np.linalg.det(A)) < 1e-300:
                raise PotentialError("cocycle matrices must be nonsingular 2x2")

    @property
    def alphabet(self) -> int:
        return len(self.matrices)

    @property
    def depth(self) -> int:
        return 1


Potential = Union[LocallyConstant, MatrixCocycle]


def indicator(word, alphabet: int = 2) -> LocallyConstant:
    """Indicator of the cylinder of ``word``."""
    w = as_word(word)
    table = np.zeros(alphabet ** len(w))
    table[word_code(w, alphabet)] = 1.0
    return LocallyConstant(len(w), alphabet, table)


def constant(c: float, alphabet: int = 2) -> LocallyConstant:
    return LocallyConstant(1, alphabet, np.full(alphabet, float(c)))


def cocycle(*matrices) -> MatrixCocycle:
    return MatrixCocycle(tuple(np.asarray(A, dtype=float) for A in matrices))


def birkhoff_sum(x: SymbolicSeq, phi: Potential, n: int) -> float:
    arr = x.prefix(n + phi.depth - 1)
    if isinstance(phi, LocallyConstant):
        return float(phi.values(arr, n).sum())
    return cocycle_log_norm(phi, arr[:n])


def cocycle_log_norm(phi: MatrixCocycle, symbols: np.ndarray) -> float:
    """log of the norm of the ordered product, renormalizing as it goes."""
    mats = [np.asarray(A, dtype=float) for A in phi.matrices]
    M = np.eye(2)
    acc = 0.0
    for s in symbols:
        M = mats[s] @ M
        scale = np.abs(M).max()
        M /= scale
        acc += math.log(scale)
    return acc + math.log(np.linalg.norm(M, 2))


def running_sums(x: SymbolicSeq, phi: LocallyConstant, n: int) -> np.ndarray:
    """Cumulative Birkhoff sums S_1 phi .. S_n phi."""
    arr = x.prefix(n + phi.depth - 1)
    return np.cumsum(phi.values(arr, n))


def integral(phi: LocallyConstant, mu: MeasureSpec) -> float:
    k = max(phi.alphabet, mu.alphabet)
    masses = mass_vectors(mu, phi.depth, k)[phi.depth]
    table = phi.table
    if k > phi.alphabet:
        # symbols beyond the potential's alphabet carry value 0
        table = np.zeros(masses.size)
        for code, v in enumerate(phi.table):
            table[word_code(code_word(code, phi.depth, phi.alphabet), k)] = v
    return float(np.dot(table, masses))


@dataclass
class ExponentEstimate:
    value: float
    stderr: float
    length: int
    converged: bool


def _ergodic_parts(mu: MeasureSpec):
    if isinstance(mu, Convex):
        for w, s in mu.components:
            for w2, s2 in _ergodic_parts(s):
                yield w * w2, s2
    else:
        yield 1.0, mu


def cocycle_exponent(phi: MatrixCocycle, mu: MeasureSpec, seed: int = 0, samples: int = 32,
                     max_length: int = 1 << 12, tol: float = 1e-6) -> ExponentEstimate:
    """Monte-Carlo estimate of lim (1/n) E_mu[phi_n], doubling n until stable."""
    rng = np.random.default_rng(seed)
    prev = None
    n = 16
    while True:
        vals = []
        for w, part in _ergodic_parts(mu):
            words = sample(part, n, rng, samples)
            est = np.array([cocycle_log_norm(phi, row) / n for row in words])
            vals.append((w, est.mean(), est.std(ddof=1) / math.sqrt(samples) if samples > 1 else 0.0))
        value = sum(w * m for w, m, _ in vals)
        err = math.sqrt(sum((w * e) ** 2 for w, _, e in vals))
        if prev is not None and abs(value - prev) < tol:
            return ExponentEstimate(value, err, n, True)
        if n >= max_length:
            return ExponentEstimate(value, err, n, False)
        prev = value
        n *= 2


class RatioFunctional:
    """alpha(mu) = ∫phi dmu / ∫psi dmu with a positive denominator."""

    def __init__(self, phi: Potential, psi: LocallyConstant | None = None, seed: int = 0):
        if psi is None:
            psi = constant(1.0, phi.alphabet)
        if isinstance(psi, MatrixCocycle):
            raise DegenerateDenominator("cocycles are not allowed as denominators")
        if psi.table.min() <= 0:
            raise DegenerateDenominator("denominator potential must be positive")
        self.phi = phi
        self.psi = psi
        self.seed = seed

    def numerator(self, mu: MeasureSpec) -> float:
        if isinstance(self.phi, MatrixCocycle):
            est = cocycle_exponent(self.phi, mu, seed=self.seed)
            if not est.converged:
                warnings.warn(f"cocycle exponent not converged (stderr {est.stderr:.2e})")
            return est.value
        return integral(self.phi, mu)

    def value(self, mu: MeasureSpec) -> float:
        return self.numerator(mu) / integral(self.psi, mu)

    def running(self, x: SymbolicSeq, n: int) -> np.ndarray:
        """(S_j phi) / (S_j psi) for j = 1..n."""
        if isinstance(self.phi, MatrixCocycle):
            raise PotentialError("running ratios need a locally constant numerator")
        return running_sums(x, self.phi, n) / running_sums(x, self.psi, n)

    def to_json(self) -> dict:
        return {"phi": potential_to_json(self.phi), "psi": potential_to_json(self.psi)}


class ProductFunctional:
    """mu -> ∫phi dmu * ∫psi dmu; along orbits (1/n^2) S_n phi S_n psi."""

    def __init__(self, phi: LocallyConstant, psi: LocallyConstant):
        self.phi = phi
        self.psi = psi

    def value(self, mu: MeasureSpec) -> float:
        return integral(self.phi, mu) * integral(self.psi, mu)

    def running(self, x: SymbolicSeq, n: int) -> np.ndarray:
        j = np.arange(1, n + 1, dtype=float)
        return running_sums(x, self.phi, n) * running_sums(x, self.psi, n) / j ** 2


def alpha_value(mu: MeasureSpec, r: RatioFunctional) -> float:
    return r.value(mu)


def check_conditions(r: RatioFunctional, mu: MeasureSpec, nu: MeasureSpec, grid_size: int = 33) -> dict:
    """Grid evidence for [A.1] strict monotonicity, [A.2] constancy and
    [A.3] no flat stretch of beta(theta) = alpha(theta mu + (1 - theta) nu)."""
    if grid_size < 16:
        raise PotentialError("grid needs at least 16 samples")
    thetas = np.linspace(0.0, 1.0, grid_size)
    beta = np.array([r.value(mix(mu, nu, float(t))) for t in thetas])
    steps = np.diff(beta)
    ends_differ = abs(beta[-1] - beta[0]) > 1e-9
    a1 = bool(ends_differ and ((steps > 0).all() or (steps < 0).all()))
    a2 = bool(not ends_differ and beta.max() - beta.min() < 1e-9)
    a3 = bool((np.abs(steps) > 1e-12).all())
    return {"A1": a1, "A2": a2, "A3": a3, "grid_size": grid_size, "evidence": "numerical grid",
            "beta": beta.tolist()}


def solve_theta(r: RatioFunctional, mu: MeasureSpec, nu: MeasureSpec, a: float) -> float:
    """theta in (0, 1) with alpha(theta mu + (1 - theta) nu) = a, in closed form."""
    if not isinstance(r.phi, LocallyConstant):
        raise PotentialError("closed-form solve needs locally constant potentials")
    lo, hi = sorted((r.value(mu), r.value(nu)))
    if not lo < a < hi:
        raise OutsideInterval(f"a = {a} is not strictly between {lo} and {hi}")
    cm = integral(r.phi, mu) - a * integral(r.psi, mu)
    cn = integral(r.phi, nu) - a * integral(r.psi, nu)
    if cn == cm:
        raise DegenerateDenominator("linear equation for theta is degenerate")
    return cn / (cn - cm)


def level_interval(functional, pool: Sequence[MeasureSpec]) -> tuple[float, float]:
    """Inner approximation of the range of the functional over the convex hull."""
    if not pool:
        raise PotentialError("measure pool is empty")
    vals = [functional.value(m) for m in pool]
    for i in range(len(pool)):
        for j in range(i + 1, len(pool)):
            vals.append(functional.value(mix(pool[i], pool[j], 0.5)))
    return min(vals), max(vals)


def potential_to_json(phi: Potential) -> dict:
    if isinstance(phi, LocallyConstant):
        return {"variant": "locally_constant", "depth": phi.depth, "alphabet": phi.alphabet,
                "table": phi.table.tolist()}
    return {"variant": "cocycle", "matrices": [np.asarray(A).tolist() for A in phi.matrices]}


def potential_from_json(obj) -> Potential:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if obj["variant"] == "locally_constant":
        return LocallyConstant(int(obj["depth"]), int(obj["alphabet"]), np.asarray(obj["table"], dtype=float))
    if obj["variant"] == "cocycle":
        return cocycle(*obj["matrices"])
    raise PotentialError(f"unknown potential variant {obj['variant']!r}")

