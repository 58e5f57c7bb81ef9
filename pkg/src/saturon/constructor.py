"""Manufacture points whose empirical measures follow a prescribed target path.

A construction runs in stages. Stage k repeats N_k typical words of length
n_k for the target alpha_k, then (when transitive) appends every admissible
word of length k, each repeated l_k times. The stage sizes grow fast enough
that at the end M_k of stage k the empirical measure sits near alpha_k, and
each stage boundary carries a recomputable distance certificate.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .measures import (Bernoulli, MeasureSpec, apportion, bernoulli, distance, empirical,
                       mass_vectors, measure_to_json, mix, sample, support_words,
                       terms_for_depth, two_cylinder_positive, word_empirical)
from .potentials import RatioFunctional, constant, solve_theta
from .shift_core import (ShiftSpace, SymbolicSeq, as_word, connector_table, full_shift,
                         sequence_admissible, word_str, words_of_length)

TOTAL_CAP = 1 << 62
POOL_SIZE = 64
CERT_DEPTH = 3
SAMPLE_RETRIES = 32


class ConstructionError(ValueError):
    pass


class UnreachableTolerance(ConstructionError):
    pass


class ScheduleOverflow(ConstructionError):
    pass


class SupportPreconditionViolated(ConstructionError):
    pass


class EqualAlpha(ConstructionError):
    pass


# ---------------------------------------------------------------- targets

@dataclass(frozen=True)
class TargetSpec:
    """Vertices of K and the target path alpha_1, alpha_2, ... through K.

    ``at(j)`` is 1-based and wraps around once the stored path runs out.
    """
    generators: tuple
    path: tuple
    labels: tuple = ()

    def __post_init__(self):
        if not self.generators or not self.path:
            raise ConstructionError("targets need generators and a nonempty path")

    def at(self, j: int) -> MeasureSpec:
        return self.path[(j - 1) % len(self.path)]

    def label(self, j: int) -> str:
        if not self.labels:
            return f"alpha_{j}"
        return self.labels[(j - 1) % len(self.labels)]

    @property
    def alphabet(self) -> int:
        return max(g.alphabet for g in self.generators)

    def to_json(self) -> dict:
        return {"generators": [measure_to_json(g) for g in self.generators],
                "path": [measure_to_json(a) for a in self.path],
                "labels": list(self.labels)}


def _between(a: MeasureSpec, b: MeasureSpec, t: float) -> MeasureSpec:
    """(1 - t) a + t b, returning the endpoints themselves at t = 0 or 1."""
    if t <= 0:
        return a
    if t >= 1:
        return b
    return mix(a, b, 1.0 - t)


def enumerate_K(generators: Sequence[MeasureSpec], cycles: int = 3) -> TargetSpec:
    """Walk the closed polygon through the generators, refining each cycle.

    Cycle 0 visits the vertices only; cycle c >= 1 walks every edge with step
    2^-c in the convex parameter. Every vertex appears in every cycle.
    """
    gens = tuple(generators)
    if not gens:
        raise ConstructionError("need at least one generator")
    if cycles < 0:
        raise ConstructionError("cycles must be nonnegative")
    path, labels = [], []
    v = len(gens)
    for c in range(cycles + 1):
        if v == 1:
            path.append(gens[0])
            labels.append("v0")
            continue
        steps = 1 << c
        for i in range(v):
            a, b = gens[i], gens[(i + 1) % v]
            for s in range(steps):
                path.append(_between(a, b, s / steps))
                labels.append(f"v{i}" if s == 0 else f"v{i}->v{(i + 1) % v}@{s}/{steps}")
    return TargetSpec(gens, tuple(path), tuple(labels))


# ----------------------------------------------------------- typical words

def _repair_counts(w: np.ndarray, mu: MeasureSpec, k: int, space: ShiftSpace | None) -> np.ndarray:
    """Move single-symbol counts toward their expected values, deterministically.

    A position is rewritten only if both neighbouring 2-words keep positive
    mass under mu (and stay admissible), so the support is never widened.
    """
    w = w.copy()
    n = w.size
    p1 = mass_vectors(mu, 1, k)[1]
    target = np.array(apportion(p1, n))
    pos2 = np.zeros((k, k), dtype=bool)
    pos2[: mu.alphabet, : mu.alphabet] = two_cylinder_positive(mu)
    adj = space.adjacency.astype(bool) if space is not None and space.kind == "sft" else None
    for _ in range(n):
        counts = np.bincount(w, minlength=k)
        excess = counts - target
        if not (excess > 0).any():
            break
        moved = False
        for a in np.flatnonzero(excess > 0):
            for b in np.flatnonzero(excess < 0):
                ok = np.flatnonzero(w == a)
                good = np.ones(ok.size, dtype=bool)
                has_left = ok > 0
                has_right = ok < n - 1
                good[has_left] &= pos2[w[ok[has_left] - 1], b]
                good[has_right] &= pos2[b, w[ok[has_right] + 1]]
                if adj is not None:
                    good[has_left] &= adj[w[ok[has_left] - 1], b]
                    good[has_right] &= adj[b, w[ok[has_right] + 1]]
                hits = ok[good]
                if hits.size:
                    w[hits[0]] = b
                    moved = True
                    break
            if moved:
                break
        if not moved:
            break
    return w


def typical_word(mu: MeasureSpec, n: int, zeta: float, seed, depth: int | None = None,
                 space: ShiftSpace | None = None) -> np.ndarray:
    """A word of length n whose cyclic depth-d empirical is within zeta of mu.

    d defaults to ceil(log2(1/zeta)). Words are sampled from mu with a bounded
    number of retries, and the best one is then repaired toward the expected
    symbol counts. Returns a uint8 array.
    """
    if n < 1 or zeta <= 0:
        raise ConstructionError("need n >= 1 and zeta > 0")
    d = max(1, math.ceil(math.log2(1.0 / zeta) - 1e-12)) if depth is None else depth
    if zeta < 2 * d / n:
        raise UnreachableTolerance(f"zeta = {zeta} is below the floor 2*{d}/{n} for depth {d}")
    k = max(mu.alphabet, space.alphabet if space is not None else 0)
    terms = terms_for_depth(d, k)
    rng = np.random.default_rng(seed)
    best, best_d = None, math.inf
    for _ in range(SAMPLE_RETRIES):
        w = sample(mu, n, rng)[0]
        if space is not None and not sequence_admissible(space, w):
            continue
        dist = distance(word_empirical(w, d, k), mu, terms)
        if dist <= zeta:
            return w
        if dist < best_d:
            best, best_d = w, dist
    if best is None:
        raise UnreachableTolerance("no admissible sample; measure and space disagree")
    fixed = _repair_counts(best, mu, k, space)
    dist = distance(word_empirical(fixed, d, k), mu, terms)
    if dist > zeta or (space is not None and not sequence_admissible(space, fixed)):
        raise UnreachableTolerance(f"best word stays at distance {dist:.4g} > {zeta}")
    return fixed


# ---------------------------------------------------------------- schedule

@dataclass
class Stage:
    k: int
    zeta_exp: int  # zeta_k = 2^-zeta_exp
    eps_exp: int
    n: int
    N: int
    l: int
    L: int
    t: int
    delta: list  # words as strings
    total: int  # S_k = N n + t l L
    running: int  # M_k

    @property
    def zeta(self) -> float:
        return 2.0 ** -self.zeta_exp

    @property
    def eps(self) -> float:
        return 2.0 ** -self.eps_exp

    @property
    def transit_length(self) -> int:
        return self.t * self.l * self.L


def _inequalities(stages: list[Stage], dominance: dict) -> list[dict]:
    """Both growth conditions (and any dominance requests) as exact integer checks."""
    rows = []
    prev = 0
    for i, st in enumerate(stages):
        z = st.zeta_exp
        if i + 1 < len(stages):
            nxt = stages[i + 1]
            lhs = (nxt.n + nxt.transit_length) << z
            rows.append({"k": st.k, "kind": "next-block", "lhs": lhs, "rhs": st.total,
                         "holds": lhs <= st.total})
        lhs = prev << z
        rows.append({"k": st.k, "kind": "past-share", "lhs": lhs, "rhs": st.running,
                     "holds": lhs <= st.running})
        factor = int(dominance.get(st.k, 0))
        if factor:
            lhs = prev * factor
            rows.append({"k": st.k, "kind": f"dominance-{factor}", "lhs": lhs, "rhs": st.total,
                         "holds": lhs <= st.total})
        prev = st.running
    return rows


@dataclass
class Schedule:
    stages: list
    gap: int
    cert_depth: int
    transitive: bool
    targets: TargetSpec
    dominance: dict = field(default_factory=dict)
    inequalities: list = field(default_factory=list)
    certificate: list = field(default_factory=list)

    @property
    def boundaries(self) -> list[int]:
        return [st.running for st in self.stages]

    @property
    def total(self) -> int:
        return self.stages[-1].running

    def verify(self) -> bool:
        """Recompute every stored quantity and inequality in integer arithmetic."""
        prev = 0
        prev_n = prev_N = 0
        for st in self.stages:
            if st.total != st.N * st.n + st.t * st.l * st.L or st.running != prev + st.total:
                return False
            if st.n <= prev_n or st.N <= prev_N or st.t != len(st.delta):
                return False
            if not st.zeta_exp < st.eps_exp:
                return False
            prev, prev_n, prev_N = st.running, st.n, st.N
        exps = [st.zeta_exp for st in self.stages]
        if exps != sorted(set(exps)):
            return False
        fresh = _inequalities(self.stages, self.dominance)
        return fresh == self.inequalities and all(r["holds"] for r in fresh)

    def to_json(self) -> str:
        body = {
            "gap": self.gap, "cert_depth": self.cert_depth, "transitive": self.transitive,
            "dominance": {str(k): v for k, v in sorted(self.dominance.items())},
            "targets": self.targets.to_json(),
            "stages": [dict(asdict(st), zeta=st.zeta, eps=st.eps,
                            target=self.targets.label(st.k)) for st in self.stages],
            "inequalities": self.inequalities,
            "certificate": [asdict(c) for c in self.certificate],
        }
        return json.dumps(body, indent=1, sort_keys=True)

    def certificate_csv(self) -> str:
        lines = ["k,M_k,distance,bound,nominal,slack,holds"]
        for c in self.certificate:
            lines.append(f"{c.k},{c.M},{c.distance!r},{c.bound!r},{c.nominal!r},{c.slack!r},{int(c.holds)}")
        return "\n".join(lines) + "\n"


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def build_schedule(targets: TargetSpec, stages: int, transitive: bool, space: ShiftSpace | None = None,
                   cert_depth: int = CERT_DEPTH, dominance: dict | None = None,
                   min_total: int = 0) -> Schedule:
    """Smallest block lengths and repetition counts meeting the growth conditions.

    With zeta_k = 2^-k and S_k the length of stage k, the conditions are
        n_{k+1} + t_{k+1} l_{k+1} L_{k+1} <= zeta_k S_k   and   M_{k-1} <= zeta_k M_k.
    ``dominance`` maps a stage to a factor f requesting S_k >= f M_{k-1};
    ``min_total`` stretches the last stage so that M_K >= min_total.
    """
    if stages < 1:
        raise ConstructionError("need at least one stage")
    space = full_shift(targets.alphabet) if space is None else space
    if space.kind == "beta":
        raise ConstructionError("constructions need a full shift or a mixing SFT")
    gap = space.gap_bound
    dominance = {int(k): int(v) for k, v in (dominance or {}).items()}
    plan = []
    prev_n = 0
    for k in range(1, stages + 1):
        delta = [word_str(w) for w in words_of_length(space, k)] if transitive else []
        depth = max(k, cert_depth)
        core = max(2 * depth << k, 1)  # typical word floor n >= 2 d / zeta
        n = max(core + gap, prev_n + 1)
        t = len(delta)
        plan.append((k, n, t, delta))
        prev_n = n
    out: list[Stage] = []
    prev_running = 0
    prev_N = 0
    for i, (k, n, t, delta) in enumerate(plan):
        l, L = k, k + gap
        T = t * l * L
        need = 0
        if i + 1 < len(plan):
            nk, nn, nt, _ = plan[i + 1]
            need = max(need, (nn + nt * (k + 1) * (k + 1 + gap)) << k)
        need = max(need, ((1 << k) - 1) * prev_running)
        if k in dominance:
            need = max(need, dominance[k] * prev_running)
        if i + 1 == len(plan):
            need = max(need, min_total - prev_running)
        N = max(prev_N + 1, _ceil_div(max(need - T, 0), n))
        total = N * n + T
        running = prev_running + total
        if running > TOTAL_CAP:
            raise ScheduleOverflow(f"stage {k} pushes the total past 2^62")
        out.append(Stage(k, k, k + 2, n, N, l, L, t, delta, total, running))
        prev_running, prev_N = running, N
    sched = Schedule(out, gap, cert_depth, transitive, targets, dominance)
    sched.inequalities = _inequalities(out, dominance)
    if not sched.verify():
        raise ConstructionError("schedule failed its own integer re-check")
    return sched


# ------------------------------------------------------------ construction

@dataclass
class CertificateRow:
    k: int
    M: int
    distance: float
    bound: float
    nominal: float
    slack: float
    holds: bool


def _connector_array(space: ShiftSpace) -> np.ndarray:
    k, gap = space.alphabet, space.gap_bound
    arr = np.zeros((k, k, gap), dtype=np.uint8)
    if gap:
        for (a, b), c in connector_table(space).items():
            arr[a, b] = c
    return arr


def _join(rows: np.ndarray, next_first: int, conn: np.ndarray) -> np.ndarray:
    """Flatten rows, putting the exact-length connector after every row."""
    if conn.shape[2] == 0:
        return rows.ravel()
    firsts = np.append(rows[1:, 0], next_first)
    links = conn[rows[:, -1], firsts]
    return np.hstack([rows, links]).ravel()


def _stage_pool(target: MeasureSpec, st: Stage, gap: int, depth: int, seed: int,
                space: ShiftSpace) -> np.ndarray:
    size = min(st.N, POOL_SIZE)
    return np.stack([typical_word(target, st.n - gap, st.zeta, [seed, st.k, j], depth, space)
                     for j in range(size)])


def _transit_rows(st: Stage) -> np.ndarray:
    if not st.t:
        return np.zeros((0, st.k), dtype=np.uint8)
    words = np.array([as_word(w) for w in st.delta], dtype=np.uint8)
    return np.repeat(words, st.l, axis=0)


def _certify(seq: SymbolicSeq, sched: Schedule) -> list[CertificateRow]:
    m, gap = sched.cert_depth, sched.gap
    k_alpha = seq.space.alphabet
    terms = terms_for_depth(m, k_alpha)
    rows = []
    prev = 0
    for st in sched.stages:
        M = st.running
        target = sched.targets.at(st.k)
        d = distance(empirical(seq, M, m), target, terms)
        blocks = st.N + st.t * st.l
        numer = prev + st.N * (st.n - gap) * st.zeta + st.N * gap + st.transit_length + (m - 1) * blocks
        bound = min(1.0, numer / M)
        nominal = st.zeta + 2 * st.eps
        slack = max(0.0, bound - nominal)
        rows.append(CertificateRow(st.k, M, d, bound, nominal, slack, d <= nominal + slack + 1e-12))
        prev = M
    return rows


def construct_saturated(space: ShiftSpace, K: TargetSpec, transitive: bool, stages: int, seed: int,
                        cert_depth: int = CERT_DEPTH, dominance: dict | None = None,
                        min_total: int = 0) -> tuple[SymbolicSeq, Schedule]:
    """Build the staged point for target path K and certify every stage boundary.

    The returned sequence holds M_K symbols plus one extra typical word so the
    empirical measure at M_K can look m - 1 symbols ahead.
    """
    if space.kind == "beta":
        raise ConstructionError("constructions need a full shift or a mixing SFT")
    if K.alphabet > space.alphabet:
        raise ConstructionError("targets use symbols outside the space")
    sched = build_schedule(K, stages, transitive, space, cert_depth, dominance, min_total)
    gap = sched.gap
    conn = _connector_array(space)
    rng_pick = np.random.default_rng([seed, 0])
    pieces = []
    for st in sched.stages:
        target = K.at(st.k)
        pool = _stage_pool(target, st, gap, max(st.k, cert_depth), seed, space)
        units = pool[rng_pick.integers(len(pool), size=st.N)]
        pieces.append(units)
        transit = _transit_rows(st)
        if len(transit):
            pieces.append(transit)
    last = sched.stages[-1]
    tail = _stage_pool(K.at(last.k), Stage(last.k, last.zeta_exp, last.eps_exp, last.n, 1, 0, 0, 0,
                                           [], 0, 0), gap, max(last.k, cert_depth), seed + 1, space)[0]
    flat = []
    for i, rows in enumerate(pieces):
        nxt = pieces[i + 1][0, 0] if i + 1 < len(pieces) else tail[0]
        flat.append(_join(rows, int(nxt), conn))
    flat.append(tail)
    arr = np.concatenate(flat)
    if arr.size != sched.total + tail.size:
        raise ConstructionError("assembled length disagrees with the schedule")
    seq = SymbolicSeq.from_array(space, arr, label=f"saturated:{stages}:{seed}")
    sched.certificate = _certify(seq, sched)
    return seq, sched


# ------------------------------------------------------- orbit-bound check

@dataclass
class OrbitBoundReport:
    left: float
    right: float
    boundary: float
    passed: bool
    length: int
    blocks: int

    def to_json(self) -> dict:
        return asdict(self)


def verify_orbit_bound(blocks: Sequence, m: int, J: int) -> OrbitBoundReport:
    """Compare d(Upsilon(z), alpha) with sum (q_j / Q)(zeta_j + eps_j) + m B / Q.

    ``blocks`` holds (word, measure, zeta_j, eps_j); z is the plain
    concatenation and alpha the length-weighted mixture of the block targets.
    Empirical measures of finite words are cyclic.
    """
    if not blocks:
        raise ConstructionError("need at least one block")
    words = [np.asarray(as_word(b[0]) if not isinstance(b[0], np.ndarray) else b[0], dtype=np.uint8)
             for b in blocks]
    lengths = [w.size for w in words]
    Q = sum(lengths)
    k = max(max(b[1].alphabet for b in blocks), int(max(w.max() for w in words)) + 1)
    z = np.concatenate(words)
    alpha = blocks[0][1]
    acc = lengths[0]
    for (w, mu, _, _), q in zip(blocks[1:], lengths[1:]):
        alpha = mix(alpha, mu, acc / (acc + q))
        acc += q
    left = distance(word_empirical(z, m, k), alpha, J)
    right = sum(q / Q * (b[2] + b[3]) for b, q in zip(blocks, lengths))
    boundary = m * len(blocks) / Q
    return OrbitBoundReport(left, right, boundary, left <= right + boundary + 1e-12, Q, len(blocks))



def orbit_bound_trials(count: int = 100, seed: int = 0, m: int = 2,
                       J: int | None = None) -> list[OrbitBoundReport]:
    """Random concatenations of 1 to 3 Bernoulli-typical blocks on two symbols."""
    J = terms_for_depth(m, 2) if J is None else J
    rng = np.random.default_rng([seed, 21])
    out = []
    for i in range(count):
        blocks = []
        for j in range(int(rng.integers(1, 4))):
            mu = bernoulli(round(float(rng.uniform(0.05, 0.95)), 6))
            e = int(rng.integers(2, 5))
            n = int(rng.integers(64, 513))
            w = typical_word(mu, n, 2.0 ** -e, [seed, i, j], depth=m)
            blocks.append((w, mu, 2.0 ** -e, 2.0 ** -(e + 2)))
        out.append(verify_orbit_bound(blocks, m, J))
    return out

# -------------------------------------------------------- sparse windows

@dataclass
class SparsePlacement:
    """Windows [a_k, b_k) with b_k = lam 4^k and b_k - a_k = lam 2^k."""
    indices: list
    windows: list
    payloads: list
    lam: int = 4

    def check(self) -> bool:
        prev_b = 0
        for k, (a, b) in zip(self.indices, self.windows):
            if a < prev_b or not a < b:
                return False
            if (b - a) << k > b or b - a < 1 << k:
                return False
            prev_b = b
        return True

    def to_json(self) -> dict:
        return {"lam": self.lam, "windows": [{"k": k, "a": a, "b": b, "payload": p}
                                             for k, (a, b), p in zip(self.indices, self.windows,
                                                                     self.payloads)]}


def sparse_placement(start: int, horizon: int, alphabet: int, lam: int = 4,
                     point: int | None = None) -> SparsePlacement:
    """Windows that begin at or after ``start`` and end by ``horizon``.

    Payloads alternate: odd k carries the uniform Bernoulli measure, even k
    the point mass on symbol ``point`` (the top symbol by default).
    """
    point = alphabet - 1 if point is None else point
    idx, wins, pays = [], [], []
    k = 1
    while lam * 4 ** k <= horizon:
        b = lam * 4 ** k
        a = b - lam * 2 ** k
        if a >= start:
            idx.append(k)
            wins.append((a, b))
            pays.append("uniform" if k % 2 else f"delta{point}")
        k += 1
    return SparsePlacement(idx, wins, pays, lam)


def _payload_measure(name: str, alphabet: int) -> MeasureSpec:
    if name == "uniform":
        return bernoulli([1.0 / alphabet] * alphabet)
    sym = int(name[len("delta"):])
    probs = [0.0] * alphabet
    probs[sym] = 1.0
    return bernoulli(probs)


# ------------------------------------------------------------ BR levels

BR_STAGES = 5
BR_DEPTH = 2
BR_DOMINANCE = {4: 32, 5: 32}
BR_MIN_TOTAL = 1 << 20
BR_TARGETS = {1: "BR_1", 2: "BR_2\\BR_1", 3: "BR_3\\BR_2", 4: "BR_4\\BR_3", 5: "BR_5\\BR_4"}


def _point(sym: int, k: int) -> Bernoulli:
    probs = [0.0] * k
    probs[sym] = 1.0
    return bernoulli(probs)


def default_br_base(level: int, k: int = 3) -> list[MeasureSpec]:
    """Base measures on k >= 3 symbols in the role order construct_br_level expects."""
    half01 = bernoulli([0.5, 0.5] + [0.0] * (k - 2))
    if level == 1:
        return [half01, bernoulli([0.7, 0.3] + [0.0] * (k - 2))]
    if level == 2:
        return [_point(0, k), half01]
    if level == 3:
        return [_point(0, k), _point(1, k)]
    if level == 4:
        half02 = [0.0] * k
        half02[0] = half02[2] = 0.5
        return [_point(0, k), half01, bernoulli(half02)]
    if level == 5:
        return [_point(0, k), _point(1, k), _point(2, k)]
    raise ConstructionError(f"level must be 1..5, got {level}")


def _fmt(words) -> list[str]:
    return sorted(word_str(w) for w in words)


def _br_design(level: int, base: list, m: int) -> tuple[list, list, list, dict]:
    """(generators, stage path, labels, support relations) with the level's checks."""
    S = lambda mu: support_words(mu, m)  # noqa: E731
    need = {1: 2, 2: 2, 3: 2, 4: 3, 5: 3}[level]
    if len(base) != need:
        raise ConstructionError(f"level {level} takes {need} base measures, got {len(base)}")
    if level in (1, 2, 3):
        a, b = base
        mid = mix(a, b, 0.5)
        path = [a, a, a, mid, b]
        labels = ["m1", "m1", "m1", "mid", "m2"]
        gens = [a, b]
        CK = S(a) | S(b)
        rel = {"S1": _fmt(S(a)), "S2": _fmt(S(b)), "C_K": _fmt(CK)}
        if level == 1 and not S(a) == S(b) == CK:
            raise SupportPreconditionViolated("level 1 needs S_m1 = S_m2 = C_K")
        if level == 2 and not (S(a) < S(b) == CK and S(a) & S(b)):
            raise SupportPreconditionViolated("level 2 needs a nonempty S_m1 strictly inside S_m2 = C_K")
        if level == 3 and (S(a) & S(b)):
            raise SupportPreconditionViolated("level 3 needs S_m1 and S_m2 disjoint")
        return gens, path, labels, rel
    r, u, w = base
    if level == 4:
        path = [u, u, u, r, w]
        labels = ["m2", "m2", "m2", "m1", "m3"]
        Sr, Su, Sw = S(r), S(u), S(w)
        CK = Sr | Su | Sw
        rel = {"S1": _fmt(Sr), "S2": _fmt(Su), "S3": _fmt(Sw), "C_K": _fmt(CK)}
        if not (Sr <= Su and Sr <= Sw):
            raise SupportPreconditionViolated("level 4 needs S_m1 inside both S_m2 and S_m3")
        if Su | Sr == CK or Sw | Sr == CK:
            raise SupportPreconditionViolated("level 4 needs no measure of K with support C_K")
        if not Sr:
            raise SupportPreconditionViolated("level 4 needs a common support point")
        return [u, r, w], path, labels, rel
    path = [u, u, u, r, w]
    labels = ["m2", "m2", "m2", "m1", "m3"]
    Sr, Su, Sw = S(r), S(u), S(w)
    CK = Sr | Su | Sw
    rel = {"S1": _fmt(Sr), "S2": _fmt(Su), "S3": _fmt(Sw), "C_K": _fmt(CK)}
    if Su | Sr == CK or Sr | Sw == CK:
        raise SupportPreconditionViolated("level 5 needs no measure of K with support C_K")
    if Sr & Su & Sw:
        raise SupportPreconditionViolated("level 5 needs the supports to have empty intersection")
    return [u, r, w], path, labels, rel


def construct_br_level(space: ShiftSpace | None, level: int, base: list | None = None, seed: int = 0,
                       m: int = BR_DEPTH) -> tuple[SymbolicSeq, dict]:
    """A point aimed at BR_level minus BR_(level - 1) at finite resolution.

    The bulk is a five-stage saturated construction whose last three stage
    boundaries sit on three chosen measures of K. The first m symbols are a
    marker word outside C_K, and sparse windows carrying a full-support
    payload make that marker visible to windows but not to prefix averages.
    """
    space = full_shift(3) if space is None else space
    if space.kind != "full" or space.alphabet < 3:
        raise ConstructionError("BR-level points are built on a full shift with >= 3 symbols")
    base = default_br_base(level, space.alphabet) if base is None else list(base)
    gens, path, labels, rel = _br_design(level, base, m)
    K = TargetSpec(tuple(gens), tuple(path), tuple(labels))
    seq, sched = construct_saturated(space, K, False, BR_STAGES, seed, cert_depth=m,
                                     dominance=BR_DOMINANCE, min_total=BR_MIN_TOTAL)
    arr = seq.prefix(seq.horizon).copy()
    CK = {as_word(w) for w in rel["C_K"]}
    outside = [w for w in words_of_length(space, m) if w not in CK]
    if not outside:
        raise SupportPreconditionViolated("C_K already holds every word; no marker is available")
    marker = max(outside)
    arr[:m] = marker
    # the point-mass payload avoids the final target, so no word is seen in every window type
    final = support_words(path[-1], m)
    point = next((s for s in range(space.alphabet) if (s,) * m not in final), space.alphabet - 1)
    placement = sparse_placement(sched.boundaries[-3], sched.total, space.alphabet, point=point)
    if not placement.check():
        raise ConstructionError("sparse windows violate their growth conditions")
    for k, (a, b), name in zip(placement.indices, placement.windows, placement.payloads):
        mu = _payload_measure(name, space.alphabet)
        arr[a:b] = sample(mu, b - a, np.random.default_rng([seed, 7, k]))[0]
    out = SymbolicSeq.from_array(space, arr, label=f"br-level-{level}:{seed}")
    checkpoints = sched.boundaries
    manifest = {
        "level": level,
        "target": BR_TARGETS[level],
        "seed": seed,
        "space": space.to_json(),
        "depth": m,
        "base": [measure_to_json(b) for b in base],
        "supports": rel,
        "marker": word_str(marker),
        "schedule": json.loads(sched.to_json()),
        "sparse": placement.to_json(),
        "resolution": {"horizon": sched.total, "m": m, "checkpoints": checkpoints},
    }
    return out, manifest


# ------------------------------------------------- level sets, irregular

LEVEL_SET_STAGES = 5
IRREGULAR_STAGES = 4
IRREGULAR_DOMINANCE = 32


def construct_level_set_point(space: ShiftSpace | None, phi, psi, a: float, mu1: MeasureSpec,
                              mu2: MeasureSpec, seed: int, stages: int = LEVEL_SET_STAGES
                              ) -> tuple[SymbolicSeq, float, Schedule]:
    """Point whose Birkhoff ratio tends to a, built on theta mu1 + (1 - theta) mu2.

    Returns the sequence, theta and the schedule.
    """
    r = RatioFunctional(phi, psi if psi is not None else constant(1.0, phi.alphabet))
    theta = solve_theta(r, mu1, mu2, a)
    omega = mix(mu1, mu2, theta)
    space = full_shift(omega.alphabet) if space is None else space
    seq, sched = construct_saturated(space, enumerate_K([omega], 0), False, stages, seed)
    return seq, theta, sched


def construct_irregular_point(space: ShiftSpace | None, phi, psi, nu1: MeasureSpec, nu2: MeasureSpec,
                              seed: int, stages: int = IRREGULAR_STAGES,
                              dominance: int = IRREGULAR_DOMINANCE) -> tuple[SymbolicSeq, Schedule]:
    """Point on the segment [nu1, nu2] whose Birkhoff ratio keeps swinging.

    Stages follow the segment walk nu1, nu2, nu1, midpoint, ...; each stage
    after the first is made ``dominance`` times longer than everything before
    it, so the running ratio comes close to each endpoint value in turn.
    """
    r = RatioFunctional(phi, psi if psi is not None else constant(1.0, phi.alphabet))
    a1, a2 = r.value(nu1), r.value(nu2)
    if abs(a1 - a2) <= 1e-9:
        raise EqualAlpha(f"alpha(nu1) = {a1} and alpha(nu2) = {a2} coincide")
    K = enumerate_K([nu1, nu2], 3)
    space = full_shift(K.alphabet) if space is None else space
    dom = {k: dominance for k in range(2, stages + 1)}
    return construct_saturated(space, K, False, stages, seed, dominance=dom)


def checkpoint_grid(horizon: int, per_doubling: int = 4, start: int = 16) -> list[int]:
    """Geometric checkpoints start * 2^(j / per_doubling) up to the horizon."""
    pts = []
    j = 0
    while True:
        n = int(start * 2 ** (j / per_doubling))
        if n > horizon:
            break
        if not pts or n > pts[-1]:
            pts.append(n)
        j += 1
    return pts
