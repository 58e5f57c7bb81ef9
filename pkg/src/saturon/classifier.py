"""Finite-horizon estimates of limit sets and the classifications built on them.

Every verdict is tied to its resolution: the horizon, the word depth m, the
number J of test functions and the cluster tolerance travel with the report.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .constructor import BR_TARGETS
from .measures import (EmpiricalMeasure, counts_of, distance, integral_vector,
                       terms_for_depth, weight_vector, window_codes)
from .shift_core import ShiftError, SymbolicSeq, code_word, word_str

DEFAULT_TERMS = 7
BURN_IN = 1 << 10
WINDOW_CAP = 4096
EXACT_LINKAGE_MAX = 512
DEFAULT_LADDER = (64, 256, 1024)


class ClassifierError(ShiftError):
    pass


def default_tol(J: int = DEFAULT_TERMS) -> float:
    return 4.0 * 2.0 ** -J


def default_threshold(k: int, m: int) -> float:
    """Frequency a word needs to count as supported: half the uniform share."""
    return 1.0 / (2 * k ** m)


# ---------------------------------------------------------------- linkage

def _union_find_labels(n: int, pairs) -> np.ndarray:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = [find(i) for i in range(n)]
    relabel: dict[int, int] = {}
    return np.array([relabel.setdefault(r, len(relabel)) for r in roots], dtype=np.int64)


def single_linkage(vecs: np.ndarray, weights: np.ndarray, tol: float) -> np.ndarray:
    """Cluster labels linking points at weighted-L1 distance <= tol.

    Large inputs are first compressed to leaders at tol / 2, and the leaders
    are then linked exactly; labels are numbered by first appearance.
    """
    n = len(vecs)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n <= EXACT_LINKAGE_MAX:
        d = (np.abs(vecs[:, None, :] - vecs[None, :, :]) * weights).sum(axis=2)
        i, j = np.nonzero(np.triu(d <= tol + 1e-15, 1))
        return _union_find_labels(n, zip(i.tolist(), j.tolist()))
    leaders = np.empty_like(vecs)
    count = 0
    owner = np.empty(n, dtype=np.int64)
    for p in range(n):
        if count:
            d = (np.abs(leaders[:count] - vecs[p]) * weights).sum(axis=1)
            hit = np.flatnonzero(d <= tol / 2)
            if hit.size:
                owner[p] = hit[0]
                continue
        leaders[count] = vecs[p]
        owner[p] = count
        count += 1
    lead_labels = single_linkage(leaders[:count], weights, tol)
    return lead_labels[owner]


# -------------------------------------------------------------- estimates

@dataclass
class Cluster:
    members: int
    representative: EmpiricalMeasure
    position: int  # checkpoint n, or window start
    length: int  # averaging length behind the representative
    support: frozenset

    def to_json(self) -> dict:
        return {"members": self.members, "position": self.position, "length": self.length,
                "support": sorted(word_str(w) for w in self.support),
                "frequencies": self.representative.freq}


@dataclass
class LimitSetEstimate:
    clusters: list
    support_union: frozenset
    checkpoints: list
    params: dict
    window_clusters: list = field(default_factory=list)

    @property
    def supports(self) -> list:
        return [c.support for c in self.clusters]

    def to_json(self) -> dict:
        return {"params": self.params, "checkpoints": self.checkpoints,
                "clusters": [c.to_json() for c in self.clusters],
                "support_union": sorted(word_str(w) for w in self.support_union)}


def _vectors(freqs: np.ndarray, J: int, k: int, m: int) -> np.ndarray:
    """Integral vectors (first J cylinders) of a batch of depth-m frequency rows."""
    parts = []
    for length in range(m + 1):
        parts.append(freqs.reshape(len(freqs), k ** length, -1).sum(axis=2))
    return np.concatenate(parts, axis=1)[:, :J]


def _effective_terms(J: int, k: int, m: int) -> int:
    return min(J, terms_for_depth(m, k))


def _latest(idx, positions, lengths) -> int:
    return max(idx, key=lambda i: (positions[i], lengths[i]))


def estimate_Mx(x: SymbolicSeq, horizons, m: int = 3, tol: float | None = None,
                J: int = DEFAULT_TERMS, burn_in: int = BURN_IN,
                threshold: float | None = None) -> LimitSetEstimate:
    """Cluster the prefix empirical measures taken at the later checkpoints.

    Checkpoints are used as a set. Only the top half is kept (the tail of
    the orbit), minus any below the burn-in unless nothing would remain.
    """
    cps = sorted({int(h) for h in horizons})
    if not cps or cps[0] < 1:
        raise ClassifierError("need positive checkpoints")
    k = x.space.alphabet
    tol = default_tol(J) if tol is None else tol
    threshold = default_threshold(k, m) if threshold is None else threshold
    top = cps[len(cps) // 2:]
    used = [c for c in top if c >= burn_in] or [top[-1]]
    arr = x.prefix(used[-1] + m - 1)
    counts = np.zeros(k ** m, dtype=np.int64)
    emps = []
    done = 0
    for c in used:
        counts = counts + counts_of(arr[done:], m, k, c - done)
        done = c
        emps.append(EmpiricalMeasure(m, k, counts.copy(), c))
    Je = _effective_terms(J, k, m)
    vecs = np.array([integral_vector(e, Je, k) for e in emps])
    labels = single_linkage(vecs, weight_vector(Je), tol)
    clusters = []
    for lab in range(int(labels.max()) + 1):
        idx = [int(i) for i in np.flatnonzero(labels == lab)]
        rep = _latest(idx, used, used)
        e = emps[rep]
        clusters.append(Cluster(len(idx), e, used[rep], used[rep], e.support(threshold)))
    union = frozenset().union(*(c.support for c in clusters))
    params = {"m": m, "J": J, "tol": tol, "burn_in": burn_in, "threshold": threshold}
    return LimitSetEstimate(clusters, union, used, params)


def default_ladder(horizon: int, m: int = 3) -> list[int]:
    span = horizon - m + 1 - horizon // 16
    ladder = [L for L in DEFAULT_LADDER if L <= span // 2]
    return ladder or [max(1, span // 2)]


def estimate_Mx_star(x: SymbolicSeq, horizon: int, window_ladder=None, m: int = 3,
                     tol: float | None = None, J: int = DEFAULT_TERMS, burn_in: int = BURN_IN,
                     threshold: float | None = None, base: LimitSetEstimate | None = None,
                     checkpoints=None) -> LimitSetEstimate:
    """Cluster averages over late windows of each ladder length.

    Windows start at or after horizon / 16, do not overlap, and are thinned
    so that no length contributes more than WINDOW_CAP of them. Each length
    is clustered on its own and a window cluster needs at least two members.
    Representatives are then merged across lengths together with the prefix
    estimate, whose clusters are kept as they are, so the result contains it.
    """
    k = x.space.alphabet
    tol = default_tol(J) if tol is None else tol
    threshold = default_threshold(k, m) if threshold is None else threshold
    if base is None:
        base = estimate_Mx(x, checkpoints or default_checkpoints(horizon, m), m, tol, J, burn_in,
                           threshold)
    ladder = default_ladder(horizon, m) if window_ladder is None else sorted({int(L) for L in window_ladder})
    arr = x.prefix(horizon)
    P = horizon - m + 1
    if P < 1:
        raise ClassifierError("horizon shorter than the word depth")
    codes = window_codes(arr, m, k, P)
    where = [np.flatnonzero(codes == c) for c in range(k ** m)]
    start = horizon // 16
    Je = _effective_terms(J, k, m)
    window_clusters = []
    used_ladder = []
    for L in ladder:
        if L < 1 or L > P - start:
            continue
        used_ladder.append(L)
        last = P - L
        stride = max(L, -(-(last - start + 1) // WINDOW_CAP))
        a = np.arange(start, last + 1, stride)
        cnt = np.stack([np.searchsorted(w, a + L) - np.searchsorted(w, a) for w in where], axis=1)
        labels = single_linkage(_vectors(cnt / L, Je, k, m), weight_vector(Je), tol)
        for lab in range(int(labels.max()) + 1):
            idx = np.flatnonzero(labels == lab)
            if idx.size < 2:
                continue
            rep = int(idx[-1])
            e = EmpiricalMeasure(m, k, cnt[rep].astype(np.int64), L)
            window_clusters.append(Cluster(int(idx.size), e, int(a[rep]), L, e.support(threshold)))
    clusters = _merge(list(base.clusters), window_clusters, Je, k, tol)
    union = base.support_union.union(*(c.support for c in window_clusters))
    params = dict(base.params, ladder=used_ladder, window_start=start, window_cap=WINDOW_CAP)
    return LimitSetEstimate(clusters, union, base.checkpoints, params, window_clusters)


def _merge(prefix: list, windows: list, J: int, k: int, tol: float) -> list:
    """One cluster per linkage group of all representatives; prefix clusters
    keep their identity and absorb nearby window clusters."""
    if not windows:
        return prefix
    every = prefix + windows
    vecs = np.array([integral_vector(c.representative, J, k) for c in every])
    labels = single_linkage(vecs, weight_vector(J), tol)
    kept = list(prefix)
    taken = set(labels[: len(prefix)].tolist())
    for lab in range(int(labels.max()) + 1):
        if lab in taken:
            continue
        group = [every[i] for i in np.flatnonzero(labels == lab)]
        head = max(group, key=lambda c: (c.length, c.position))
        support = frozenset().union(*(c.support for c in group))
        kept.append(Cluster(sum(c.members for c in group), head.representative, head.position,
                            head.length, support))
    return kept


def default_checkpoints(horizon: int, m: int = 3) -> list[int]:
    """Powers of two up to the last position with a full window, plus that position."""
    top = horizon - m + 1
    if top < 1:
        raise ClassifierError("horizon shorter than the word depth")
    pts = [1 << j for j in range(top.bit_length()) if (1 << j) <= top]
    if pts[-1] != top:
        pts.append(top)
    return pts


# ---------------------------------------------------------- classification

@dataclass
class ClassifyParams:
    horizon: int
    m: int = 3
    J: int = DEFAULT_TERMS
    tol: float | None = None
    checkpoints: list | None = None
    ladder: list | None = None
    burn_in: int = BURN_IN
    threshold: float | None = None
    references: tuple = ()

    def resolved(self, k: int) -> "ClassifyParams":
        return ClassifyParams(
            self.horizon, self.m, self.J, default_tol(self.J) if self.tol is None else self.tol,
            list(self.checkpoints) if self.checkpoints is not None
            else default_checkpoints(self.horizon, self.m),
            list(self.ladder) if self.ladder is not None else default_ladder(self.horizon, self.m),
            self.burn_in,
            default_threshold(k, self.m) if self.threshold is None else self.threshold,
            tuple(self.references))


CASE_NAMES = ("(1)", "(2)", "(3)", "(4)", "(5)", "(6)")


def statistical_case(E: frozenset, lower: frozenset, upper: frozenset, banach: frozenset,
                     total: frozenset) -> tuple[str, str]:
    """(case label, confidence) from the four omega-set proxies and the word set."""
    if E:
        return "B_*-nonempty", "high"
    if not (lower <= upper <= banach <= total):
        return "unresolved", "none"
    if lower:
        if lower == upper:
            base = 1 if upper == banach else 2
        else:
            base = 4 if upper == banach else 6
    else:
        base = 3 if upper == banach else 5
    if banach < total:
        return f"({base}')", "low"
    return f"({base})", "high"


def level_from_predicates(W: bool, V: bool, S: bool) -> int:
    if W:
        return 1
    if V and S:
        return 2
    if V:
        return 3
    if S:
        return 4
    return 5


@dataclass
class ClassificationReport:
    recurrent: bool
    qw: bool
    br: bool
    W: bool
    V: bool
    S: bool
    level: int
    level_target: str | None
    case: str
    case_confidence: str
    QR: bool
    QR_d: bool
    QR_erg: object  # bool or "unknown"
    R: object
    omega: dict
    Mx: LimitSetEstimate
    Mx_star: LimitSetEstimate
    resolution: dict
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        body = {
            "recurrent": self.recurrent, "qw": self.qw, "br": self.br,
            "predicates": {"W#": self.W, "V#": self.V, "S#": self.S},
            "level": self.level, "level_target": self.level_target,
            "case": self.case, "case_confidence": self.case_confidence,
            "regularity": {"QR": self.QR, "QR_d": self.QR_d, "QR_erg": self.QR_erg, "R": self.R},
            "omega": {key: sorted(word_str(w) for w in val) for key, val in self.omega.items()},
            "Mx": self.Mx.to_json(),
            "Mx_star_windows": [c.to_json() for c in self.Mx_star.window_clusters],
            "resolution": self.resolution,
            "warnings": self.warnings,
        }
        return json.dumps(body, indent=1, sort_keys=True)

    def table(self) -> str:
        rows = [
            ("horizon", self.resolution["horizon"]),
            ("m / J / tol", f"{self.resolution['m']} / {self.resolution['J']} / {self.resolution['tol']:.6g}"),
            ("recurrent", self.recurrent), ("qw", self.qw), ("br", self.br),
            ("W# / V# / S#", f"{self.W} / {self.V} / {self.S}"),
            ("level", f"{self.level} ({self.level_target or '-'})"),
            ("case", f"{self.case} [{self.case_confidence}]"),
            ("QR / QR_d", f"{self.QR} / {self.QR_d}"),
            ("QR_erg / R", f"{self.QR_erg} / {self.R}"),
            ("clusters M_x", len(self.Mx.clusters)),
            ("clusters M*_x", len(self.Mx_star.clusters)),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def _reference_match(rep: EmpiricalMeasure, refs, J: int, tol: float):
    if not refs:
        return "unknown"
    return any(distance(rep, mu, J) <= tol for mu in refs)


def classify(x: SymbolicSeq, params: ClassifyParams) -> ClassificationReport:
    k = x.space.alphabet
    p = params.resolved(k)
    m, H = p.m, p.horizon
    if x.horizon is not None and H > x.horizon:
        raise ClassifierError(f"horizon {H} exceeds the sequence length {x.horizon}")
    avail = H if x.horizon is None else min(x.horizon, H + m - 1)
    cps = [c for c in p.checkpoints if c + m - 1 <= avail]
    if not cps:
        raise ClassifierError("no checkpoint fits inside the horizon")
    mx = estimate_Mx(x, cps, m, p.tol, p.J, p.burn_in, p.threshold)
    mxs = estimate_Mx_star(x, H, p.ladder, m, p.tol, p.J, p.burn_in, p.threshold, base=mx)
    warnings = []
    if not mx.support_union <= mxs.support_union:
        raise ClassifierError("prefix support union escaped the window support union")
    arr = x.prefix(H)
    P = H - m + 1
    codes = window_codes(arr, m, k, P)
    first = tuple(int(s) for s in arr[:m])
    first_code = int(codes[0])
    rstart = min(p.burn_in, P // 2)
    recurrent = bool((codes[max(1, rstart):] == first_code).any())
    qw = first in mx.support_union
    br = first in mxs.support_union
    if qw and not br:
        warnings.append("qw without br at this resolution")
    supports = mx.supports
    W = all(s == mx.support_union for s in supports)
    V = any(s == mx.support_union for s in supports)
    common = frozenset.intersection(*supports) if supports else frozenset()
    S = bool(common)
    level = level_from_predicates(W, V, S)
    win = mxs.window_clusters or mx.clusters
    E = frozenset.intersection(*(c.support for c in win)) if win else frozenset()
    late = codes[H // 16:]
    total = frozenset(code_word(int(c), m, k) for c in np.unique(late))
    case, conf = statistical_case(E, common, mx.support_union, mxs.support_union, total)
    Je = _effective_terms(p.J, k, m)
    QR = len(mx.clusters) == 1
    QR_d = bool(QR and first in mx.clusters[0].support)
    QR_erg = _reference_match(mx.clusters[-1].representative, p.references, Je, p.tol) if QR else False
    R = "unknown" if QR_erg == "unknown" else bool(QR_erg and QR_d)
    target = f"QW_{level}" if qw else BR_TARGETS[level] if br else None
    omega = {"d_lower": common, "d_upper": mx.support_union, "B_upper": mxs.support_union,
             "B_lower": E, "T": total}
    resolution = {"horizon": H, "m": m, "J": p.J, "tol": p.tol, "threshold": p.threshold,
                  "checkpoints": mx.checkpoints, "ladder": mxs.params["ladder"],
                  "burn_in": p.burn_in}
    return ClassificationReport(recurrent, qw, br, W, V, S, level, target, case, conf, QR, QR_d,
                                QR_erg, R, omega, mx, mxs, resolution, warnings)
