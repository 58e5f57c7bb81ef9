"""Visit-time sets and their natural and Banach densities at finite horizon."""
from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .shift_core import ShiftError, SymbolicSeq, as_word

BURN_IN = 1 << 10
MIN_WINDOWS = 32
# default checkpoint ladder spans the last few doublings of the horizon
TAIL_DOUBLINGS = 6


@dataclass(eq=False)
class VisitSet:
    horizon: int
    hits: np.ndarray  # bool, length horizon

    def __post_init__(self):
        if self.horizon < 1 or self.hits.shape != (self.horizon,):
            raise ShiftError("visit set needs horizon >= 1 and a matching bit vector")

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.horizon) + np.packbits(self.hits, bitorder="little").tobytes()

    @staticmethod
    def from_bytes(raw: bytes) -> "VisitSet":
        (horizon,) = struct.unpack("<Q", raw[:8])
        bits = np.unpackbits(np.frombuffer(raw[8:], dtype=np.uint8), bitorder="little")
        return VisitSet(horizon, bits[:horizon].astype(bool))

    @staticmethod
    def from_indices(indices, horizon: int) -> "VisitSet":
        hits = np.zeros(horizon, dtype=bool)
        idx = np.asarray(list(indices), dtype=np.int64)
        hits[idx[idx < horizon]] = True
        return VisitSet(horizon, hits)


def visit_set(x: SymbolicSeq, w, horizon: int) -> VisitSet:
    """Times n in [1, horizon) at which x[n:n+|w|] equals w."""
    w = np.array(as_word(w), dtype=np.uint8)
    arr = x.prefix(horizon + max(len(w), 1) - 1)
    hits = np.ones(horizon, dtype=bool)
    for i, s in enumerate(w):
        hits &= arr[i: i + horizon] == s
    hits[0] = False
    return VisitSet(horizon, hits)


def default_checkpoints(horizon: int) -> list[int]:
    """Powers of two in [horizon / 2^6, horizon], plus the horizon itself."""
    low = max(1, horizon >> TAIL_DOUBLINGS)
    pts = [1 << j for j in range(horizon.bit_length()) if low <= (1 << j) <= horizon]
    if not pts or pts[-1] != horizon:
        pts.append(horizon)
    return pts


def default_ladder(horizon: int, top: int | None = None) -> list[int]:
    top = horizon if top is None else min(top, horizon)
    return [1 << j for j in range(top.bit_length()) if (1 << j) <= top]


def natural_densities(S: VisitSet, checkpoints, burn_in: int = BURN_IN) -> tuple[float, float]:
    """(upper, lower): extreme prefix densities |S ∩ [0, n)| / n over checkpoints."""
    cps = [int(c) for c in checkpoints]
    if any(c < 1 or c > S.horizon for c in cps) or cps != sorted(cps):
        raise ShiftError("checkpoints must be increasing and within the horizon")
    prefix = np.concatenate([[0], np.cumsum(S.hits, dtype=np.int64)])
    used = [c for c in cps if c >= burn_in] or cps
    ratios = [prefix[c] / c for c in used]
    return float(max(ratios)), float(min(ratios))


def window_extremes(S: VisitSet, L: int) -> tuple[int, int]:
    """Max and min hit counts over all length-L intervals inside the horizon."""
    if not 1 <= L <= S.horizon:
        raise ShiftError("window length must lie in [1, horizon]")
    prefix = np.concatenate([[0], np.cumsum(S.hits, dtype=np.int64)])
    sums = prefix[L:] - prefix[:-L]
    return int(sums.max()), int(sums.min())


def banach_table(S: VisitSet, window_lengths) -> list[tuple[int, float, float]]:
    return [(L, hi / L, lo / L) for L in window_lengths for hi, lo in [window_extremes(S, L)]]


def headline_length(horizon: int, window_lengths) -> int:
    """Largest ladder length that still leaves MIN_WINDOWS intervals."""
    ok = [L for L in window_lengths if horizon - L + 1 >= MIN_WINDOWS]
    if not ok:
        raise ShiftError("no window length leaves enough intervals")
    return max(ok)


def banach_densities(S: VisitSet, window_lengths) -> tuple[float, float]:
    """(banach_upper, banach_lower) at the headline window length."""
    L = headline_length(S.horizon, window_lengths)
    hi, lo = window_extremes(S, L)
    return hi / L, lo / L


@dataclass
class DensityReport:
    upper: float
    lower: float
    banach_upper: float
    banach_lower: float
    horizon: int
    checkpoints: list = field(default_factory=list)
    headline_window: int = 0
    table: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["L", "max_avg", "min_avg"])
        for L, hi, lo in self.table:
            wr.writerow([L, repr(hi), repr(lo)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"upper": self.upper, "lower": self.lower, "banach_upper": self.banach_upper,
                "banach_lower": self.banach_lower, "horizon": self.horizon,
                "checkpoints": self.checkpoints, "headline_window": self.headline_window}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def density_report(S: VisitSet, checkpoints=None, window_lengths=None,
                   burn_in: int = BURN_IN) -> DensityReport:
    """All four densities with the ordering B_ <= d_ <= d̄ <= B* enforced.

    Prefix intervals [0, n) are intervals too, so the Banach estimates are
    widened by the checkpoint densities; this keeps the finite-horizon
    ordering exact rather than approximate.
    """
    cps = default_checkpoints(S.horizon) if checkpoints is None else list(checkpoints)
    ladder = default_ladder(S.horizon) if window_lengths is None else list(window_lengths)
    up, lo = natural_densities(S, cps, burn_in)
    bu, bl = banach_densities(S, ladder)
    return DensityReport(up, lo, max(bu, up), min(bl, lo), S.horizon, cps,
                         headline_length(S.horizon, ladder), banach_table(S, ladder))


def block_union_set(horizon: int) -> VisitSet:
    """The sparse set ∪_k [2^k, 2^k + k) truncated at the horizon."""
    hits = np.zeros(horizon, dtype=bool)
    k = 0
    while (1 << k) < horizon:
        hits[(1 << k): min(horizon, (1 << k) + k)] = True
        k += 1
    return VisitSet(horizon, hits)
