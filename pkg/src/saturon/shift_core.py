"""Shift spaces over finite alphabets, words, sequences and gluing.

Words are tuples of ints. Long sequences live in ``numpy.uint8`` arrays held
by :class:`SymbolicSeq`, which materializes its prefix lazily from chunks.
"""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

Word = tuple

DEFAULT_BUDGET = 1 << 22
GAP_CAP = 64
BETA_SLACK_DIGITS = 64
# snapping tolerance for borderline carries in the expansion of 1
_BETA_SNAP = Fraction(1, 10**12)


class ShiftError(ValueError):
    """A precondition on a space, word or sequence is violated."""


class BudgetExceeded(ShiftError):
    pass


class NoConnectorFound(ShiftError):
    pass


def enumeration_budget() -> int:
    raw = os.environ.get("SATURON_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        return int(raw)
    except ValueError as exc:
        raise ShiftError(f"SATURON_BUDGET must be an integer, got {raw!r}") from exc


def as_word(w) -> Word:
    """Coerce a digit string, list or array into a word tuple."""
    if isinstance(w, str):
        return tuple(int(c) for c in w)
    return tuple(int(s) for s in w)


def word_str(w: Iterable[int]) -> str:
    return "".join(str(int(s)) for s in w)


def word_code(w: Sequence[int], k: int) -> int:
    code = 0
    for s in w:
        code = code * k + int(s)
    return code


def code_word(code: int, length: int, k: int) -> Word:
    out = []
    for _ in range(length):
        code, r = divmod(code, k)
        out.append(r)
    return tuple(reversed(out))


def _primitive_exponent(matrix: np.ndarray) -> int | None:
    """Least p with matrix**p entrywise positive, or None if there is none."""
    n = matrix.shape[0]
    wielandt = (n - 1) ** 2 + 1
    b = (matrix > 0).astype(np.int64)
    power = b.copy()
    for p in range(1, wielandt + 1):
        if power.all():
            return p
        power = ((power @ b) > 0).astype(np.int64)
    return None


def _greedy_digits_of_one(beta: Fraction, count: int) -> tuple[list[int], bool]:
    """Greedy beta-expansion digits of 1; flag tells whether it terminated."""
    digits = []
    r = Fraction(1)
    for _ in range(count):
        t = beta * r
        d = int(t)
        if d + 1 - t <= _BETA_SNAP:
            d += 1
        r = t - d
        if abs(r) <= _BETA_SNAP:
            digits.append(d)
            return digits, True
        digits.append(d)
    return digits, False


@lru_cache(maxsize=64)
def quasi_greedy_expansion(beta: float, length: int) -> tuple[int, ...]:
    """First ``length`` digits of the quasi-greedy beta-expansion of 1."""
    b = Fraction(beta)
    digits, finite = _greedy_digits_of_one(b, length)
    if not finite:
        return tuple(digits[:length])
    # finite expansion t1..tn becomes the periodic (t1..t(n-1) (tn - 1))^inf
    period = digits[:-1] + [digits[-1] - 1]
    reps = length // len(period) + 1
    return tuple((period * reps)[:length])


@dataclass(frozen=True)
class ShiftSpace:
    kind: str
    alphabet: int
    matrix: tuple | None = None
    beta: float | None = None
    gap_bound: int = 0
    tail_zeros: int = 1

    def __post_init__(self):
        if self.alphabet < 2:
            raise ShiftError("alphabet size must be at least 2")
        if self.kind == "full" and self.gap_bound != 0:
            raise ShiftError("full shifts have gap bound 0")
        if self.kind == "beta" and (self.beta is None or self.beta <= 1):
            raise ShiftError("beta must exceed 1")
        if self.kind not in ("full", "sft", "beta"):
            raise ShiftError(f"unknown shift kind {self.kind!r}")

    @property
    def adjacency(self) -> np.ndarray | None:
        if self.matrix is None:
            return None
        return np.array(self.matrix, dtype=np.int64)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "alphabet": self.alphabet, "gap_bound": self.gap_bound}
        if self.matrix is not None:
            out["matrix"] = [list(row) for row in self.matrix]
        if self.beta is not None:
            out["beta"] = self.beta
            out["tail_zeros"] = self.tail_zeros
        return out

    @staticmethod
    def from_json(obj: dict | str) -> "ShiftSpace":
        if isinstance(obj, str):
            obj = json.loads(obj)
        kind = obj["kind"]
        if kind == "full":
            return full_shift(int(obj["alphabet"]))
        if kind == "sft":
            return sft(obj["matrix"])
        if kind == "beta":
            return beta_shift(float(obj["beta"]), tail_zeros=int(obj.get("tail_zeros", 1)),
                              gap_bound=int(obj.get("gap_bound", 1)))
        raise ShiftError(f"unknown shift kind {kind!r}")


def full_shift(k: int) -> ShiftSpace:
    return ShiftSpace("full", int(k))


def sft(matrix) -> ShiftSpace:
    """Shift of finite type from a 0/1 adjacency matrix.

    The matrix must be irreducible and aperiodic. The gap bound is the number
    of connector symbols that always suffices, i.e. ``p - 1`` where ``p`` is
    the least power with a strictly positive matrix (capped at 64).
    """
    a = np.asarray(matrix, dtype=np.int64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShiftError("adjacency matrix must be square")
    if not np.isin(a, (0, 1)).all():
        raise ShiftError("adjacency matrix must be 0/1")
    p = _primitive_exponent(a)
    if p is None:
        raise ShiftError("adjacency matrix is not irreducible and aperiodic")
    return ShiftSpace("sft", a.shape[0], tuple(tuple(int(v) for v in row) for row in a),
                      gap_bound=min(p - 1, GAP_CAP))


def golden_mean() -> ShiftSpace:
    return sft([[1, 1], [1, 0]])


def beta_shift(beta: float, tail_zeros: int = 1, gap_bound: int = 1) -> ShiftSpace:
    k = int(np.ceil(beta))
    return ShiftSpace("beta", max(k, 2), beta=float(beta), gap_bound=gap_bound,
                      tail_zeros=tail_zeros)


def admissible(space: ShiftSpace, w) -> bool:
    w = as_word(w)
    if any(s < 0 or s >= space.alphabet for s in w):
        raise ShiftError("symbol outside alphabet")
    if space.kind == "full":
        return True
    if space.kind == "sft":
        m = space.matrix
        return all(m[a][b] for a, b in zip(w, w[1:]))
    ref = quasi_greedy_expansion(space.beta, len(w) + BETA_SLACK_DIGITS)
    for i in range(len(w)):
        tail = w[i:]
        if tail > ref[: len(tail)]:
            return False
    return True


def _check_budget(space: ShiftSpace, n: int) -> None:
    limit = enumeration_budget()
    if space.alphabet ** n > limit:
        raise BudgetExceeded(f"{space.alphabet}^{n} words exceed the budget of {limit}")


def words_of_length(space: ShiftSpace, n: int) -> list[Word]:
    """All admissible words of length n in lexicographic order."""
    if n < 0:
        raise ShiftError("length must be nonnegative")
    _check_budget(space, n)
    k = space.alphabet
    if space.kind == "full":
        return list(itertools.product(range(k), repeat=n))
    if space.kind == "sft":
        if n == 0:
            return [()]
        m = space.matrix
        words = [(s,) for s in range(k)]
        for _ in range(n - 1):
            words = [w + (b,) for w in words for b in range(k) if m[w[-1]][b]]
        return words
    # beta: extend prefixes, pruning by the suffix comparison
    ref = quasi_greedy_expansion(space.beta, n + BETA_SLACK_DIGITS)
    words = [()]
    for _ in range(n):
        grown = []
        for w in words:
            for b in range(k):
                cand = w + (b,)
                if all(cand[i:] <= ref[: len(cand) - i] for i in range(len(cand))):
                    grown.append(cand)
        words = grown
    return words


def _candidate_connectors(space: ShiftSpace, max_len: int, exact: bool) -> Iterator[Word]:
    lengths = [max_len] if exact else range(max_len + 1)
    for length in lengths:
        yield from itertools.product(range(space.alphabet), repeat=length)


def find_connector(space: ShiftSpace, left: Word, right: Word, exact: bool = False) -> Word:
    """Lexicographically smallest connector joining two admissible words.

    Without ``exact`` shorter connectors are preferred, so the empty
    connector wins whenever plain concatenation is admissible.
    """
    if space.kind == "full":
        return ()
    for c in _candidate_connectors(space, space.gap_bound, exact):
        if space.kind == "sft":
            probe = left[-1:] + c + right[:1]
        else:
            probe = left + c + right
        if admissible(space, probe):
            return c
    raise NoConnectorFound(
        f"no connector of length <= {space.gap_bound} joins {word_str(left)} and {word_str(right)}")


def glue_with_offsets(space: ShiftSpace, blocks: Sequence) -> tuple[Word, list[int]]:
    blocks = [as_word(b) for b in blocks]
    for b in blocks:
        if not admissible(space, b):
            raise ShiftError(f"block {word_str(b)} is not admissible")
    if space.kind == "beta":
        z = space.tail_zeros
        for b in blocks[:-1]:
            if len(b) < z or any(b[-z:]):
                raise ShiftError(f"beta gluing needs blocks ending in {z} zeros")
    out: list[int] = []
    offsets = []
    for i, b in enumerate(blocks):
        if i and b and out:
            out.extend(find_connector(space, tuple(out), b))
        offsets.append(len(out))
        out.extend(b)
    word = tuple(out)
    if not admissible(space, word):
        raise NoConnectorFound("glued word is not admissible")
    return word, offsets


def glue(space: ShiftSpace, blocks: Sequence) -> Word:
    """Concatenate admissible blocks verbatim, inserting short connectors."""
    return glue_with_offsets(space, blocks)[0]


def connector_table(space: ShiftSpace) -> dict[tuple[int, int], Word]:
    """Exact-length connectors ``(a, b) -> c`` with ``a c b`` admissible."""
    k = space.alphabet
    table = {}
    for a in range(k):
        for b in range(k):
            table[(a, b)] = find_connector(space, (a,), (b,), exact=True)
    return table


def sequence_admissible(space: ShiftSpace, arr: np.ndarray, prev: int | None = None) -> bool:
    """Vectorized admissibility for a chunk; ``prev`` is the symbol before it."""
    if arr.size and int(arr.max()) >= space.alphabet:
        return False
    if space.kind == "full":
        return True
    if space.kind == "sft":
        a = space.adjacency
        if prev is not None and arr.size and not a[prev, arr[0]]:
            return False
        return bool(a[arr[:-1], arr[1:]].all()) if arr.size > 1 else True
    return admissible(space, tuple(int(s) for s in arr))


class SymbolicSeq:
    """Seedable symbol source with a lazily materialized, cached prefix.

    ``chunks`` is an iterator of uint8 arrays; ``horizon`` is the total length
    it can produce (None means unbounded). Not thread safe.
    """

    def __init__(self, space: ShiftSpace, chunks: Iterator[np.ndarray], horizon: int | None = None,
                 label: str = "", validate: bool = True):
        self.space = space
        self.label = label
        self.horizon = horizon
        self._chunks = chunks
        self._parts: list[np.ndarray] = []
        self._size = 0
        self._cache = np.zeros(0, dtype=np.uint8)
        self._validate = validate and space.kind != "beta"
        self._last: int | None = None

    @classmethod
    def from_array(cls, space: ShiftSpace, arr, label: str = "") -> "SymbolicSeq":
        arr = np.ascontiguousarray(np.asarray(arr, dtype=np.uint8))
        if not sequence_admissible(space, arr):
            raise ShiftError("sequence is not admissible")
        seq = cls(space, iter(()), horizon=len(arr), label=label, validate=False)
        seq._cache = arr
        seq._size = len(arr)
        return seq

    @classmethod
    def periodic(cls, space: ShiftSpace, pattern, preperiod=(), label: str = "") -> "SymbolicSeq":
        pattern = np.array(as_word(pattern), dtype=np.uint8)
        pre = np.array(as_word(preperiod), dtype=np.uint8)
        if pattern.size == 0:
            raise ShiftError("periodic pattern must be nonempty")

        def gen():
            if pre.size:
                yield pre
            block = np.tile(pattern, max(1, 4096 // pattern.size))
            while True:
                yield block

        return cls(space, gen(), horizon=None, label=label or f"periodic:{word_str(pattern)}")

    def _pull(self) -> bool:
        try:
            chunk = next(self._chunks)
        except StopIteration:
            return False
        chunk = np.asarray(chunk, dtype=np.uint8)
        if self._validate and not sequence_admissible(self.space, chunk, self._last):
            raise ShiftError("generator produced an inadmissible chunk")
        if chunk.size:
            self._last = int(chunk[-1])
        self._parts.append(chunk)
        self._size += chunk.size
        return True

    def prefix(self, n: int) -> np.ndarray:
        """First n symbols as a read-only uint8 array."""
        if n < 0:
            raise ShiftError("prefix length must be nonnegative")
        if self.horizon is not None and n > self.horizon:
            raise ShiftError(f"prefix {n} exceeds the horizon {self.horizon}")
        while self._size < n:
            if not self._pull():
                raise ShiftError(f"sequence exhausted at {self._size} < {n}")
        if len(self._cache) < n:
            self._cache = np.concatenate([self._cache] + self._parts) if self._parts else self._cache
            self._parts = []
        view = self._cache[:n]
        view.flags.writeable = False
        return view

    def materialized(self) -> int:
        return self._size


def seq_distance(x: SymbolicSeq, y: SymbolicSeq, horizon: int) -> float:
    """2^-j for the first index j where the prefixes differ, 0 if none."""
    a = x.prefix(horizon)
    b = y.prefix(horizon)
    diff = np.flatnonzero(a != b)
    if diff.size == 0:
        return 0.0
    return 2.0 ** (-int(diff[0]))


@dataclass
class GlueCheck:
    ok: bool
    mismatches: list[int] = field(default_factory=list)


def verify_glue(word: Sequence[int], blocks: Sequence, offsets: Sequence[int], allowance: int = 0) -> GlueCheck:
    """Check each block occurs at its offset with at most ``allowance`` mismatches."""
    word = as_word(word)
    bad = []
    for b, off in zip(blocks, offsets):
        b = as_word(b)
        seg = word[off: off + len(b)]
        miss = sum(1 for u, v in zip(seg, b) if u != v) + (len(b) - len(seg))
        bad.append(miss)
    return GlueCheck(all(m <= allowance for m in bad), bad)



# ------------------------------------------------------------ export formats

SYMBOL_CHARS = "0123456789abcdefghijklmnopqrstuvwxyz"
PACKED_MAGIC = b"SATP"


def parse_space(text: str) -> ShiftSpace:
    """``full:3``, ``golden``, ``sft:1,1;1,0``, ``beta:1.8`` or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        return ShiftSpace.from_json(text)
    kind, _, body = text.partition(":")
    kind = kind.lower()
    try:
        if kind == "full":
            return full_shift(int(body))
        if kind == "golden":
            return golden_mean()
        if kind == "sft":
            return sft([[int(v) for v in row.split(",")] for row in body.split(";")])
        if kind == "beta":
            return beta_shift(float(body))
    except ValueError as exc:
        raise ShiftError(f"cannot parse space {text!r}: {exc}") from exc
    raise ShiftError(f"cannot parse space {text!r}")


def symbols_to_text(arr: np.ndarray) -> str:
    if arr.size and int(arr.max()) >= len(SYMBOL_CHARS):
        raise ShiftError("symbol strings hold at most 36 symbols")
    table = np.frombuffer(SYMBOL_CHARS.encode(), dtype=np.uint8)
    return table[np.asarray(arr, dtype=np.uint8)].tobytes().decode() + "\n"


def pack_symbols(arr: np.ndarray, alphabet: int) -> bytes:
    """Magic, alphabet and length, then ceil(log2 k) bits per symbol, MSB first."""
    bits = max(1, (alphabet - 1).bit_length())
    arr = np.asarray(arr, dtype=np.uint8)
    planes = np.unpackbits(arr[:, None], axis=1)[:, 8 - bits:]
    header = PACKED_MAGIC + alphabet.to_bytes(1, "little") + len(arr).to_bytes(8, "little")
    return header + np.packbits(planes.ravel()).tobytes()


def load_symbols(raw: bytes) -> tuple[np.ndarray, int | None]:
    """Read either export format; the alphabet is None for symbol strings."""
    if raw.startswith(PACKED_MAGIC):
        alphabet = raw[4]
        n = int.from_bytes(raw[5:13], "little")
        bits = max(1, (alphabet - 1).bit_length())
        flat = np.unpackbits(np.frombuffer(raw[13:], dtype=np.uint8))[: n * bits]
        if flat.size != n * bits:
            raise ShiftError("packed sequence is truncated")
        planes = flat.reshape(n, bits)
        weights = 1 << np.arange(bits - 1, -1, -1)
        return (planes @ weights).astype(np.uint8), alphabet
    text = raw.decode("ascii", errors="strict")
    text = "".join(text.split())
    lookup = np.full(256, 255, dtype=np.uint8)
    for i, c in enumerate(SYMBOL_CHARS):
        lookup[ord(c)] = i
    arr = lookup[np.frombuffer(text.encode(), dtype=np.uint8)]
    if (arr == 255).any():
        raise ShiftError("symbol string holds characters outside 0-9a-z")
    return arr, None
