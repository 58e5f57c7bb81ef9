import itertools

import numpy as np
import pytest

from saturon.shift_core import (BudgetExceeded, NoConnectorFound, ShiftError, ShiftSpace,
                                SymbolicSeq, admissible, beta_shift, connector_table,
                                full_shift, glue, glue_with_offsets, golden_mean, load_symbols,
                                pack_symbols, parse_space, quasi_greedy_expansion, seq_distance,
                                sequence_admissible, sft, symbols_to_text, verify_glue,
                                word_code, code_word, words_of_length)


def fib(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def test_admissible_basic():
    assert admissible(full_shift(2), "0110")
    assert not admissible(golden_mean(), "0110")
    assert admissible(golden_mean(), "0101")
    assert not admissible(beta_shift((1 + 5 ** 0.5) / 2), "11")
    assert admissible(beta_shift((1 + 5 ** 0.5) / 2), "1010")


def test_symbol_outside_alphabet():
    with pytest.raises(ShiftError):
        admissible(full_shift(2), "012")


def test_word_counts():
    assert len(words_of_length(full_shift(2), 3)) == 8
    assert len(words_of_length(golden_mean(), 3)) == 5
    for space in (full_shift(3), golden_mean(), beta_shift(1.8)):
        assert words_of_length(space, 0) == [()]


def test_golden_mean_fibonacci():
    for n in range(1, 21):
        assert len(words_of_length(golden_mean(), n)) == fib(n + 2)


def test_golden_beta_shift_matches_sft():
    beta = beta_shift((1 + 5 ** 0.5) / 2)
    for n in range(1, 12):
        assert words_of_length(beta, n) == words_of_length(golden_mean(), n)


def test_words_lexicographic():
    words = words_of_length(sft([[1, 1, 0], [0, 1, 1], [1, 0, 1]]), 5)
    assert words == sorted(words)
    assert all(admissible(sft([[1, 1, 0], [0, 1, 1], [1, 0, 1]]), w) for w in words)


def test_budget(monkeypatch):
    monkeypatch.setenv("SATURON_BUDGET", "100")
    with pytest.raises(BudgetExceeded):
        words_of_length(full_shift(2), 7)
    monkeypatch.setenv("SATURON_BUDGET", "nope")
    with pytest.raises(ShiftError):
        words_of_length(full_shift(2), 2)


def test_quasi_greedy():
    # 1 = 1/phi + 1/phi^2 is finite, so the quasi-greedy form is (10)^inf
    assert quasi_greedy_expansion((1 + 5 ** 0.5) / 2, 6) == (1, 0, 1, 0, 1, 0)
    assert quasi_greedy_expansion(2.0, 4) == (1, 1, 1, 1)


def test_sft_validation():
    with pytest.raises(ShiftError):
        sft([[0, 1], [1, 0]])  # periodic
    with pytest.raises(ShiftError):
        sft([[1, 2], [1, 1]])
    assert golden_mean().gap_bound == 1
    assert full_shift(4).gap_bound == 0


def test_space_json_roundtrip():
    for space in (full_shift(3), golden_mean(), beta_shift(1.5)):
        assert ShiftSpace.from_json(space.to_json()) == space


def test_parse_space():
    assert parse_space("full:3") == full_shift(3)
    assert parse_space("golden") == golden_mean()
    assert parse_space("sft:1,1;1,0") == golden_mean()
    with pytest.raises(ShiftError):
        parse_space("torus:2")


def test_codes_roundtrip():
    for w in itertools.product(range(3), repeat=4):
        assert code_word(word_code(w, 3), 4, 3) == w


def test_seq_distance():
    F2 = full_shift(2)
    zero = SymbolicSeq.periodic(F2, (0,))
    one = SymbolicSeq.periodic(F2, (1,))
    alt = SymbolicSeq.periodic(F2, (0, 1))
    assert seq_distance(zero, zero, 64) == 0.0
    assert seq_distance(zero, one, 64) == 1.0
    assert seq_distance(alt, zero, 64) == 0.5


def test_seq_distance_ultrametric():
    rng = np.random.default_rng(3)
    F2 = full_shift(2)
    base = rng.integers(0, 2, 40)
    seqs = []
    for _ in range(12):
        arr = base.copy()
        arr[rng.integers(0, 40):] = rng.integers(0, 2, 1)
        seqs.append(SymbolicSeq.from_array(F2, arr))
    for x, y, z in itertools.product(seqs, repeat=3):
        assert seq_distance(x, z, 40) <= max(seq_distance(x, y, 40), seq_distance(y, z, 40))


def test_glue_full_shift():
    assert glue(full_shift(2), ["01", "10"]) == (0, 1, 1, 0)
    assert glue(full_shift(2), ["0110"]) == (0, 1, 1, 0)


def test_glue_golden_mean():
    word, offsets = glue_with_offsets(golden_mean(), ["01", "10"])
    assert word == (0, 1, 0, 1, 0)
    assert offsets == [0, 3]
    assert verify_glue(word, ["01", "10"], offsets).ok


def test_glue_random_blocks_golden_mean():
    rng = np.random.default_rng(0)
    space = golden_mean()
    words = words_of_length(space, 5)
    for _ in range(50):
        blocks = [words[i] for i in rng.integers(0, len(words), 4)]
        word, offsets = glue_with_offsets(space, blocks)
        assert admissible(space, word)
        assert verify_glue(word, blocks, offsets).ok
        assert len(word) <= sum(map(len, blocks)) + 3 * space.gap_bound


def test_glue_rejects_inadmissible_block():
    with pytest.raises(ShiftError):
        glue(golden_mean(), ["11"])


def test_beta_glue_needs_zero_tails():
    space = beta_shift(1.8)
    with pytest.raises(ShiftError):
        glue(space, ["1", "1"])
    assert admissible(space, glue(space, ["10", "10"]))


def test_connector_table_exact_length():
    table = connector_table(golden_mean())
    for (a, b), c in table.items():
        assert len(c) == 1
        assert admissible(golden_mean(), (a,) + c + (b,))


def test_no_connector():
    with pytest.raises(NoConnectorFound):
        glue(ShiftSpace("sft", 2, ((1, 1), (1, 0)), gap_bound=0), ["1", "1"])


def test_symbolic_seq_prefix_and_validation():
    F2 = full_shift(2)
    seq = SymbolicSeq.periodic(F2, (0, 1), preperiod=(1, 1))
    assert seq.prefix(6).tolist() == [1, 1, 0, 1, 0, 1]
    with pytest.raises(ShiftError):
        SymbolicSeq.from_array(golden_mean(), [1, 1])
    bad = SymbolicSeq(golden_mean(), iter([np.array([0, 1]), np.array([1, 0])]))
    with pytest.raises(ShiftError):
        bad.prefix(4)
    short = SymbolicSeq.from_array(F2, [0, 1, 0])
    with pytest.raises(ShiftError):
        short.prefix(4)


def test_sequence_admissible_boundary():
    gm = golden_mean()
    assert sequence_admissible(gm, np.array([0, 1, 0], dtype=np.uint8))
    assert not sequence_admissible(gm, np.array([1, 0], dtype=np.uint8), prev=1)


def test_export_roundtrip():
    rng = np.random.default_rng(1)
    for k in (2, 3, 5, 17):
        arr = rng.integers(0, k, 1001).astype(np.uint8)
        back, alphabet = load_symbols(pack_symbols(arr, k))
        assert alphabet == k and np.array_equal(back, arr)
        back, alphabet = load_symbols(symbols_to_text(arr).encode())
        assert alphabet is None and np.array_equal(back, arr)


def test_export_rejects_garbage():
    with pytest.raises(ShiftError):
        load_symbols(b"01?")
    with pytest.raises(ShiftError):
        load_symbols(pack_symbols(np.zeros(64, dtype=np.uint8), 2)[:-2])
