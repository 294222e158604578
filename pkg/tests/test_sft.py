import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from openrates.sft import (NotPrimitiveError, SFTError, SFTSpec, as_word, avoiding_ones_entropy,
                           block_measure_maxentropy, blocks_overlap, delete_block, delete_blocks,
                           entropy_drop_study, is_primitive, q_bruteforce, theta_block, topological_entropy,
                           word_measure)

GOLDEN = math.log((1 + math.sqrt(5)) / 2)
FULL2 = SFTSpec.full(2)
GOLDEN_SHIFT = SFTSpec(2, ("11",))


def count_words(sft, n):
    return sum(1 for w in itertools.product(range(sft.alphabet), repeat=n) if sft.allows_word(w))


def test_entropy_examples():
    assert topological_entropy(FULL2) == pytest.approx(math.log(2), abs=1e-13)
    assert topological_entropy(GOLDEN_SHIFT) == pytest.approx(GOLDEN, abs=1e-13)
    assert topological_entropy(SFTSpec.full(1)) == 0
    assert topological_entropy(SFTSpec.from_matrix([[1, 1], [1, 0]])) == pytest.approx(GOLDEN, abs=1e-13)


def test_non_primitive_reports_period():
    flip = SFTSpec.from_matrix([[0, 1], [1, 0]])
    with pytest.raises(NotPrimitiveError) as exc:
        topological_entropy(flip)
    assert exc.value.period == 2
    assert not is_primitive(flip)
    # two disjoint loops: reducible
    with pytest.raises(NotPrimitiveError):
        topological_entropy(SFTSpec.from_matrix([[1, 0], [0, 1]]))


def test_delete_examples():
    g = delete_block(FULL2, "11")
    assert g == GOLDEN_SHIFT and topological_entropy(g) == pytest.approx(GOLDEN, abs=1e-13)
    assert topological_entropy(delete_block(FULL2, "0")) == 0
    with pytest.raises(SFTError):
        delete_block(g, "11")
    with pytest.raises(SFTError):
        delete_block(g, "011")  # contains a forbidden word


def test_overlapping_deletions_rejected():
    assert blocks_overlap(as_word("011"), as_word("110"))
    assert blocks_overlap(as_word("0011"), as_word("1010"))  # "1" ends one and starts the other
    assert not blocks_overlap(as_word("0010"), as_word("1111"))
    with pytest.raises(SFTError):
        delete_blocks(FULL2, ["011", "110"])
    assert topological_entropy(delete_blocks(FULL2, ["0010", "1111"])) < math.log(2)


def test_parsing():
    assert as_word("0a1") == (0, 10, 1)
    with pytest.raises(SFTError):
        as_word("")
    with pytest.raises(SFTError):
        SFTSpec(2, ("012",))
    with pytest.raises(SFTError):
        SFTSpec.from_matrix([[1, 2], [1, 1]])
    assert SFTSpec.from_dict({"alphabet": 2, "forbidden_blocks": ["11"]}) == GOLDEN_SHIFT
    assert SFTSpec.from_dict({"matrix": [[1, 1], [1, 0]]}) == SFTSpec(2, ((1, 1),))
    with pytest.raises(SFTError):
        SFTSpec.from_dict({})
    with pytest.raises(SFTError):
        GOLDEN_SHIFT.presentation(0)


@pytest.mark.parametrize("L", range(1, 7))
def test_full_shift_block_measure(L):
    for w in itertools.islice(itertools.product((0, 1), repeat=L), 5):
        assert block_measure_maxentropy(FULL2, w) == pytest.approx(2.0**-L, rel=1e-12)


def test_golden_cylinder_matches_periodic_point_count():
    # Parry measure is the limit of the uniform law on period-n points
    M = [[1, 1], [1, 0]]

    def power(n):
        R = [[1, 0], [0, 1]]
        for _ in range(n):
            R = [[sum(R[i][k] * M[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
        return R
    n = 80
    trace = power(n)[0][0] + power(n)[1][1]
    starts_00 = power(n - 1)[0][0]
    assert block_measure_maxentropy(GOLDEN_SHIFT, "00") == pytest.approx(starts_00 / trace, rel=1e-12)


forbidden_sets = st.lists(st.text("012", min_size=2, max_size=3), min_size=1, max_size=4)


@given(st.integers(2, 3), forbidden_sets)
def test_entropy_is_presentation_independent_and_matches_word_growth(A, forbidden):
    forbidden = [f for f in forbidden if all(int(c) < A for c in f)]
    assume(forbidden)
    sft = SFTSpec(A, tuple(forbidden))
    assume(is_primitive(sft))
    h = topological_entropy(sft)
    k0 = sft.memory - 1
    for k in (k0 + 1, k0 + 2):
        assert topological_entropy(sft, k) == pytest.approx(h, abs=1e-11)
    # word-count growth ratio converges to exp(h)
    n = 11 if A == 2 else 8
    ratio = count_words(sft, n + 1) / count_words(sft, n)
    assert ratio == pytest.approx(math.exp(h), rel=0.06)


@given(st.integers(2, 3), forbidden_sets, st.text("012", min_size=1, max_size=4))
def test_deletion_never_raises_entropy(A, forbidden, block):
    forbidden = [f for f in forbidden if all(int(c) < A for c in f)]
    assume(all(int(c) < A for c in block))
    sft = SFTSpec(A, tuple(forbidden))
    assume(is_primitive(sft))
    try:
        smaller = delete_block(sft, block)
    except SFTError:
        return
    if is_primitive(smaller):
        assert topological_entropy(smaller) < topological_entropy(sft) + 1e-12


@given(st.sampled_from([FULL2, GOLDEN_SHIFT, SFTSpec(3, ("00", "12")), SFTSpec(2, ("111", "000"))]),
       st.integers(2, 6))
def test_parry_measure_is_a_shift_invariant_probability(sft, n):
    P = sft.presentation()
    n = max(n, P.k)
    words = [w for w in itertools.product(range(sft.alphabet), repeat=n)]
    mass = {w: word_measure(sft, w, P) for w in words}
    assert sum(mass.values()) == pytest.approx(1, abs=1e-12)
    if n > P.k:
        short = {w: word_measure(sft, w, P) for w in itertools.product(range(sft.alphabet), repeat=n - 1)}
        for w, m in short.items():
            assert m == pytest.approx(sum(mass[w + (a,)] for a in range(sft.alphabet)), abs=1e-12)
            assert m == pytest.approx(sum(mass[(a,) + w] for a in range(sft.alphabet)), abs=1e-12)


@pytest.mark.parametrize("sft,block", [(FULL2, "11"), (FULL2, "0110"), (GOLDEN_SHIFT, "00"),
                                       (GOLDEN_SHIFT, "0101"), (SFTSpec(3, ("00",)), "12")])
def test_theta_block_q_matches_brute_force(sft, block):
    tb = theta_block(sft, block, N=8)
    np.testing.assert_allclose(tb.q, q_bruteforce(sft, block, 8), atol=1e-12)


def test_theta_block_examples():
    for L in (2, 4, 8):
        assert theta_block(FULL2, "1" * L).theta_overlap == pytest.approx(0.5, abs=1e-12)
    single = theta_block(FULL2, "0")
    assert single.q[0] == pytest.approx(0.5) and single.theta_overlap == pytest.approx(0.5)
    # no self-overlap: the only short return abuts the old occurrence, at time L
    for L in (2, 4, 6):
        tb = theta_block(FULL2, "0" + "1" * (L - 1))
        assert tb.theta_overlap == pytest.approx(1 - 2.0**-L, abs=1e-12)


def test_entropy_drop_family_ones():
    reps = entropy_drop_study(FULL2, ["1" * L for L in range(2, 13)], theta=0.5)
    assert reps[0].drop == pytest.approx(math.log(2) - GOLDEN, abs=1e-12)
    assert reps[0].predicted_drop == pytest.approx(0.125)
    assert reps[0].ratio == pytest.approx(1.6955, abs=1e-3)
    ratios = [r.ratio for r in reps]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert abs(ratios[-1] - 1) < 0.05
    for r in reps:
        assert r.h_open == pytest.approx(avoiding_ones_entropy(r.length), abs=1e-12)


def test_non_overlapping_family_ratio_tends_to_one():
    # 0^k 1^k has no self-overlap and its deletion keeps the shift irreducible
    reps = entropy_drop_study(FULL2, ["0" * k + "1" * k for k in range(2, 7)])
    assert abs(reps[-1].ratio - 1) < abs(reps[0].ratio - 1)
    ratios = [abs(r.ratio - 1) for r in reps]
    assert all(b < a for a, b in zip(ratios, ratios[1:])) and ratios[-1] < 0.02


def test_study_rejects_forbidden_block():
    with pytest.raises(SFTError):
        entropy_drop_study(GOLDEN_SHIFT, ["11"])


def test_avoiding_ones_oracle_matches_word_counts():
    for L in (1, 2, 3):
        sft = SFTSpec(2, ("1" * L,))
        ratio = count_words(sft, 17) / count_words(sft, 16)
        assert math.log(ratio) == pytest.approx(avoiding_ones_entropy(L), abs=1e-3)
