import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defocr.core import finite_diff_grad, rel_error
from defocr.crf import (
    CrfParams,
    brute_force_best,
    brute_force_logZ,
    log_partition,
    nll,
    nll_backward,
    posterior_marginals,
    score_sequence,
    viterbi,
    zero_crf,
)
from defocr.errors import DimensionError, RefusalError
from defocr.rng import SplitMix64


def _random_instance(rng, t_len, n_labels, scale=2.0):
    e = rng.uniform_array((t_len, n_labels), -scale, scale)
    p = CrfParams(
        transitions=rng.uniform_array((n_labels, n_labels), -scale, scale),
        start=rng.uniform_array((n_labels,), -scale, scale),
        end=rng.uniform_array((n_labels,), -scale, scale),
    )
    return e, p


# ------------------------------------------------------------- score


def test_score_all_zero_is_zero():
    e = np.zeros((3, 4))
    assert score_sequence(e, [0, 1, 2], zero_crf(4)) == 0.0


def test_score_single_step():
    rng = SplitMix64(1)
    e, p = _random_instance(rng, 1, 3)
    y = [2]
    assert score_sequence(e, y, p) == pytest.approx(p.start[2] + e[0, 2] + p.end[2])


def test_score_hand_case():
    e = np.array([[1.0, 0.0], [0.0, 1.0]])
    p = CrfParams(
        transitions=np.array([[0.0, 2.0], [0.0, 0.0]]),
        start=np.zeros(2),
        end=np.zeros(2),
    )
    assert score_sequence(e, [0, 1], p) == 4.0


def test_score_rejects_length_mismatch():
    with pytest.raises(DimensionError):
        score_sequence(np.zeros((3, 2)), [0, 1], zero_crf(2))


def test_params_validation():
    with pytest.raises(DimensionError):
        CrfParams(transitions=np.zeros((2, 3)), start=np.zeros(2), end=np.zeros(2))
    with pytest.raises(DimensionError):
        CrfParams(transitions=np.zeros((2, 2)), start=np.zeros(3), end=np.zeros(2))
    with pytest.raises(DimensionError):
        CrfParams(
            transitions=np.full((2, 2), np.nan), start=np.zeros(2), end=np.zeros(2)
        )


# ------------------------------------------------------------- logZ


def test_logz_all_zero_counts_sequences():
    for t_len, n_labels in [(1, 2), (3, 4), (5, 3)]:
        e = np.zeros((t_len, n_labels))
        assert log_partition(e, zero_crf(n_labels)) == pytest.approx(
            t_len * np.log(n_labels), abs=1e-12
        )


def test_logz_single_step_closed_form():
    e = np.array([[1.3, -0.4]])
    got = log_partition(e, zero_crf(2))
    assert got == pytest.approx(np.log(np.exp(1.3) + np.exp(-0.4)), abs=1e-12)
    e_equal = np.array([[0.7, 0.7]])
    assert log_partition(e_equal, zero_crf(2)) == pytest.approx(0.7 + np.log(2.0))


def test_logz_shift_identity():
    rng = SplitMix64(2)
    e, p = _random_instance(rng, 4, 3)
    base = log_partition(e, p)
    assert abs(log_partition(e + 2.5, p) - base - 4 * 2.5) <= 1e-10


def test_logz_handles_large_scores():
    rng = SplitMix64(3)
    e, p = _random_instance(rng, 5, 4, scale=600.0)
    assert np.isfinite(log_partition(e, p))
    assert np.isfinite(posterior_marginals(e, p)).all()


def test_score_never_exceeds_logz():
    rng = SplitMix64(4)
    for _ in range(20):
        t_len = rng.randint(4) + 1
        n_labels = rng.randint(3) + 2
        e, p = _random_instance(rng, t_len, n_labels)
        y = [rng.randint(n_labels) for _ in range(t_len)]
        assert score_sequence(e, y, p) < log_partition(e, p)


def test_score_equals_logz_for_single_label():
    rng = SplitMix64(5)
    e, p = _random_instance(rng, 3, 1)
    y = [0, 0, 0]
    assert score_sequence(e, y, p) == pytest.approx(log_partition(e, p), abs=1e-12)


# ------------------------------------------------------------- marginals


def test_marginal_rows_sum_to_one():
    rng = SplitMix64(6)
    e, p = _random_instance(rng, 5, 4)
    m = posterior_marginals(e, p)
    assert np.max(np.abs(m.sum(axis=1) - 1.0)) <= 1e-10
    assert np.all(m >= 0)


def test_marginals_uniform_for_zero_inputs():
    m = posterior_marginals(np.zeros((3, 4)), zero_crf(4))
    assert np.allclose(m, 0.25, atol=1e-12)


def test_marginals_match_enumeration():
    rng = SplitMix64(7)
    e, p = _random_instance(rng, 2, 2)
    logz = brute_force_logZ(e, p)
    want = np.zeros((2, 2))
    for y0 in range(2):
        for y1 in range(2):
            prob = np.exp(score_sequence(e, [y0, y1], p) - logz)
            want[0, y0] += prob
            want[1, y1] += prob
    assert np.max(np.abs(posterior_marginals(e, p) - want)) <= 1e-9


# ------------------------------------------------------------- nll


def test_nll_single_label_is_zero():
    rng = SplitMix64(8)
    e, p = _random_instance(rng, 4, 1)
    assert nll(e, [0, 0, 0, 0], p) == pytest.approx(0.0, abs=1e-12)


def test_nll_zero_inputs():
    assert nll(np.zeros((3, 4)), [1, 2, 0], zero_crf(4)) == pytest.approx(
        3 * np.log(4.0)
    )


def test_nll_nonnegative():
    rng = SplitMix64(9)
    for _ in range(20):
        e, p = _random_instance(rng, 3, 3)
        y = [rng.randint(3) for _ in range(3)]
        assert nll(e, y, p) >= 0.0


def test_nll_gradients_match_finite_differences():
    rng = SplitMix64(10)
    for _ in range(3):
        e, p = _random_instance(rng, 4, 3)
        y = [rng.randint(3) for _ in range(4)]
        loss, ge, gt, gs, gen = nll_backward(e, y, p)
        assert loss == pytest.approx(nll(e, y, p), abs=1e-12)
        # emission gradient is marginals minus the one-hot path
        onehot = np.zeros_like(e)
        onehot[np.arange(4), y] = 1.0
        assert np.allclose(ge, posterior_marginals(e, p) - onehot, atol=1e-12)

        assert rel_error(ge, finite_diff_grad(lambda v: nll(v, y, p), e)) <= 1e-4

        def with_trans(v):
            return nll(e, y, CrfParams(transitions=v, start=p.start, end=p.end))

        def with_start(v):
            return nll(e, y, CrfParams(transitions=p.transitions, start=v, end=p.end))

        def with_end(v):
            return nll(e, y, CrfParams(transitions=p.transitions, start=p.start, end=v))

        assert rel_error(gt, finite_diff_grad(with_trans, p.transitions)) <= 1e-4
        assert rel_error(gs, finite_diff_grad(with_start, p.start)) <= 1e-4
        assert rel_error(gen, finite_diff_grad(with_end, p.end)) <= 1e-4


def test_logz_transition_gradient_is_expected_counts():
    rng = SplitMix64(11)
    e, p = _random_instance(rng, 3, 3)

    def logz_of_trans(v):
        return log_partition(e, CrfParams(transitions=v, start=p.start, end=p.end))

    fd = finite_diff_grad(logz_of_trans, p.transitions)
    logz = brute_force_logZ(e, p)
    counts = np.zeros((3, 3))
    import itertools

    for y in itertools.product(range(3), repeat=3):
        prob = np.exp(score_sequence(e, list(y), p) - logz)
        for a, b in zip(y, y[1:]):
            counts[a, b] += prob
    assert rel_error(counts, fd) <= 1e-4


# ------------------------------------------------------------- viterbi


def test_viterbi_zero_crf_is_argmax():
    rng = SplitMix64(12)
    e = rng.uniform_array((6, 5), -1, 1)
    path, score = viterbi(e, zero_crf(5))
    assert np.array_equal(path, e.argmax(axis=1))
    assert score == pytest.approx(e.max(axis=1).sum(), abs=1e-12)


def test_viterbi_matches_brute_force():
    rng = SplitMix64(13)
    e, p = _random_instance(rng, 4, 3)
    path, score = viterbi(e, p)
    bpath, bscore = brute_force_best(e, p)
    assert list(path) == list(bpath)
    assert score == pytest.approx(bscore, abs=1e-12)


def test_viterbi_score_is_self_consistent():
    rng = SplitMix64(14)
    for _ in range(10):
        e, p = _random_instance(rng, 5, 4)
        path, score = viterbi(e, p)
        assert abs(score - score_sequence(e, path, p)) <= 1e-12


def test_viterbi_tie_break_duplicated_columns():
    # zero transitions + duplicated emission columns: every path through
    # either column scores the same; both decoders must pick the smaller.
    rng = SplitMix64(15)
    for _ in range(10):
        e = rng.uniform_array((4, 3), -1, 1)
        e_dup = np.concatenate([e, e[:, :1]], axis=1)  # label 3 mirrors label 0
        p = zero_crf(4)
        path, _ = viterbi(e_dup, p)
        bpath, _ = brute_force_best(e_dup, p)
        assert list(path) == list(bpath)
        assert 3 not in path  # duplicate of label 0 never wins the tie


def test_viterbi_tie_break_duplicated_label_blocks():
    # duplicating a full label (emissions + transitions + start/end) keeps
    # the per-step maxima tied; smallest-index tie-break must agree.
    rng = SplitMix64(16)
    for _ in range(10):
        e, p = _random_instance(rng, 3, 2)
        e2 = np.concatenate([e, e[:, 1:2]], axis=1)
        t2 = np.zeros((3, 3))
        t2[:2, :2] = p.transitions
        t2[2, :2] = p.transitions[1, :]
        t2[:2, 2] = p.transitions[:, 1]
        t2[2, 2] = p.transitions[1, 1]
        p2 = CrfParams(
            transitions=t2,
            start=np.concatenate([p.start, p.start[1:2]]),
            end=np.concatenate([p.end, p.end[1:2]]),
        )
        path, _ = viterbi(e2, p2)
        bpath, _ = brute_force_best(e2, p2)
        assert list(path) == list(bpath)


# ------------------------------------------------------------- oracles


def test_brute_force_refuses_large_enumerations():
    with pytest.raises(RefusalError):
        brute_force_logZ(np.zeros((8, 10)), zero_crf(10))
    with pytest.raises(RefusalError):
        brute_force_best(np.zeros((8, 10)), zero_crf(10))


def test_brute_force_single_step():
    rng = SplitMix64(17)
    e, p = _random_instance(rng, 1, 4)
    assert brute_force_logZ(e, p) == pytest.approx(log_partition(e, p), abs=1e-12)
    path, score = brute_force_best(e, p)
    want = int(np.argmax(e[0] + p.start + p.end))
    assert list(path) == [want]


def test_brute_force_shift_monotonicity():
    rng = SplitMix64(18)
    e, p = _random_instance(rng, 3, 3)
    base = brute_force_logZ(e, p)
    assert brute_force_logZ(e + 1.5, p) == pytest.approx(base + 3 * 1.5, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), t_len=st.integers(1, 4), n_labels=st.integers(2, 4))
def test_dp_equals_enumeration(seed, t_len, n_labels):
    rng = SplitMix64(seed)
    e, p = _random_instance(rng, t_len, n_labels)
    assert abs(log_partition(e, p) - brute_force_logZ(e, p)) <= 1e-9
    path, score = viterbi(e, p)
    bpath, bscore = brute_force_best(e, p)
    assert list(path) == list(bpath)
    assert score == pytest.approx(bscore, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), t_len=st.integers(1, 5), n_labels=st.integers(2, 5))
def test_viterbi_dominates_random_paths(seed, t_len, n_labels):
    rng = SplitMix64(seed)
    e, p = _random_instance(rng, t_len, n_labels)
    _, best = viterbi(e, p)
    for _ in range(5):
        y = [rng.randint(n_labels) for _ in range(t_len)]
        assert score_sequence(e, y, p) <= best + 1e-12
