import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trace
from procest.errors import UsageError
from procest.metrics import (
    classification_report,
    completeness_error,
    confusion_matrix,
    count_nonadjacent_jumps,
    remaining_time_error,
    segment_error_counts,
    two_set,
    two_set_many,
)

# -- brute-force oracles -------------------------------------------------------


def oracle_report(gt, pred):
    classes = sorted(set(gt) | set(pred))
    n = len(gt)
    out = dict(p=0.0, r=0.0, f=0.0, inf=0.0, mk=0.0)
    for c in classes:
        tp = sum(1 for a, b in zip(gt, pred) if a == c and b == c)
        fp = sum(1 for a, b in zip(gt, pred) if a != c and b == c)
        fn = sum(1 for a, b in zip(gt, pred) if a == c and b != c)
        tn = n - tp - fp - fn
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        ir = tn / (tn + fp) if tn + fp else 0.0
        ip = tn / (tn + fn) if tn + fn else 0.0
        w = (tp + fn) / n
        out["p"] += w * p
        out["r"] += w * r
        out["f"] += w * f
        out["inf"] += w * (r + ir - 1)
        out["mk"] += w * (p + ip - 1)
    out["acc"] = sum(a == b for a, b in zip(gt, pred)) / n
    return out


def oracle_segments(gt, pred):
    """Frame-by-frame reading of the segment error definitions."""
    n = len(gt)
    out = {}
    for c in set(gt):
        frag = under = over = 0
        i = 0
        while i < n:  # ground-truth runs of c
            if gt[i] != c:
                i += 1
                continue
            j = i
            while j + 1 < n and gt[j + 1] == c:
                j += 1
            ok = [k for k in range(i, j + 1) if pred[k] == c]
            for k in range(i, j + 1):
                if pred[k] == c:
                    continue
                if ok and ok[0] < k < ok[-1]:
                    frag += 1
                else:
                    under += 1
            i = j + 1
        for k in range(n):  # predicted-c frames outside gt runs of c
            if pred[k] != c or gt[k] == c:
                continue
            lo = k
            while lo > 0 and pred[lo - 1] == c:
                lo -= 1
            hi = k
            while hi + 1 < n and pred[hi + 1] == c:
                hi += 1
            if any(gt[m] == c for m in range(lo, hi + 1)):
                over += 1
        out[c] = (frag, under, over)
    return out


random_pairs = st.integers(1, 50).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 4), min_size=n, max_size=n),
        st.lists(st.integers(0, 4), min_size=n, max_size=n),
    )
)

# -- classification ------------------------------------------------------------


def test_perfect_prediction():
    rep = classification_report([0, 1, 2, 2, 1], [0, 1, 2, 2, 1])
    assert rep.accuracy == rep.f1 == rep.mcc == 1.0
    assert rep.informedness == rep.markedness == 1.0


def test_worked_example():
    rep = classification_report([1, 1, 2, 2], [1, 2, 2, 2])
    assert rep.accuracy == 0.75
    assert rep.f1 == pytest.approx(0.5 * (2 / 3) + 0.5 * 0.8, abs=1e-15)


def test_confusion_rows_are_truth():
    cm = confusion_matrix([0, 0, 1], [1, 1, 1])
    np.testing.assert_array_equal(cm, [[0, 2], [0, 1]])


def test_length_mismatch():
    with pytest.raises(UsageError):
        classification_report([0, 1], [0])
    with pytest.raises(UsageError):
        two_set([0, 1], [0])


def test_report_matches_oracle_1000_pairs():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        k = int(rng.integers(1, 6))
        gt = rng.integers(0, k, n).tolist()
        pred = rng.integers(0, k, n).tolist()
        rep = classification_report(gt, pred)
        ref = oracle_report(gt, pred)
        for got, key in ((rep.accuracy, "acc"), (rep.precision, "p"), (rep.recall, "r"), (rep.f1, "f"),
                         (rep.informedness, "inf"), (rep.markedness, "mk")):
            assert abs(got - ref[key]) <= 1e-12


@given(random_pairs)
def test_scores_bounded(pair):
    rep = classification_report(*pair)
    for v in (rep.mcc, rep.informedness, rep.markedness):
        assert -1 - 1e-12 <= v <= 1 + 1e-12
    for v in (rep.accuracy, rep.precision, rep.recall, rep.f1):
        assert 0 <= v <= 1 + 1e-12


def test_mcc_matches_binary_formula():
    gt = [0, 0, 0, 1, 1, 1, 1, 0]
    pred = [0, 1, 0, 1, 1, 0, 1, 0]
    tp, tn, fp, fn = 3, 3, 1, 1
    ref = (tp * tn - fp * fn) / math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    assert classification_report(gt, pred).mcc == pytest.approx(ref, abs=1e-15)


def test_random_predictions_mcc_near_zero():
    rng = np.random.default_rng(5)
    gt = np.repeat(np.arange(5), 20_000)
    pred = rng.integers(0, 5, gt.size)
    assert abs(classification_report(gt, pred).mcc) < 0.02


# -- segment errors ------------------------------------------------------------


def test_two_set_perfect():
    rep = two_set([0, 0, 1, 1, 2], [0, 0, 1, 1, 2])
    assert (rep.fragmentation, rep.under_fill, rep.over_fill) == (0, 0, 0)


def test_two_set_shifted_boundary():
    gt = list("AAAABBBB")
    pred = list("AAABBBBB")
    counts = segment_error_counts(gt, pred)
    assert counts == {"A": (0, 1, 0), "B": (0, 0, 1)}
    rep = two_set(gt, pred)
    # one frame each, weighted by support 4/8, over 8 frames
    assert rep.fragmentation == 0
    assert rep.under_fill == pytest.approx(0.5 / 8)
    assert rep.over_fill == pytest.approx(0.5 / 8)


def test_fragmentation_gap():
    gt = np.zeros(30, dtype=int)
    gt[10:21] = 1
    pred = gt.copy()
    pred[15:17] = 2
    assert segment_error_counts(gt, pred)[1] == (2, 0, 0)


def test_whole_run_missed_is_under_fill():
    assert segment_error_counts([0, 1, 1, 0], [0, 0, 0, 0])[1] == (0, 2, 0)


def test_isolated_insertion_is_not_over_fill():
    # the predicted 1 at frame 0 does not touch any gt run of 1
    assert segment_error_counts([0, 0, 0, 1], [1, 0, 0, 1])[1] == (0, 0, 0)


def test_segments_match_oracle_1000_pairs():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        # runs-heavy sequences exercise gaps better than i.i.d. labels
        gt = np.repeat(rng.integers(0, 4, n), rng.integers(1, 4, n)).tolist()
        pred = [g if rng.random() < 0.7 else int(rng.integers(0, 4)) for g in gt]
        assert segment_error_counts(gt, pred) == oracle_segments(gt, pred)


@given(random_pairs, st.permutations(range(5)))
def test_two_set_relabel_invariant(pair, perm):
    gt, pred = pair
    a = two_set(gt, pred)
    b = two_set([perm[g] for g in gt], [perm[p] for p in pred])
    np.testing.assert_allclose([a.fragmentation, a.under_fill, a.over_fill],
                               [b.fragmentation, b.under_fill, b.over_fill], rtol=1e-12, atol=0)


@given(random_pairs)
def test_two_set_zero_iff_equal(pair):
    gt, pred = pair
    rep = two_set(gt, pred)
    zero = rep.fragmentation == rep.under_fill == rep.over_fill == 0
    assert zero == (gt == pred)
    for v in (rep.fragmentation, rep.under_fill, rep.over_fill):
        assert 0 <= v <= 1


@settings(max_examples=200)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.lists(st.integers(0, 5), min_size=1, max_size=40))
def test_monotone_sequences_never_fragment(a, b):
    n = min(len(a), len(b))
    gt, pred = sorted(a[:n]), sorted(b[:n])
    assert two_set(gt, pred).fragmentation == 0


def test_two_set_many_pools_traces():
    gts = [[0, 0, 1, 1], [0, 1, 1, 1]]
    preds = [[0, 1, 1, 1], [0, 1, 1, 1]]
    rep = two_set_many(gts, preds)
    # class 0: support 3 of 8, one under-filled frame; class 1: support 5, one over-filled frame
    assert rep.under_fill == pytest.approx((3 / 8) * (1 / 8))
    assert rep.over_fill == pytest.approx((5 / 8) * (1 / 8))


def test_nonadjacent_jumps():
    assert count_nonadjacent_jumps([0, 1, 2, 3]) == 0
    assert count_nonadjacent_jumps([0, 2, 1, 3, 3]) == 2


# -- completeness and remaining time ------------------------------------------


def test_completeness_error_perfect():
    y = np.linspace(0, 1, 11)
    rep = completeness_error(y, y, phases=np.repeat([0, 1], [5, 6]), normalized_time=y)
    assert rep.overall == 0
    assert rep.per_phase == {0: 0.0, 1: 0.0}
    assert np.nanmax(rep.curve) == 0


def test_completeness_error_offset():
    y = np.linspace(0, 1, 101)
    assert completeness_error(y, np.clip(y + 0.1, 0, 1)).overall <= 0.1
    y = np.linspace(0, 0.8, 101)
    assert completeness_error(y, y + 0.1).overall == pytest.approx(0.1)


def test_completeness_error_random():
    rng = np.random.default_rng(9)
    assert completeness_error(rng.random(100_000), rng.random(100_000)).overall == pytest.approx(1 / 3, abs=0.01)


def test_completeness_curve_bins():
    rep = completeness_error([0.0, 0.0], [0.2, 0.4], normalized_time=[0.0, 0.999], bins=10)
    assert rep.curve[0] == pytest.approx(0.2)
    assert rep.curve[9] == pytest.approx(0.4)
    assert np.isnan(rep.curve[1:9]).all()
    assert rep.to_dict()["curve"][1] is None


def test_remaining_time_perfect():
    tr = make_trace(np.arange(100.0), duration=100.0)
    t = tr.times
    rho = t / 100.0
    est = [None if r < 0.01 else (ti / r) * (1 - r) for ti, r in zip(t, rho)]
    rep = remaining_time_error([tr], [est])
    assert rep.overall == pytest.approx(0, abs=1e-9)
    assert rep.excluded == 1


def test_remaining_time_stuck_estimator():
    tr = make_trace(np.arange(100.0), duration=100.0)
    t = tr.times
    est = [ti * (1 - 0.5) / 0.5 for ti in t]
    rep = remaining_time_error([tr], [est])
    assert rep.overall == pytest.approx(np.mean(np.abs(100 - 2 * t)))


def test_remaining_time_all_unknown():
    tr = make_trace(np.arange(5.0))
    rep = remaining_time_error([tr], [[None] * 5])
    assert rep.overall is None
    assert rep.excluded == 5 and rep.counted == 0


def test_remaining_time_misaligned():
    tr = make_trace(np.arange(5.0))
    with pytest.raises(UsageError):
        remaining_time_error([tr], [[1.0] * 4])
