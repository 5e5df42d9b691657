import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import plugin_mi, swipe_features
from touchauth.data import SwipeGesture, synth_generate_corpus
from touchauth.errors import DegenerateSwipe, EmptySeries, SingleClass
from touchauth.features import (
    FEATURE_NAMES,
    WindowSet,
    apply_normalizer,
    build_windows,
    export_feature_csv,
    extract_features,
    fit_normalizer,
    mutual_information,
    percentile,
    rank_features,
    select_features,
    window_count,
)


def _close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b)) + 1e-12


def _mk(rows, uid="u", sid="s"):
    return SwipeGesture(uid, "d", sid, np.array(rows, dtype=float))


def test_feature_table_has_47_names():
    assert len(FEATURE_NAMES) == 47
    assert len(set(FEATURE_NAMES)) == 47


def test_matches_oracle_on_synthetic_swipes():
    corpus = synth_generate_corpus(10, 10, 1.0, seed=5)
    for s in corpus.swipes:
        got = extract_features(s).values
        want = swipe_features([tuple(r) for r in s.events])
        assert len(got) == 47
        bad = [FEATURE_NAMES[i] for i in range(47) if not _close(got[i], want[i])]
        assert not bad, (s.swipe_id, bad)


def test_vertical_chord_and_repeated_timestamps():
    rows = [(5, 0, 0, 1, 1), (6, 10, 10, 1, 1), (5, 20, 10, 1, 1), (4, 30, 30, 1, 1), (5, 40, 40, 1, 1), (5, 50, 55, 1, 1)]
    got = extract_features(_mk(rows)).values
    want = swipe_features(rows)
    assert all(_close(g, w) for g, w in zip(got, want))
    assert got[34] == 1.0


def test_straight_constant_speed_swipe():
    rows = [(3.0 * i, 4.0 * i, 10.0 * i, 2.0, 1.0) for i in range(8)]
    v = extract_features(_mk(rows)).values
    assert v[0] == 70.0
    assert v[5] == pytest.approx(35.0)
    assert v[6] == pytest.approx(35.0)
    assert v[7] == pytest.approx(0.5)
    assert v[10] == pytest.approx(0.5)
    assert v[12] == pytest.approx(2 * math.pi)
    assert v[14] == 0.0
    assert v[33] == pytest.approx(0.0, abs=1e-12)
    assert v[34] == pytest.approx(0.0, abs=1e-12)


def test_degenerate_swipes():
    with pytest.raises(DegenerateSwipe):
        extract_features(_mk([(0, 0, 0, 1, 1)]))
    with pytest.raises(DegenerateSwipe):
        extract_features(_mk([(0, 0, 5, 1, 1), (1, 1, 5, 1, 1)]))


def test_percentile_known_values():
    assert percentile([4, 1, 3, 2], 50) == 2.5
    assert percentile([1, 2, 3, 4, 5], 25) == 2.0
    assert percentile([7], 75) == 7.0
    with pytest.raises(EmptySeries):
        percentile([], 50)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.floats(0, 100))
def test_percentile_matches_numpy_linear(xs, m):
    assert percentile(xs, m) == pytest.approx(float(np.percentile(xs, m)), rel=1e-9, abs=1e-6)


def test_window_count_exhaustive():
    for n in range(0, 31):
        for p in range(1, 31):
            for q in range(1, 31):
                mat = np.arange(n * 2, dtype=float).reshape(n, 2)
                ws = build_windows(mat, p, q)
                expect = (n - p) // q + 1 if n >= p else 0
                assert window_count(n, p, q) == expect
                assert len(ws) == expect


def test_window_layout_and_dimension():
    corpus = synth_generate_corpus(2, 12, seed=2)
    user = corpus.user_ids[0]
    vecs = [extract_features(s) for s in corpus.by_user()[user]]
    ws = build_windows(vecs, 5, 1)
    assert ws.values.shape == (8, 235)
    assert np.array_equal(ws.values[2, 47:94], vecs[3].values)
    assert ws.user_ids == [user] * 8
    assert list(ws.window_index) == list(range(8))


def test_build_windows_rejects_mixed_users():
    corpus = synth_generate_corpus(2, 10, seed=2)
    vecs = [extract_features(s) for s in corpus.swipes]
    with pytest.raises(ValueError):
        build_windows(vecs, 5, 1)


def test_normalizer_bounds_and_constant_dims():
    train = np.array([[0.0, 1.0, 3.0], [10.0, 1.0, 5.0]])
    norm = fit_normalizer(train)
    out = norm.apply(np.array([[5.0, 7.0, 9.0], [-3.0, 1.0, 4.0]]))
    assert out.tolist() == [[0.5, 0.5, 1.0], [0.0, 0.5, 0.5]]
    ws = WindowSet(train, ["u", "u"], np.arange(2), ["genuine"] * 2)
    assert np.array_equal(apply_normalizer(norm, ws).values, norm.apply(train))


@settings(max_examples=40)
@given(arrays(float, (6, 4), elements=st.floats(-1e3, 1e3)), arrays(float, (5, 4), elements=st.floats(-1e4, 1e4)))
def test_normalizer_range_property(train, other):
    out = fit_normalizer(train).apply(other)
    assert np.all((out >= 0) & (out <= 1))


def _oracle_codes(col, bins):
    # average ranks by brute force, then the symmetric edge rule
    k = len(col)
    codes = []
    for v in col:
        less = sum(1 for w in col if w < v)
        eq = sum(1 for w in col if w == v)
        r2 = 2 * less + eq - 1  # doubled average 0-based rank
        num, den = bins * (r2 + 1), 2 * k
        c = num // den
        if num % den == 0:
            if 2 * c == bins:
                c = bins
            elif 2 * c > bins:
                c -= 1
        codes.append(min(c, bins))
    return codes


def _oracle_mi(col, labels, bins=10):
    codes = _oracle_codes(list(col), bins)
    table = [[0, 0] for _ in range(bins + 1)]
    for c, y in zip(codes, labels):
        table[c][int(y)] += 1
    return plugin_mi(table)


def test_mi_matches_plugin_oracle():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n = int(rng.integers(15, 80))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        col = rng.normal(size=n) + y * rng.uniform(0, 2)
        if trial % 3 == 0:
            col = np.round(col, 1)
        assert mutual_information(col, y) == pytest.approx(_oracle_mi(col, y), abs=1e-12)


def test_mi_separable_and_independent():
    y = np.array([0] * 50 + [1] * 50)
    assert mutual_information(np.arange(100.0), y) == pytest.approx(math.log(2))
    assert mutual_information(np.ones(100), y) == 0.0
    with pytest.raises(SingleClass):
        mutual_information(np.arange(4.0), [1, 1, 1, 1])


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=4, max_size=40))
def test_mi_properties(pairs):
    col = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs])
    if len(set(y)) < 2:
        return
    mi = mutual_information(col, y)
    assert 0 <= mi <= math.log(2) + 1e-12
    assert mutual_information(-col, y) == pytest.approx(mi, abs=1e-12)
    assert mutual_information(3 * col + 1, y) == pytest.approx(mi, abs=1e-12)


def test_rank_and_select():
    rng = np.random.default_rng(1)
    y = np.repeat([0, 1], 60)
    X = rng.normal(size=(120, 6))
    X[:, 4] += 3 * y
    X[:, 1] += 1 * y
    sel = rank_features(X, y)
    assert list(sel.selected_indices[:2]) == [4, 1]
    calls = []

    def evaluate(idx):
        calls.append(len(idx))
        return {1: 0.2, 2: 0.1, 4: 0.1, 6: 0.3}[len(idx)]

    best, scores = select_features(X, y, [6, 1, 2, 4], evaluate)
    assert best.k == 2
    assert sorted(calls) == [1, 2, 4, 6]
    assert scores[6] == 0.3
    single, s2 = select_features(X, y, [300], evaluate)
    assert single.k == 6 and s2 == {}
    assert np.array_equal(best.apply(X), X[:, [4, 1]])


def test_export_feature_csv(tmp_path):
    ws = WindowSet(np.array([[0.25, 1.0]]), ["u"], np.array([0]), ["genuine"])
    p = tmp_path / "f.csv"
    export_feature_csv(ws, p)
    assert p.read_text() == "user_id,window_index,label,f000,f001\nu,0,genuine,0.25,1.0\n"
