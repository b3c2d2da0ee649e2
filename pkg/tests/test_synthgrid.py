import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sthdp.corpus import load_corpus, save_corpus
from sthdp.model import TopicModel, extract_model, profile_mass
from sthdp.seating import NEW, SeatingState
from sthdp.synthgrid import (
    GridGroundTruth, bar_pattern, generate, inject_trajectories, label_ratio, mass_after,
    match_topics, near_duplicate_truth, phase_masses, save_labels, temporal_recovery,
)

P1, P2 = bar_pattern(5, row=2), bar_pattern(5, col=2)


def test_bars():
    assert P1.sum() == pytest.approx(1) and np.count_nonzero(P1) == 5
    assert np.count_nonzero(P1 * P2) == 1  # the bars cross in one cell
    assert np.flatnonzero(P1).tolist() == [10, 11, 12, 13, 14]
    assert np.flatnonzero(P2).tolist() == [2, 7, 12, 17, 22]


def test_default_truth_landmarks():
    t = GridGroundTruth()
    assert t.vocab_size == 25 and t.time_span == (0.0, 280.0)
    assert t.phases[3][0] == 210.0


def test_truth_validation():
    with pytest.raises(ValueError):
        GridGroundTruth(patterns=[np.ones(25)])
    with pytest.raises(ValueError):
        GridGroundTruth(phases=[(0, 10, {0: 1}), (20, 30, {1: 1})])
    with pytest.raises(ValueError):
        GridGroundTruth(words_per_doc=10, traj_len=8)
    with pytest.raises(ValueError):
        GridGroundTruth(doc_span=100.0)


def test_generate_counts_and_support():
    t = GridGroundTruth()
    c, labels = generate(t, seed=0)
    assert len(c) == len(labels) == 4 * 50 * 40
    assert c.n_docs == 200
    for p, (start, end, mix) in enumerate(t.phases):
        idx = (c.times >= start) & (c.times < end)
        assert idx.sum() == 50 * 40
        assert set(np.unique(labels[idx])) == set(mix)
    for pat, bar in ((0, P1), (1, P2)):
        assert np.all(bar[c.words[labels == pat]] > 0)


def test_phase_one_words_in_first_bar():
    c, _ = generate(GridGroundTruth(), seed=5)
    assert np.all(P1[c.words[c.times < 70.0]] > 0)


@pytest.mark.parametrize("seed", range(5))
def test_default_label_ratio(seed):
    _, labels = generate(GridGroundTruth(), seed=seed)
    assert 1.8 <= label_ratio(labels) <= 2.2


def test_generate_deterministic(tmp_path):
    a, la = generate(seed=3)
    b, lb = generate(seed=3)
    np.testing.assert_array_equal(a.words, b.words)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(la, lb)
    save_corpus(a, tmp_path / "a.csv")
    save_corpus(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert not np.array_equal(generate(seed=4)[0].words, a.words)
    c = load_corpus(tmp_path / "a.csv")
    np.testing.assert_array_equal(c.words, a.words)


def test_doc_span_and_jitter():
    t = GridGroundTruth(doc_span=10.0, jitter=0.5, docs_per_phase=5)
    c, _ = generate(t, seed=0)
    for idx in c.documents:
        assert np.ptp(c.times[idx]) <= 10.0 + 4.0
    for start, end, _ in t.phases:
        idx = (c.times >= start) & (c.times < end)
        assert idx.sum() == 5 * 40


def test_trajectories_single_pattern():
    c, labels = generate(seed=1)
    for idx in c.trajectory_index().values():
        assert len(idx) == 8 and len(set(labels[idx])) == 1


def test_labels_file(tmp_path):
    save_labels([0, 1, 1], tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text() == "obs_index,pattern\n0,0\n1,1\n2,1\n"


def test_near_duplicate_truth():
    t = near_duplicate_truth()
    a, b = t.patterns
    assert np.abs(a - b).sum() == pytest.approx(0.2)
    c, labels = generate(t, seed=0)
    assert len(c) == 2 * 50 * 40 and label_ratio(labels) == 1.0


def test_inject_trajectories():
    t = GridGroundTruth(docs_per_phase=10)
    c, labels = generate(t, seed=0)
    d, dl, ids = inject_trajectories(c, labels, t, pattern=0, phase=1, n=5, seed=2)
    assert len(d) == len(c) + 40 and len(ids) == 5 and len(set(ids)) == 5
    ti = d.trajectory_index()
    for tid in ids:
        idx = ti[tid]
        assert np.all((d.times[idx] >= 70) & (d.times[idx] < 140))
        assert np.all(P1[d.words[idx]] > 0) and np.all(dl[idx] == 0)
        assert len(np.unique(d.docs[idx])) == 1
    with pytest.raises(ValueError):
        inject_trajectories(c, labels, t, 0, 1, n=11, seed=0)


# --- matching -------------------------------------------------------------------------------


def test_match_identity():
    m = match_topics([P2, P1], [P1, P2])
    assert m.matches == {0: 1, 1: 0}
    assert m.l1 == {0: 0.0, 1: 0.0} and not m.under_split and m.unmatched_mass == 0


def test_match_noise_closed_form():
    u = np.full(25, 1 / 25)
    m = match_topics([0.9 * P1 + 0.1 * u, 0.9 * P2 + 0.1 * u], [P1, P2])
    # 0.1 * sum |P - u| = 0.1 * 2 * (1 - |bar| / V)
    for p in (0, 1):
        assert m.l1[p] == pytest.approx(0.2 * (1 - 5 / 25), abs=1e-14)


def test_match_single_average_topic_is_under_split():
    avg = 0.5 * (P1 + P2)
    m = match_topics([avg], [P1, P2])
    assert m.under_split and m.matches == {0: 0, 1: 0}
    assert m.l1[0] == pytest.approx(np.abs(P1 - avg).sum())


def test_match_unmatched_mass():
    noise = np.full(25, 1 / 25)
    m = match_topics([P1, noise, P2], [P1, P2], weights=[0.5, 0.2, 0.3])
    assert m.matches == {0: 0, 1: 2} and m.unmatched_mass == pytest.approx(0.2)
    with pytest.raises(ValueError):
        match_topics(np.zeros((0, 25)), [P1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_match_invariant_to_topic_order(seed):
    rng = np.random.default_rng(seed)
    B = rng.dirichlet(np.full(25, 0.3), size=int(rng.integers(1, 6)))
    perm = rng.permutation(len(B))
    a = match_topics(B, [P1, P2])
    b = match_topics(B[perm], [P1, P2])
    assert {p: perm[k] for p, k in b.matches.items()} == a.matches
    assert b.l1 == pytest.approx(a.l1)


# --- temporal recovery ------------------------------------------------------------------------


def gaussian_model(means, variances, gamma, support):
    K = len(support)
    return TopicModel(beta=np.tile(P1, (K, 1)), topic_weight=np.asarray(support, float) / sum(support),
                      support=np.asarray(support, float), time_mean=np.asarray(means, float),
                      time_var=np.asarray(variances, float), time_weight=np.full(len(means), 1 / len(means)),
                      gamma=np.asarray(gamma, float), eta=0.5, time_span=(0.0, 280.0))


def test_phase_mass_single_gaussian_inside_phase():
    t = GridGroundTruth()
    m = gaussian_model([35.0], [25.0], [[1.0]], [10])
    pm = phase_masses(m, 0, t)
    assert pm[0] == pytest.approx(1.0, abs=1e-9)
    assert 0.95 <= pm.sum() <= 1.0 + 1e-12


def test_phase_mass_tails_outside_span():
    t = GridGroundTruth()
    m = gaussian_model([5.0, 240.0], [400.0, 100.0], [[0.5, 0.5]], [10])
    pm = phase_masses(m, 0, t)
    outside = 0.5 * (stats.norm.cdf(0, 5, 20) + stats.norm.sf(280, 5, 20)) \
        + 0.5 * (stats.norm.cdf(0, 240, 10) + stats.norm.sf(280, 240, 10))
    assert pm.sum() == pytest.approx(1 - outside, rel=1e-12)
    expected = 0.5 * stats.norm.sf(210, 5, 20) + 0.5 * stats.norm.sf(210, 240, 10)
    assert mass_after(m, 0, 210.0) == pytest.approx(expected, rel=1e-12)


def truth_seated_state(corpus, labels, truth):
    """Dish per pattern, table per (document, pattern), time dish per phase."""
    s = SeatingState(corpus)
    dish, table, tdish, ttab = {}, {}, {}, {}
    bounds = [e for _, e, _ in truth.phases]
    for i in range(len(corpus)):
        pat, j = int(labels[i]), int(corpus.docs[i])
        ph = int(np.searchsorted(bounds, corpus.times[i], side="right"))
        h = table.get((j, pat), NEW)
        k = dish.get(pat, NEW) if h == NEW else NEW
        tt = ttab.get((pat, ph), NEW)
        l = tdish.get(ph, NEW) if tt == NEW else NEW
        h = s.seat_word(i, h, k, tt, l)
        table[(j, pat)] = h
        dish[pat] = int(s.a.tbl_dish[h])
        ttab[(pat, ph)] = int(s.a.o[i])
        tdish[ph] = int(s.a.tt_td[s.a.o[i]])
    assert s.validate() == []
    return s


def test_truth_seated_state_recovers_bump_and_ratio():
    truth = GridGroundTruth()
    c, labels = generate(truth, seed=0)
    s = truth_seated_state(c, labels, truth)
    m = extract_model(s)
    match = match_topics(m.beta, truth.patterns, m.topic_weight)
    assert max(match.l1.values()) < 0.1
    rec = temporal_recovery(m, match, truth)
    assert rec[1][3] > 0.05 and mass_after(m, match.matches[1], 210.0) > 0.05
    assert rec[0][1] < 0.05  # no P1 mass in the P2-only phase
    k1, k2 = match.matches[0], match.matches[1]
    ratio = profile_mass(m, k1, -1e6, 1e6) / profile_mass(m, k2, -1e6, 1e6)
    assert ratio == pytest.approx(label_ratio(labels), rel=1e-9)
