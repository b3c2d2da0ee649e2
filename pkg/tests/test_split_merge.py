import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_state, small_corpus
from oracles import Snapshot, crp_eppf, set_partitions
from sthdp import split_merge as sm
from sthdp.corpus import Corpus
from sthdp.seating import NEW, SeatingState


def dish_groups(s, tables, assignment):
    """Word counts of the two proposal groups, recomputed from raw assignments."""
    out = [Counter(), Counter()]
    for h, g in zip(tables, assignment):
        for i in np.flatnonzero(s.a.z == h):
            out[g][int(s.a.word[i])] += 1
    return out


def three_table_state(words=(0, 0, 1, 1, 2), tables=((0, 1), (2, 3), (4,)), omega=1.3, shared_time_table=True):
    """One dish holding the given tables, each in its own document.

    Every word sits on one time dish; either on one shared time table or on
    one time table per word table.
    """
    docs = np.concatenate([[j] * len(t) for j, t in enumerate(tables)])
    order = np.concatenate(tables)
    c = Corpus(np.asarray(words)[order], np.linspace(0, 10, len(words)), docs, np.arange(len(words)), 3)
    s = SeatingState(c, concentrations=(1.0, omega, 1.0, 1.0))
    s.seat_word(0)
    k, tt = int(s.a.tbl_dish[s.a.z[0]]), int(s.a.o[0])
    l = int(s.a.tt_td[tt])
    first = 0
    for t in tables:
        if first == 0:
            h = int(s.a.z[0])
        elif shared_time_table:
            h = s.seat_word(first, NEW, k, tt)
        else:
            h = s.seat_word(first, NEW, k, NEW, l)
        for i in range(first + 1, first + len(t)):
            s.seat_word(i, h, NEW, int(s.a.o[first]))
        first += len(t)
    assert s.validate() == [] and s.K == 1
    return s


# --- closed forms -------------------------------------------------------------------


@pytest.mark.parametrize("sizes,alpha", [([4], 1.0), ([2, 1, 1], 1.0), ([3, 2], 0.5), ([1] * 5, 2.0)])
def test_crp_log_prior_matches_eppf(sizes, alpha):
    assert sm.crp_log_prior(sizes, alpha) == pytest.approx(math.log(crp_eppf(sizes, alpha)), rel=1e-12)


def test_split_terms_match_oracle_without_time():
    rng = np.random.default_rng(0)
    for seed in range(10):
        s = random_state(small_corpus(4, 6, seed=seed), seed)
        for _ in range(5):
            p = sm.propose(s, rng, use_time=False)
            snap = Snapshot(s)
            g0, g1 = dish_groups(s, p.tables, p.assignment)
            dm = (snap.dm_log_marginal(Counter(), g0) + snap.dm_log_marginal(Counter(), g1)
                  - snap.dm_log_marginal(Counter(), g0 + g1))
            assert p.log_lik_ratio == pytest.approx(dm, rel=1e-10, abs=1e-10)
            m = np.bincount(p.assignment, minlength=2)
            prior = math.log(snap.omega) + math.lgamma(m[0]) + math.lgamma(m[1]) - math.lgamma(m.sum())
            assert p.log_prior_ratio == pytest.approx(prior, rel=1e-12, abs=1e-12)


def test_prior_ratio_matches_full_state_prior():
    rng = np.random.default_rng(1)
    s = random_state(small_corpus(4, 6, seed=1), 1)
    for _ in range(20):
        p = sm.propose(s, rng, use_time=False)
        t = s.copy()
        before = sm.state_log_prior(t)
        sm.commit(t, p, rng, use_time_pass=False)
        diff = sm.state_log_prior(t) - before
        expected = p.log_prior_ratio if p.kind == sm.SPLIT else -p.log_prior_ratio
        assert diff == pytest.approx(expected, abs=1e-10)
        assert t.validate() == []


def test_replayed_allocation_reproduces_log_q():
    s = three_table_state()
    h = [int(x) for x in s.live_tables()]
    rng = np.random.default_rng(0)
    p = sm.propose(s, rng, anchors=(h[0], h[1]), use_time=False)
    forced = dict(zip(p.tables.tolist(), p.assignment.tolist()))
    _, lq = sm.sequential_allocation(s, (h[0], h[1]), rng, forced=forced, use_time=False)
    assert lq == pytest.approx(p.log_q, abs=1e-12)


@pytest.mark.parametrize("use_time", [False, True])
def test_split_and_reverse_merge_ratios_cancel(use_time):
    # with per-table time tables a split opens no time tables, so the time evidence is unchanged
    s = three_table_state(shared_time_table=not use_time)
    h = [int(x) for x in s.live_tables()]
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = sm.propose(s, rng, anchors=(h[0], h[1]), use_time=use_time, subsample=1000)
        assert p.kind == sm.SPLIT
        t = s.copy()
        sm.commit(t, p, rng, use_time_pass=False)
        q = sm.propose(t, rng, anchors=(h[0], h[1]), use_time=use_time, subsample=1000)
        assert q.kind == sm.MERGE
        assert q.log_ratio == pytest.approx(-p.log_ratio, abs=1e-9)


def test_third_table_allocation_probability():
    """Table {2} between anchor groups {0,0} and {1,1}: both groups score it identically."""
    s = three_table_state()
    h = [int(x) for x in s.live_tables()]
    p = sm.propose(s, np.random.default_rng(0), anchors=(h[0], h[1]), use_time=False)
    assert p.log_q == pytest.approx(math.log(0.5), abs=1e-12)
    s = three_table_state(tables=((0, 1), (2, 3), (4,)), words=(0, 0, 1, 1, 0))
    h = [int(x) for x in s.live_tables()]
    p = sm.propose(s, np.random.default_rng(0), anchors=(h[0], h[1]), use_time=False)
    eta, V = s.eta, 3
    # word 0 joins group 0 with weight (2 + eta) and group 1 with weight eta (equal n, m)
    p0 = (2 + eta) / (2 + eta + eta)
    expected = math.log(p0) if p.assignment[2] == 0 else math.log(1 - p0)
    assert p.log_q == pytest.approx(expected, abs=1e-12)


def test_split_of_lone_time_tables_keeps_time_table_count():
    c = Corpus([0, 1, 0, 1], [1.0, 2.0, 3.0, 4.0], [0, 1, 2, 3], [0, 1, 2, 3], 2)
    s = SeatingState(c)
    s.seat_word(0)
    k = int(s.a.tbl_dish[s.a.z[0]])
    for i in range(1, 4):
        s.seat_word(i, NEW, k)
    ntt, L = s.n_time_tables, s.L
    h = [int(x) for x in s.live_tables()]
    rng = np.random.default_rng(0)
    p = sm.propose(s, rng, anchors=(h[0], h[1]), use_time=False)
    sm.commit(s, p, rng, use_time_pass=False)
    assert s.K == 2 and s.n_time_tables == ntt and s.L == L
    assert s.validate() == []


# --- read-only proposals ----------------------------------------------------------------


def test_thousand_proposals_leave_state_untouched():
    s = random_state(small_corpus(5, 8, seed=3), 3)
    before = s.digest()
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = sm.propose(s, rng)
        assert np.isfinite(p.log_ratio) and 0.0 <= p.accept_prob <= 1.0
    assert s.digest() == before


def test_invalid_anchors_rejected():
    s = random_state(small_corpus(), 0)
    h = int(s.live_tables()[0])
    with pytest.raises(ValueError):
        sm.propose(s, np.random.default_rng(0), anchors=(h, h))


def test_single_table_has_no_proposal():
    s = SeatingState(Corpus([0], [1.0], [0], [0], 2))
    s.seat_word(0)
    assert sm.propose(s, np.random.default_rng(0)) is None
    assert sm.sm_step(s, np.random.default_rng(0)).proposed == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_sm_step_keeps_state_valid(seed):
    s = random_state(small_corpus(4, 6, seed=seed % 5), seed)
    st_ = sm.sm_step(s, np.random.default_rng(seed), n_proposals=30, check=True)
    assert st_.proposed == st_.proposed_split + st_.proposed_merge
    assert s.validate() == []
    assert s.a.tt_s[s.live_time_tables()].sum() == s.n_words


def test_stats_accumulate():
    a = sm.SmStats(1, 1, 0, 1, 0)
    a += sm.SmStats(2, 1, 1, 0, 1)
    assert a == sm.SmStats(3, 2, 1, 1, 1)


# --- stationarity ------------------------------------------------------------------------


def exact_dish_partition_posterior(words, omega, eta, V):
    """Posterior over dish partitions of single-word tables (no time evidence)."""
    out = {}
    for part in set_partitions(list(range(len(words)))):
        lp = math.log(crp_eppf([len(b) for b in part], omega))
        for b in part:
            c = Counter(words[i] for i in b)
            lp += math.lgamma(V * eta) - math.lgamma(len(b) + V * eta)
            lp += sum(math.lgamma(n + eta) - math.lgamma(eta) for n in c.values())
        out[tuple(sorted(tuple(sorted(b)) for b in part))] = math.exp(lp)
    z = sum(out.values())
    return {k: v / z for k, v in out.items()}


def test_split_merge_chain_targets_partition_posterior():
    words = [0, 0, 1, 1]
    V, omega = 2, 1.0
    c = Corpus(words, [1.0, 2.0, 3.0, 4.0], [0, 1, 2, 3], [0, 1, 2, 3], V)
    s = SeatingState(c, concentrations=(1.0, omega, 1.0, 1.0))
    for i in range(4):
        s.seat_word(i)
    exact = exact_dish_partition_posterior(words, omega, s.eta, V)
    rng = np.random.default_rng(0)
    counts = Counter()
    n = 20_000
    for it in range(n + 200):
        sm.sm_step(s, rng, n_proposals=1, use_time=False)
        if it >= 200:
            blocks = {}
            for i in range(4):
                blocks.setdefault(int(s.a.tbl_dish[s.a.z[i]]), []).append(i)
            counts[tuple(sorted(tuple(b) for b in blocks.values()))] += 1
    tv = 0.5 * sum(abs(counts[p] / n - q) for p, q in exact.items())
    assert tv < 0.02
    assert s.validate() == []
