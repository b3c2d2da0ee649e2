"""Small corpora, random legal seatings and chain drivers shared by several test modules."""
from collections import Counter

import numpy as np
import pytest

from oracles import crp_eppf, set_partitions
from sthdp import gibbs
from sthdp.gibbs import SamplerConfig

from sthdp.corpus import Corpus
from sthdp.seating import NEW, SeatingState


def small_corpus(n_docs=4, per_doc=6, V=5, seed=0):
    rng = np.random.default_rng(seed)
    n = n_docs * per_doc
    return Corpus(rng.integers(0, V, n), rng.uniform(0, 100, n), np.repeat(np.arange(n_docs), per_doc),
                  np.arange(n) // 3, V)


def one_dish_state(corpus, **kw):
    """Every word at its own table, all tables on one dish, one time dish."""
    s = SeatingState(corpus, **kw)
    s.seat_word(0)
    k, l = int(s.live_dishes()[0]), int(s.live_time_dishes()[0])
    for i in range(1, s.n_words):
        s.seat_word(i, NEW, k, NEW, l)
    return s


def random_legal_seat(s: SeatingState, i, rng):
    a = s.a
    j = a.doc[i]
    tables = s.tables_of(j)
    dishes = s.live_dishes()
    r = rng.random()
    if len(tables) and r < 0.5:
        table, dish = int(rng.choice(tables)), NEW
        k = int(a.tbl_dish[table])
    elif len(dishes) and r < 0.85:
        table, dish = NEW, int(rng.choice(dishes))
        k = dish
    else:
        table = dish = k = NEW
    tts = s.time_tables_of(k) if k >= 0 else []
    tds = s.live_time_dishes()
    r = rng.random()
    if len(tts) and r < 0.5:
        return s.seat_word(i, table, dish, int(rng.choice(tts)), NEW)
    if len(tds) and r < 0.85:
        return s.seat_word(i, table, dish, NEW, int(rng.choice(tds)))
    return s.seat_word(i, table, dish, NEW, NEW)


def random_state(corpus, seed):
    rng = np.random.default_rng(seed)
    s = SeatingState(corpus, k_cap=2, l_cap=2)
    for i in range(s.n_words):
        random_legal_seat(s, i, rng)
    return s


def partition_key(z):
    blocks = {}
    for i, h in enumerate(z):
        blocks.setdefault(int(h), []).append(i)
    return tuple(sorted(tuple(b) for b in blocks.values()))


def eppf_tv(n_samples, burn_in=500, seed=0):
    n = 4
    c = Corpus(np.zeros(n, int), np.zeros(n), np.zeros(n, int), np.arange(n), 1)
    cfg = SamplerConfig(seed=seed, use_time=False, resample_concentrations=False)
    s = SeatingState(c, concentrations=(1.0, 1.0, 1.0, 1.0))
    rng = np.random.default_rng(seed)
    gibbs.initialize(s, rng, use_time=False)
    counts = Counter()
    for it in range(burn_in + n_samples):
        gibbs._run_range(s, gibbs._word_pass, 0, n, rng, False)
        if it >= burn_in:
            counts[partition_key(s.a.z)] += 1
    exact = {tuple(sorted(tuple(sorted(b)) for b in p)): crp_eppf([len(b) for b in p], 1.0)
             for p in set_partitions(list(range(n)))}
    assert len(exact) == 15 and sum(exact.values()) == pytest.approx(1.0)
    assert set(counts) <= set(exact)
    return 0.5 * sum(abs(counts[p] / n_samples - q) for p, q in exact.items())


# --- acceptance report ---------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> bool:
    """Print and keep one pass/fail line for an acceptance criterion."""
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line, flush=True)
    ACCEPTANCE_LINES.append(line)
    return ok
