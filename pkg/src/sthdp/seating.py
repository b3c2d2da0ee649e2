"""Chinese-restaurant-franchise state for the coupled word / time HDPs.

Every word ``i`` sits at a word table ``z[i]`` in its document (restaurant);
each word table serves a word dish. The time stamp of word ``i`` sits at a
time table ``o[i]`` inside the *time restaurant* of its word dish, and every
time table serves a time dish (a Gaussian over time).

The state is a flat :class:`Arrays` bundle so that the sampling kernels in
:mod:`sthdp.gibbs` can be compiled with numba. Entities are addressed by stable
integer handles. Each entity family keeps a "live list": ``perm[:count]`` are
the live handles, ``perm[count:]`` the free ones, and ``pos`` is the inverse
permutation. Word tables of restaurant ``j`` use the handle range
``doc_start[j]:doc_start[j+1]``, which can never overflow since a restaurant
cannot have more tables than words.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .priors import NigParams, _nig_post, _t_params

# indices into Arrays.cnt
CK, CL, CTT, CM = 0, 1, 2, 3
# indices into Arrays.hyp
H_ETA, H_MU, H_LAM, H_SHAPE, H_SCALE, H_NU0, H_LOC0, H_SCL0, H_LNORM0 = range(9)
# indices into Arrays.conc
C_DELTA, C_OMEGA, C_ZETA, C_EPS = range(4)

NEW = -1
CHECKPOINT_VERSION = 1


class Arrays(NamedTuple):
    # observations (read-only)
    word: np.ndarray
    time: np.ndarray
    doc: np.ndarray
    doc_start: np.ndarray
    # word tables
    z: np.ndarray
    tbl_n: np.ndarray
    tbl_dish: np.ndarray
    rest_perm: np.ndarray
    tbl_pos: np.ndarray
    rest_m: np.ndarray
    # word dishes
    dish_m: np.ndarray
    dish_n: np.ndarray
    dish_wc: np.ndarray
    dish_ntt: np.ndarray
    dish_S: np.ndarray
    dish_perm: np.ndarray
    dish_pos: np.ndarray
    # time tables
    o: np.ndarray
    tt_s: np.ndarray
    tt_td: np.ndarray
    tt_dish: np.ndarray
    tt_perm: np.ndarray
    tt_pos: np.ndarray
    # time dishes
    td_d: np.ndarray
    td_n: np.ndarray
    td_sum: np.ndarray
    td_ss: np.ndarray
    td_nu: np.ndarray
    td_loc: np.ndarray
    td_scl: np.ndarray
    td_lnorm: np.ndarray
    td_perm: np.ndarray
    td_pos: np.ndarray
    # scalars
    cnt: np.ndarray
    hyp: np.ndarray
    conc: np.ndarray


class SeatingError(RuntimeError):
    """Illegal mutation of the seating state (programming error)."""


# --- live-list primitives -----------------------------------------------------


@njit(cache=True)
def _swap_to(perm, pos, h, p):
    q = pos[h]
    other = perm[p]
    perm[p] = h
    pos[h] = p
    perm[q] = other
    pos[other] = q


@njit(cache=True)
def _alloc(perm, pos, cnt, ci, h):
    """Make ``h`` live (``h < 0``: first free handle). Returns the handle."""
    c = cnt[ci]
    if h < 0:
        h = perm[c]
    elif pos[h] != c:
        _swap_to(perm, pos, h, c)
    cnt[ci] = c + 1
    return h


@njit(cache=True)
def _free(perm, pos, cnt, ci, h):
    c = cnt[ci] - 1
    _swap_to(perm, pos, h, c)
    cnt[ci] = c


@njit(cache=True)
def _alloc_table(a, j, h):
    base = a.doc_start[j]
    c = base + a.rest_m[j]
    if h < 0:
        h = a.rest_perm[c]
    elif a.tbl_pos[h] != c:
        _swap_to(a.rest_perm, a.tbl_pos, h, c)
    a.rest_m[j] += 1
    return h


@njit(cache=True)
def _free_table(a, j, h):
    c = a.doc_start[j] + a.rest_m[j] - 1
    _swap_to(a.rest_perm, a.tbl_pos, h, c)
    a.rest_m[j] -= 1


@njit(cache=True)
def _dish_live(a, k):
    return a.dish_pos[k] < a.cnt[CK]


@njit(cache=True)
def _td_live(a, l):
    return a.td_pos[l] < a.cnt[CL]


@njit(cache=True)
def _tt_live(a, tt):
    return a.tt_pos[tt] < a.cnt[CTT]


@njit(cache=True)
def _td_refresh(a, l):
    h = a.hyp
    lam, mu, shape, scale = _nig_post(h[H_MU], h[H_LAM], h[H_SHAPE], h[H_SCALE],
                                      a.td_n[l], a.td_sum[l], a.td_ss[l])
    nu, loc, scl, lnorm = _t_params(mu, lam, shape, scale)
    a.td_nu[l] = nu
    a.td_loc[l] = loc
    a.td_scl[l] = scl
    a.td_lnorm[l] = lnorm


# --- time side ----------------------------------------------------------------


@njit(cache=True)
def _remove_time_word(a, i):
    """Unseat the time stamp of word i. Returns 1 if its time table was deleted."""
    tt = a.o[i]
    l = a.tt_td[tt]
    k = a.tt_dish[tt]
    t = a.time[i]
    a.o[i] = -1
    a.tt_s[tt] -= 1
    a.dish_S[k, l] -= 1
    a.td_n[l] -= 1
    if a.td_n[l] == 0:
        a.td_sum[l] = 0.0
        a.td_ss[l] = 0.0
    else:
        a.td_sum[l] -= t
        a.td_ss[l] -= t * t
    deleted = 0
    if a.tt_s[tt] == 0:
        deleted = 1
        _free(a.tt_perm, a.tt_pos, a.cnt, CTT, tt)
        a.tt_td[tt] = -1
        a.tt_dish[tt] = -1
        a.dish_ntt[k] -= 1
        a.td_d[l] -= 1
        if a.td_d[l] == 0:
            _free(a.td_perm, a.td_pos, a.cnt, CL, l)
            return deleted
    _td_refresh(a, l)
    return deleted


@njit(cache=True)
def _seat_time_word(a, i, k, tt, l):
    """Seat time stamp of word i in time restaurant k.

    ``tt``/``l`` of -1 allocate fresh entities; a dead non-negative handle is
    allocated specifically (used by restore).
    """
    if tt < 0 or not _tt_live(a, tt):
        tt = _alloc(a.tt_perm, a.tt_pos, a.cnt, CTT, tt)
        a.tt_dish[tt] = k
        a.dish_ntt[k] += 1
        if l < 0 or not _td_live(a, l):
            l = _alloc(a.td_perm, a.td_pos, a.cnt, CL, l)
            a.td_n[l] = 0
            a.td_sum[l] = 0.0
            a.td_ss[l] = 0.0
            a.td_d[l] = 0
        a.tt_td[tt] = l
        a.td_d[l] += 1
    l = a.tt_td[tt]
    t = a.time[i]
    a.o[i] = tt
    a.tt_s[tt] += 1
    a.dish_S[k, l] += 1
    a.td_n[l] += 1
    a.td_sum[l] += t
    a.td_ss[l] += t * t
    _td_refresh(a, l)
    return tt


# --- word side ----------------------------------------------------------------


@njit(cache=True)
def _remove_word(a, i):
    """Unseat word i from both HDPs, deleting emptied entities."""
    _remove_time_word(a, i)
    h = a.z[i]
    k = a.tbl_dish[h]
    w = a.word[i]
    a.z[i] = -1
    a.tbl_n[h] -= 1
    a.dish_wc[k, w] -= 1
    a.dish_n[k] -= 1
    if a.tbl_n[h] == 0:
        _free_table(a, a.doc[i], h)
        a.tbl_dish[h] = -1
        a.dish_m[k] -= 1
        a.cnt[CM] -= 1
        if a.dish_m[k] == 0:
            _free(a.dish_perm, a.dish_pos, a.cnt, CK, k)


@njit(cache=True)
def _new_dish(a, k):
    k = _alloc(a.dish_perm, a.dish_pos, a.cnt, CK, k)
    a.dish_m[k] = 0
    a.dish_n[k] = 0
    a.dish_ntt[k] = 0
    a.dish_wc[k, :] = 0
    a.dish_S[k, :] = 0
    return k


@njit(cache=True)
def _seat_word(a, i, h, k, tt, l):
    """Seat word i at table h (new if -1 or dead) serving dish k, then its time stamp."""
    j = a.doc[i]
    if h < 0 or a.tbl_n[h] == 0:
        h = _alloc_table(a, j, h)
        if k < 0 or not _dish_live(a, k):
            k = _new_dish(a, k)
        a.tbl_dish[h] = k
        a.tbl_n[h] = 0
        a.dish_m[k] += 1
        a.cnt[CM] += 1
    k = a.tbl_dish[h]
    w = a.word[i]
    a.z[i] = h
    a.tbl_n[h] += 1
    a.dish_wc[k, w] += 1
    a.dish_n[k] += 1
    _seat_time_word(a, i, k, tt, l)
    return h


@njit(cache=True)
def _rebuild_td_stats(a):
    """Recompute time-dish sufficient statistics from scratch (kills float drift)."""
    for q in range(a.cnt[CL]):
        l = a.td_perm[q]
        a.td_n[l] = 0
        a.td_sum[l] = 0.0
        a.td_ss[l] = 0.0
    for i in range(a.word.shape[0]):
        tt = a.o[i]
        if tt < 0:
            continue
        l = a.tt_td[tt]
        t = a.time[i]
        a.td_n[l] += 1
        a.td_sum[l] += t
        a.td_ss[l] += t * t
    for q in range(a.cnt[CL]):
        _td_refresh(a, a.td_perm[q])


# --- Python facade ------------------------------------------------------------


@dataclass(frozen=True)
class RemovalRecord:
    """Everything needed to put a removed word back exactly where it was."""

    word: int
    table: int
    dish: int
    time_table: int
    time_dish: int
    table_pos: int
    dish_pos: int
    tt_pos: int
    td_pos: int
    td_stats: tuple


def _live(perm, count):
    return perm[:count].copy()


class SeatingState:
    """Mutable CRF state over a :class:`~sthdp.corpus.Corpus`."""

    def __init__(self, corpus, *, eta=0.5, nig: NigParams | None = None,
                 concentrations=(1.0, 1.0, 1.0, 1.0), k_cap=32, l_cap=32):
        N = len(corpus)
        if N == 0:
            raise ValueError("empty corpus")
        V = corpus.vocab_size
        D = corpus.n_docs
        if nig is None:
            nig = NigParams(float(corpus.times.mean()), 0.01, 0.3, 1.0)
        self.corpus = corpus
        self.nig = nig
        i64 = lambda n, v=0: np.full(n, v, dtype=np.int64)
        hyp = np.zeros(9)
        hyp[H_ETA] = eta
        hyp[[H_MU, H_LAM, H_SHAPE, H_SCALE]] = nig.mu, nig.lam, nig.shape, nig.scale
        hyp[[H_NU0, H_LOC0, H_SCL0, H_LNORM0]] = _t_params(nig.mu, nig.lam, nig.shape, nig.scale)
        ar = np.arange(N, dtype=np.int64)
        self.a = Arrays(
            word=corpus.words.copy(), time=corpus.times.copy(), doc=corpus.docs.copy(),
            doc_start=corpus.doc_start.copy(),
            z=i64(N, -1), tbl_n=i64(N), tbl_dish=i64(N, -1), rest_perm=ar.copy(),
            tbl_pos=ar.copy(), rest_m=i64(D),
            dish_m=i64(k_cap), dish_n=i64(k_cap), dish_wc=np.zeros((k_cap, V), np.int64),
            dish_ntt=i64(k_cap), dish_S=np.zeros((k_cap, l_cap), np.int64),
            dish_perm=np.arange(k_cap, dtype=np.int64), dish_pos=np.arange(k_cap, dtype=np.int64),
            o=i64(N, -1), tt_s=i64(N), tt_td=i64(N, -1), tt_dish=i64(N, -1),
            tt_perm=ar.copy(), tt_pos=ar.copy(),
            td_d=i64(l_cap), td_n=i64(l_cap), td_sum=np.zeros(l_cap), td_ss=np.zeros(l_cap),
            td_nu=np.ones(l_cap), td_loc=np.zeros(l_cap), td_scl=np.ones(l_cap),
            td_lnorm=np.zeros(l_cap),
            td_perm=np.arange(l_cap, dtype=np.int64), td_pos=np.arange(l_cap, dtype=np.int64),
            cnt=i64(4), hyp=hyp, conc=np.asarray(concentrations, dtype=np.float64).copy(),
        )

    # -- sizes -----------------------------------------------------------------
    @property
    def n_words(self):
        return len(self.a.word)

    @property
    def vocab_size(self):
        return self.a.dish_wc.shape[1]

    @property
    def eta(self):
        return float(self.a.hyp[H_ETA])

    @property
    def K(self):
        return int(self.a.cnt[CK])

    @property
    def L(self):
        return int(self.a.cnt[CL])

    @property
    def n_tables(self):
        return int(self.a.cnt[CM])

    @property
    def n_time_tables(self):
        return int(self.a.cnt[CTT])

    @property
    def concentrations(self):
        d, w, z, e = self.a.conc
        return {"delta": float(d), "omega": float(w), "zeta": float(z), "epsilon": float(e)}

    def live_dishes(self):
        return _live(self.a.dish_perm, self.a.cnt[CK])

    def live_time_dishes(self):
        return _live(self.a.td_perm, self.a.cnt[CL])

    def live_time_tables(self):
        return _live(self.a.tt_perm, self.a.cnt[CTT])

    def live_tables(self):
        a = self.a
        out = [a.rest_perm[a.doc_start[j]:a.doc_start[j] + a.rest_m[j]]
               for j in range(len(a.rest_m))]
        return np.concatenate(out) if out else np.zeros(0, np.int64)

    def tables_of(self, j):
        a = self.a
        return a.rest_perm[a.doc_start[j]:a.doc_start[j] + a.rest_m[j]].copy()

    def time_tables_of(self, k):
        tts = self.live_time_tables()
        return tts[self.a.tt_dish[tts] == k]

    # -- capacity --------------------------------------------------------------
    def ensure_capacity(self, n_dishes=1, n_time_dishes=1):
        a = self.a
        k_cap, l_cap = a.dish_m.shape[0], a.td_d.shape[0]
        new_k = k_cap
        while a.cnt[CK] + n_dishes > new_k:
            new_k *= 2
        new_l = l_cap
        while a.cnt[CL] + n_time_dishes > new_l:
            new_l *= 2
        if new_k == k_cap and new_l == l_cap:
            return False
        self._grow(new_k, new_l)
        return True

    def _grow(self, new_k, new_l):
        a = self.a
        k_cap, l_cap = a.dish_m.shape[0], a.td_d.shape[0]

        def pad(x, n, fill=0):
            out = np.full((n,) + x.shape[1:], fill, dtype=x.dtype)
            out[: x.shape[0]] = x
            return out

        def pad_perm(x, n):
            return np.concatenate([x, np.arange(x.shape[0], n, dtype=np.int64)])

        S = np.zeros((new_k, new_l), np.int64)
        S[:k_cap, :l_cap] = a.dish_S
        self.a = a._replace(
            dish_m=pad(a.dish_m, new_k), dish_n=pad(a.dish_n, new_k),
            dish_wc=pad(a.dish_wc, new_k), dish_ntt=pad(a.dish_ntt, new_k), dish_S=S,
            dish_perm=pad_perm(a.dish_perm, new_k), dish_pos=pad_perm(a.dish_pos, new_k),
            td_d=pad(a.td_d, new_l), td_n=pad(a.td_n, new_l), td_sum=pad(a.td_sum, new_l),
            td_ss=pad(a.td_ss, new_l), td_nu=pad(a.td_nu, new_l, 1.0),
            td_loc=pad(a.td_loc, new_l), td_scl=pad(a.td_scl, new_l, 1.0),
            td_lnorm=pad(a.td_lnorm, new_l),
            td_perm=pad_perm(a.td_perm, new_l), td_pos=pad_perm(a.td_pos, new_l),
        )

    # -- mutation --------------------------------------------------------------
    def remove_word(self, i) -> RemovalRecord:
        a = self.a
        if a.z[i] < 0:
            raise SeatingError(f"word {i} is not seated")
        h = int(a.z[i])
        k = int(a.tbl_dish[h])
        tt = int(a.o[i])
        l = int(a.tt_td[tt])
        rec = RemovalRecord(
            int(i), h, k, tt, l, int(a.tbl_pos[h]), int(a.dish_pos[k]), int(a.tt_pos[tt]),
            int(a.td_pos[l]), (int(a.td_n[l]), float(a.td_sum[l]), float(a.td_ss[l])))
        _remove_word(a, i)
        return rec

    def seat_word(self, i, table=NEW, dish=NEW, time_table=NEW, time_dish=NEW):
        """Seat word ``i``. ``NEW`` (-1) allocates a fresh table/dish/time table/time dish."""
        a = self.a
        if a.z[i] >= 0:
            raise SeatingError(f"word {i} is already seated")
        j = a.doc[i]
        if table >= 0:
            if not (a.doc_start[j] <= table < a.doc_start[j + 1]) or a.tbl_n[table] == 0:
                raise SeatingError(f"table {table} is not live in restaurant {j}")
            dish = int(a.tbl_dish[table])
        elif dish >= 0 and not _dish_live(a, dish):
            raise SeatingError(f"dish {dish} is not live")
        if time_table >= 0:
            if not _tt_live(a, time_table) or (dish >= 0 and a.tt_dish[time_table] != dish) or dish < 0:
                raise SeatingError(f"time table {time_table} is not live in time restaurant {dish}")
        elif time_dish >= 0 and not _td_live(a, time_dish):
            raise SeatingError(f"time dish {time_dish} is not live")
        self.ensure_capacity(1, 1)
        return int(_seat_word(self.a, i, table, dish, time_table, time_dish))

    def restore(self, rec: RemovalRecord):
        """Undo :meth:`remove_word` exactly (handles, list order and statistics)."""
        a = self.a
        if a.z[rec.word] >= 0:
            raise SeatingError(f"word {rec.word} is already seated")
        _seat_word(a, rec.word, rec.table, rec.dish, rec.time_table, rec.time_dish)
        _swap_to(a.rest_perm, a.tbl_pos, rec.table, rec.table_pos)
        _swap_to(a.dish_perm, a.dish_pos, rec.dish, rec.dish_pos)
        _swap_to(a.tt_perm, a.tt_pos, rec.time_table, rec.tt_pos)
        _swap_to(a.td_perm, a.td_pos, rec.time_dish, rec.td_pos)
        l = rec.time_dish
        a.td_n[l], a.td_sum[l], a.td_ss[l] = rec.td_stats
        _td_refresh(a, l)

    def rebuild_time_stats(self):
        _rebuild_td_stats(self.a)

    # -- inspection ------------------------------------------------------------
    def validate(self) -> list[str]:
        return validate(self)

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, arr in zip(Arrays._fields, self.a):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def copy(self) -> "SeatingState":
        new = object.__new__(SeatingState)
        new.corpus = self.corpus
        new.nig = self.nig
        new.a = Arrays(*(x.copy() for x in self.a))
        return new

    def table_words(self):
        """Map table handle -> word indices (ascending)."""
        z = self.a.z
        order = np.argsort(z, kind="stable")
        tabs, starts = np.unique(z[order], return_index=True)
        ends = list(starts[1:]) + [len(z)]
        return {int(t): order[s:e] for t, s, e in zip(tabs, starts, ends)}


# --- validator ----------------------------------------------------------------


def _perm_ok(perm, pos):
    return bool(np.array_equal(pos[perm], np.arange(len(perm))))


def validate(state: SeatingState) -> list[str]:
    """Recount every CRF statistic from the raw assignments.

    Returns the names of violated identities (empty when consistent).
    """
    a = state.a
    N = len(a.word)
    K_cap, V = a.dish_wc.shape
    L_cap = a.td_d.shape[0]
    bad: list[str] = []

    def check(name, ok):
        if not ok:
            bad.append(name)

    if not (_perm_ok(a.rest_perm, a.tbl_pos) and _perm_ok(a.dish_perm, a.dish_pos)
            and _perm_ok(a.tt_perm, a.tt_pos) and _perm_ok(a.td_perm, a.td_pos)):
        bad.append("live_list_permutation")
        return bad
    if np.any(a.z < 0) or np.any(a.o < 0):
        bad.append("all_words_seated")
        return bad

    # word tables
    n_jt = np.bincount(a.z, minlength=N)
    check("n_jt", np.array_equal(n_jt, a.tbl_n))
    live_tab = np.zeros(N, bool)
    for j in range(len(a.rest_m)):
        s = a.doc_start[j]
        live_tab[a.rest_perm[s:s + a.rest_m[j]]] = True
    check("table_liveness", np.array_equal(live_tab, n_jt > 0))
    check("table_restaurant", bool(np.all((a.z >= a.doc_start[a.doc]) & (a.z < a.doc_start[a.doc + 1]))))
    doc_of_table = np.searchsorted(a.doc_start, np.flatnonzero(n_jt > 0), side="right") - 1
    check("m_j", np.array_equal(np.bincount(doc_of_table, minlength=len(a.rest_m)), a.rest_m))
    check("sum_t_n_jt", int(a.tbl_n.sum()) == N)
    tabs = np.flatnonzero(live_tab)
    tdish = a.tbl_dish[tabs]
    live_dish = np.zeros(K_cap, bool)
    live_dish[a.dish_perm[: a.cnt[CK]]] = True
    if np.any(tdish < 0) or not np.all(live_dish[np.clip(tdish, 0, None)]):
        bad.append("table_dish")
        return bad
    m_k = np.bincount(tdish, minlength=K_cap)
    check("m_k", np.array_equal(m_k, a.dish_m))
    check("m_total", int(a.cnt[CM]) == len(tabs) == int(a.dish_m.sum()))
    check("dish_liveness", np.array_equal(live_dish, m_k > 0))
    check("K", int(a.cnt[CK]) == int((m_k > 0).sum()))
    wdish = a.tbl_dish[a.z]
    check("n_k", np.array_equal(np.bincount(wdish, minlength=K_cap), a.dish_n))
    wc = np.zeros((K_cap, V), np.int64)
    np.add.at(wc, (wdish, a.word), 1)
    check("n_kv", np.array_equal(wc, a.dish_wc))

    # time tables
    s = np.bincount(a.o, minlength=N)
    check("s", np.array_equal(s, a.tt_s))
    live_tt = np.zeros(N, bool)
    live_tt[a.tt_perm[: a.cnt[CTT]]] = True
    check("time_table_liveness", np.array_equal(live_tt, s > 0))
    check("n_time_tables", int(a.cnt[CTT]) == int((s > 0).sum()))
    check("time_restaurant", np.array_equal(a.tt_dish[a.o], wdish))
    ttabs = np.flatnonzero(live_tt)
    check("d_k", np.array_equal(np.bincount(a.tt_dish[ttabs], minlength=K_cap), a.dish_ntt))
    ttd = a.tt_td[ttabs]
    live_td = np.zeros(L_cap, bool)
    live_td[a.td_perm[: a.cnt[CL]]] = True
    if np.any(ttd < 0) or not np.all(live_td[np.clip(ttd, 0, None)]):
        bad.append("time_table_dish")
        return bad
    d_l = np.bincount(ttd, minlength=L_cap)
    check("d_l", np.array_equal(d_l, a.td_d))
    check("time_dish_liveness", np.array_equal(live_td, d_l > 0))
    check("L", int(a.cnt[CL]) == int((d_l > 0).sum()))
    wtd = a.tt_td[a.o]
    S = np.zeros((K_cap, L_cap), np.int64)
    np.add.at(S, (wdish, wtd), 1)
    check("S_kl", np.array_equal(S, a.dish_S))
    check("td_n", np.array_equal(np.bincount(wtd, minlength=L_cap), a.td_n))
    tsum = np.bincount(wtd, weights=a.time, minlength=L_cap)
    tss = np.bincount(wtd, weights=a.time ** 2, minlength=L_cap)
    scale = 1.0 + np.abs(tss)
    check("td_stats", bool(np.all(np.abs(tsum - a.td_sum) <= 1e-9 * scale)
                           and np.all(np.abs(tss - a.td_ss) <= 1e-9 * scale)))
    return bad


# --- checkpoints -------------------------------------------------------------


def save_state(state: SeatingState, fh, extra: dict | None = None):
    """Write a versioned checkpoint (``np.savez``) of the full state."""
    meta = {"version": CHECKPOINT_VERSION,
            "nig": [state.nig.mu, state.nig.lam, state.nig.shape, state.nig.scale],
            "extra": extra or {}}
    arrays = {f"a_{k}": v for k, v in zip(Arrays._fields, state.a)}
    np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_state(fh, corpus) -> tuple[SeatingState, dict]:
    """Inverse of :func:`save_state`; statistics are recounted and validated."""
    with np.load(fh) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        arrays = {k: data[f"a_{k}"] for k in Arrays._fields}
    state = object.__new__(SeatingState)
    state.corpus = corpus
    state.nig = NigParams(*meta["nig"])
    if not (np.array_equal(arrays["word"], corpus.words)
            and np.array_equal(arrays["time"], corpus.times)):
        raise ValueError("checkpoint does not match the corpus")
    state.a = Arrays(**arrays)
    bad = validate(state)
    if bad:
        raise ValueError(f"checkpoint failed validation: {bad}")
    return state, meta["extra"]
