"""Gibbs sweeps over the coupled word / time restaurants.

One sweep reseats every word (word table + its time table), resamples the dish
of every word table, runs a CRF pass over the time HDP with the word side held
fixed, and finally resamples the four concentrations.

Kernels work on :class:`sthdp.seating.Arrays` and stop early (returning the
position to resume from) when an allocation would exceed the preallocated
dish / time-dish capacity; the Python wrappers grow the arrays and resume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .priors import ConcentrationParam, _nig_logml, resample_concentration
from .seating import (
    C_DELTA, C_EPS, C_OMEGA, C_ZETA, CK, CL, CM, CTT, H_ETA, H_LAM, H_LNORM0, H_LOC0,
    H_MU, H_NU0, H_SCALE, H_SCL0, H_SHAPE, NEW, SeatingState, _alloc, _free,
    _new_dish, _rebuild_td_stats, _remove_time_word, _remove_word, _seat_time_word,
    _seat_word, _td_refresh,
)


@dataclass
class SamplerConfig:
    burn_in: int = 50
    sm_period: int = 10
    sm_phase_len: int = 500
    total_iters: int = 2000
    time_subsample: int = 20
    seed: int = 0
    sm_enabled: bool = True
    sm_proposals: int = 20
    sm_time_in_prior: bool = False
    use_time: bool = True
    resample_concentrations: bool = True
    init: str = "sequential"
    checkpoint_period: int = 100

    def __post_init__(self):
        for name in ("burn_in", "sm_period", "sm_phase_len", "total_iters", "time_subsample",
                     "sm_proposals", "checkpoint_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.total_iters < self.burn_in:
            raise ValueError("total_iters must be >= burn_in")
        if self.init not in ("sequential", "singleton_tables", "one_table"):
            raise ValueError(f"unknown init {self.init!r}")

    def sm_due(self, it: int) -> bool:
        """Whether split-merge runs after Gibbs iteration ``it`` (1-based)."""
        if not self.sm_enabled:
            return False
        k = it - self.burn_in
        return 0 < k <= self.sm_phase_len and k % self.sm_period == 0


# --- numerics -----------------------------------------------------------------


@njit(cache=True)
def _sample_log(lw, n, rng):
    """Categorical draw from unnormalised log weights lw[:n] (overwritten)."""
    m = -np.inf
    for c in range(n):
        if lw[c] > m:
            m = lw[c]
    tot = 0.0
    for c in range(n):
        lw[c] = math.exp(lw[c] - m)
        tot += lw[c]
    u = rng.random() * tot
    acc = 0.0
    for c in range(n):
        acc += lw[c]
        if u < acc:
            return c
    # u landed on the rounding edge; return the last positive weight
    for c in range(n - 1, -1, -1):
        if lw[c] > 0.0:
            return c
    return n - 1


@njit(cache=True)
def _t_log(t, nu, loc, scl, lnorm):
    z = (t - loc) / scl
    return lnorm - 0.5 * (nu + 1.0) * math.log1p(z * z / nu)


@njit(cache=True)
def _time_logs(a, t, lg):
    """lg[q] = log g_l(t) for l = td_perm[q]; returns the prior predictive log g_new(t)."""
    for q in range(a.cnt[CL]):
        l = a.td_perm[q]
        lg[q] = _t_log(t, a.td_nu[l], a.td_loc[l], a.td_scl[l], a.td_lnorm[l])
    h = a.hyp
    return _t_log(t, h[H_NU0], h[H_LOC0], h[H_SCL0], h[H_LNORM0])


@njit(cache=True)
def _dish_time_logterms(a, lg, lg_new, eg, logT):
    """Marginal time term of every live dish (logT[r] for dish_perm[r]); returns new-dish term.

    T_k(t) = (sum_l S_kl g_l(t) + zeta G(t)) / (n_k + zeta),
    G(t)   = (sum_l d_l g_l(t) + eps g_new(t)) / (d + eps).
    """
    L = a.cnt[CL]
    zeta = a.conc[C_ZETA]
    eps = a.conc[C_EPS]
    m = lg_new
    for q in range(L):
        if lg[q] > m:
            m = lg[q]
    G = eps * math.exp(lg_new - m)
    for q in range(L):
        eg[q] = math.exp(lg[q] - m)
        G += a.td_d[a.td_perm[q]] * eg[q]
    G /= a.cnt[CTT] + eps
    for r in range(a.cnt[CK]):
        k = a.dish_perm[r]
        acc = zeta * G
        for q in range(L):
            s = a.dish_S[k, a.td_perm[q]]
            if s > 0:
                acc += s * eg[q]
        logT[r] = math.log(acc / (a.dish_n[k] + zeta)) + m
    return math.log(G) + m


@njit(cache=True)
def _word_table_logweights(a, i, logT, logT_new, lw):
    """Fill lw with [existing tables of doc(i)] + [new table x live dishes] + [new table, new dish]."""
    j = a.doc[i]
    w = a.word[i]
    ds = a.doc_start[j]
    V = a.dish_wc.shape[1]
    eta = a.hyp[H_ETA]
    log_delta = math.log(a.conc[C_DELTA])
    omega = a.conc[C_OMEGA]
    lden = math.log(a.cnt[CM] + omega)
    mj = a.rest_m[j]
    for c in range(mj):
        h = a.rest_perm[ds + c]
        k = a.tbl_dish[h]
        lf = math.log((a.dish_wc[k, w] + eta) / (a.dish_n[k] + V * eta))
        lw[c] = math.log(a.tbl_n[h]) + lf + logT[a.dish_pos[k]]
    K = a.cnt[CK]
    for r in range(K):
        k = a.dish_perm[r]
        lf = math.log((a.dish_wc[k, w] + eta) / (a.dish_n[k] + V * eta))
        lw[mj + r] = log_delta + math.log(a.dish_m[k]) - lden + lf + logT[r]
    lw[mj + K] = log_delta + math.log(omega) - lden - math.log(V) + logT_new
    return mj + K + 1


@njit(cache=True)
def _time_table_logweights(a, k, lg, lg_new, lw, tts):
    """Time-table choices for a time stamp in time restaurant k (k < 0: empty restaurant).

    Returns the number of existing tables n; lw has n + L + 1 entries.
    """
    n = 0
    if k >= 0:
        for q in range(a.cnt[CTT]):
            tt = a.tt_perm[q]
            if a.tt_dish[tt] == k:
                tts[n] = tt
                lw[n] = math.log(a.tt_s[tt]) + lg[a.td_pos[a.tt_td[tt]]]
                n += 1
    L = a.cnt[CL]
    base = math.log(a.conc[C_ZETA]) - math.log(a.cnt[CTT] + a.conc[C_EPS])
    for q in range(L):
        lw[n + q] = base + math.log(a.td_d[a.td_perm[q]]) + lg[q]
    lw[n + L] = base + math.log(a.conc[C_EPS]) + lg_new
    return n


@njit(cache=True)
def _draw_time_seat(a, k, t, rng, lg, lw, tts):
    """Sample (time table, time dish) for a time stamp t entering restaurant k."""
    lg_new = _time_logs(a, t, lg)
    n = _time_table_logweights(a, k, lg, lg_new, lw, tts)
    L = a.cnt[CL]
    c = _sample_log(lw, n + L + 1, rng)
    if c < n:
        return tts[c], -1
    if c < n + L:
        return -1, a.td_perm[c - n]
    return -1, -1


# --- word tables --------------------------------------------------------------


@njit(cache=True)
def _word_pass(a, rng, start, stop, use_time):
    N = a.word.shape[0]
    Kc = a.dish_m.shape[0]
    Lc = a.td_d.shape[0]
    lw = np.empty(N + Kc + Lc + 2)
    tts = np.empty(N, np.int64)
    lg = np.empty(Lc)
    eg = np.empty(Lc)
    logT = np.zeros(Kc)
    for i in range(start, stop):
        if a.cnt[CK] + 1 > Kc or a.cnt[CL] + 1 > Lc:
            return i
        if a.z[i] >= 0:
            _remove_word(a, i)
        j = a.doc[i]
        t = a.time[i]
        K = a.cnt[CK]
        if use_time:
            lg_new = _time_logs(a, t, lg)
            logT_new = _dish_time_logterms(a, lg, lg_new, eg, logT)
        else:
            logT[:K] = 0.0
            logT_new = 0.0
        n = _word_table_logweights(a, i, logT, logT_new, lw)
        c = _sample_log(lw, n, rng)
        mj = a.rest_m[j]
        if c < mj:
            h = a.rest_perm[a.doc_start[j] + c]
            k = a.tbl_dish[h]
        elif c < mj + K:
            h = -1
            k = a.dish_perm[c - mj]
        else:
            h = -1
            k = -1
        tt, l = _draw_time_seat(a, k, t, rng, lg, lw, tts)
        _seat_word(a, i, h, k, tt, l)
    return stop


@njit(cache=True)
def _word_logweights_only(a, i, use_time):
    N = a.word.shape[0]
    Kc = a.dish_m.shape[0]
    Lc = a.td_d.shape[0]
    lw = np.empty(N + Kc + 1)
    lg = np.empty(Lc)
    eg = np.empty(Lc)
    logT = np.zeros(Kc)
    logT_new = 0.0
    if use_time:
        lg_new = _time_logs(a, a.time[i], lg)
        logT_new = _dish_time_logterms(a, lg, lg_new, eg, logT)
    n = _word_table_logweights(a, i, logT, logT_new, lw)
    return lw[:n].copy()


@njit(cache=True)
def _time_term_all(a, t):
    Lc = a.td_d.shape[0]
    lg = np.empty(Lc)
    eg = np.empty(Lc)
    logT = np.empty(a.dish_m.shape[0])
    lg_new = _time_logs(a, t, lg)
    logT_new = _dish_time_logterms(a, lg, lg_new, eg, logT)
    return logT[: a.cnt[CK]].copy(), logT_new


# --- word dishes --------------------------------------------------------------


@njit(cache=True)
def _table_words(a, h, out):
    # tables live in the handle range of their restaurant
    lo = 0
    hi = a.doc_start.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if a.doc_start[mid] <= h:
            lo = mid
        else:
            hi = mid
    j = lo
    n = 0
    for i in range(a.doc_start[j], a.doc_start[j + 1]):
        if a.z[i] == h:
            out[n] = i
            n += 1
    return n


@njit(cache=True)
def _detach_table(a, h, words, nh):
    """Take table h (with its words) off its dish; time words are unseated."""
    k = a.tbl_dish[h]
    for s in range(nh):
        i = words[s]
        _remove_time_word(a, i)
        a.dish_wc[k, a.word[i]] -= 1
        a.dish_n[k] -= 1
    a.tbl_dish[h] = -1
    a.dish_m[k] -= 1
    a.cnt[CM] -= 1
    if a.dish_m[k] == 0:
        _free(a.dish_perm, a.dish_pos, a.cnt, CK, k)


@njit(cache=True)
def _dm_block(a, k, uw, uc, nu, nh):
    V = a.dish_wc.shape[1]
    eta = a.hyp[H_ETA]
    s = 0.0
    if k < 0:
        for u in range(nu):
            s += math.lgamma(uc[u] + eta) - math.lgamma(eta)
        return s + math.lgamma(V * eta) - math.lgamma(nh + V * eta)
    for u in range(nu):
        c0 = a.dish_wc[k, uw[u]]
        s += math.lgamma(c0 + uc[u] + eta) - math.lgamma(c0 + eta)
    n0 = a.dish_n[k]
    return s + math.lgamma(n0 + V * eta) - math.lgamma(n0 + nh + V * eta)


@njit(cache=True)
def _count_words(a, words, nh, uw, uc):
    tw = np.empty(nh, np.int64)
    for s in range(nh):
        tw[s] = a.word[words[s]]
    tw = np.sort(tw)
    nu = 0
    for s in range(nh):
        if nu > 0 and uw[nu - 1] == tw[s]:
            uc[nu - 1] += 1
        else:
            uw[nu] = tw[s]
            uc[nu] = 1
            nu += 1
    return nu


@njit(cache=True)
def _table_dish_logweights(a, words, nh, sub, ms, use_time, lw, lg, eg, logT, uw, uc):
    """Log weights over [live dishes..., new dish] for a detached table.

    ``sub[:ms]`` indexes the words whose time stamps enter the subsampled
    time evidence (the same subsample for every candidate).
    """
    K = a.cnt[CK]
    for r in range(K + 1):
        lw[r] = 0.0
    if use_time:
        for s in range(ms):
            t = a.time[words[sub[s]]]
            lg_new = _time_logs(a, t, lg)
            ln = _dish_time_logterms(a, lg, lg_new, eg, logT)
            for r in range(K):
                lw[r] += logT[r]
            lw[K] += ln
    nu = _count_words(a, words, nh, uw, uc)
    for r in range(K):
        k = a.dish_perm[r]
        lw[r] += math.log(a.dish_m[k]) + _dm_block(a, k, uw, uc, nu, nh)
    lw[K] += math.log(a.conc[C_OMEGA]) + _dm_block(a, -1, uw, uc, nu, nh)
    return K + 1


@njit(cache=True)
def _attach_table(a, rng, h, words, nh, k, lg, lw, tts):
    """Put detached table h on dish k (k < 0: new dish) and re-seat its time words."""
    if k < 0:
        k = _new_dish(a, -1)
    a.tbl_dish[h] = k
    a.dish_m[k] += 1
    a.cnt[CM] += 1
    for s in range(nh):
        i = words[s]
        a.dish_wc[k, a.word[i]] += 1
        a.dish_n[k] += 1
    for s in range(nh):
        i = words[s]
        tt, l = _draw_time_seat(a, k, a.time[i], rng, lg, lw, tts)
        _seat_time_word(a, i, k, tt, l)
    return k


@njit(cache=True)
def _partial_shuffle(idx, n, m, rng):
    for s in range(n):
        idx[s] = s
    for s in range(m):
        r = s + int(rng.random() * (n - s))
        if r >= n:
            r = n - 1
        tmp = idx[s]
        idx[s] = idx[r]
        idx[r] = tmp


@njit(cache=True)
def _resample_table_dish(a, rng, h, use_time, subsample, words, sub, lw, lg, eg, logT, uw, uc, tts):
    nh = _table_words(a, h, words)
    _detach_table(a, h, words, nh)
    ms = min(subsample, nh)
    _partial_shuffle(sub, nh, ms, rng)
    K = a.cnt[CK]
    n = _table_dish_logweights(a, words, nh, sub, ms, use_time, lw, lg, eg, logT, uw, uc)
    c = _sample_log(lw, n, rng)
    k = a.dish_perm[c] if c < K else -1
    return _attach_table(a, rng, h, words, nh, k, lg, lw, tts)


@njit(cache=True)
def _dish_pass(a, rng, start, use_time, subsample):
    """Resample the dish of every word table, restaurant by restaurant.

    ``start`` is a slot index into rest_perm; returns -1 when done, else the
    slot to resume from after growing capacity.
    """
    N = a.word.shape[0]
    Kc = a.dish_m.shape[0]
    Lc = a.td_d.shape[0]
    words = np.empty(N, np.int64)
    sub = np.empty(N, np.int64)
    lw = np.empty(N + Kc + Lc + 2)
    lg = np.empty(Lc)
    eg = np.empty(Lc)
    logT = np.empty(Kc)
    uw = np.empty(N, np.int64)
    uc = np.empty(N, np.int64)
    tts = np.empty(N, np.int64)
    D = a.rest_m.shape[0]
    for j in range(D):
        ds = a.doc_start[j]
        if a.doc_start[j + 1] <= start:
            continue
        c0 = start - ds if start > ds else 0
        for c in range(c0, a.rest_m[j]):
            h = a.rest_perm[ds + c]
            if a.cnt[CK] + 1 > Kc or a.cnt[CL] + a.tbl_n[h] > Lc:
                return ds + c
            _resample_table_dish(a, rng, h, use_time, subsample, words, sub, lw, lg, eg,
                                 logT, uw, uc, tts)
    return -1


@njit(cache=True)
def _one_table_dish(a, rng, h, use_time, subsample):
    N = a.word.shape[0]
    Kc = a.dish_m.shape[0]
    Lc = a.td_d.shape[0]
    return _resample_table_dish(
        a, rng, h, use_time, subsample, np.empty(N, np.int64), np.empty(N, np.int64),
        np.empty(N + Kc + Lc + 2), np.empty(Lc), np.empty(Lc), np.empty(Kc),
        np.empty(N, np.int64), np.empty(N, np.int64), np.empty(N, np.int64))


@njit(cache=True)
def _dish_logweights_detached(a, h, sub_in, use_time):
    """Dish weights for table h computed on a detached copy (test/diagnostic helper)."""
    N = a.word.shape[0]
    Kc = a.dish_m.shape[0]
    Lc = a.td_d.shape[0]
    words = np.empty(N, np.int64)
    nh = _table_words(a, h, words)
    _detach_table(a, h, words, nh)
    lw = np.empty(Kc + 1)
    n = _table_dish_logweights(a, words, nh, sub_in, sub_in.shape[0], use_time, lw,
                               np.empty(Lc), np.empty(Lc), np.empty(Kc),
                               np.empty(N, np.int64), np.empty(N, np.int64))
    return lw[:n].copy()


# --- time HDP -----------------------------------------------------------------


@njit(cache=True)
def _time_word_pass(a, rng, start, stop, dmask):
    N = a.word.shape[0]
    Lc = a.td_d.shape[0]
    lw = np.empty(N + Lc + 2)
    lg = np.empty(Lc)
    tts = np.empty(N, np.int64)
    for i in range(start, stop):
        if a.cnt[CL] + 1 > Lc:
            return i
        k = a.tbl_dish[a.z[i]]
        if not dmask[k]:
            continue
        _remove_time_word(a, i)
        tt, l = _draw_time_seat(a, k, a.time[i], rng, lg, lw, tts)
        _seat_time_word(a, i, k, tt, l)
    return stop


@njit(cache=True)
def _time_table_pass(a, rng, start, dmask):
    """Resample the time dish of every time table (word side fixed)."""
    N = a.word.shape[0]
    Lc = a.td_d.shape[0]
    tsum = np.zeros(N)
    tss = np.zeros(N)
    for i in range(N):
        tt = a.o[i]
        t = a.time[i]
        tsum[tt] += t
        tss[tt] += t * t
    h = a.hyp
    mu0, lam0, shape0, scale0 = h[H_MU], h[H_LAM], h[H_SHAPE], h[H_SCALE]
    lw = np.empty(Lc + 1)
    log_eps = math.log(a.conc[C_EPS])
    for q in range(start, a.cnt[CTT]):
        if a.cnt[CL] + 1 > Lc:
            return q
        tt = a.tt_perm[q]
        k = a.tt_dish[tt]
        if not dmask[k]:
            continue
        l = a.tt_td[tt]
        s = a.tt_s[tt]
        ts = tsum[tt]
        tq = tss[tt]
        a.td_d[l] -= 1
        a.td_n[l] -= s
        a.dish_S[k, l] -= s
        if a.td_n[l] == 0:
            a.td_sum[l] = 0.0
            a.td_ss[l] = 0.0
        else:
            a.td_sum[l] -= ts
            a.td_ss[l] -= tq
        if a.td_d[l] == 0:
            _free(a.td_perm, a.td_pos, a.cnt, CL, l)
        else:
            _td_refresh(a, l)
        L = a.cnt[CL]
        for r in range(L):
            l2 = a.td_perm[r]
            n2, s2, q2 = a.td_n[l2], a.td_sum[l2], a.td_ss[l2]
            lw[r] = (math.log(a.td_d[l2])
                     + _nig_logml(mu0, lam0, shape0, scale0, n2 + s, s2 + ts, q2 + tq)
                     - _nig_logml(mu0, lam0, shape0, scale0, n2, s2, q2))
        lw[L] = log_eps + _nig_logml(mu0, lam0, shape0, scale0, s, ts, tq)
        c = _sample_log(lw, L + 1, rng)
        if c < L:
            l = a.td_perm[c]
        else:
            l = _alloc(a.td_perm, a.td_pos, a.cnt, CL, -1)
            a.td_d[l] = 0
            a.td_n[l] = 0
            a.td_sum[l] = 0.0
            a.td_ss[l] = 0.0
        a.tt_td[tt] = l
        a.td_d[l] += 1
        a.td_n[l] += s
        a.td_sum[l] += ts
        a.td_ss[l] += tq
        a.dish_S[k, l] += s
        _td_refresh(a, l)
    return -1


# --- Python wrappers ----------------------------------------------------------


def _grow(state: SeatingState):
    a = state.a
    state._grow(2 * a.dish_m.shape[0], 2 * a.td_d.shape[0])


def _run_range(state, kernel, start, stop, *args):
    pos = start
    while True:
        pos = kernel(state.a, *args[:1], pos, stop, *args[1:])
        if pos == stop:
            return
        _grow(state)


def _run_resumable(state, kernel, rng, *args):
    pos = 0
    while True:
        pos = kernel(state.a, rng, pos, *args)
        if pos < 0:
            return
        _grow(state)


def _all_dishes(state):
    return np.ones(state.a.dish_m.shape[0], dtype=np.bool_)


def word_table_conditional(state: SeatingState, i: int, use_time: bool = True):
    """Unnormalised log weights for an unseated word ``i``.

    Returns ``(log_weights, candidates)``; candidates are ``("table", h)``,
    ``("new_table", k)`` for each live dish and ``("new_table", NEW)``.
    """
    a = state.a
    if a.z[i] >= 0:
        raise ValueError(f"word {i} must be removed first")
    lw = _word_logweights_only(a, i, use_time)
    j = a.doc[i]
    cands = [("table", int(h)) for h in state.tables_of(j)]
    cands += [("new_table", int(k)) for k in state.live_dishes()]
    cands.append(("new_table", NEW))
    return lw, cands


def time_term(state: SeatingState, dish: int, t: float) -> float:
    """Marginal time density of ``t`` in the time restaurant of ``dish`` (NEW: empty)."""
    logT, logT_new = _time_term_all(state.a, float(t))
    if dish == NEW:
        return float(np.exp(logT_new))
    r = int(state.a.dish_pos[dish])
    if r >= state.K:
        raise ValueError(f"dish {dish} is not live")
    return float(np.exp(logT[r]))


def word_dish_conditional(state: SeatingState, table: int, subsample=None, use_time=True):
    """Log weights over ``[live dishes after detaching table, new]`` for a word table.

    ``subsample`` lists positions (within the table's words, ascending word
    index order) used for the time evidence; default: all words. Read-only.
    The returned candidate list maps each weight to a dish handle.
    """
    tmp = state.copy()
    nh = int(tmp.a.tbl_n[table])
    sub = np.arange(nh) if subsample is None else np.asarray(subsample, dtype=np.int64)
    lw = _dish_logweights_detached(tmp.a, int(table), sub, use_time)
    cands = [int(k) for k in tmp.live_dishes()] + [NEW]
    return lw, cands


def sample_word_table(state: SeatingState, i: int, rng, use_time=True):
    _run_range(state, _word_pass, i, i + 1, rng, use_time)


def sample_word_dish(state: SeatingState, table: int, rng, use_time=True, subsample=20):
    if state.a.tbl_n[table] == 0:
        raise ValueError(f"table {table} is not live")
    state.ensure_capacity(1, int(state.a.tbl_n[table]) + 1)
    return int(_one_table_dish(state.a, rng, int(table), use_time, int(subsample)))


def sample_time_hdp(state: SeatingState, rng, dishes=None):
    """One CRF pass over the time HDP (restricted to ``dishes`` when given)."""
    mask = _all_dishes(state)
    if dishes is not None:
        mask[:] = False
        mask[np.asarray(dishes, dtype=np.int64)] = True
    N = state.n_words
    pos = 0
    while True:
        pos = _time_word_pass(state.a, rng, pos, N, mask)
        if pos == N:
            break
        _grow(state)
        mask = np.concatenate([mask, np.zeros(state.a.dish_m.shape[0] - len(mask), np.bool_)])
    pos = 0
    while True:
        pos = _time_table_pass(state.a, rng, pos, mask)
        if pos < 0:
            break
        _grow(state)
        mask = np.concatenate([mask, np.zeros(state.a.dish_m.shape[0] - len(mask), np.bool_)])
    _rebuild_td_stats(state.a)


def initialize(state: SeatingState, rng, mode="sequential", use_time=True):
    """Seat every word. ``sequential``: one CRF pass in word order."""
    a = state.a
    if np.any(a.z >= 0):
        raise ValueError("state is already initialised")
    if mode == "sequential":
        _run_range(state, _word_pass, 0, state.n_words, rng, use_time)
    elif mode == "singleton_tables":
        # every word at its own table, one dish, one time table
        state.seat_word(0)
        k, tt = int(a.tbl_dish[a.z[0]]), int(state.a.o[0])
        for i in range(1, state.n_words):
            state.seat_word(i, NEW, k, tt)
    elif mode == "one_table":
        # one table per document, all serving one dish
        state.seat_word(0)
        k, tt = int(state.a.tbl_dish[state.a.z[0]]), int(state.a.o[0])
        for i in range(1, state.n_words):
            j = state.a.doc[i]
            tabs = state.tables_of(j)
            state.seat_word(i, int(tabs[0]) if len(tabs) else NEW, k, tt)
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    _rebuild_td_stats(state.a)


def resample_concentrations(state: SeatingState, rng, prior=(0.1, 0.1)):
    """Auxiliary-variable updates for delta, omega, zeta and epsilon."""
    a = state.a
    pa, pb = prior
    doc_sizes = np.diff(a.doc_start)
    dishes = state.live_dishes()
    groups = [
        (C_DELTA, doc_sizes, state.n_tables),
        (C_OMEGA, [state.n_tables], state.K),
        (C_ZETA, a.dish_n[dishes], state.n_time_tables),
        (C_EPS, [state.n_time_tables], state.L),
    ]
    for idx, sizes, m in groups:
        p = ConcentrationParam(float(a.conc[idx]), pa, pb)
        a.conc[idx] = resample_concentration(p, sizes, m, rng)


def gibbs_sweep(state: SeatingState, rng, config: SamplerConfig, conc_rng=None,
                conc_prior=(0.1, 0.1)):
    """One full sweep: word tables, table dishes, time HDP, concentrations."""
    N = state.n_words
    _run_range(state, _word_pass, 0, N, rng, config.use_time)
    _run_resumable(state, _dish_pass, rng, config.use_time, config.time_subsample)
    sample_time_hdp(state, rng)
    if config.resample_concentrations:
        resample_concentrations(state, rng if conc_rng is None else conc_rng, conc_prior)
