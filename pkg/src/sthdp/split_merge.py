"""Split-merge Metropolis-Hastings moves on word dishes.

Two distinct word tables are drawn uniformly. If they share a dish, a split
of that dish is proposed by sequential allocation of its remaining tables;
otherwise the merge of their two dishes is proposed, and the probability of
the reverse split is obtained by replaying the sequential allocation with
every table forced to its current dish.

Evaluating a proposal never touches the state; only an accepted move is
committed, followed by a CRF pass over the time restaurants it affected.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import gammaln

from .gibbs import _partial_shuffle, _time_logs, sample_time_hdp
from .seating import (
    C_EPS, C_OMEGA, C_ZETA, CK, CL, CM, CTT, H_ETA, SeatingState, _alloc, _free, _new_dish,
)

logger = logging.getLogger(__name__)

SPLIT, MERGE = "split", "merge"


@dataclass
class SmProposal:
    kind: str
    anchors: tuple
    dishes: tuple
    tables: np.ndarray
    assignment: np.ndarray  # 0 -> first anchor's group, 1 -> second
    log_q: float            # log prob of the split allocation (forward for split, reverse for merge)
    log_prior_ratio: float  # log p(split) - log p(merged)
    log_lik_ratio: float    # log L(split) - log L(merged)
    log_ratio: float        # log MH ratio before the min
    n_words: int

    @property
    def log_accept(self) -> float:
        return min(0.0, self.log_ratio)

    @property
    def accept_prob(self) -> float:
        return math.exp(self.log_accept)


# --- kernels --------------------------------------------------------------------


@njit(cache=True)
def _collect(a, k1, k2, tabs, wptr, wlist, loc):
    """Tables of dishes k1/k2 (first-word order) with their words in CSR form."""
    N = a.word.shape[0]
    nt = 0
    cnt = np.zeros(N + 1, np.int64)
    for i in range(N):
        h = a.z[i]
        k = a.tbl_dish[h]
        if k == k1 or k == k2:
            if loc[h] < 0:
                loc[h] = nt
                tabs[nt] = h
                nt += 1
            cnt[loc[h]] += 1
    wptr[0] = 0
    for x in range(nt):
        wptr[x + 1] = wptr[x] + cnt[x]
        cnt[x] = wptr[x]
    for i in range(N):
        h = a.z[i]
        if loc[h] >= 0:
            x = loc[h]
            wlist[cnt[x]] = i
            cnt[x] += 1
    for x in range(nt):
        loc[tabs[x]] = -1
    return nt


@njit(cache=True)
def _time_tables_for(a, wlist, nw, EG, Gs, Mx, qpos):
    """Per-word time evidence: EG[s, q] = exp(log g_q(t) - Mx[s]), Gs[s] = scaled global mixture."""
    L = a.cnt[CL]
    eps = a.conc[C_EPS]
    lg = np.empty(max(L, 1))
    for s in range(nw):
        i = wlist[s]
        lg_new = _time_logs(a, a.time[i], lg)
        m = lg_new
        for q in range(L):
            if lg[q] > m:
                m = lg[q]
        G = eps * math.exp(lg_new - m)
        for q in range(L):
            EG[s, q] = math.exp(lg[q] - m)
            G += a.td_d[a.td_perm[q]] * EG[s, q]
        Gs[s] = G / (a.cnt[CTT] + eps)
        Mx[s] = m
        qpos[s] = a.td_pos[a.tt_td[a.o[i]]]


@njit(cache=True)
def _log_T(H, g, n_g, EG, Gs, Mx, s, L, zeta, loo_q):
    acc = zeta * Gs[s]
    for q in range(L):
        c = H[g, q]
        if q == loo_q:
            c -= 1
        if c > 0:
            acc += c * EG[s, q]
    n = n_g
    if loo_q >= 0:
        n -= 1
    return math.log(acc / (n + zeta)) + Mx[s]


@njit(cache=True)
def _dm_marginal(wc_row, n, eta, V):
    s = math.lgamma(V * eta) - math.lgamma(n + V * eta)
    for v in range(V):
        c = wc_row[v]
        if c > 0:
            s += math.lgamma(c + eta) - math.lgamma(eta)
    return s


@njit(cache=True)
def _seq_alloc(a, rng, nt, wptr, wlist, anc1, anc2, forced, assign, wc_g, n_g, m_g, H_g,
               EG, Gs, Mx, qpos, subsample, use_time):
    """Sequentially allocate tables to two groups seeded by the anchors.

    ``forced[x] >= 0`` replays a given allocation. Returns log q of the
    choices made. Group statistics are left in wc_g/n_g/m_g/H_g.
    """
    V = a.dish_wc.shape[1]
    L = a.cnt[CL]
    eta = a.hyp[H_ETA]
    zeta = a.conc[C_ZETA]
    wc_g[:, :] = 0
    H_g[:, :] = 0
    n_g[:] = 0
    m_g[:] = 0
    order = np.empty(nt, np.int64)
    n_other = 0
    for x in range(nt):
        if x != anc1 and x != anc2:
            order[n_other] = x
            n_other += 1
    for s in range(n_other - 1, 0, -1):
        r = int(rng.random() * (s + 1))
        if r > s:
            r = s
        tmp = order[s]
        order[s] = order[r]
        order[r] = tmp
    sub = np.empty(wptr[nt], np.int64)
    uw = np.empty(wptr[nt], np.int64)
    uc = np.empty(wptr[nt], np.int64)
    logq = 0.0
    for step in range(n_other + 2):
        if step == 0:
            x = anc1
        elif step == 1:
            x = anc2
        else:
            x = order[step - 2]
        lo = wptr[x]
        nh = wptr[x + 1] - lo
        if step < 2:
            g = step
        else:
            # distinct word counts of table x
            tw = np.sort(a.word[wlist[lo:lo + nh]])
            nu = 0
            for s in range(nh):
                if nu > 0 and uw[nu - 1] == tw[s]:
                    uc[nu - 1] += 1
                else:
                    uw[nu] = tw[s]
                    uc[nu] = 1
                    nu += 1
            ms = min(subsample, nh)
            if use_time:
                _partial_shuffle(sub, nh, ms, rng)
            l0 = 0.0
            l1 = 0.0
            for gg in range(2):
                v = math.log(m_g[gg])
                for u in range(nu):
                    c0 = wc_g[gg, uw[u]]
                    v += math.lgamma(c0 + uc[u] + eta) - math.lgamma(c0 + eta)
                v += math.lgamma(n_g[gg] + V * eta) - math.lgamma(n_g[gg] + nh + V * eta)
                if use_time:
                    for s in range(ms):
                        v += _log_T(H_g, gg, n_g[gg], EG, Gs, Mx, lo + sub[s], L, zeta, -1)
                if gg == 0:
                    l0 = v
                else:
                    l1 = v
            mx = max(l0, l1)
            lse = mx + math.log(math.exp(l0 - mx) + math.exp(l1 - mx))
            if forced[x] >= 0:
                g = forced[x]
            else:
                g = 0 if rng.random() < math.exp(l0 - lse) else 1
            logq += (l0 if g == 0 else l1) - lse
        assign[x] = g
        m_g[g] += 1
        n_g[g] += nh
        for s in range(lo, lo + nh):
            wc_g[g, a.word[wlist[s]]] += 1
            H_g[g, qpos[s]] += 1
    return logq


@njit(cache=True)
def _split_merge_terms(a, rng, nt, wptr, wlist, assign, wc_g, n_g, m_g, H_g, EG, Gs, Mx, qpos,
                       subsample, use_time):
    """(log prior ratio, log likelihood ratio) of split (groups) vs merged."""
    V = a.dish_wc.shape[1]
    L = a.cnt[CL]
    eta = a.hyp[H_ETA]
    zeta = a.conc[C_ZETA]
    omega = a.conc[C_OMEGA]
    lpr = math.log(omega) + math.lgamma(m_g[0]) + math.lgamma(m_g[1]) - math.lgamma(m_g[0] + m_g[1])
    merged = wc_g[0] + wc_g[1]
    nm = n_g[0] + n_g[1]
    llr = (_dm_marginal(wc_g[0], n_g[0], eta, V) + _dm_marginal(wc_g[1], n_g[1], eta, V)
           - _dm_marginal(merged, nm, eta, V))
    if use_time:
        nw = wptr[nt]
        Hm = np.zeros((1, max(L, 1)), np.int64)
        for q in range(L):
            Hm[0, q] = H_g[0, q] + H_g[1, q]
        wgroup = np.empty(nw, np.int64)
        for x in range(nt):
            for s in range(wptr[x], wptr[x + 1]):
                wgroup[s] = assign[x]
        ms = min(subsample, nw)
        sub = np.empty(nw, np.int64)
        _partial_shuffle(sub, nw, ms, rng)
        for r in range(ms):
            s = sub[r]
            g = wgroup[s]
            llr += _log_T(H_g, g, n_g[g], EG, Gs, Mx, s, L, zeta, qpos[s])
            llr -= _log_T(Hm, 0, nm, EG, Gs, Mx, s, L, zeta, qpos[s])
    return lpr, llr


@njit(cache=True)
def _commit_split(a, tabs, nt, assign, wptr, wlist, k):
    """Move group-1 tables of dish k to a new dish; time tables follow their words."""
    N = a.word.shape[0]
    k2 = _new_dish(a, -1)
    tmap = np.full(N, -1, np.int64)
    for x in range(nt):
        if assign[x] != 1:
            continue
        h = tabs[x]
        a.tbl_dish[h] = k2
        a.dish_m[k] -= 1
        a.dish_m[k2] += 1
        for s in range(wptr[x], wptr[x + 1]):
            i = wlist[s]
            w = a.word[i]
            a.dish_wc[k, w] -= 1
            a.dish_wc[k2, w] += 1
            a.dish_n[k] -= 1
            a.dish_n[k2] += 1
            tt = a.o[i]
            l = a.tt_td[tt]
            if tmap[tt] < 0 and a.tt_s[tt] == 1:
                # last word on this time table: move the table itself (no spare handle needed)
                a.tt_dish[tt] = k2
                a.dish_ntt[k] -= 1
                a.dish_ntt[k2] += 1
                a.dish_S[k, l] -= 1
                a.dish_S[k2, l] += 1
                tmap[tt] = tt
                continue
            if tmap[tt] < 0:
                tt2 = _alloc(a.tt_perm, a.tt_pos, a.cnt, CTT, -1)
                a.tt_dish[tt2] = k2
                a.tt_td[tt2] = l
                a.tt_s[tt2] = 0
                a.td_d[l] += 1
                a.dish_ntt[k2] += 1
                tmap[tt] = tt2
            tt2 = tmap[tt]
            a.o[i] = tt2
            a.tt_s[tt] -= 1
            a.tt_s[tt2] += 1
            a.dish_S[k, l] -= 1
            a.dish_S[k2, l] += 1
            if a.tt_s[tt] == 0:
                _free(a.tt_perm, a.tt_pos, a.cnt, CTT, tt)
                a.tt_td[tt] = -1
                a.tt_dish[tt] = -1
                a.dish_ntt[k] -= 1
                a.td_d[l] -= 1
    return k2


@njit(cache=True)
def _commit_merge(a, tabs, nt, k1, k2):
    """Fold dish k2 (tables and time restaurant) into k1."""
    for q in range(a.cnt[CTT]):
        tt = a.tt_perm[q]
        if a.tt_dish[tt] == k2:
            a.tt_dish[tt] = k1
    for x in range(nt):
        h = tabs[x]
        if a.tbl_dish[h] == k2:
            a.tbl_dish[h] = k1
    a.dish_ntt[k1] += a.dish_ntt[k2]
    a.dish_m[k1] += a.dish_m[k2]
    a.dish_n[k1] += a.dish_n[k2]
    a.dish_wc[k1, :] += a.dish_wc[k2, :]
    a.dish_S[k1, :] += a.dish_S[k2, :]
    a.dish_ntt[k2] = 0
    a.dish_m[k2] = 0
    a.dish_n[k2] = 0
    a.dish_wc[k2, :] = 0
    a.dish_S[k2, :] = 0
    _free(a.dish_perm, a.dish_pos, a.cnt, CK, k2)


# --- Python API --------------------------------------------------------------------


class _Workspace:
    def __init__(self, state: SeatingState, k1: int, k2: int):
        a = state.a
        N = state.n_words
        self.tabs = np.empty(N, np.int64)
        self.wptr = np.empty(N + 1, np.int64)
        self.wlist = np.empty(N, np.int64)
        self.nt = _collect(a, k1, k2, self.tabs, self.wptr, self.wlist, np.full(N, -1, np.int64))
        nw = int(self.wptr[self.nt])
        self.wlist = self.wlist[:nw]
        L = max(state.L, 1)
        self.EG = np.zeros((nw, L))
        self.Gs = np.zeros(nw)
        self.Mx = np.zeros(nw)
        self.qpos = np.zeros(nw, np.int64)
        _time_tables_for(a, self.wlist, nw, self.EG, self.Gs, self.Mx, self.qpos)
        self.assign = np.full(self.nt, -1, np.int64)
        self.wc_g = np.zeros((2, state.vocab_size), np.int64)
        self.H_g = np.zeros((2, L), np.int64)
        self.n_g = np.zeros(2, np.int64)
        self.m_g = np.zeros(2, np.int64)

    def local(self, h):
        idx = np.flatnonzero(self.tabs[: self.nt] == h)
        return int(idx[0])


def choose_anchors(state: SeatingState, rng):
    tabs = state.live_tables()
    M = len(tabs)
    if M < 2:
        return None
    i1 = int(rng.integers(M))
    i2 = int(rng.integers(M - 1))
    if i2 >= i1:
        i2 += 1
    return int(tabs[i1]), int(tabs[i2])


def sequential_allocation(state: SeatingState, anchors, rng, forced=None, use_time=True,
                          subsample=20):
    """Allocate every table of the anchors' dish(es) to the first or second anchor.

    ``forced`` (table -> 0/1) replays an allocation instead of sampling it.
    Returns ``({table: group}, log_q)``. The state is not modified.
    """
    a = state.a
    h1, h2 = anchors
    ws = _Workspace(state, int(a.tbl_dish[h1]), int(a.tbl_dish[h2]))
    fz = np.full(ws.nt, -1, np.int64)
    if forced is not None:
        for h, g in forced.items():
            fz[ws.local(h)] = g
    logq = _seq_alloc(a, rng, ws.nt, ws.wptr, ws.wlist, ws.local(h1), ws.local(h2), fz, ws.assign,
                      ws.wc_g, ws.n_g, ws.m_g, ws.H_g, ws.EG, ws.Gs, ws.Mx, ws.qpos,
                      int(subsample), use_time)
    return {int(ws.tabs[x]): int(ws.assign[x]) for x in range(ws.nt)}, float(logq)


def crp_log_prior(sizes, conc: float) -> float:
    """Log probability of a partition with block ``sizes`` under CRP(conc)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    n = sizes.sum()
    return float(len(sizes) * np.log(conc) + gammaln(sizes).sum() - (gammaln(conc + n) - gammaln(conc)))


def state_log_prior(state: SeatingState, dishes=None) -> float:
    """Table-level CRP in every restaurant plus the dish-level CRP over tables.

    With ``dishes`` only restaurants holding tables of those dishes are
    included in the table part; the dish part is restricted to those dishes
    (terms shared by any two states that differ only there cancel in ratios).
    """
    a = state.a
    delta, omega = a.conc[0], a.conc[1]
    live = state.live_dishes() if dishes is None else np.asarray(dishes)
    lp = 0.0
    for j in range(len(a.rest_m)):
        tabs = state.tables_of(j)
        if dishes is not None and not np.isin(a.tbl_dish[tabs], live).any():
            continue
        lp += crp_log_prior(a.tbl_n[tabs], delta)
    m = a.dish_m[live].astype(np.float64)
    lp += len(m) * np.log(omega) + gammaln(m).sum()
    if dishes is None:
        lp -= gammaln(omega + m.sum()) - gammaln(omega)
    return float(lp)


def propose(state: SeatingState, rng, anchors=None, use_time=True, subsample=20,
            time_in_prior=False) -> SmProposal | None:
    """Build and score a split or merge proposal (read-only)."""
    a = state.a
    if anchors is None:
        anchors = choose_anchors(state, rng)
        if anchors is None:
            return None
    h1, h2 = anchors
    if h1 == h2 or a.tbl_n[h1] == 0 or a.tbl_n[h2] == 0:
        raise ValueError("anchors must be two distinct live tables")
    k1, k2 = int(a.tbl_dish[h1]), int(a.tbl_dish[h2])
    kind = SPLIT if k1 == k2 else MERGE
    ws = _Workspace(state, k1, k2)
    forced = np.full(ws.nt, -1, np.int64)
    if kind == MERGE:
        forced[:] = (a.tbl_dish[ws.tabs[: ws.nt]] != k1).astype(np.int64)
    logq = _seq_alloc(a, rng, ws.nt, ws.wptr, ws.wlist, ws.local(h1), ws.local(h2), forced,
                      ws.assign, ws.wc_g, ws.n_g, ws.m_g, ws.H_g, ws.EG, ws.Gs, ws.Mx, ws.qpos,
                      int(subsample), use_time)
    lpr, llr = _split_merge_terms(a, rng, ws.nt, ws.wptr, ws.wlist, ws.assign, ws.wc_g, ws.n_g,
                                  ws.m_g, ws.H_g, ws.EG, ws.Gs, ws.Mx, ws.qpos, int(subsample),
                                  use_time)
    if time_in_prior and use_time:
        # literal reading: the time evidence also multiplies the prior factors
        lpr += llr - _dm_only(ws, a)
    if kind == SPLIT:
        log_ratio = lpr + llr - logq
    else:
        log_ratio = logq - lpr - llr
    if not np.isfinite(log_ratio):
        raise FloatingPointError(f"non-finite split-merge ratio {log_ratio}")
    return SmProposal(kind, (int(h1), int(h2)), (k1, k2), ws.tabs[: ws.nt].copy(),
                      ws.assign.copy(), float(logq), float(lpr), float(llr), float(log_ratio),
                      int(ws.wptr[ws.nt]))


def _dm_only(ws, a):
    eta = a.hyp[H_ETA]
    V = a.dish_wc.shape[1]
    merged = ws.wc_g[0] + ws.wc_g[1]
    return (_dm_marginal(ws.wc_g[0], ws.n_g[0], eta, V) + _dm_marginal(ws.wc_g[1], ws.n_g[1], eta, V)
            - _dm_marginal(merged, ws.n_g[0] + ws.n_g[1], eta, V))


def commit(state: SeatingState, proposal: SmProposal, rng, use_time_pass=True):
    """Apply an accepted proposal and rerun the time CRF on the affected dishes."""
    a = state.a
    k1, k2 = proposal.dishes
    # re-collect so the CSR layout matches the proposal's table order
    ws = _Workspace(state, k1, k2)
    if not np.array_equal(ws.tabs[: ws.nt], proposal.tables):
        raise RuntimeError("state changed since the proposal was built")
    if proposal.kind == SPLIT:
        state.ensure_capacity(1, 0)
        a = state.a
        new = int(_commit_split(a, ws.tabs, ws.nt, proposal.assignment, ws.wptr, ws.wlist, k1))
        touched = [k1, new]
    else:
        _commit_merge(a, ws.tabs, ws.nt, k1, k2)
        touched = [k1]
    if use_time_pass:
        sample_time_hdp(state, rng, dishes=touched)
    return touched


def accept(state: SeatingState, proposal: SmProposal, rng) -> bool:
    """Metropolis-Hastings decision; commits the move when accepted."""
    u = rng.random()
    ok = u <= proposal.accept_prob
    if ok:
        commit(state, proposal, rng)
    return bool(ok)


@dataclass
class SmStats:
    proposed: int = 0
    proposed_split: int = 0
    proposed_merge: int = 0
    accepted_split: int = 0
    accepted_merge: int = 0

    def __iadd__(self, other):
        for f in self.__dataclass_fields__:
            setattr(self, f, getattr(self, f) + getattr(other, f))
        return self


def sm_step(state: SeatingState, rng, n_proposals=20, use_time=True, subsample=20,
            time_in_prior=False, check=False) -> SmStats:
    """Run ``n_proposals`` split-merge attempts."""
    stats = SmStats()
    for _ in range(n_proposals):
        prop = propose(state, rng, use_time=use_time, subsample=subsample, time_in_prior=time_in_prior)
        if prop is None:
            break
        stats.proposed += 1
        if prop.kind == SPLIT:
            stats.proposed_split += 1
        else:
            stats.proposed_merge += 1
        if accept(state, prop, rng):
            if prop.kind == SPLIT:
                stats.accepted_split += 1
            else:
                stats.accepted_merge += 1
            if check:
                bad = state.validate()
                if bad:
                    raise AssertionError(f"state invalid after {prop.kind}: {bad}")
    return stats
