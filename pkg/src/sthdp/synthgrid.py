"""Synthetic 5x5 grid corpus with known spatial patterns and activity phases.

Two bar patterns (a horizontal and a vertical bar crossing in one cell) are
switched on and off over four consecutive phases. Each document belongs to
one phase and holds a few short trajectories, each drawn entirely from one
pattern. Time stamps are uniform over the phase by default; ``doc_span``
narrows every document to a random window of that length instead.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .corpus import Corpus
from .model import TopicModel


def bar_pattern(grid: int, row: int | None = None, col: int | None = None) -> np.ndarray:
    p = np.zeros((grid, grid))
    if row is not None:
        p[row, :] = 1.0
    if col is not None:
        p[:, col] = 1.0
    p = p.ravel()
    return p / p.sum()


def _default_patterns():
    return [bar_pattern(5, row=2), bar_pattern(5, col=2)]


def _default_phases():
    return [
        (0.0, 70.0, {0: 1.0}),
        (70.0, 140.0, {1: 1.0}),
        (140.0, 210.0, {0: 1.0}),
        (210.0, 280.0, {0: 2.0, 1: 1.0}),
    ]


@dataclass
class GridGroundTruth:
    grid: int = 5
    patterns: list = field(default_factory=_default_patterns)
    phases: list = field(default_factory=_default_phases)  # (start, end, {pattern: weight})
    docs_per_phase: int = 50
    words_per_doc: int = 40
    traj_len: int = 8
    doc_span: float | None = None
    jitter: float = 0.0

    def __post_init__(self):
        self.patterns = [np.asarray(p, dtype=np.float64) for p in self.patterns]
        for p in self.patterns:
            if p.shape != (self.vocab_size,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
                raise ValueError("patterns must be distributions over the grid cells")
        for (s0, e0, _), (s1, _, _) in zip(self.phases, self.phases[1:]):
            if e0 != s1:
                raise ValueError("phases must be contiguous")
        if self.words_per_doc % self.traj_len:
            raise ValueError("words_per_doc must be a multiple of traj_len")
        if self.doc_span is not None and any(e - s < self.doc_span for s, e, _ in self.phases):
            raise ValueError("doc_span longer than a phase")

    @property
    def vocab_size(self):
        return self.grid * self.grid

    @property
    def time_span(self):
        return self.phases[0][0], self.phases[-1][1]

    @property
    def n_patterns(self):
        return len(self.patterns)


def near_duplicate_truth(**kw) -> GridGroundTruth:
    """Two phases whose patterns differ only slightly (same bar, small leak)."""
    a = bar_pattern(5, row=2)
    b = 0.9 * a + 0.1 * bar_pattern(5, row=3)
    kw.setdefault("phases", [(0.0, 70.0, {0: 1.0}), (70.0, 140.0, {1: 1.0})])
    return GridGroundTruth(patterns=[a, b], **kw)


def _pattern_quota(weights: dict, n: int, rng) -> np.ndarray:
    pats = sorted(weights)
    w = np.array([weights[p] for p in pats], dtype=np.float64)
    raw = w / w.sum() * n
    counts = np.floor(raw).astype(int)
    # largest remainders get the leftover trajectories
    for idx in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[idx] += 1
    out = np.repeat(pats, counts)
    rng.shuffle(out)
    return out


def generate(truth: GridGroundTruth | None = None, seed: int = 0):
    """Return ``(corpus, labels)``; ``labels[i]`` is the pattern behind observation i."""
    truth = truth or GridGroundTruth()
    rng = np.random.default_rng(seed)
    per_doc = truth.words_per_doc // truth.traj_len
    words, times, docs, trajs, labels = [], [], [], [], []
    doc = traj = 0
    for start, end, mix in truth.phases:
        quota = _pattern_quota(mix, truth.docs_per_phase * per_doc, rng)
        q = 0
        for _ in range(truth.docs_per_phase):
            if truth.doc_span is None:
                d0, d1 = start, end
            else:
                d0 = rng.uniform(start, end - truth.doc_span)
                d1 = d0 + truth.doc_span
            for _ in range(per_doc):
                pat = int(quota[q])
                q += 1
                w = rng.choice(truth.vocab_size, size=truth.traj_len, p=truth.patterns[pat])
                t = np.sort(rng.uniform(d0, d1, size=truth.traj_len))
                if truth.jitter:
                    t = np.clip(t + rng.normal(0, truth.jitter, size=t.size), start, np.nextafter(end, start))
                words.append(w)
                times.append(t)
                docs.append(np.full(truth.traj_len, doc))
                trajs.append(np.full(truth.traj_len, traj))
                labels.append(np.full(truth.traj_len, pat))
                traj += 1
            doc += 1
    cat = np.concatenate
    corpus = Corpus(cat(words), cat(times), cat(docs), cat(trajs), truth.vocab_size)
    return corpus, cat(labels).astype(np.int64)


def inject_trajectories(corpus: Corpus, labels, truth: GridGroundTruth, pattern: int, phase: int,
                        n: int, seed: int, window=(0.0, 1.0)):
    """Add ``n`` trajectories of ``pattern`` into existing documents of ``phase``.

    Target documents are those whose observations fall within the fraction
    ``window`` of the phase interval. Returns ``(corpus, labels, new_ids)``.
    """
    rng = np.random.default_rng(seed)
    start, end, _ = truth.phases[phase]
    lo = start + window[0] * (end - start)
    hi = start + window[1] * (end - start)
    cand = [j for j in range(corpus.n_docs)
            if lo <= corpus.times[corpus.doc_start[j]:corpus.doc_start[j + 1]].min()
            and corpus.times[corpus.doc_start[j]:corpus.doc_start[j + 1]].max() <= hi]
    if len(cand) < n:
        raise ValueError("not enough documents in the requested window")
    chosen = rng.choice(cand, size=n, replace=False)
    next_id = int(corpus.trajs.max()) + 1
    words, times, docs, trajs, labs = [corpus.words], [corpus.times], [corpus.docs], [corpus.trajs], [np.asarray(labels)]
    new_ids = []
    for j in chosen:
        seg = corpus.times[corpus.doc_start[j]:corpus.doc_start[j + 1]]
        words.append(rng.choice(truth.vocab_size, size=truth.traj_len, p=truth.patterns[pattern]))
        times.append(np.sort(rng.uniform(seg.min(), seg.max(), size=truth.traj_len)))
        docs.append(np.full(truth.traj_len, j))
        trajs.append(np.full(truth.traj_len, next_id))
        labs.append(np.full(truth.traj_len, pattern))
        new_ids.append(next_id)
        next_id += 1
    cat = np.concatenate
    d = cat(docs)
    order = np.argsort(d, kind="stable")
    new = Corpus(cat(words)[order], cat(times)[order], d[order], cat(trajs)[order], corpus.vocab_size)
    return new, cat(labs)[order].astype(np.int64), new_ids


def save_labels(labels, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["obs_index", "pattern"])
        for i, p in enumerate(labels):
            w.writerow([i, int(p)])


def label_ratio(labels, a=0, b=1) -> float:
    labels = np.asarray(labels)
    return float((labels == a).sum() / (labels == b).sum())


# --- recovery scoring --------------------------------------------------------------


@dataclass
class TopicMatch:
    matches: dict          # pattern -> learned topic
    l1: dict               # pattern -> L1 distance to its match
    similarity: dict       # pattern -> cosine similarity
    under_split: bool
    unmatched_mass: float  # weight of learned topics matched to no pattern


def match_topics(learned, truth_patterns, weights=None) -> TopicMatch:
    """Greedy cosine matching of each truth pattern to a distinct learned topic.

    With fewer learned topics than patterns the leftover patterns take their
    most similar topic anyway and the result is flagged ``under_split``.
    """
    B = np.atleast_2d(np.asarray(learned, dtype=np.float64))
    P = np.atleast_2d(np.asarray(truth_patterns, dtype=np.float64))
    if B.shape[0] == 0:
        raise ValueError("no learned topics")
    w = np.full(B.shape[0], 1.0 / B.shape[0]) if weights is None else np.asarray(weights, float)
    sim = (P @ B.T) / (np.linalg.norm(P, axis=1)[:, None] * np.linalg.norm(B, axis=1)[None, :])
    matches = {}
    free_p, free_k = set(range(P.shape[0])), set(range(B.shape[0]))
    # pairs in decreasing similarity; ties by (pattern, topic) for determinism
    pairs = sorted(((-sim[p, k], p, k) for p in range(P.shape[0]) for k in range(B.shape[0])))
    for _, p, k in pairs:
        if p in free_p and k in free_k:
            matches[p] = k
            free_p.discard(p)
            free_k.discard(k)
    under = bool(free_p)
    for p in sorted(free_p):
        matches[p] = int(np.argmax(sim[p]))
    l1 = {p: float(np.abs(P[p] - B[k]).sum()) for p, k in matches.items()}
    s = {p: float(sim[p, k]) for p, k in matches.items()}
    used = set(matches.values())
    unmatched = float(sum(w[k] for k in range(B.shape[0]) if k not in used))
    return TopicMatch(dict(sorted(matches.items())), l1, s, under, unmatched)


def phase_masses(model: TopicModel, topic: int, truth: GridGroundTruth) -> np.ndarray:
    """Fraction of a topic's scaled time profile inside each truth phase."""
    sd = np.sqrt(model.time_var)
    out = []
    for start, end, _ in truth.phases:
        cdf = norm.cdf(end, model.time_mean, sd) - norm.cdf(start, model.time_mean, sd)
        out.append(float(cdf @ model.gamma[topic]))
    return np.asarray(out)


def temporal_recovery(model: TopicModel, match: TopicMatch, truth: GridGroundTruth) -> dict:
    """pattern -> per-phase mass fractions of its matched topic's profile."""
    return {p: phase_masses(model, k, truth) for p, k in match.matches.items()}


def mass_after(model: TopicModel, topic: int, t: float) -> float:
    """Fraction of a topic's time profile beyond time ``t``."""
    sd = np.sqrt(model.time_var)
    return float(norm.sf(t, model.time_mean, sd) @ model.gamma[topic])
