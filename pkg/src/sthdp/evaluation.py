"""Held-out likelihood, trajectory assignment, anomaly ranking and pairwise clustering scores."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .corpus import Corpus, CorpusFormatError
from .model import TopicModel

logger = logging.getLogger(__name__)

PAIR_HEADER = ["traj_a", "traj_b", "same"]


@dataclass
class HoldoutSplit:
    train: Corpus
    test: Corpus
    train_idx: np.ndarray
    test_idx: np.ndarray
    fraction: float
    seed: int


def make_holdout(corpus: Corpus, fraction: float = 0.1, seed: int = 0) -> HoldoutSplit:
    """Uniform observation-level split; ``round(fraction * N)`` observations go to test."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = len(corpus)
    n_test = int(round(fraction * n))
    if not 0 < n_test < n:
        raise ValueError(f"fraction {fraction} leaves an empty side for {n} observations")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return HoldoutSplit(corpus.subset(train_idx), corpus.subset(test_idx), train_idx, test_idx,
                        fraction, seed)


# --- likelihoods ------------------------------------------------------------------


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def spatial_loglik(model: TopicModel, words):
    """log sum_k v_k beta_k(w)."""
    words = np.atleast_1d(np.asarray(words, dtype=np.int64))
    return np.log(model.topic_weight @ model.beta[:, words])


def _check_words(model, words):
    words = np.atleast_1d(np.asarray(words, dtype=np.int64))
    if words.size and (words.min() < 0 or words.max() >= model.vocab_size):
        raise ValueError("word outside the model vocabulary")
    return words


def topic_loglik(model: TopicModel, words, times):
    """(n, K) array of log[beta_k(w) sum_l gamma_kl N(t | time topic l)]."""
    words = _check_words(model, words)
    lt = model.time_log_density(times)
    return _log(model.beta[:, words].T) + lt


def joint_loglik(model: TopicModel, words, times, time_weights: str = "topic"):
    """log P(w, t) per observation.

    ``time_weights="topic"`` mixes time topics with each word topic's own
    weights gamma_k; ``"global"`` uses the corpus-level time weights instead,
    which makes word and time independent.
    """
    scalar = np.ndim(words) == 0
    words = _check_words(model, words)
    if time_weights == "topic":
        out = logsumexp(_log(model.topic_weight)[None, :] + topic_loglik(model, words, times), axis=1)
    elif time_weights == "global":
        out = spatial_loglik(model, words) + model.time_log_density(times, model.time_weight)[:, 0]
    else:
        raise ValueError(f"unknown time_weights {time_weights!r}")
    return float(out[0]) if scalar else out


def per_word_loglik(model: TopicModel, words, times, time_weights: str = "topic") -> float:
    words = np.atleast_1d(words)
    if words.size == 0:
        raise ValueError("no observations")
    ll = joint_loglik(model, words, times, time_weights)
    return float(np.mean(ll))


# --- trajectories -----------------------------------------------------------------


def assign_trajectory(model: TopicModel, words, times):
    """Best topic for a trajectory (ties: lower id); None when nothing is in-vocabulary."""
    words = np.atleast_1d(np.asarray(words, dtype=np.int64))
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    ok = (words >= 0) & (words < model.vocab_size)
    if not ok.any():
        return None
    scores = topic_loglik(model, words[ok], times[ok]).sum(axis=0)
    return int(np.argmax(scores))


def assign_trajectories(model: TopicModel, corpus: Corpus) -> dict:
    out = {}
    for tid, idx in corpus.trajectory_index().items():
        out[tid] = assign_trajectory(model, corpus.words[idx], corpus.times[idx])
    unassigned = sum(v is None for v in out.values())
    if unassigned:
        logger.warning("%d trajectories could not be assigned", unassigned)
    return out


@dataclass
class AnomalyEntry:
    traj_id: int
    score: float
    spatial: float
    temporal: float
    n_obs: int
    observations: list = field(default_factory=list)

    def as_dict(self):
        return {"traj_id": self.traj_id, "score": self.score, "spatial": self.spatial,
                "temporal": self.temporal, "n_obs": self.n_obs, "observations": self.observations}


def anomaly_rank(model: TopicModel, corpus: Corpus, time_weights: str = "topic",
                 detail: bool = False) -> list[AnomalyEntry]:
    """Trajectories sorted by ascending mean joint log-likelihood (stable on id).

    ``spatial`` is the mean of log sum_k v_k beta_k(w); ``temporal`` the
    remainder of the score. ``detail`` adds a per-observation breakdown.
    """
    ll = joint_loglik(model, corpus.words, corpus.times, time_weights)
    sp = spatial_loglik(model, corpus.words)
    entries = []
    for tid, idx in sorted(corpus.trajectory_index().items()):
        e = AnomalyEntry(tid, float(ll[idx].mean()), float(sp[idx].mean()),
                         float((ll[idx] - sp[idx]).mean()), len(idx))
        if detail:
            e.observations = [
                {"word": int(corpus.words[i]), "t": float(corpus.times[i]), "joint": float(ll[i]),
                 "spatial": float(sp[i]), "temporal": float(ll[i] - sp[i])} for i in idx]
        entries.append(e)
    order = np.argsort([e.score for e in entries], kind="stable")
    return [entries[i] for i in order]


# --- pairwise clustering accuracy ---------------------------------------------------


def load_pairs(path, corpus: Corpus | None = None) -> list[tuple[int, int, bool]]:
    pairs = []
    known = set(corpus.trajectory_index()) if corpus is not None else None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PAIR_HEADER:
            raise CorpusFormatError(f"{path}: line 1: expected header {','.join(PAIR_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                a, b, same = int(row[0]), int(row[1]), int(row[2])
            except (ValueError, IndexError):
                raise CorpusFormatError(f"{path}: line {lineno}: malformed pair") from None
            if same not in (0, 1):
                raise CorpusFormatError(f"{path}: line {lineno}: same must be 0 or 1")
            if known is not None and (a not in known or b not in known):
                raise CorpusFormatError(f"{path}: line {lineno}: unknown trajectory id")
            pairs.append((a, b, bool(same)))
    return pairs


def save_pairs(pairs, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_HEADER)
        for a, b, same in pairs:
            w.writerow([int(a), int(b), int(bool(same))])


def correctness_completeness(assignments: dict, pairs):
    """(r_correct, r_complete, n_excluded).

    Pairs touching an unassigned trajectory are excluded and counted. A ratio
    with no eligible pairs is NaN.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty pair set")
    diff_ok = diff_n = same_ok = same_n = excluded = 0
    for a, b, same in pairs:
        ta, tb = assignments.get(a), assignments.get(b)
        if ta is None or tb is None:
            excluded += 1
            continue
        if same:
            same_n += 1
            same_ok += ta == tb
        else:
            diff_n += 1
            diff_ok += ta != tb
    r_correct = diff_ok / diff_n if diff_n else float("nan")
    r_complete = same_ok / same_n if same_n else float("nan")
    return r_correct, r_complete, excluded


def eval_report(model: TopicModel, corpus: Corpus, pairs=None, top_n: int = 10,
                time_weights: str = "topic") -> dict:
    report = {
        "per_word_loglik": per_word_loglik(model, corpus.words, corpus.times, time_weights),
        "n_observations": len(corpus),
        "n_topics": model.K,
        "n_time_topics": model.L,
        "time_weights": time_weights,
        "anomalies": [e.as_dict() for e in anomaly_rank(model, corpus, time_weights, detail=True)[:top_n]],
    }
    if pairs is not None:
        rc, rp, excl = correctness_completeness(assign_trajectories(model, corpus), pairs)
        report.update(r_correct=rc, r_complete=rp, pairs_excluded=excl)
    return report
