"""Trajectory ingestion and the word / time-word representation.

A raw trajectory is a list of ``(t, x, y)`` points. Each point becomes an
observation: a discrete *word* encoding grid cell and heading, plus its
continuous time stamp. Observations are grouped into documents by fixed,
non-overlapping time windows.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["traj_id", "t", "x", "y"]
CORPUS_HEADER = ["doc", "traj_id", "word", "t"]


class CorpusFormatError(ValueError):
    """Malformed input file."""


@dataclass
class RawTrajectory:
    id: int
    points: np.ndarray  # (n, 3): t, x, y

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(self.points) < 2:
            raise ValueError(f"trajectory {self.id} needs at least 2 points")


@dataclass
class DiscretizationConfig:
    image_width: float = 640
    image_height: float = 480
    cell_size: float = 50
    n_directions: int = 4
    min_speed: float = 1.0
    y_down: bool = False

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.n_directions < 1:
            raise ValueError("n_directions must be >= 1")

    @property
    def n_cols(self) -> int:
        return math.ceil(self.image_width / self.cell_size)

    @property
    def n_rows(self) -> int:
        return math.ceil(self.image_height / self.cell_size)

    @property
    def vocab_size(self) -> int:
        return self.n_cols * self.n_rows * self.n_directions


@dataclass
class Corpus:
    """Observations sorted by document; documents are contiguous index ranges."""

    words: np.ndarray
    times: np.ndarray
    docs: np.ndarray
    trajs: np.ndarray
    vocab_size: int
    doc_start: np.ndarray = field(init=False)

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.float64)
        docs = np.asarray(self.docs, dtype=np.int64)
        self.trajs = np.asarray(self.trajs, dtype=np.int64)
        n = len(self.words)
        if not (len(self.times) == len(docs) == len(self.trajs) == n):
            raise ValueError("observation arrays differ in length")
        if n and (self.words.min() < 0 or self.words.max() >= self.vocab_size):
            raise ValueError("word index outside vocabulary")
        # relabel documents densely in order of first appearance after sorting
        order = np.lexsort((np.arange(n), docs))
        if not np.array_equal(order, np.arange(n)):
            self.words, self.times, self.trajs = (
                self.words[order], self.times[order], self.trajs[order])
            docs = docs[order]
        _, dense = np.unique(docs, return_inverse=True)
        self.docs = dense.astype(np.int64)
        n_docs = int(self.docs.max()) + 1 if n else 0
        self.doc_start = np.zeros(n_docs + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.docs, minlength=n_docs), out=self.doc_start[1:])

    def __len__(self):
        return len(self.words)

    @property
    def n_docs(self) -> int:
        return len(self.doc_start) - 1

    @property
    def time_span(self):
        return float(self.times.min()), float(self.times.max())

    @property
    def documents(self):
        return [np.arange(self.doc_start[j], self.doc_start[j + 1]) for j in range(self.n_docs)]

    def trajectory_index(self) -> dict[int, np.ndarray]:
        order = np.argsort(self.trajs, kind="stable")
        ids, starts = np.unique(self.trajs[order], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        return {int(i): order[s:e] for i, s, e in zip(ids, starts, bounds)}

    def subset(self, idx) -> "Corpus":
        idx = np.sort(np.asarray(idx, dtype=np.int64))
        return Corpus(self.words[idx], self.times[idx], self.docs[idx], self.trajs[idx],
                      self.vocab_size)


# --- loading ---------------------------------------------------------------


def load_trajectories(path) -> tuple[list[RawTrajectory], list[int]]:
    """Read a ``traj_id,t,x,y`` CSV.

    Returns the accepted trajectories (sorted by id) and the ids rejected
    because their time stamps decrease.
    """
    rows: dict[int, list[tuple[float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRAJECTORY_HEADER:
            raise CorpusFormatError(f"{path}: line 1: expected header {','.join(TRAJECTORY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise CorpusFormatError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                tid = int(row[0])
                t, x, y = float(row[1]), float(row[2]), float(row[3])
            except ValueError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: {exc}") from None
            if not all(map(math.isfinite, (t, x, y))):
                raise CorpusFormatError(f"{path}: line {lineno}: non-finite value")
            rows.setdefault(tid, []).append((t, x, y))

    trajectories, rejected = [], []
    for tid in sorted(rows):
        pts = np.array(rows[tid], dtype=np.float64)
        if np.any(np.diff(pts[:, 0]) < 0):
            rejected.append(tid)
            continue
        if len(pts) < 2:
            rejected.append(tid)
            continue
        trajectories.append(RawTrajectory(tid, pts))
    if rejected:
        logger.warning("rejected %d trajectories with decreasing or too few time stamps", len(rejected))
    return trajectories, rejected


def estimate_velocities(traj: RawTrajectory) -> np.ndarray:
    """Finite-difference velocities; returns an ``(n, 5)`` array ``t, x, y, vx, vy``.

    Point i uses the forward difference to i+1, the last point the backward
    difference. Pairs with zero time step are skipped and their velocity is
    interpolated from neighbouring valid pairs.
    """
    p = traj.points
    dt = np.diff(p[:, 0])
    dxy = np.diff(p[:, 1:], axis=0)
    valid = dt > 0
    if not valid.any():
        raise ValueError(f"trajectory {traj.id} has no distinct time stamps")
    pair_v = np.full_like(dxy, np.nan)
    pair_v[valid] = dxy[valid] / dt[valid, None]
    if not valid.all():
        idx = np.arange(len(dt))
        for c in range(2):
            pair_v[~valid, c] = np.interp(idx[~valid], idx[valid], pair_v[valid, c])
    v = np.vstack([pair_v, pair_v[-1:]])
    return np.column_stack([p, v])


def discretize(sample, config: DiscretizationConfig, dropped: Counter | None = None):
    """Map ``(x, y, vx, vy)`` to a vocabulary index, or None if dropped."""
    x, y, vx, vy = sample
    if config.y_down:
        vy = -vy
    if not (0 <= x < config.image_width and 0 <= y < config.image_height):
        if dropped is not None:
            dropped["out_of_bounds"] += 1
        return None
    if math.hypot(vx, vy) < config.min_speed:
        if dropped is not None:
            dropped["stationary"] += 1
        return None
    cx = int(x // config.cell_size)
    cy = int(y // config.cell_size)
    width = 2.0 * math.pi / config.n_directions
    d = int(math.floor((math.atan2(vy, vx) + 0.5 * width) / width)) % config.n_directions
    return (cy * config.n_cols + cx) * config.n_directions + d


def decode_word(word: int, config: DiscretizationConfig):
    cell, d = divmod(int(word), config.n_directions)
    cy, cx = divmod(cell, config.n_cols)
    return cx, cy, d


def encode_word(cx, cy, d, config: DiscretizationConfig) -> int:
    return (cy * config.n_cols + cx) * config.n_directions + d


def segment_documents(words, times, trajs, window: float, vocab_size: int) -> Corpus:
    """Group observations into documents of fixed time windows ``[t0 + kw, t0 + (k+1)w)``."""
    if window <= 0:
        raise ValueError("window must be positive")
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        raise ValueError("no observations")
    win = np.floor((times - times.min()) / window).astype(np.int64)
    order = np.lexsort((times, win))
    words, trajs = np.asarray(words)[order], np.asarray(trajs)[order]
    return Corpus(words, times[order], win[order], trajs, vocab_size)


def build_corpus(trajectories, config: DiscretizationConfig, window: float = 60.0):
    """Run velocities + discretisation over all trajectories.

    Returns ``(corpus, dropped)`` where ``dropped`` counts discarded samples by reason.
    """
    dropped: Counter = Counter()
    words, times, trajs = [], [], []
    for traj in trajectories:
        for t, x, y, vx, vy in estimate_velocities(traj):
            w = discretize((x, y, vx, vy), config, dropped)
            if w is None:
                continue
            words.append(w)
            times.append(t)
            trajs.append(traj.id)
    if not words:
        raise ValueError("no observations survived discretisation")
    return segment_documents(words, times, trajs, window, config.vocab_size), dropped


# --- discretised corpus files ----------------------------------------------


def save_corpus(corpus: Corpus, path) -> None:
    """Write ``# vocab_size=V`` then a ``doc,traj_id,word,t`` CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# vocab_size={corpus.vocab_size}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CORPUS_HEADER)
        for d, tr, wd, t in zip(corpus.docs, corpus.trajs, corpus.words, corpus.times):
            w.writerow([int(d), int(tr), int(wd), repr(float(t))])


def load_corpus(path) -> Corpus:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# vocab_size="):
            raise CorpusFormatError(f"{path}: line 1: expected '# vocab_size=V'")
        try:
            V = int(first.split("=", 1)[1])
        except ValueError:
            raise CorpusFormatError(f"{path}: line 1: bad vocabulary size") from None
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CORPUS_HEADER:
            raise CorpusFormatError(f"{path}: line 2: expected header {','.join(CORPUS_HEADER)}")
        cols = [[], [], [], []]
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != 4:
                raise CorpusFormatError(f"{path}: line {lineno}: expected 4 fields")
            try:
                cols[0].append(int(row[0]))
                cols[1].append(int(row[1]))
                cols[2].append(int(row[2]))
                cols[3].append(float(row[3]))
            except ValueError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: {exc}") from None
    if not cols[0]:
        raise CorpusFormatError(f"{path}: no observations")
    docs, trajs, words, times = cols
    return Corpus(words, times, docs, trajs, V)


def sniff_format(path) -> str:
    """'corpus' for discretised files, 'trajectories' for raw point files."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.startswith("# vocab_size="):
        return "corpus"
    if [h.strip() for h in first.split(",")] == TRAJECTORY_HEADER:
        return "trajectories"
    raise CorpusFormatError(f"{path}: unrecognised file format")
