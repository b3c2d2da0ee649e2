"""Point-estimate topic model extracted from a seating state, plus its file format.

Binary layout (little endian)::

    8 bytes   magic  b"STHDPMOD"
    uint32    format version
    uint32    header length H
    H bytes   UTF-8 JSON header (K, L, V, eta, time span, time unit, flags, meta)
    float64   beta[K, V], topic_weight[K], support[K],
              time_mean[L], time_var[L], time_weight[L], gamma[K, L]
    uint32    CRC-32 of every preceding byte
"""
from __future__ import annotations

import dataclasses
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .priors import _nig_post
from .seating import SeatingState

MAGIC = b"STHDPMOD"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Unreadable model file; ``kind`` is one of magic/version/truncated/checksum/header."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class WordTopic:
    id: int
    distribution: np.ndarray
    weight: float
    support: int
    flagged: bool


@dataclass(frozen=True)
class TimeTopic:
    id: int
    mean: float
    variance: float
    weight: float


@dataclass(frozen=True)
class TopicTimeProfile:
    topic_id: int
    weights: np.ndarray  # over time topics
    scale: float


@dataclass
class TopicModel:
    beta: np.ndarray          # (K, V)
    topic_weight: np.ndarray  # (K,)
    support: np.ndarray       # (K,)
    time_mean: np.ndarray     # (L,)
    time_var: np.ndarray      # (L,)
    time_weight: np.ndarray   # (L,)
    gamma: np.ndarray         # (K, L)
    eta: float
    time_span: tuple
    time_unit: float = 1.0
    support_floor: int = 10
    meta: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.beta.shape[0]

    @property
    def L(self):
        return self.time_mean.shape[0]

    @property
    def vocab_size(self):
        return self.beta.shape[1]

    @property
    def flagged(self):
        return self.support < self.support_floor

    @property
    def word_topics(self):
        return [WordTopic(k, self.beta[k], float(self.topic_weight[k]), int(self.support[k]),
                          bool(self.flagged[k])) for k in range(self.K)]

    @property
    def time_topics(self):
        return [TimeTopic(l, float(self.time_mean[l]), float(self.time_var[l]),
                          float(self.time_weight[l])) for l in range(self.L)]

    @property
    def profiles(self):
        return [TopicTimeProfile(k, self.gamma[k], float(self.support[k])) for k in range(self.K)]

    def time_log_density(self, t, weights=None):
        """log sum_l w_l N(t | time topic l) for each t; w defaults to gamma (K, L) -> (n, K)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        lp = norm.logpdf(t[:, None], self.time_mean[None, :], np.sqrt(self.time_var)[None, :])
        w = self.gamma if weights is None else np.atleast_2d(weights)
        with np.errstate(divide="ignore"):
            lw = np.log(w)
        return logsumexp(lp[:, None, :] + lw[None, :, :], axis=2)

    def equals(self, other: "TopicModel") -> bool:
        arrays = ("beta", "topic_weight", "support", "time_mean", "time_var", "time_weight", "gamma")
        return (all(np.array_equal(getattr(self, n), getattr(other, n)) for n in arrays)
                and self.eta == other.eta and tuple(self.time_span) == tuple(other.time_span)
                and self.time_unit == other.time_unit and self.support_floor == other.support_floor
                and self.meta == other.meta)


def extract_model(state: SeatingState, support_floor: int = 10, time_unit: float = 1.0,
                  meta: dict | None = None) -> TopicModel:
    """Posterior-mean topics from ``state`` (read-only).

    Topics are ordered by decreasing support (ties: lower handle first); time
    topics by increasing mean. ``time_unit`` converts state time back to seconds.
    """
    a = state.a
    V = state.vocab_size
    eta = state.eta
    dishes = state.live_dishes()
    n_k = a.dish_n[dishes]
    order = np.lexsort((dishes, -n_k))
    dishes = dishes[order]
    n_k = n_k[order].astype(np.float64)
    beta = (a.dish_wc[dishes] + eta) / (n_k[:, None] + V * eta)

    tds = state.live_time_dishes()
    nig = state.nig
    means, variances = [], []
    for l in tds:
        lam, mu, shape, scale = _nig_post(nig.mu, nig.lam, nig.shape, nig.scale,
                                          int(a.td_n[l]), float(a.td_sum[l]), float(a.td_ss[l]))
        means.append(mu)
        variances.append(scale / (shape - 1.0) if shape > 1.0 else scale / shape)
    means = np.asarray(means)
    variances = np.asarray(variances)
    torder = np.lexsort((tds, means))
    tds, means, variances = tds[torder], means[torder], variances[torder]
    d_l = a.td_d[tds].astype(np.float64)

    gamma = a.dish_S[np.ix_(dishes, tds)].astype(np.float64) / n_k[:, None]
    t0, t1 = state.corpus.time_span
    return TopicModel(
        beta=beta, topic_weight=n_k / n_k.sum(), support=n_k,
        time_mean=means * time_unit, time_var=variances * time_unit ** 2,
        time_weight=d_l / d_l.sum(), gamma=gamma, eta=eta,
        time_span=(t0 * time_unit, t1 * time_unit), time_unit=float(time_unit),
        support_floor=int(support_floor), meta=dict(meta or {}),
    )


def rescale_time(model: TopicModel, unit: float) -> TopicModel:
    """Copy of ``model`` with its time axis multiplied by ``unit``."""
    if unit <= 0:
        raise ValueError("unit must be positive")
    return dataclasses.replace(
        model, time_mean=model.time_mean * unit, time_var=model.time_var * unit ** 2,
        time_span=(model.time_span[0] * unit, model.time_span[1] * unit),
        time_unit=model.time_unit * unit, meta=dict(model.meta))


def profile_density(model: TopicModel, topic: int, t):
    """Scaled time profile: support_k * sum_l gamma_kl N(t | mean_l, var_l)."""
    t = np.asarray(t, dtype=np.float64)
    sd = np.sqrt(model.time_var)
    dens = norm.pdf(t[..., None], model.time_mean, sd) @ model.gamma[topic]
    return model.support[topic] * dens


def profile_mass(model: TopicModel, topic: int, lo: float, hi: float) -> float:
    """Integral of the scaled profile over ``[lo, hi]``."""
    sd = np.sqrt(model.time_var)
    cdf = norm.cdf(hi, model.time_mean, sd) - norm.cdf(lo, model.time_mean, sd)
    return float(model.support[topic] * cdf @ model.gamma[topic])


# --- serialisation --------------------------------------------------------------

_ARRAYS = ("beta", "topic_weight", "support", "time_mean", "time_var", "time_weight", "gamma")


def _to_bytes(model: TopicModel) -> bytes:
    header = {
        "K": model.K, "L": model.L, "V": model.vocab_size, "eta": model.eta,
        "time_span": list(model.time_span), "time_unit": model.time_unit,
        "support_floor": model.support_floor, "meta": model.meta,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(getattr(model, n), dtype="<f8").tobytes() for n in _ARRAYS)
    payload = MAGIC + struct.pack("<II", FORMAT_VERSION, len(hb)) + hb + body
    return payload + struct.pack("<I", zlib.crc32(payload))


def save_model(model: TopicModel, path) -> None:
    Path(path).write_bytes(_to_bytes(model))


def _from_bytes(buf: bytes) -> TopicModel:
    if len(buf) < 16 or buf[:8] != MAGIC:
        raise ModelFormatError("magic", "not a model file")
    version, hlen = struct.unpack_from("<II", buf, 8)
    if version != FORMAT_VERSION:
        raise ModelFormatError("version", f"unsupported version {version} (expected {FORMAT_VERSION})")
    if len(buf) < 16 + hlen + 4:
        raise ModelFormatError("truncated", "file ends inside the header")
    try:
        header = json.loads(buf[16:16 + hlen].decode())
        K, L, V = int(header["K"]), int(header["L"]), int(header["V"])
    except (ValueError, KeyError) as exc:
        raise ModelFormatError("header", str(exc)) from None
    sizes = [K * V, K, K, L, L, L, K * L]
    need = 16 + hlen + 8 * sum(sizes) + 4
    if len(buf) < need:
        raise ModelFormatError("truncated", f"expected {need} bytes, found {len(buf)}")
    if len(buf) > need:
        raise ModelFormatError("header", f"{len(buf) - need} trailing bytes")
    (crc,) = struct.unpack_from("<I", buf, need - 4)
    if zlib.crc32(buf[: need - 4]) != crc:
        raise ModelFormatError("checksum", "CRC mismatch")
    off = 16 + hlen
    arrs = []
    for n in sizes:
        arrs.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64))
        off += 8 * n
    beta, tw, sup, tm, tv, tdw, gamma = arrs
    return TopicModel(
        beta=beta.reshape(K, V), topic_weight=tw, support=sup, time_mean=tm, time_var=tv,
        time_weight=tdw, gamma=gamma.reshape(K, L), eta=float(header["eta"]),
        time_span=tuple(header["time_span"]), time_unit=float(header["time_unit"]),
        support_floor=int(header["support_floor"]), meta=header["meta"],
    )


def load_model(path) -> TopicModel:
    return _from_bytes(Path(path).read_bytes())


# --- plot export ------------------------------------------------------------------


def export_plot_data(model: TopicModel, resolution: int = 200, out_dir=None):
    """Scaled time profiles on a uniform grid over the corpus time span.

    Returns ``{topic: (t, density)}``; with ``out_dir`` also writes
    ``topic_<k>.csv`` (``t,density``) per topic and ``index.json``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    t = np.linspace(model.time_span[0], model.time_span[1], resolution)
    curves = {k: (t, profile_density(model, k, t)) for k in range(model.K)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        index = {"time_span": list(model.time_span), "resolution": resolution, "topics": []}
        for k, (tt, dens) in curves.items():
            name = f"topic_{k}.csv"
            with open(out / name, "w", encoding="utf-8") as fh:
                fh.write("t,density\n")
                for x, y in zip(tt, dens):
                    fh.write(f"{float(x)!r},{float(y)!r}\n")
            comps = [{"time_topic": int(l), "weight": float(model.gamma[k, l]),
                      "mean": float(model.time_mean[l]), "variance": float(model.time_var[l])}
                     for l in np.flatnonzero(model.gamma[k] > 0)]
            index["topics"].append({
                "id": k, "file": name, "weight": float(model.topic_weight[k]),
                "support": int(model.support[k]), "flagged": bool(model.flagged[k]),
                "components": comps,
            })
        (out / "index.json").write_text(json.dumps(index, indent=2))
    return curves


def model_summary(model: TopicModel, top_words: int = 5) -> dict:
    out = []
    for wt in model.word_topics:
        top = np.argsort(-wt.distribution, kind="stable")[:top_words]
        out.append({"id": wt.id, "weight": wt.weight, "support": wt.support,
                    "flagged": wt.flagged, "top_words": top.tolist()})
    return {"K": model.K, "L": model.L, "topics": out}
