"""Training chain: schedule, seeding, progress log and checkpoints."""
from __future__ import annotations

import base64
import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gibbs
from .corpus import Corpus
from .evaluation import per_word_loglik
from .model import _from_bytes, _to_bytes, extract_model
from .priors import NigParams
from .seating import SeatingState, load_state, save_state
from .split_merge import SmStats, sm_step

logger = logging.getLogger(__name__)

PROGRESS_COLUMNS = ["iter", "K", "L", "train_pwll", "sm_proposed", "sm_accepted_split",
                    "sm_accepted_merge"]
STREAMS = ("init", "gibbs", "sm", "conc")


class NumericalError(FloatingPointError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite training log likelihood {value} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class ModelPriors:
    eta: float = 0.5
    mu: float | None = None  # None: mean of all time stamps
    lam: float = 0.01
    shape: float = 0.3
    scale: float = 1.0
    conc_init: float = 1.0
    conc_a: float = 0.1
    conc_b: float = 0.1

    def nig(self, corpus: Corpus) -> NigParams:
        mu = float(corpus.times.mean()) if self.mu is None else float(self.mu)
        return NigParams(mu, self.lam, self.shape, self.scale)


def _streams(seed: int):
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(c)) for name, c in zip(STREAMS, children)}


class Chain:
    """One MCMC chain over a corpus.

    Every random draw comes from one of four generators spawned from the
    seed (initialisation, Gibbs, split-merge, concentrations), so toggling
    split-merge leaves the other streams untouched.
    """

    def __init__(self, corpus: Corpus, config: gibbs.SamplerConfig | None = None,
                 priors: ModelPriors | None = None, initialize: bool = True):
        self.corpus = corpus
        self.config = config or gibbs.SamplerConfig()
        self.priors = priors or ModelPriors()
        self.rngs = _streams(self.config.seed)
        self.iteration = 0
        self.sm_total = SmStats()
        self.trace: list[list] = []
        self.best = None  # (train_pwll, iteration, model)
        p = self.priors
        self.state = SeatingState(corpus, eta=p.eta, nig=p.nig(corpus),
                                  concentrations=(p.conc_init,) * 4)
        if initialize:
            gibbs.initialize(self.state, self.rngs["init"], self.config.init, self.config.use_time)

    # -- running -----------------------------------------------------------------
    def step(self, check: bool = False) -> list:
        cfg = self.config
        it = self.iteration + 1
        gibbs.gibbs_sweep(self.state, self.rngs["gibbs"], cfg, conc_rng=self.rngs["conc"],
                          conc_prior=(self.priors.conc_a, self.priors.conc_b))
        if check:
            self._check(f"sweep {it}")
        sm = SmStats()
        if cfg.sm_due(it):
            sm = sm_step(self.state, self.rngs["sm"], cfg.sm_proposals, cfg.use_time,
                         cfg.time_subsample, cfg.sm_time_in_prior, check=check)
            self.sm_total += sm
        model = extract_model(self.state)
        pwll = per_word_loglik(model, self.corpus.words, self.corpus.times)
        if not np.isfinite(pwll):
            raise NumericalError(it, pwll)
        if it > cfg.burn_in and (self.best is None or pwll > self.best[0]):
            self.best = (pwll, it, model)
        self.iteration = it
        row = [it, self.state.K, self.state.L, pwll, sm.proposed, sm.accepted_split, sm.accepted_merge]
        self.trace.append(row)
        return row

    def run(self, until: int | None = None, progress=None, checkpoint_dir=None, check=False):
        """Iterate up to ``until`` (default ``total_iters``) total iterations."""
        until = self.config.total_iters if until is None else until
        if progress is not None and self.iteration == 0:
            progress.write("\t".join(PROGRESS_COLUMNS) + "\n")
        while self.iteration < until:
            row = self.step(check=check)
            if progress is not None:
                progress.write(format_row(row) + "\n")
                progress.flush()
            if checkpoint_dir is not None and self.iteration % self.config.checkpoint_period == 0:
                self.save_checkpoint(Path(checkpoint_dir) / f"checkpoint_{self.iteration:06d}.npz")
        if self.sm_total.proposed and self.sm_total.accepted_merge < self.sm_total.accepted_split:
            logger.info("accepted splits (%d) outnumber merges (%d)",
                        self.sm_total.accepted_split, self.sm_total.accepted_merge)
        return self

    def _check(self, where):
        bad = self.state.validate()
        if bad:
            raise AssertionError(f"state invalid after {where}: {bad}")

    def model(self, which: str = "final", **kw):
        if which == "best" and self.best is not None:
            return self.best[2]
        return extract_model(self.state, **kw)

    # -- checkpoints ----------------------------------------------------------------
    def save_checkpoint(self, path):
        extra = {
            "iteration": self.iteration,
            "config": dataclasses.asdict(self.config),
            "priors": dataclasses.asdict(self.priors),
            "rngs": {k: g.bit_generator.state for k, g in self.rngs.items()},
            "sm_total": dataclasses.asdict(self.sm_total),
            "trace": self.trace,
            "best": None if self.best is None else [
                self.best[0], self.best[1], base64.b64encode(_to_bytes(self.best[2])).decode()],
        }
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            save_state(self.state, fh, extra=_jsonable(extra))
        tmp.replace(path)

    @classmethod
    def from_checkpoint(cls, path, corpus: Corpus) -> "Chain":
        with open(path, "rb") as fh:
            state, extra = load_state(fh, corpus)
        chain = cls.__new__(cls)
        chain.corpus = corpus
        chain.config = gibbs.SamplerConfig(**extra["config"])
        chain.priors = ModelPriors(**extra["priors"])
        chain.rngs = _streams(chain.config.seed)
        for k, st in extra["rngs"].items():
            chain.rngs[k].bit_generator.state = st
        chain.iteration = int(extra["iteration"])
        chain.sm_total = SmStats(**extra["sm_total"])
        chain.trace = [list(r) for r in extra["trace"]]
        chain.state = state
        chain.best = None
        if extra.get("best") is not None:
            pwll, it, blob = extra["best"]
            chain.best = (pwll, it, _from_bytes(base64.b64decode(blob)))
        return chain


def format_row(row) -> str:
    it, K, L, pwll, p, s, m = row
    return f"{it}\t{K}\t{L}\t{pwll:.10g}\t{p}\t{s}\t{m}"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def train(corpus: Corpus, config: gibbs.SamplerConfig | None = None, priors: ModelPriors | None = None,
          **run_kw) -> Chain:
    chain = Chain(corpus, config, priors)
    return chain.run(**run_kw)


def dump_json(obj, path):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True))
