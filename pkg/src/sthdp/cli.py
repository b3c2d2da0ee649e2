"""Command-line entry point: ``sthdp {synth,train,eval,anomalies,export-plots}``.

Exit codes: 0 success, 2 configuration error, 3 input/output error,
4 numerical failure during training.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import synthgrid
from .corpus import Corpus, CorpusFormatError, build_corpus, load_corpus, load_trajectories, save_corpus, sniff_format
from .evaluation import anomaly_rank, eval_report, load_pairs, make_holdout, per_word_loglik
from .model import ModelFormatError, export_plot_data, load_model, model_summary, rescale_time, save_model
from .sampler import PROGRESS_COLUMNS, Chain, NumericalError, dump_json, format_row

logger = logging.getLogger("sthdp")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _read_corpus(path, cfg: cfgmod.RunConfig):
    if sniff_format(path) == "corpus":
        return load_corpus(path)
    trajs, rejected = load_trajectories(path)
    if rejected:
        logger.warning("rejected %d malformed trajectories", len(rejected))
    corpus, dropped = build_corpus(trajs, cfg.discretization, cfg.window)
    if dropped:
        logger.info("dropped samples: %s", dict(dropped))
    return corpus


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands -----------------------------------------------------------------


def cmd_synth(args, cfg):
    out = _out_dir(args)
    truth = cfg.synth.truth()
    corpus, labels = synthgrid.generate(truth, cfg.seed)
    save_corpus(corpus, out / "corpus.csv")
    synthgrid.save_labels(labels, out / "labels.csv")
    cfgmod.write_resolved(cfg, out)
    logger.info("%d observations in %d documents; P1/P2 label ratio %.3f",
                len(corpus), corpus.n_docs, synthgrid.label_ratio(labels))


def cmd_train(args, cfg):
    out = _out_dir(args)
    corpus = _read_corpus(args.corpus, cfg)
    if cfg.time_unit != 1.0:
        corpus = Corpus(corpus.words, corpus.times / cfg.time_unit, corpus.docs, corpus.trajs,
                        corpus.vocab_size)
    test = None
    if cfg.holdout_fraction > 0:
        split = make_holdout(corpus, cfg.holdout_fraction, cfg.holdout_seed)
        corpus, test = split.train, split.test
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    if args.resume:
        chain = Chain.from_checkpoint(args.resume, corpus)
        # the schedule may be extended on resume; everything else comes from the checkpoint
        chain.config.total_iters = cfg.sampler.total_iters
    else:
        chain = Chain(corpus, cfg.sampler, cfg.priors)
    cfgmod.write_resolved(cfg, out)
    with (_Stdout() if args.progress_stdout else open(out / "progress.tsv", "w", encoding="utf-8")) as log:
        if chain.iteration:
            # rows after the checkpoint are regenerated, so rebuild the log from its trace
            log.write("\t".join(PROGRESS_COLUMNS) + "\n")
            log.writelines(format_row(r) + "\n" for r in chain.trace)
        chain.run(progress=log, checkpoint_dir=ckpt_dir)
    meta = {"seed": cfg.seed, "iterations": chain.iteration}
    final = rescale_time(chain.model("final", support_floor=cfg.support_floor, meta=meta), cfg.time_unit)
    save_model(final, out / "model.sthdp")
    summary = {"iterations": chain.iteration, "K": final.K, "L": final.L,
               "train_per_word_loglik": chain.trace[-1][3] if chain.trace else None,
               "sm": vars(chain.sm_total), "concentrations": chain.state.concentrations,
               "topics": model_summary(final)["topics"]}
    if chain.best is not None:
        save_model(rescale_time(chain.best[2], cfg.time_unit), out / "model_best.sthdp")
        summary["best_iteration"] = chain.best[1]
    if test is not None:
        summary["heldout_per_word_loglik"] = per_word_loglik(final, test.words, test.times * cfg.time_unit,
                                                             cfg.time_weights)
    dump_json(summary, out / "train_summary.json")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()


def cmd_eval(args, cfg):
    out = _out_dir(args)
    model = load_model(args.model)
    corpus = _read_corpus(args.corpus, cfg)
    pairs = load_pairs(args.pairs, corpus) if args.pairs else None
    report = eval_report(model, corpus, pairs, top_n=cfg.top_n, time_weights=cfg.time_weights)
    dump_json(report, out / "eval.json")
    cfgmod.write_resolved(cfg, out)


def cmd_anomalies(args, cfg):
    out = _out_dir(args)
    model = load_model(args.model)
    corpus = _read_corpus(args.corpus, cfg)
    n = cfg.top_n if args.n is None else args.n
    ranked = anomaly_rank(model, corpus, cfg.time_weights, detail=True)[:n]
    dump_json({"time_weights": cfg.time_weights, "anomalies": [e.as_dict() for e in ranked]},
              out / "anomalies.json")
    cfgmod.write_resolved(cfg, out)


def cmd_export_plots(args, cfg):
    out = _out_dir(args)
    model = load_model(args.model)
    res = cfg.resolution if args.resolution is None else args.resolution
    export_plot_data(model, res, out)
    cfgmod.write_resolved(cfg, out)


# --- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides the 'seed' key")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sthdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate the synthetic grid corpus")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="run the sampler on a corpus")
    s.add_argument("corpus", help="corpus CSV or raw trajectory CSV")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--progress-stdout", action="store_true",
                   help="write the progress log to stdout instead of progress.tsv")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="likelihood and pairwise scores")
    s.add_argument("model")
    s.add_argument("corpus")
    s.add_argument("--pairs", help="labelled pairs CSV (traj_a,traj_b,same)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("anomalies", parents=[common], help="least likely trajectories")
    s.add_argument("model")
    s.add_argument("corpus")
    s.add_argument("-n", type=int, help="number to report (default: top_n key)")
    s.set_defaults(func=cmd_anomalies)

    s = sub.add_parser("export-plots", parents=[common], help="per-topic time profile curves")
    s.add_argument("model")
    s.add_argument("--resolution", type=int, help="grid points per curve (default: resolution key)")
    s.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = cfgmod.load(args.config, args.set, args.seed)
        if getattr(args, "n", None) is not None and args.n < 1:
            raise cfgmod.ConfigError("-n must be >= 1")
        if getattr(args, "resolution", None) is not None and args.resolution < 2:
            raise cfgmod.ConfigError("--resolution must be >= 2")
    except cfgmod.ConfigError as exc:
        logger.error("configuration: %s", exc)
        return EXIT_CONFIG
    try:
        args.func(args, cfg)
    except NumericalError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERIC
    except (OSError, CorpusFormatError, ModelFormatError, json.JSONDecodeError) as exc:
        logger.error("input/output: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        logger.error("configuration: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
