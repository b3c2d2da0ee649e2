import json
import subprocess
import sys

import numpy as np
import pytest

from sthdp.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from sthdp.corpus import Corpus, load_corpus, save_corpus
from sthdp.evaluation import save_pairs
from sthdp.model import load_model

SMALL = ["--set", "docs_per_phase=5", "--set", "words_per_doc=16"]
TRAIN = ["--set", "burn_in=4", "--set", "sm_period=2", "--set", "sm_phase_len=6",
         "--set", "total_iters=16", "--set", "checkpoint_period=8"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--seed", "1", *SMALL]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def trained(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", str(synth_dir / "corpus.csv"), "--out", str(out), "--seed", "3", *TRAIN]) == EXIT_OK
    return out


def test_synth_outputs_and_determinism(synth_dir, tmp_path):
    assert {p.name for p in synth_dir.iterdir()} == {"corpus.csv", "labels.csv", "config.resolved"}
    assert main(["synth", "--out", str(tmp_path), "--seed", "1", *SMALL]) == EXIT_OK
    assert (tmp_path / "corpus.csv").read_bytes() == (synth_dir / "corpus.csv").read_bytes()
    labels = np.loadtxt(synth_dir / "labels.csv", delimiter=",", skiprows=1, dtype=int)[:, 1]
    assert 1.8 <= (labels == 0).sum() / (labels == 1).sum() <= 2.2


def test_train_outputs(trained, synth_dir):
    names = {p.name for p in trained.iterdir()}
    assert {"model.sthdp", "model_best.sthdp", "progress.tsv", "checkpoints", "train_summary.json",
            "config.resolved"} <= names
    rows = (trained / "progress.tsv").read_text().splitlines()
    assert len(rows) == 17 and rows[0].startswith("iter\tK\tL")
    assert sorted(p.name for p in (trained / "checkpoints").iterdir()) == [
        "checkpoint_000008.npz", "checkpoint_000016.npz"]
    model = load_model(trained / "model.sthdp")
    assert model.K >= 1 and model.meta["seed"] == 3
    summary = json.loads((trained / "train_summary.json").read_text())
    assert summary["iterations"] == 16 and summary["K"] == model.K


def test_train_deterministic_and_resume(trained, synth_dir, tmp_path):
    corpus = str(synth_dir / "corpus.csv")
    again = tmp_path / "again"
    assert main(["train", corpus, "--out", str(again), "--seed", "3", *TRAIN]) == EXIT_OK
    assert (again / "model.sthdp").read_bytes() == (trained / "model.sthdp").read_bytes()
    res = tmp_path / "resume"
    ck = trained / "checkpoints" / "checkpoint_000008.npz"
    assert main(["train", corpus, "--out", str(res), "--seed", "3", "--resume", str(ck), *TRAIN]) == EXIT_OK
    assert (res / "model.sthdp").read_bytes() == (trained / "model.sthdp").read_bytes()
    assert (res / "progress.tsv").read_text() == (trained / "progress.tsv").read_text()


def test_train_holdout_and_time_unit(synth_dir, tmp_path):
    out = tmp_path / "ho"
    rc = main(["train", str(synth_dir / "corpus.csv"), "--out", str(out), *TRAIN,
               "--set", "holdout_fraction=0.1", "--set", "time_unit=10"])
    assert rc == EXIT_OK
    summary = json.loads((out / "train_summary.json").read_text())
    assert np.isfinite(summary["heldout_per_word_loglik"])
    model = load_model(out / "model.sthdp")
    corpus = load_corpus(synth_dir / "corpus.csv")
    assert model.time_unit == 10.0
    assert model.time_span[1] == pytest.approx(corpus.times.max(), rel=1e-3)


def test_train_from_raw_trajectories(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["traj_id,t,x,y"]
    for tid in range(12):
        x0, y0 = rng.uniform(50, 500, 2)
        for step in range(8):
            lines.append(f"{tid},{tid * 20 + step},{x0 + 30 * step:.1f},{y0:.1f}")
    raw = tmp_path / "raw.csv"
    raw.write_text("\n".join(lines) + "\n")
    out = tmp_path / "o"
    assert main(["train", str(raw), "--out", str(out), *TRAIN]) == EXIT_OK
    assert load_model(out / "model.sthdp").K >= 1


def test_eval_with_pairs_and_perturbation(trained, synth_dir, tmp_path):
    corpus = load_corpus(synth_dir / "corpus.csv")
    ids = sorted(corpus.trajectory_index())
    save_pairs([(ids[0], ids[1], True), (ids[0], ids[-1], False)], tmp_path / "pairs.csv")
    out = tmp_path / "ev"
    model = str(trained / "model.sthdp")
    assert main(["eval", model, str(synth_dir / "corpus.csv"), "--out", str(out),
                 "--pairs", str(tmp_path / "pairs.csv")]) == EXIT_OK
    rep = json.loads((out / "eval.json").read_text())
    assert {"per_word_loglik", "r_correct", "r_complete", "anomalies"} <= set(rep)
    shuffled = Corpus(corpus.words, np.random.default_rng(0).permutation(corpus.times), corpus.docs,
                      corpus.trajs, corpus.vocab_size)
    save_corpus(shuffled, tmp_path / "shuffled.csv")
    out2 = tmp_path / "ev2"
    assert main(["eval", model, str(tmp_path / "shuffled.csv"), "--out", str(out2)]) == EXIT_OK
    rep2 = json.loads((out2 / "eval.json").read_text())
    assert rep["per_word_loglik"] > rep2["per_word_loglik"]


def test_anomalies(trained, synth_dir, tmp_path):
    model, corpus = str(trained / "model.sthdp"), str(synth_dir / "corpus.csv")
    n_traj = len(load_corpus(corpus).trajectory_index())
    assert main(["anomalies", model, corpus, "--out", str(tmp_path), "-n", "100000"]) == EXIT_OK
    rep = json.loads((tmp_path / "anomalies.json").read_text())["anomalies"]
    assert len(rep) == n_traj
    scores = [e["score"] for e in rep]
    assert scores == sorted(scores)


def test_export_plots(trained, tmp_path):
    assert main(["export-plots", str(trained / "model.sthdp"), "--out", str(tmp_path),
                 "--resolution", "50"]) == EXIT_OK
    model = load_model(trained / "model.sthdp")
    csvs = sorted(tmp_path.glob("topic_*.csv"))
    assert len(csvs) == model.K
    assert all(len(p.read_text().splitlines()) == 51 for p in csvs)
    assert json.loads((tmp_path / "index.json").read_text())["resolution"] == 50


@pytest.mark.parametrize("argv", [
    ["synth", "--set", "bogus=1"],
    ["synth", "--set", "window=-5"],
    ["export-plots", "m", "--resolution", "1"],
])
def test_config_errors(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_io_errors(tmp_path, synth_dir):
    assert main(["eval", str(tmp_path / "missing"), str(synth_dir / "corpus.csv"),
                 "--out", str(tmp_path)]) == EXIT_IO
    junk = tmp_path / "junk.sthdp"
    junk.write_bytes(b"not a model")
    assert main(["export-plots", str(junk), "--out", str(tmp_path)]) == EXIT_IO
    bad = tmp_path / "bad.csv"
    bad.write_text("hello\n")
    assert main(["train", str(bad), "--out", str(tmp_path)]) == EXIT_IO


def test_numerical_failure_exit_code(synth_dir, tmp_path, monkeypatch):
    from sthdp import sampler
    monkeypatch.setattr(sampler, "per_word_loglik", lambda *a, **k: float("nan"))
    assert main(["train", str(synth_dir / "corpus.csv"), "--out", str(tmp_path), *TRAIN]) == EXIT_NUMERIC


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sthdp.cli", "synth", "--out", str(tmp_path), *SMALL],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "corpus.csv").exists()
