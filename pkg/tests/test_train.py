import numpy as np
import pytest

from tablere import train as train_mod
from tablere.embeddings import TableLookupProvider
from tablere.errors import NumericError, UsageError
from tablere.metrics import metrics_from_confusion
from tablere.models import build, load_model, preset
from tablere.synthetic import synthetic_samples
from tablere.train import (
    EmbeddedCorpus,
    SeedRun,
    TrainConfig,
    average_metrics,
    evaluate,
    fit,
    multi_seed,
    read_metrics_csv,
)

DIM = 8


def small_corpus(n_classes=5, per_class=8, seed=1):
    samples, labels, vocab = synthetic_samples(n_classes, per_class, seed)
    return EmbeddedCorpus(samples, TableLookupProvider(len(vocab), DIM, seed=0), n_classes, labels)


def small_model(corpus, seed=0, **kw):
    return build(preset("cnn_bilstm", embed_dim=DIM, classes=corpus.n_classes, **kw), seed)


def test_lr_zero_leaves_params_unchanged():
    corpus = small_corpus()
    model = small_model(corpus)
    before = [p.data.tobytes() for p in model.parameters()]
    fit(model, corpus, corpus.ids, epochs=1, lr=0.0)
    assert [p.data.tobytes() for p in model.parameters()] == before


def test_single_sample_memorised():
    corpus = small_corpus()
    one = EmbeddedCorpus(corpus.samples[:1], corpus.provider, corpus.n_classes)
    hist = fit(small_model(one), one, one.ids, epochs=200, lr=1e-3)
    assert hist.train_loss[-1] < 1e-2


def test_same_seed_same_loss_curve():
    corpus = small_corpus()
    curves = []
    for _ in range(2):
        hist = fit(small_model(corpus), corpus, corpus.ids, epochs=3, lr=1e-3, seed=4)
        curves.append(hist.train_loss)
    assert curves[0] == curves[1]


def test_full_batch_loss_non_increasing():
    corpus = small_corpus()
    model = small_model(corpus, dropout=0.0)
    hist = fit(model, corpus, corpus.ids, epochs=25, batch_size=len(corpus.ids), lr=1e-3)
    assert np.all(np.diff(hist.train_loss) <= 0)


def test_nan_loss_aborts_with_location():
    corpus = small_corpus()
    model = small_model(corpus)
    model.params["dense.bias"].data[:] = np.nan
    with pytest.raises(NumericError, match="epoch 0, batch 0"):
        fit(model, corpus, corpus.ids, epochs=2, lr=1e-3)


def test_empty_partitions():
    corpus = small_corpus()
    model = small_model(corpus)
    with pytest.raises(UsageError):
        evaluate(model, corpus, [])
    with pytest.raises(UsageError):
        fit(model, corpus, [], epochs=1)


def test_config_validation():
    with pytest.raises(UsageError):
        TrainConfig(epochs=0).validate()
    with pytest.raises(UsageError):
        TrainConfig(seeds=()).validate()


def _run(seed, acc):
    conf = np.array([[round(acc * 10), 0], [10 - round(acc * 10), 0]])
    return SeedRun(seed=seed, metrics=metrics_from_confusion(conf))


def test_average_two_seeds():
    assert average_metrics([_run(1, 0.9), _run(2, 1.0)])["accuracy"] == pytest.approx(0.95, abs=1e-12)


def test_average_identical_seeds():
    runs = [_run(s, 0.7) for s in range(3)]
    assert average_metrics(runs) == runs[0].metrics.summary()


def test_average_skips_failed():
    runs = [_run(1, 0.8), SeedRun(seed=2, status="failed")]
    assert average_metrics(runs)["accuracy"] == pytest.approx(0.8)


def test_multi_seed_artifacts(tmp_path):
    corpus = small_corpus()
    config = TrainConfig(preset="cnn-bilstm", epochs=1, seeds=(1, 2, 3, 4, 5), overrides={"embed_dim": DIM})
    report = multi_seed(config, corpus, tmp_path)
    assert sorted(p.name for p in (tmp_path / "models").iterdir()) == [f"seed_{s}.tbmd" for s in range(1, 6)]
    rows = read_metrics_csv(tmp_path / "metrics.csv")
    assert [r["seed"] for r in rows] == ["1", "2", "3", "4", "5", "mean"]
    for key in ("accuracy", "macro_f1", "micro_f1", "weighted_f1"):
        per_seed = [float(r[key]) for r in rows[:-1]]
        assert abs(float(rows[-1][key]) - float(np.mean(per_seed))) <= 1e-12
    for r in report.runs:
        assert r.metrics.micro_f1 == pytest.approx(r.metrics.accuracy, abs=1e-12)
    for name in ("confusion.csv", "confusion.pgm", "loss_curve.csv", "difficult_relations.csv"):
        assert (tmp_path / name).exists()


def test_multi_seed_marks_failures(tmp_path, monkeypatch):
    corpus = small_corpus()
    real = train_mod.train

    def flaky(config, corpus, seed):
        if seed == 2:
            raise NumericError("boom")
        return real(config, corpus, seed)

    monkeypatch.setattr(train_mod, "train", flaky)
    config = TrainConfig(epochs=1, seeds=(1, 2), overrides={"embed_dim": DIM})
    report = multi_seed(config, corpus, tmp_path)
    assert [r.status for r in report.runs] == ["ok", "failed"]
    assert report.failed[0].exit_code == 4
    assert report.mean["accuracy"] == report.runs[0].metrics.accuracy
    rows = read_metrics_csv(tmp_path / "metrics.csv")
    assert rows[1]["status"] == "failed" and rows[1]["accuracy"] == ""
    assert rows[2]["status"] == "1/2"
    assert not (tmp_path / "models" / "seed_2.tbmd").exists()


def test_reloaded_model_reproduces_metrics(tmp_path):
    corpus = small_corpus()
    config = TrainConfig(epochs=2, seeds=(3,), overrides={"embed_dim": DIM})
    report = multi_seed(config, corpus, tmp_path)
    run = report.runs[0]
    loaded = load_model(run.model_path)
    from tablere.dataset import split

    again = evaluate(loaded, corpus, split(corpus.ids, 3).test)
    assert again.summary() == run.metrics.summary()
    assert np.array_equal(again.confusion, run.metrics.confusion)
    assert loaded.meta["seed"] == 3
