import numpy as np
import pytest

import gazecnn.dataset as ds
from gazecnn.cnn import ArchConfig, dumps_model, init_params
from gazecnn.dataset import FoldPlan, Split
from gazecnn.errors import DivergenceError, GazeError
from gazecnn.train import CvReport, Hyper, Metrics, cross_validate, evaluate, history_csv, sgd_step, train

SMALL = ArchConfig(c1=2, c2=2)


def test_hyper_schedule():
    h = Hyper(epochs=15)
    assert h.decay_epoch == 10
    assert h.lr_at(9) == 0.01 and h.lr_at(10) == pytest.approx(0.001)
    assert Hyper(epochs=1).lr_at(0) == 0.01
    for bad in (dict(lr=0), dict(momentum=1.0), dict(batch=0), dict(epochs=-1)):
        with pytest.raises(ValueError):
            Hyper(**bad)


def test_sgd_step():
    p = {"w": np.array([1.0, 2.0])}
    g = {"w": np.array([0.5, -1.0])}
    v = {"w": np.zeros(2)}
    sgd_step(p, g, v, Hyper(lr=0.1, momentum=0.0))
    assert np.allclose(p["w"], [0.95, 2.1])
    p0 = p["w"].copy()
    sgd_step(p, {"w": np.zeros(2)}, {"w": np.zeros(2)}, Hyper())
    assert np.array_equal(p["w"], p0)

    # two steps, constant g, momentum 0.9: v1 = -lr g, v2 = -1.9 lr g
    p = {"w": np.array([3.0])}
    v = {"w": np.zeros(1)}
    h = Hyper(lr=0.05, momentum=0.9)
    for _ in range(2):
        sgd_step(p, {"w": np.array([2.0])}, v, h)
    assert abs(p["w"][0] - (3.0 - 0.05 * 2 - 1.9 * 0.05 * 2)) < 1e-7
    with pytest.raises(ValueError):
        sgd_step(p, {"w": np.zeros(2)}, v, h)


def test_metrics_identities(rng):
    y = rng.integers(0, 3, 200)
    m = Metrics.from_predictions(y, y)
    assert m.accuracy == 1.0 and np.array_equal(np.diag(np.diag(m.confusion)), m.confusion)
    pred = rng.integers(0, 3, 200)
    m = Metrics.from_predictions(y, pred)
    assert m.n == 200 and m.accuracy == np.trace(m.confusion) / 200
    assert m.confusion.sum(axis=1).tolist() == np.bincount(y, minlength=3).tolist()
    lines = m.confusion_csv().splitlines()
    assert lines[0] == "true\\pred,right,left,vague" and len(lines) == 4


def test_cv_report_mean():
    folds = [Metrics.from_predictions([0, 1], p) for p in ([0, 1], [0, 0], [1, 0])]
    r = CvReport(folds)
    assert r.accuracies == [1.0, 0.5, 0.0] and r.mean == pytest.approx(0.5)
    assert r.to_dict()["k"] == 3


def test_zero_epochs_is_identity(small_corpus):
    _, x, y, _ = small_corpus
    net = init_params(SMALL, 2)
    out, hist = train(net, x[:10], y[:10], Hyper(epochs=0))
    assert hist == [] and dumps_model(out) == dumps_model(net)


def test_empty_and_divergent(small_corpus):
    _, x, y, _ = small_corpus
    with pytest.raises(GazeError):
        train(init_params(SMALL), x[:0], y[:0], Hyper(epochs=1))
    with pytest.raises(GazeError):
        evaluate(init_params(SMALL), x[:0], y[:0])
    bad = init_params(SMALL)
    bad.params["fc2.b"][0] = np.inf
    with pytest.raises(DivergenceError, match="epoch 0"):
        with np.errstate(all="ignore"):
            train(bad, x[:64], y[:64], Hyper(epochs=2))


def test_overfit_tiny_set(small_corpus):
    _, x, y, _ = small_corpus
    xs, ys = x[:20], y[:20]
    net, hist = train(init_params(ArchConfig(), 0), xs, ys, Hyper(epochs=200, batch=10, seed=1))
    assert evaluate(net, xs, ys).accuracy == 1.0
    assert hist[-1]["loss"] < 0.05
    assert hist[-1]["loss"] <= max(r["loss"] for r in hist[-50:])


def test_training_is_deterministic(small_corpus):
    _, x, y, _ = small_corpus
    h = Hyper(epochs=2, batch=16, seed=5)
    a = train(init_params(SMALL, 5), x[:80], y[:80], h, val=(x[80:120], y[80:120]))
    b = train(init_params(SMALL, 5), x[:80], y[:80], h, val=(x[80:120], y[80:120]))
    assert a[1] == b[1] and dumps_model(a[0]) == dumps_model(b[0])
    assert history_csv(a[1]) == history_csv(b[1])
    assert history_csv(a[1]).splitlines()[0] == "epoch,loss,val_accuracy"


def test_untrained_net_is_chance(small_corpus):
    _, x, y, _ = small_corpus
    assert np.bincount(y).tolist() == [60, 60, 60]
    accs = [evaluate(init_params(ArchConfig(), s), x, y).accuracy for s in range(6)]
    assert abs(np.mean(accs) - 1 / 3) <= 0.05


def test_cross_validate_small(small_corpus):
    _, x, y, m = small_corpus
    h = Hyper(epochs=1, batch=32)
    r = cross_validate(x, y, m, 3, h, SMALL)
    assert len(r.folds) == 3 and sum(f.n for f in r.folds) == len(y)
    assert r.mean == pytest.approx(np.mean([f.accuracy for f in r.folds]))
    assert [len(s) for s in r.fold_subjects] == [2, 2, 2]
    again = cross_validate(x, y, m, 3, h, SMALL, threads=3)
    assert again.to_dict() == r.to_dict()


def test_leave_one_subject_out(small_corpus):
    _, x, y, m = small_corpus
    r = cross_validate(x, y, m, 6, Hyper(epochs=1, batch=64), SMALL)
    assert all(len(s) == 1 for s in r.fold_subjects)


def test_cross_validate_rejects_leaky_plan(small_corpus, monkeypatch):
    _, x, y, m = small_corpus
    n = len(y)
    leaky = FoldPlan((Split(tuple(range(0, n - 10)), tuple(range(n - 20, n))),) * 2, (("x",), ("y",)))
    monkeypatch.setattr(ds, "grouped_kfold", lambda *a, **k: leaky)
    with pytest.raises(GazeError, match="leakage"):
        cross_validate(x, y, m, 2, Hyper(epochs=1), SMALL)
