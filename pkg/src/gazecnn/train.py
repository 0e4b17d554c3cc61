"""SGD training, evaluation metrics, and the two evaluation protocols
(stratified shuffle split and subject-grouped k-fold)."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cnn import ArchConfig, Network, init_params, loss_and_grads, predict
from .errors import DivergenceError, GazeError
from .preprocess import Gaze

log = logging.getLogger(__name__)

CLASS_NAMES = tuple(g.name.lower() for g in Gaze)


@dataclass(frozen=True)
class Hyper:
    lr: float = 0.01
    momentum: float = 0.9
    batch: int = 64
    epochs: int = 15
    lr_decay: float = 0.1
    seed: int = 42

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def decay_epoch(self) -> int:
        return (2 * self.epochs) // 3

    def lr_at(self, epoch: int) -> float:
        if self.decay_epoch > 0 and epoch >= self.decay_epoch:
            return self.lr * self.lr_decay
        return self.lr


@dataclass
class Metrics:
    confusion: np.ndarray  # rows = true label, cols = predicted

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes=3) -> "Metrics":
        cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(cm)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion)) / self.n

    def to_dict(self) -> dict:
        return {"n": self.n, "accuracy": self.accuracy, "confusion": self.confusion.tolist(),
                "classes": list(CLASS_NAMES)}

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred", *CLASS_NAMES])
        for name, row in zip(CLASS_NAMES, self.confusion):
            w.writerow([name, *(int(v) for v in row)])
        return buf.getvalue()


@dataclass
class CvReport:
    folds: list
    fold_subjects: list = field(default_factory=list)

    @property
    def accuracies(self) -> list:
        return [m.accuracy for m in self.folds]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    def to_dict(self) -> dict:
        return {"k": len(self.folds), "mean_accuracy": self.mean, "std_accuracy": self.std,
                "folds": [dict(m.to_dict(), test_subjects=s)
                          for m, s in zip(self.folds, self.fold_subjects or [[]] * len(self.folds))]}


def sgd_step(params: dict, grads: dict, velocity: dict, h: Hyper, lr: float | None = None):
    """Momentum SGD in place: ``v = momentum*v - lr*g; p = p + v``."""
    lr = h.lr if lr is None else lr
    for name, p in params.items():
        g = grads[name]
        v = velocity[name]
        if g.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"{name}: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        v *= h.momentum
        v -= lr * g
        p += v
    return params, velocity


def train(net: Network, x: np.ndarray, y: np.ndarray, h: Hyper, val=None):
    """Train a copy of ``net``; returns ``(network, history)``.

    ``x`` is an ``(N, 1, 72, 72)`` batch, ``y`` integer labels. ``val`` is an
    optional ``(x, y)`` pair scored after every epoch. History rows are
    dicts with ``epoch``, ``loss`` (sample-weighted mean) and
    ``val_accuracy`` (None without ``val``).
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) == 0:
        raise GazeError("training set is empty")
    net = net.copy()
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    rng = np.random.default_rng(h.seed)
    history = []
    for epoch in range(h.epochs):
        lr = h.lr_at(epoch)
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), h.batch):
            idx = order[start:start + h.batch]
            loss, grads = loss_and_grads(net, x[idx], y[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch starting {start}; "
                                      f"try a lower learning rate than {lr}")
            sgd_step(net.params, grads, velocity, h, lr=lr)
            total += loss * len(idx)
        row = {"epoch": epoch, "loss": total / len(x), "val_accuracy": None}
        if val is not None:
            row["val_accuracy"] = evaluate(net, *val).accuracy
        history.append(row)
        log.info("epoch %d lr=%g loss=%.4f val=%s", epoch, lr, row["loss"], row["val_accuracy"])
    return net, history


def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss", "val_accuracy"])
    for r in history:
        w.writerow([r["epoch"], repr(r["loss"]), "" if r["val_accuracy"] is None else repr(r["val_accuracy"])])
    return buf.getvalue()


def evaluate(net: Network, x, y, batch: int = 256) -> Metrics:
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) == 0:
        raise GazeError("evaluation set is empty")
    preds = np.concatenate([predict(net, x[i:i + batch]) for i in range(0, len(x), batch)])
    return Metrics.from_predictions(y, preds, net.arch.n_classes)


def shuffle_experiment(x, y, manifest, h: Hyper, arch: ArchConfig | None = None,
                       test_fraction: float = 0.2, stratify: bool = True):
    """Train on a seeded 80/20 split; returns ``(metrics, network, history)``."""
    from .dataset import split_shuffle

    split = split_shuffle(manifest, test_fraction, h.seed, stratify)
    tr, te = np.asarray(split.train), np.asarray(split.test)
    net0 = init_params(arch or ArchConfig(), h.seed)
    net, hist = train(net0, x[tr], y[tr], h)
    return evaluate(net, x[te], y[te]), net, hist


def cross_validate(x, y, manifest, k: int, h: Hyper, arch: ArchConfig | None = None,
                   threads: int = 1) -> CvReport:
    """Subject-grouped k-fold CV; every fold starts from a fresh init seeded
    with ``h.seed ^ fold``. Folds may run concurrently; results do not depend
    on ``threads``."""
    from .dataset import grouped_kfold

    arch = arch or ArchConfig()
    plan = grouped_kfold(manifest, k, h.seed)
    subjects = np.array([e.subject_id for e in manifest.entries])

    def run(i):
        split = plan.folds[i]
        tr, te = np.asarray(split.train), np.asarray(split.test)
        train_subj, test_subj = set(subjects[tr]), set(subjects[te])
        if train_subj & test_subj:
            raise GazeError(f"fold {i}: subject leakage {sorted(train_subj & test_subj)}")
        fh = Hyper(h.lr, h.momentum, h.batch, h.epochs, h.lr_decay, h.seed ^ i)
        net, _ = train(init_params(arch, fh.seed), x[tr], y[tr], fh)
        return evaluate(net, x[te], y[te]), sorted(test_subj)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(i) for i in range(k)]
    return CvReport([r[0] for r in results], [r[1] for r in results])


def dumps_report(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"
