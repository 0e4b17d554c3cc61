"""Discrete AdaBoost stage training and bootstrapped cascade training."""

from __future__ import annotations

import logging
import math

import numpy as np

from ..errors import StageTrainingFailed
from .features import HaarFeature, feature_matrix
from .model import CascadeModel, HaarStump, LbpWeak, Stage

log = logging.getLogger(__name__)

_EPS = 1e-12


def _best_stump(order, sorted_vals, is_pos_sorted, w):
    """Minimum weighted-error stump across all features.

    ``order`` / ``sorted_vals`` / ``is_pos_sorted`` are ``(F, N)`` per-feature
    ascending sorts. Returns ``(err, feature_index, threshold, polarity)``
    where polarity +1 means "positive iff value >= threshold".
    """
    F, N = order.shape
    ws = w[order]
    wp = np.where(is_pos_sorted, ws, 0.0)
    wn = ws - wp
    zeros = np.zeros((F, 1))
    # weight strictly below split position i (i = 0..N)
    pb = np.concatenate([zeros, np.cumsum(wp, axis=1)], axis=1)
    nb = np.concatenate([zeros, np.cumsum(wn, axis=1)], axis=1)
    ptot, ntot = pb[:, -1:], nb[:, -1:]
    err_up = pb + (ntot - nb)      # predict positive above the split
    err_down = nb + (ptot - pb)    # predict positive below the split
    valid = np.ones((F, N + 1), dtype=bool)
    valid[:, 1:N] = sorted_vals[:, 1:] > sorted_vals[:, :-1]
    err_up = np.where(valid, err_up, np.inf)
    err_down = np.where(valid, err_down, np.inf)
    iu = np.argmin(err_up)
    idn = np.argmin(err_down)
    if err_up.flat[iu] <= err_down.flat[idn]:
        flat_i, pol, err = iu, 1, err_up.flat[iu]
    else:
        flat_i, pol, err = idn, -1, err_down.flat[idn]
    f, i = divmod(int(flat_i), N + 1)
    v = sorted_vals[f]
    if i == 0:
        thr = v[0] - 1.0
    elif i == N:
        thr = v[-1] + 1.0
    else:
        thr = 0.5 * (v[i - 1] + v[i])
        if not v[i - 1] < thr <= v[i]:
            thr = v[i]
    return float(err), f, float(thr), pol


def _best_lbp(flat_idx, codes_shape, y, w):
    F = codes_shape[0]
    wp = np.where(y, w, 0.0)
    wn = w - wp
    hp = np.bincount(flat_idx, weights=np.tile(wp, F), minlength=F * 256).reshape(F, 256)
    hn = np.bincount(flat_idx, weights=np.tile(wn, F), minlength=F * 256).reshape(F, 256)
    err = np.minimum(hp, hn).sum(axis=1)
    f = int(np.argmin(err))
    return float(err[f]), f, hp[f] > hn[f]


def _stage_threshold(pos_scores, min_tpr):
    desc = np.sort(pos_scores)[::-1]
    k = max(1, math.ceil(min_tpr * len(desc) - 1e-9))
    return float(desc[k - 1])


def train_stage_adaboost(pos, neg, pool, target=(0.995, 0.5), max_weak=100,
                         history: list | None = None, max_features=None, seed=0) -> Stage:
    """Boost weak classifiers until the stage meets ``target`` on the pool.

    Parameters
    ----------
    pos, neg : sequences of base-window integral images
    pool : list of HaarFeature or LbpFeature
    target : (min_tpr, max_fpr)
        The stage threshold is set as high as possible while keeping TPR >=
        min_tpr; training stops once FPR <= max_fpr at that threshold.
    max_weak : int
        Weak-classifier budget; exceeding it raises StageTrainingFailed.
    history : list, optional
        Receives one dict per round with ``weight_sum``, ``exp_loss``,
        ``train_error``, ``tpr``, ``fpr``.
    max_features : int, optional
        Random subset of ``pool`` (seeded) used for this stage.
    """
    if len(pos) == 0 or len(neg) == 0:
        raise StageTrainingFailed("stage training needs positive and negative samples")
    min_tpr, max_fpr = target
    pool = list(pool)
    if max_features is not None and len(pool) > max_features:
        pick = np.sort(np.random.default_rng(seed).choice(len(pool), max_features, replace=False))
        pool = [pool[i] for i in pick]
    iis = np.concatenate([np.asarray(pos), np.asarray(neg)])
    n_pos = len(pos)
    y = np.zeros(len(iis), dtype=bool)
    y[:n_pos] = True
    ysign = np.where(y, 1.0, -1.0)
    vals = feature_matrix(iis, pool)
    haar = isinstance(pool[0], HaarFeature)

    if haar:
        order = np.argsort(vals, axis=1, kind="stable")
        sorted_vals = np.take_along_axis(vals, order, axis=1)
        is_pos_sorted = y[order]
    else:
        F, N = vals.shape
        flat_idx = (np.arange(F, dtype=np.int64)[:, None] * 256 + vals).ravel()

    w0 = np.where(y, 0.5 / n_pos, 0.5 / (len(iis) - n_pos))
    w = w0.copy()
    scores = np.zeros(len(iis))
    weak = []
    while len(weak) < max_weak:
        if haar:
            err, f, thr, pol = _best_stump(order, sorted_vals, is_pos_sorted, w)
            h = np.where(vals[f] >= thr, 1.0, -1.0) * pol
        else:
            err, f, member = _best_lbp(flat_idx, vals.shape, y, w)
            h = np.where(member[vals[f]], 1.0, -1.0)
        if err >= 0.5 - 1e-12:
            raise StageTrainingFailed(
                f"no weak classifier beats chance (weighted error {err:.6f}) after {len(weak)} rounds")
        e = min(max(err, _EPS), 1.0 - _EPS)
        alpha = 0.5 * math.log((1.0 - e) / e)
        if haar:
            left, right = (-alpha, alpha) if pol == 1 else (alpha, -alpha)
            weak.append(HaarStump(pool[f], thr, left, right))
        else:
            weak.append(LbpWeak(pool[f], LbpWeak.mask_from_bools(member), alpha, -alpha))
        scores = scores + alpha * h
        w = w * np.exp(-alpha * ysign * h)
        w = w / w.sum()

        thr_stage = _stage_threshold(scores[:n_pos], min_tpr)
        tpr = float(np.mean(scores[:n_pos] >= thr_stage))
        fpr = float(np.mean(scores[n_pos:] >= thr_stage))
        if history is not None:
            history.append({
                "weight_sum": float(w.sum()),
                "exp_loss": float(np.sum(w0 * np.exp(-ysign * scores))),
                "train_error": float(np.mean((scores >= 0) != y)),
                "tpr": tpr, "fpr": fpr,
            })
        log.debug("round %d: err=%.4f tpr=%.4f fpr=%.4f", len(weak), err, tpr, fpr)
        if tpr >= min_tpr and fpr <= max_fpr:
            return Stage(tuple(weak), thr_stage)
    raise StageTrainingFailed(
        f"stage did not reach TPR>={min_tpr} with FPR<={max_fpr} within {max_weak} weak classifiers")


def stage_scores(stage: Stage, iis) -> np.ndarray:
    """Vote sums of ``stage`` on a stack of base-window integrals."""
    from .detect import _stage_votes

    iis = np.asarray(iis)
    n, hh, ww = iis.shape
    flat = iis.astype(np.int64).reshape(-1)
    base = np.arange(n, dtype=np.int64) * (hh * ww)
    return _stage_votes(flat, base, ww, stage, ww - 1, hh - 1)


def cascade_accepts(model: CascadeModel, iis) -> np.ndarray:
    iis = np.asarray(iis)
    keep = np.ones(len(iis), dtype=bool)
    for stage in model.stages:
        idx = np.nonzero(keep)[0]
        if idx.size == 0:
            break
        keep[idx] = ~(stage_scores(stage, iis[idx]) < stage.threshold)
    return keep


def train_cascade(kind, base_window, pos, mine_negatives, pool, n_stages=10,
                  stage_target=(0.995, 0.5), max_weak=60, n_neg=2000,
                  min_neg=50, max_features=None, seed=0, on_stage=None) -> CascadeModel:
    """Bootstrapped cascade training.

    ``mine_negatives(model, n, stage_index)`` must return up to ``n``
    base-window negative integrals that ``model`` currently accepts. Training
    stops early when fewer than ``min_neg`` hard negatives can be found.
    """
    model = CascadeModel(kind, base_window, ())
    pos = np.asarray(pos)
    for si in range(n_stages):
        live_pos = pos[cascade_accepts(model, pos)]
        neg = mine_negatives(model, n_neg, si)
        if len(neg) < min_neg:
            log.info("stage %d: only %d hard negatives left; stopping", si, len(neg))
            break
        stage = train_stage_adaboost(live_pos, neg, pool, stage_target, max_weak,
                                     max_features=max_features, seed=seed + si)
        model = model.with_stage(stage)
        log.info("stage %d: %d weak, %d pos, %d neg", si, len(stage.weak), len(live_pos), len(neg))
        if on_stage is not None:
            on_stage(si, model)
    return model
