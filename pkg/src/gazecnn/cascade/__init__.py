"""Viola-Jones style cascades: features, evaluation, scanning, training, I/O."""

from .boost import cascade_accepts, stage_scores, train_cascade, train_stage_adaboost
from .detect import (Detection, ScanParams, detect, group_detections, raw_detections,
                     scan_windows, window_sizes)
from .features import (HaarFeature, LbpFeature, eval_haar, eval_lbp, feature_matrix,
                       haar_pool, lbp_pool)
from .model import (CascadeModel, CascadeResult, EvalCounter, HaarStump, LbpWeak, Stage,
                    eval_cascade, load_cascade, loads_cascade, dumps_cascade, save_cascade)

__all__ = [
    "CascadeModel", "CascadeResult", "Detection", "EvalCounter", "HaarFeature", "HaarStump",
    "LbpFeature", "LbpWeak", "ScanParams", "Stage", "cascade_accepts", "detect", "dumps_cascade",
    "eval_cascade", "eval_haar", "eval_lbp", "feature_matrix", "group_detections", "haar_pool",
    "lbp_pool", "load_cascade", "loads_cascade", "raw_detections", "save_cascade", "scan_windows",
    "stage_scores", "train_cascade", "train_stage_adaboost", "window_sizes",
]
