"""Task metrics and model evaluation.

NMSE normalizes the mean squared prediction error by the mean target
energy (plus a fixed epsilon guard).  Segmentation quality is pixel
accuracy plus mean IoU; a class absent from both the prediction and the
ground truth contributes an undefined 0/0 IoU and is excluded from the
mean, which keeps the metric in [0, 1].
"""

from __future__ import annotations

import numpy as np

from .datasets import stack_batch
from .models import ModelSpec, build_model, set_params
from .params import ParamVec

NMSE_EPS = 1e-12

_EVAL_CHUNK = 32


def nmse(pred: np.ndarray, target: np.ndarray) -> float:
    """Normalized MSE over a stack of samples (leading axis indexes samples)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    if pred.shape[0] == 0:
        raise ValueError("empty dataset")
    per_sample = tuple(range(1, pred.ndim))
    err = ((pred - target) ** 2).sum(axis=per_sample).mean()
    energy = (target**2).sum(axis=per_sample).mean()
    return float(err / (energy + NMSE_EPS))


def pixel_accuracy(pred_labels: np.ndarray, true_labels: np.ndarray) -> float:
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise ValueError("label map shapes differ")
    if pred_labels.size == 0:
        raise ValueError("empty dataset")
    return float(np.count_nonzero(pred_labels == true_labels)) / pred_labels.size


def mean_iou(pred_labels: np.ndarray, true_labels: np.ndarray, num_classes: int = 4) -> float:
    """Mean IoU over classes present in prediction or ground truth."""
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise ValueError("label map shapes differ")
    if pred_labels.size == 0:
        raise ValueError("empty dataset")
    ious = []
    for c in range(num_classes):
        in_pred = pred_labels == c
        in_true = true_labels == c
        union = np.count_nonzero(in_pred | in_true)
        if union == 0:
            continue  # class absent from both sides: 0/0, excluded
        inter = np.count_nonzero(in_pred & in_true)
        ious.append(inter / union)
    if not ious:
        raise ValueError("no class present in either label map")
    return float(np.mean(ious))


def _predict_chunks(net, samples: list) -> list[np.ndarray]:
    outs = []
    for start in range(0, len(samples), _EVAL_CHUNK):
        x, _ = stack_batch(samples[start : start + _EVAL_CHUNK])
        outs.append(net.forward(x))
    return outs


def eval_channel(spec: ModelSpec, pv: ParamVec, samples: list) -> float:
    """NMSE of the channel estimator over a dataset."""
    if not samples:
        raise ValueError("empty dataset")
    net = build_model(spec)
    set_params(net, pv)
    preds = np.concatenate(_predict_chunks(net, samples))
    _, targets = stack_batch(samples)
    return nmse(preds, targets)


def eval_radar(spec: ModelSpec, pv: ParamVec, samples: list) -> tuple[float, float]:
    """(pixel accuracy, mean IoU) of the segmenter over a dataset."""
    if not samples:
        raise ValueError("empty dataset")
    net = build_model(spec)
    set_params(net, pv)
    logits = np.concatenate(_predict_chunks(net, samples))
    pred_labels = logits.argmax(axis=-1)
    _, true_labels = stack_batch(samples)
    return (
        pixel_accuracy(pred_labels, true_labels),
        mean_iou(pred_labels, true_labels, spec.num_classes),
    )
