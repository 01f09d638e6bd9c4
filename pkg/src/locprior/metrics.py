"""Square-box IoU and COCO-style mAP@[.5:.95] for one object per image."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .geometry import SquareBox

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


def box_iou(a: SquareBox, b: SquareBox) -> float:
    if a.size <= 0 or b.size <= 0:
        raise ParameterError("box sizes must be positive")
    iw = max(0.0, min(a.x1, b.x1) - max(a.x0, b.x0))
    ih = max(0.0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = iw * ih
    return min(1.0, inter / (a.size * a.size + b.size * b.size - inter))


@dataclass(frozen=True)
class EvalRecord:
    predicted: SquareBox
    confidence: float
    truth: SquareBox
    iou: float

    @classmethod
    def make(cls, predicted: SquareBox, confidence: float, truth: SquareBox) -> "EvalRecord":
        return cls(predicted, float(confidence), truth, box_iou(predicted, truth))

    def to_json(self) -> dict:
        return {"predicted": {"center": [self.predicted.u, self.predicted.v], "size": self.predicted.size},
                "confidence": self.confidence,
                "truth": {"center": [self.truth.u, self.truth.v], "size": self.truth.size},
                "iou": self.iou}


def average_precision(hits: Sequence[bool], confidences: Sequence[float], n_truth: int) -> float:
    """All-point interpolated AP of confidence-ranked detections (ties keep input order)."""
    if n_truth <= 0:
        raise ParameterError("need at least one ground-truth object")
    order = np.argsort(-np.asarray(confidences, dtype=np.float64), kind="stable")
    tp = np.asarray(hits, dtype=np.float64)[order]
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, len(tp) + 1)
    recall = ctp / n_truth
    # precision envelope, then sum over recall increments
    env = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * env))


def per_threshold_ap(records: Sequence[EvalRecord], thresholds=IOU_THRESHOLDS) -> list[float]:
    if not records:
        raise ParameterError("no records to evaluate")
    ious = np.array([r.iou for r in records])
    conf = [r.confidence for r in records]
    # strict tolerance guard so an IoU printed as 0.75 counts at threshold 0.75
    return [100.0 * average_precision(ious >= t - 1e-12, conf, len(records)) for t in thresholds]


def map_50_95(records: Sequence[EvalRecord]) -> float:
    """Mean AP over IoU thresholds 0.50:0.05:0.95, in percent."""
    return float(np.mean(per_threshold_ap(records)))
