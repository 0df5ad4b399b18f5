"""Detector evaluation: annotation parsing, IoU, greedy matching, AP/mAP,
precision/recall at a confidence threshold, and k-means anchor boxes.

Boxes are normalized center-format (cx, cy, w, h). Matching is greedy in
confidence order with one-to-one ground-truth assignment; AP uses all-point
interpolation; mAP50-95 averages IoU thresholds 0.50:0.05:0.95.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import DegenerateInput, ParseError

IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class GroundTruthBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class PredBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    conf: float


@dataclass(frozen=True)
class EvalReport:
    ap50: dict[int, float]  # per class present in ground truth
    ap50_95: dict[int, float]
    map50: float
    map50_95: float
    precision: float
    recall: float
    conf_thr: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class AnchorSet:
    centroids: list[tuple[float, float]]  # (w, h), normalized


def _parse_box_fields(parts: list[str], lineno: int, where: str) -> tuple[int, float, float, float, float]:
    try:
        class_id = int(parts[0])
        cx, cy, w, h = (float(v) for v in parts[1:5])
    except ValueError as exc:
        raise ParseError(f"{where}line {lineno}: non-numeric field ({exc})") from exc
    if class_id < 0:
        raise ParseError(f"{where}line {lineno}: negative class id {class_id}")
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise ParseError(f"{where}line {lineno}: center ({cx}, {cy}) outside [0,1]")
    if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
        raise ParseError(f"{where}line {lineno}: size ({w}, {h}) outside (0,1]")
    return class_id, cx, cy, w, h


def parse_label_file(text: str, filename: str | None = None) -> list[GroundTruthBox]:
    """One 'class cx cy w h' box per line; empty file -> empty list."""
    where = f"{filename}: " if filename else ""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ParseError(f"{where}line {lineno}: expected 5 fields, got {len(parts)}")
        boxes.append(GroundTruthBox(*_parse_box_fields(parts, lineno, where)))
    return boxes


def parse_pred_file(text: str, filename: str | None = None) -> list[PredBox]:
    """One 'class cx cy w h conf' prediction per line."""
    where = f"{filename}: " if filename else ""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(f"{where}line {lineno}: expected 6 fields, got {len(parts)}")
        class_id, cx, cy, w, h = _parse_box_fields(parts, lineno, where)
        try:
            conf = float(parts[5])
        except ValueError as exc:
            raise ParseError(f"{where}line {lineno}: non-numeric confidence") from exc
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"{where}line {lineno}: confidence {conf} outside [0,1]")
        boxes.append(PredBox(class_id, cx, cy, w, h, conf))
    return boxes


def iou(a, b) -> float:
    """Intersection over union of two center-format boxes."""
    ax0, ax1 = a.cx - a.w / 2, a.cx + a.w / 2
    ay0, ay1 = a.cy - a.h / 2, a.cy + a.h / 2
    bx0, bx1 = b.cx - b.w / 2, b.cx + b.w / 2
    by0, by1 = b.cy - b.h / 2, b.cy + b.h / 2
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    # areas from the same corner values so identical boxes give exactly 1.0
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def match_frame(
    preds: list[PredBox], gts: list[GroundTruthBox], iou_thr: float
) -> tuple[list[bool], list[bool]]:
    """Greedy one-to-one matching within a single class and frame.

    Predictions are visited by confidence descending (ties keep input order);
    each takes the unmatched GT with the highest IoU >= iou_thr (IoU ties to
    the lowest GT index). Returns (per-prediction TP flags in input order,
    per-GT matched flags).
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].conf, i))
    tp_flags = [False] * len(preds)
    gt_matched = [False] * len(gts)
    for i in order:
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gts):
            if gt_matched[j]:
                continue
            v = iou(preds[i], gt)
            if v >= iou_thr and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            gt_matched[best_j] = True
            tp_flags[i] = True
    return tp_flags, gt_matched


def average_precision(tp_flags: list[bool], total_gt: int) -> float:
    """All-point interpolated AP from confidence-ordered TP/FP flags.

    No ground truth: 1.0 with no predictions, else 0.0.
    """
    if total_gt == 0:
        return 1.0 if not tp_flags else 0.0
    precisions = []
    recalls = []
    tp = fp = 0
    for flag in tp_flags:
        if flag:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / total_gt)
    # interpolate precision as the running max from the right
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for p, r in zip(precisions, recalls):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return ap


def _read_dir(directory) -> dict[str, str]:
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(".txt"):
            with open(os.path.join(directory, name), "r", encoding="utf-8") as fh:
                out[name[:-4]] = fh.read()
    return out


def load_ground_truth_dir(gt_dir) -> dict[str, list[GroundTruthBox]]:
    return {
        stem: parse_label_file(text, filename=f"{stem}.txt")
        for stem, text in _read_dir(gt_dir).items()
    }


def load_predictions_dir(pred_dir) -> dict[str, list[PredBox]]:
    return {
        stem: parse_pred_file(text, filename=f"{stem}.txt")
        for stem, text in _read_dir(pred_dir).items()
    }


def evaluate_boxes(
    gts_by_frame: dict[str, list[GroundTruthBox]],
    preds_by_frame: dict[str, list[PredBox]],
    conf_thr: float = 0.25,
) -> EvalReport:
    """Metrics over already-parsed per-frame boxes (frames = GT keys)."""
    frames = sorted(gts_by_frame)
    classes = sorted({gt.class_id for boxes in gts_by_frame.values() for gt in boxes})

    ap_by_class_thr: dict[int, dict[float, float]] = {}
    for cls in classes:
        total_gt = sum(
            1 for f in frames for gt in gts_by_frame[f] if gt.class_id == cls
        )
        ap_by_class_thr[cls] = {}
        for thr in IOU_THRESHOLDS:
            # pool per-frame flags, then order globally by confidence
            # (ties: frame-name order, then within-frame confidence order)
            scored: list[tuple[float, int, bool]] = []
            counter = 0
            for f in frames:
                preds = [p for p in preds_by_frame.get(f, []) if p.class_id == cls]
                gts = [g for g in gts_by_frame[f] if g.class_id == cls]
                order = sorted(range(len(preds)), key=lambda i: (-preds[i].conf, i))
                flags, _ = match_frame(preds, gts, thr)
                for i in order:
                    scored.append((preds[i].conf, counter, flags[i]))
                    counter += 1
            scored.sort(key=lambda t: (-t[0], t[1]))
            ap_by_class_thr[cls][thr] = average_precision(
                [flag for _, _, flag in scored], total_gt
            )

    ap50 = {cls: ap_by_class_thr[cls][0.5] for cls in classes}
    ap50_95 = {
        cls: sum(ap_by_class_thr[cls][t] for t in IOU_THRESHOLDS) / len(IOU_THRESHOLDS)
        for cls in classes
    }
    map50 = sum(ap50.values()) / len(ap50) if ap50 else 0.0
    map50_95 = sum(ap50_95.values()) / len(ap50_95) if ap50_95 else 0.0

    # precision/recall at conf >= conf_thr, IoU 0.50; predictions of classes
    # absent from GT count as false positives
    tp = fp = fn = 0
    for f in frames:
        all_preds = [p for p in preds_by_frame.get(f, []) if p.conf >= conf_thr]
        pred_classes = sorted({p.class_id for p in all_preds})
        gt_classes = sorted({g.class_id for g in gts_by_frame[f]})
        for cls in sorted(set(pred_classes) | set(gt_classes)):
            preds = [p for p in all_preds if p.class_id == cls]
            gts = [g for g in gts_by_frame[f] if g.class_id == cls]
            flags, gt_matched = match_frame(preds, gts, 0.5)
            tp += sum(flags)
            fp += len(flags) - sum(flags)
            fn += len(gt_matched) - sum(gt_matched)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0

    return EvalReport(
        ap50=ap50,
        ap50_95=ap50_95,
        map50=map50,
        map50_95=map50_95,
        precision=precision,
        recall=recall,
        conf_thr=conf_thr,
        tp=tp,
        fp=fp,
        fn=fn,
    )


def evaluate(gt_dir, pred_dir, conf_thr: float = 0.25) -> EvalReport:
    """Pair GT and prediction files by stem; a missing prediction file means
    zero predictions for that frame."""
    gts = load_ground_truth_dir(gt_dir)
    preds = load_predictions_dir(pred_dir)
    return evaluate_boxes(gts, {k: v for k, v in preds.items() if k in gts}, conf_thr)


def format_report(report: EvalReport) -> str:
    lines = [
        f"mAP50      {report.map50:.6f}",
        f"mAP50-95   {report.map50_95:.6f}",
        f"precision  {report.precision:.6f}   (conf >= {report.conf_thr:g}, IoU 0.50)",
        f"recall     {report.recall:.6f}",
        f"TP/FP/FN   {report.tp}/{report.fp}/{report.fn}",
    ]
    for cls in sorted(report.ap50):
        lines.append(
            f"class {cls}: AP50 {report.ap50[cls]:.6f}  AP50-95 {report.ap50_95[cls]:.6f}"
        )
    return "\n".join(lines)


def write_report(report: EvalReport, path) -> None:
    """Structured key=value report file."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"map50={report.map50:.6f}\n")
        fh.write(f"map50_95={report.map50_95:.6f}\n")
        fh.write(f"precision={report.precision:.6f}\n")
        fh.write(f"recall={report.recall:.6f}\n")
        fh.write(f"conf_thr={report.conf_thr:g}\n")
        fh.write(f"tp={report.tp}\nfp={report.fp}\nfn={report.fn}\n")
        for cls in sorted(report.ap50):
            fh.write(f"ap50.{cls}={report.ap50[cls]:.6f}\n")
            fh.write(f"ap50_95.{cls}={report.ap50_95[cls]:.6f}\n")


# -- anchors ----------------------------------------------------------------


def _pair_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """IoU of two boxes co-centered at the origin."""
    inter = min(a[0], b[0]) * min(a[1], b[1])
    union = a[0] * a[1] + b[0] * b[1] - inter
    return inter / union if union > 0 else 0.0


def anchor_kmeans(
    boxes: list[tuple[float, float]],
    k: int,
    max_iters: int = 100,
    distance_trace: list[float] | None = None,
) -> AnchorSet:
    """k-means on (w, h) pairs with 1 - IoU distance.

    Deterministic init: boxes sorted by area, centroids at the k bucket
    centers idx_j = floor((2j+1)*N / 2k). Centroid update is the member
    mean; an emptied cluster keeps its previous centroid. When given,
    distance_trace records the total within-cluster distance per iteration.
    """
    if k < 1:
        raise DegenerateInput(f"k must be >= 1, got {k}")
    distinct = len(set(boxes))
    if k > distinct:
        raise DegenerateInput(f"k={k} exceeds {distinct} distinct boxes")

    by_area = sorted(boxes, key=lambda b: (b[0] * b[1], b))
    n = len(by_area)
    centroids = [by_area[((2 * j + 1) * n) // (2 * k)] for j in range(k)]

    assign = [-1] * n
    for _ in range(max_iters):
        dists_per_box = []
        new_assign = []
        for box in by_area:
            dists = [1.0 - _pair_iou(box, c) for c in centroids]
            best = min(dists)
            dists_per_box.append(best)
            new_assign.append(dists.index(best))
        if distance_trace is not None:
            distance_trace.append(sum(dists_per_box))
        if new_assign == assign:
            break
        assign = new_assign
        for j in range(k):
            members = [by_area[i] for i in range(n) if assign[i] == j]
            if members:
                centroids[j] = (
                    sum(m[0] for m in members) / len(members),
                    sum(m[1] for m in members) / len(members),
                )
    return AnchorSet(centroids=centroids)
