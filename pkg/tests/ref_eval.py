"""Independent brute-force detection-metric evaluator.

Same protocol as the package (greedy confidence-ordered one-to-one matching,
all-point interpolated AP, macro means over GT classes), written from the
definitions with plain loops and corner-format boxes so the two
implementations share no code.
"""


def corners(box):
    cx, cy, w, h = box["cx"], box["cy"], box["w"], box["h"]
    return (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def box_iou(a, b):
    ax0, ay0, ax1, ay1 = corners(a)
    bx0, by0, bx1, by1 = corners(b)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    denom = area_a + area_b - inter
    return inter / denom if denom > 0 else 0.0


def greedy_flags(preds, gts, thr):
    """preds/gts: lists of dicts of one class in one frame. Flags per pred,
    in input order."""
    visit = sorted(range(len(preds)), key=lambda i: (-preds[i]["conf"], i))
    taken = [False] * len(gts)
    flags = [False] * len(preds)
    for i in visit:
        best, best_j = 0.0, -1
        for j in range(len(gts)):
            if taken[j]:
                continue
            v = box_iou(preds[i], gts[j])
            if v >= thr and v > best:
                best, best_j = v, j
        if best_j != -1:
            taken[best_j] = True
            flags[i] = True
    return flags, taken


def ap_from_flags(flags_in_conf_order, n_gt):
    if n_gt == 0:
        return 1.0 if len(flags_in_conf_order) == 0 else 0.0
    pr = []
    tp = 0
    for rank, flag in enumerate(flags_in_conf_order, start=1):
        if flag:
            tp += 1
        pr.append((tp / n_gt, tp / rank))
    best_to_right = 0.0
    interp = [0.0] * len(pr)
    for i in range(len(pr) - 1, -1, -1):
        best_to_right = max(best_to_right, pr[i][1])
        interp[i] = best_to_right
    area = 0.0
    last_r = 0.0
    for i, (r, _) in enumerate(pr):
        if r > last_r:
            area += (r - last_r) * interp[i]
            last_r = r
    return area


def reference_evaluate(gts_by_frame, preds_by_frame, conf_thr):
    """gts_by_frame: {frame: [ {class_id, cx, cy, w, h} ]};
    preds additionally carry conf. Returns a plain dict of metrics."""
    frames = sorted(gts_by_frame.keys())
    classes = sorted({g["class_id"] for f in frames for g in gts_by_frame[f]})
    thresholds = [0.50 + 0.05 * i for i in range(10)]

    ap50 = {}
    ap5095 = {}
    for cls in classes:
        n_gt = 0
        for f in frames:
            for g in gts_by_frame[f]:
                if g["class_id"] == cls:
                    n_gt += 1
        per_thr = []
        for thr in thresholds:
            pool = []  # (conf, tiebreak, flag)
            tiebreak = 0
            for f in frames:
                preds = [p for p in preds_by_frame.get(f, []) if p["class_id"] == cls]
                gts = [g for g in gts_by_frame[f] if g["class_id"] == cls]
                flags, _ = greedy_flags(preds, gts, thr)
                visit = sorted(range(len(preds)), key=lambda i: (-preds[i]["conf"], i))
                for i in visit:
                    pool.append((preds[i]["conf"], tiebreak, flags[i]))
                    tiebreak += 1
            pool.sort(key=lambda t: (-t[0], t[1]))
            per_thr.append(ap_from_flags([t[2] for t in pool], n_gt))
        ap50[cls] = per_thr[0]
        ap5095[cls] = sum(per_thr) / len(per_thr)

    tp = fp = fn = 0
    for f in frames:
        keep = [p for p in preds_by_frame.get(f, []) if p["conf"] >= conf_thr]
        cls_ids = sorted(
            {p["class_id"] for p in keep} | {g["class_id"] for g in gts_by_frame[f]}
        )
        for cls in cls_ids:
            preds = [p for p in keep if p["class_id"] == cls]
            gts = [g for g in gts_by_frame[f] if g["class_id"] == cls]
            flags, taken = greedy_flags(preds, gts, 0.5)
            for flag in flags:
                if flag:
                    tp += 1
                else:
                    fp += 1
            for t in taken:
                if not t:
                    fn += 1

    return {
        "ap50": ap50,
        "ap50_95": ap5095,
        "map50": sum(ap50.values()) / len(ap50) if ap50 else 0.0,
        "map50_95": sum(ap5095.values()) / len(ap5095) if ap5095 else 0.0,
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "tp": tp,
        "fp": fp,
        "fn": fn,
    }
