#!/usr/bin/env python3
"""Regenerate the committed mini corpus under tests/data/mini_corpus.

10 dashcam-style 64x48 frames, 6 detections (4 signs of class 0, 2 road-damage
boxes of class 1), one GPS track, and labels for the sign crops. Box sizes are
chosen so the pixel rect arithmetic (margin 0.10) lands on hand-checkable
integers; see tests/test_pipeline.py for the expected rects.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from roadsight.imaging import ImageRGB8, write_ppm  # noqa: E402

ROOT = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "mini_corpus")

# (frame index, class, cx, cy, w, h, conf, damaged-looking?)
DETECTIONS = [
    (0, 0, "0.5", "0.5", "0.3125", "0.625", "0.90", True),
    (1, 0, "0.25", "0.5", "0.3125", "0.625", "0.85", False),
    (3, 0, "0.75", "0.5", "0.3125", "0.625", "0.80", True),
    (5, 0, "0.5", "0.25", "0.3125", "0.625", "0.75", False),
    (2, 1, "0.5", "0.5", "0.625", "0.5", "0.60", False),
    (7, 1, "0.25", "0.75", "0.3125", "0.5", "0.55", False),
]

# labels for the four sign crops, keyed by frame index
SIGN_LABELS = {0: "damaged", 1: "undamaged", 3: "damaged", 5: "undamaged"}


def paint_frame(rng, idx):
    arr = rng.integers(90, 130, size=(48, 64, 3)).astype(np.int64)  # asphalt-ish
    for det in DETECTIONS:
        if det[0] != idx:
            continue
        _, cls, cx, cy, w, h, _, damaged = det
        x0 = int(float(cx) * 64 - float(w) * 64 / 2)
        y0 = int(float(cy) * 48 - float(h) * 48 / 2)
        x1 = x0 + int(float(w) * 64)
        y1 = y0 + int(float(h) * 48)
        x0, y0 = max(0, x0), max(0, y0)
        x1, y1 = min(64, x1), min(48, y1)
        if cls == 0:
            arr[y0:y1, x0:x1] = (200, 60, 60)  # sign plate
            if damaged:
                px = (x0 + x1) // 2
                py = (y0 + y1) // 2
                arr[py - 4 : py + 4, px - 4 : px + 4] = (20, 20, 20)
        else:
            arr[y0:y1, x0:x1] = (50, 45, 45)  # crack patch
    return ImageRGB8.from_array(np.clip(arr, 0, 255).astype(np.uint8))


def main():
    frames_dir = os.path.join(ROOT, "frames")
    preds_dir = os.path.join(ROOT, "preds")
    os.makedirs(frames_dir, exist_ok=True)
    os.makedirs(preds_dir, exist_ok=True)

    rng = np.random.default_rng(20240601)
    manifest_lines = ["frame,timestamp_ms"]
    for i in range(10):
        name = f"frame_{i:02d}.ppm"
        write_ppm(os.path.join(frames_dir, name), paint_frame(rng, i))
        manifest_lines.append(f"frames/{name},{i * 1000}")
    with open(os.path.join(ROOT, "frames.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(manifest_lines) + "\n")

    by_frame = {}
    for idx, cls, cx, cy, w, h, conf, _ in DETECTIONS:
        by_frame.setdefault(idx, []).append(f"{cls} {cx} {cy} {w} {h} {conf}")
    for idx, lines in by_frame.items():
        with open(os.path.join(preds_dir, f"frame_{idx:02d}.txt"), "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    with open(os.path.join(ROOT, "gps.csv"), "w", newline="\n") as fh:
        fh.write("timestamp_ms,lat,lon\n")
        fh.write("0,41.56,14.66\n")
        fh.write("4000,41.561,14.662\n")
        fh.write("9000,41.5615,14.6625\n")

    # labels reference crop ids, which are content hashes; recompute them the
    # same way the extractor does
    from roadsight.detections import PredBox
    from roadsight.pipeline import box_to_rect, crop_id_for

    label_lines = ["crop_id,label,annotator,labeled_at_ms"]
    t = 100
    for idx, cls, cx, cy, w, h, conf, _ in DETECTIONS:
        if cls != 0:
            continue
        box = PredBox(cls, float(cx), float(cy), float(w), float(h), float(conf))
        rect = box_to_rect(box, 64, 48, 0.10)
        cid = crop_id_for(f"frame_{idx:02d}", cls, rect)
        label_lines.append(f"{cid},{SIGN_LABELS[idx]},fixture,{t}")
        t += 100
    with open(os.path.join(ROOT, "labels.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(label_lines) + "\n")

    print(f"mini corpus written to {ROOT}")


if __name__ == "__main__":
    main()
