"""Workflow orchestration: frames + detections -> crops -> labeled dataset ->
geolocated anomaly records and summary reports.

File formats (all UTF-8, bit-exact):
  frame manifest CSV   header `frame,timestamp_ms`; frame paths resolve
                       relative to the manifest's directory
  crop manifest CSV    header `crop_id,frame,class_id,conf,x0,y0,x1,y1,timestamp_ms`
  labels CSV           header `crop_id,label,annotator,labeled_at_ms`
  GPS track CSV        header `timestamp_ms,lat,lon`, strictly increasing time
  anomalies CSV        header `id,kind,class_id,confidence,frame,cx,cy,w,h,
                       lat,lon,timestamp_ms`; empty lat/lon when not geotagged
Floats are written with 6 decimals so outputs are byte-stable.
"""

from __future__ import annotations

import bisect
import hashlib
import math
import os
from dataclasses import dataclass

from .classifier import LabeledCropSet
from .detections import PredBox, load_predictions_dir
from .errors import EmptyRect, ParseError
from .imaging import PixelRect, clip_rect, crop, read_ppm, write_ppm

FRAME_MANIFEST_HEADER = "frame,timestamp_ms"
CROP_MANIFEST_HEADER = "crop_id,frame,class_id,conf,x0,y0,x1,y1,timestamp_ms"
LABELS_HEADER = "crop_id,label,annotator,labeled_at_ms"
GPS_HEADER = "timestamp_ms,lat,lon"
ANOMALIES_HEADER = "id,kind,class_id,confidence,frame,cx,cy,w,h,lat,lon,timestamp_ms"

KIND_ROAD_DAMAGE = "road_damage"
KIND_DAMAGED_SIGN = "damaged_sign"


@dataclass(frozen=True)
class FrameEntry:
    frame: str  # path as written in the manifest
    timestamp_ms: int

    @property
    def stem(self) -> str:
        name = os.path.basename(self.frame)
        return name.rsplit(".", 1)[0] if "." in name else name


@dataclass(frozen=True)
class CropRecord:
    crop_id: str
    frame: str  # frame stem
    class_id: int
    conf: float
    rect: PixelRect
    timestamp_ms: int


@dataclass(frozen=True)
class GpsTrack:
    points: list[tuple[int, float, float]]  # (timestamp_ms, lat, lon)


@dataclass(frozen=True)
class AnomalyRecord:
    id: str
    kind: str  # road_damage | damaged_sign
    class_id: int
    confidence: float  # detector conf for damage, classifier prob for signs
    frame: str
    cx: float
    cy: float
    w: float
    h: float
    lat: float | None
    lon: float | None
    timestamp_ms: int


def _round_half_away(v: float) -> int:
    return int(math.floor(v + 0.5)) if v >= 0 else int(math.ceil(v - 0.5))


def _hash16(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def crop_id_for(frame_stem: str, class_id: int, rect: PixelRect) -> str:
    """Stable id: pure function of (frame name, rect, class)."""
    return _hash16(f"{frame_stem}|{class_id}|{rect.x0},{rect.y0},{rect.x1},{rect.y1}")


def box_to_rect(
    box: PredBox, width: int, height: int, margin_frac: float
) -> PixelRect:
    """Normalized center box -> pixel rect, each side padded by
    margin_frac * side length, rounded half away from zero, clipped."""
    if margin_frac < 0:
        raise ValueError(f"margin_frac must be >= 0, got {margin_frac}")
    bw = box.w * width
    bh = box.h * height
    pad_x = margin_frac * bw
    pad_y = margin_frac * bh
    raw = PixelRect(
        _round_half_away(box.cx * width - bw / 2 - pad_x),
        _round_half_away(box.cy * height - bh / 2 - pad_y),
        _round_half_away(box.cx * width + bw / 2 + pad_x),
        _round_half_away(box.cy * height + bh / 2 + pad_y),
    )
    return clip_rect(raw, width, height)


# -- frame manifest ------------------------------------------------------------


def read_frame_manifest(path) -> list[FrameEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FRAME_MANIFEST_HEADER:
        raise ParseError(f"{path}: expected header {FRAME_MANIFEST_HEADER!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 fields")
        try:
            entries.append(FrameEntry(frame=parts[0], timestamp_ms=int(parts[1])))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad timestamp ({exc})") from exc
    return entries


# -- crop extraction --------------------------------------------------------------


def extract_crops(
    manifest_path,
    pred_dir,
    out_dir,
    conf_thr: float = 0.25,
    margin_frac: float = 0.10,
) -> tuple[list[CropRecord], int]:
    """Crop every prediction with conf >= conf_thr; writes PPM files named by
    crop_id under out_dir/crops plus out_dir/crops.csv. Returns the records
    and a tally of crops skipped because clipping emptied the rect."""
    entries = read_frame_manifest(manifest_path)
    preds = load_predictions_dir(pred_dir)
    base = os.path.dirname(os.path.abspath(manifest_path))

    crops_dir = os.path.join(out_dir, "crops")
    os.makedirs(crops_dir, exist_ok=True)

    records: list[CropRecord] = []
    seen: set[str] = set()
    skipped = 0
    for entry in entries:
        frame_preds = preds.get(entry.stem, [])
        if not frame_preds:
            continue
        frame_path = entry.frame
        if not os.path.isabs(frame_path):
            frame_path = os.path.join(base, frame_path)
        img = read_ppm(frame_path)
        for box in frame_preds:
            if box.conf < conf_thr:
                continue
            try:
                rect = box_to_rect(box, img.width, img.height, margin_frac)
            except EmptyRect:
                skipped += 1
                continue
            cid = crop_id_for(entry.stem, box.class_id, rect)
            if cid in seen:  # duplicate detection produces the same crop
                skipped += 1
                continue
            seen.add(cid)
            write_ppm(os.path.join(crops_dir, f"{cid}.ppm"), crop(img, rect))
            records.append(
                CropRecord(
                    crop_id=cid,
                    frame=entry.stem,
                    class_id=box.class_id,
                    conf=box.conf,
                    rect=rect,
                    timestamp_ms=entry.timestamp_ms,
                )
            )
    write_crop_manifest(records, os.path.join(out_dir, "crops.csv"))
    return records, skipped


def write_crop_manifest(records: list[CropRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CROP_MANIFEST_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.crop_id},{r.frame},{r.class_id},{r.conf:.6f},"
                f"{r.rect.x0},{r.rect.y0},{r.rect.x1},{r.rect.y1},{r.timestamp_ms}\n"
            )


def read_crop_manifest(path) -> list[CropRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CROP_MANIFEST_HEADER:
        raise ParseError(f"{path}: expected header {CROP_MANIFEST_HEADER!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ParseError(f"{path}:{lineno}: expected 9 fields")
        try:
            records.append(
                CropRecord(
                    crop_id=parts[0],
                    frame=parts[1],
                    class_id=int(parts[2]),
                    conf=float(parts[3]),
                    rect=PixelRect(*(int(v) for v in parts[4:8])),
                    timestamp_ms=int(parts[8]),
                )
            )
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return records


# -- GPS ---------------------------------------------------------------------------


def read_gps_csv(path) -> GpsTrack:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != GPS_HEADER:
        raise ParseError(f"{path}: expected header {GPS_HEADER!r}")
    points: list[tuple[int, float, float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 fields")
        try:
            t, lat, lon = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
            raise ParseError(f"{path}:{lineno}: coordinates out of range")
        if points and t <= points[-1][0]:
            raise ParseError(f"{path}:{lineno}: timestamps not strictly increasing")
        points.append((t, lat, lon))
    return GpsTrack(points=points)


def geo_interpolate(
    track: GpsTrack, t: int, tolerance_ms: int = 5000
) -> tuple[float, float] | None:
    """Linear interpolation along the track; clamps to the nearest endpoint
    within tolerance_ms outside the range, otherwise None."""
    pts = track.points
    if not pts:
        return None
    if t < pts[0][0]:
        return (pts[0][1], pts[0][2]) if pts[0][0] - t <= tolerance_ms else None
    if t > pts[-1][0]:
        return (pts[-1][1], pts[-1][2]) if t - pts[-1][0] <= tolerance_ms else None
    times = [p[0] for p in pts]
    i = bisect.bisect_right(times, t) - 1
    if times[i] == t:
        return pts[i][1], pts[i][2]
    t0, lat0, lon0 = pts[i]
    t1, lat1, lon1 = pts[i + 1]
    u = (t - t0) / (t1 - t0)
    return lat0 + u * (lat1 - lat0), lon0 + u * (lon1 - lon0)


# -- labels / dataset ------------------------------------------------------------------


@dataclass(frozen=True)
class LabelRow:
    crop_id: str
    label: str  # damaged | undamaged | skip
    annotator: str
    labeled_at_ms: int


def read_labels_csv(path) -> list[LabelRow]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != LABELS_HEADER:
        raise ParseError(f"{path}: expected header {LABELS_HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 fields")
        if parts[1] not in ("damaged", "undamaged", "skip"):
            raise ParseError(f"{path}:{lineno}: bad label {parts[1]!r}")
        try:
            rows.append(LabelRow(parts[0], parts[1], parts[2], int(parts[3])))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad timestamp ({exc})") from exc
    return rows


@dataclass
class BalanceReport:
    damaged: int
    undamaged: int
    rows_assigned: int
    rows_skip: int
    rows_unknown: int
    unknown_ids: list[str]

    @property
    def ratio(self) -> float:
        if self.undamaged == 0:
            return math.inf if self.damaged else 0.0
        return self.damaged / self.undamaged


def build_labeled_dataset(
    crop_records: list[CropRecord], label_rows: list[LabelRow], crops_dir
) -> tuple[LabeledCropSet, BalanceReport]:
    """Join labels onto crops. Skip rows are ignored; unknown crop ids are
    collected and skipped; duplicate labels resolve last-write-wins in row
    order."""
    known = {r.crop_id for r in crop_records}
    final: dict[str, int] = {}
    rows_assigned = rows_skip = 0
    unknown_ids: list[str] = []
    for row in label_rows:
        if row.crop_id not in known:
            unknown_ids.append(row.crop_id)
            continue
        if row.label == "skip":
            rows_skip += 1
            continue
        rows_assigned += 1
        final[row.crop_id] = 1 if row.label == "damaged" else 0
    items = [
        (os.path.join(crops_dir, f"{cid}.ppm"), final[cid]) for cid in sorted(final)
    ]
    dataset = LabeledCropSet(items)
    damaged, undamaged = dataset.class_counts()
    report = BalanceReport(
        damaged=damaged,
        undamaged=undamaged,
        rows_assigned=rows_assigned,
        rows_skip=rows_skip,
        rows_unknown=len(unknown_ids),
        unknown_ids=unknown_ids,
    )
    return dataset, report


# -- anomaly records ----------------------------------------------------------------------


def emit_anomalies(
    damage_preds: list[tuple[str, int, PredBox]],
    sign_crop_predictions: list[tuple[str, int, PredBox, float]],
    track: GpsTrack | None,
    detector_thr: float = 0.25,
    sign_thr: float = 0.5,
    geo_tolerance_ms: int = 5000,
) -> list[AnomalyRecord]:
    """Damage detections and damaged-sign classifications -> geotagged records,
    sorted by timestamp then id.

    damage_preds: (frame stem, timestamp_ms, detection)
    sign_crop_predictions: (frame stem, timestamp_ms, detection, damaged prob)
    """
    records: list[AnomalyRecord] = []

    def locate(t: int) -> tuple[float | None, float | None]:
        if track is None:
            return None, None
        hit = geo_interpolate(track, t, geo_tolerance_ms)
        return hit if hit is not None else (None, None)

    for frame, t, box in damage_preds:
        if box.conf < detector_thr:
            continue
        lat, lon = locate(t)
        records.append(
            AnomalyRecord(
                id=_hash16(
                    f"{KIND_ROAD_DAMAGE}|{frame}|{box.class_id}|"
                    f"{box.cx:.6f},{box.cy:.6f},{box.w:.6f},{box.h:.6f}"
                ),
                kind=KIND_ROAD_DAMAGE,
                class_id=box.class_id,
                confidence=box.conf,
                frame=frame,
                cx=box.cx,
                cy=box.cy,
                w=box.w,
                h=box.h,
                lat=lat,
                lon=lon,
                timestamp_ms=t,
            )
        )
    for frame, t, box, prob in sign_crop_predictions:
        if prob < sign_thr:
            continue
        lat, lon = locate(t)
        records.append(
            AnomalyRecord(
                id=_hash16(
                    f"{KIND_DAMAGED_SIGN}|{frame}|{box.class_id}|"
                    f"{box.cx:.6f},{box.cy:.6f},{box.w:.6f},{box.h:.6f}"
                ),
                kind=KIND_DAMAGED_SIGN,
                class_id=box.class_id,
                confidence=prob,
                frame=frame,
                cx=box.cx,
                cy=box.cy,
                w=box.w,
                h=box.h,
                lat=lat,
                lon=lon,
                timestamp_ms=t,
            )
        )
    records.sort(key=lambda r: (r.timestamp_ms, r.id))
    return records


def write_anomalies(records: list[AnomalyRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ANOMALIES_HEADER + "\n")
        for r in records:
            lat = f"{r.lat:.6f}" if r.lat is not None else ""
            lon = f"{r.lon:.6f}" if r.lon is not None else ""
            fh.write(
                f"{r.id},{r.kind},{r.class_id},{r.confidence:.6f},{r.frame},"
                f"{r.cx:.6f},{r.cy:.6f},{r.w:.6f},{r.h:.6f},{lat},{lon},"
                f"{r.timestamp_ms}\n"
            )


def read_anomalies(path) -> list[AnomalyRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != ANOMALIES_HEADER:
        raise ParseError(f"{path}: expected header {ANOMALIES_HEADER!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 12:
            raise ParseError(f"{path}:{lineno}: expected 12 fields")
        if parts[1] not in (KIND_ROAD_DAMAGE, KIND_DAMAGED_SIGN):
            raise ParseError(f"{path}:{lineno}: bad kind {parts[1]!r}")
        try:
            records.append(
                AnomalyRecord(
                    id=parts[0],
                    kind=parts[1],
                    class_id=int(parts[2]),
                    confidence=float(parts[3]),
                    frame=parts[4],
                    cx=float(parts[5]),
                    cy=float(parts[6]),
                    w=float(parts[7]),
                    h=float(parts[8]),
                    lat=float(parts[9]) if parts[9] else None,
                    lon=float(parts[10]) if parts[10] else None,
                    timestamp_ms=int(parts[11]),
                )
            )
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return records


# -- summary ---------------------------------------------------------------------------------


@dataclass
class Summary:
    total: int
    by_kind: dict[str, int]
    by_kind_class: dict[tuple[str, int], int]
    geotagged: int
    t_min: int | None
    t_max: int | None

    @property
    def geotagged_fraction(self) -> float:
        return self.geotagged / self.total if self.total else 0.0


def summarize(anomalies_path) -> Summary:
    records = read_anomalies(anomalies_path)
    by_kind = {KIND_ROAD_DAMAGE: 0, KIND_DAMAGED_SIGN: 0}
    by_kind_class: dict[tuple[str, int], int] = {}
    geotagged = 0
    for r in records:
        by_kind[r.kind] += 1
        by_kind_class[(r.kind, r.class_id)] = by_kind_class.get((r.kind, r.class_id), 0) + 1
        if r.lat is not None and r.lon is not None:
            geotagged += 1
    times = [r.timestamp_ms for r in records]
    return Summary(
        total=len(records),
        by_kind=by_kind,
        by_kind_class=by_kind_class,
        geotagged=geotagged,
        t_min=min(times) if times else None,
        t_max=max(times) if times else None,
    )


def write_summary(summary: Summary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"total={summary.total}\n")
        fh.write(f"road_damage={summary.by_kind[KIND_ROAD_DAMAGE]}\n")
        fh.write(f"damaged_sign={summary.by_kind[KIND_DAMAGED_SIGN]}\n")
        for kind, cls in sorted(summary.by_kind_class):
            fh.write(f"class.{kind}.{cls}={summary.by_kind_class[(kind, cls)]}\n")
        fh.write(f"geotagged={summary.geotagged}\n")
        fh.write(f"geotagged_fraction={summary.geotagged_fraction:.6f}\n")
        fh.write(f"t_min={'' if summary.t_min is None else summary.t_min}\n")
        fh.write(f"t_max={'' if summary.t_max is None else summary.t_max}\n")


def format_summary_table(summary: Summary) -> str:
    lines = [
        f"total anomalies     {summary.total}",
        f"  road damage       {summary.by_kind[KIND_ROAD_DAMAGE]}",
        f"  damaged signs     {summary.by_kind[KIND_DAMAGED_SIGN]}",
        f"geotagged           {summary.geotagged} ({summary.geotagged_fraction:.1%})",
    ]
    for kind, cls in sorted(summary.by_kind_class):
        lines.append(f"  {kind} class {cls}: {summary.by_kind_class[(kind, cls)]}")
    if summary.t_min is not None:
        lines.append(f"time range          {summary.t_min} .. {summary.t_max} ms")
    return "\n".join(lines)
