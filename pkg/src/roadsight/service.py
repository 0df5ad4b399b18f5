"""HTTP facade over the crop store and anomaly data.

Serves the annotation queue (crop metadata + PNG images + label posts) and
the anomaly review endpoints. State lives in flat files under one root
directory:

    <root>/crops.csv       crop manifest (pipeline format)
    <root>/crops/*.ppm     crop images named by crop_id
    <root>/labels.csv      append-only label log (created when missing)
    <root>/anomalies.csv   optional anomaly records
"""

from __future__ import annotations

import os
from typing import Callable, Literal

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .imaging import encode_png_stored, read_ppm
from .pipeline import AnomalyRecord, read_anomalies, read_crop_manifest
from .store import LabelStore


class CropMeta(BaseModel):
    crop_id: str
    class_id: int
    conf: float
    frame: str
    timestamp_ms: int
    image_url: str
    label: str | None = None


class CropPage(BaseModel):
    items: list[CropMeta]


class LabelRequest(BaseModel):
    label: Literal["damaged", "undamaged", "skip"]
    annotator: str = "anonymous"


class LabelOut(BaseModel):
    crop_id: str
    label: str
    annotator: str
    labeled_at_ms: int


class AnomalyOut(BaseModel):
    id: str
    kind: str
    class_id: int
    confidence: float
    frame: str
    cx: float
    cy: float
    w: float
    h: float
    lat: float | None
    lon: float | None
    timestamp_ms: int


class AnomalyPage(BaseModel):
    items: list[AnomalyOut]


class AnomalyCounts(BaseModel):
    total: int
    road_damage: int
    damaged_sign: int


class StatsOut(BaseModel):
    total_crops: int
    labeled: int
    damaged: int
    undamaged: int
    skipped: int
    anomalies: AnomalyCounts


def _anomaly_out(r: AnomalyRecord) -> AnomalyOut:
    return AnomalyOut(
        id=r.id, kind=r.kind, class_id=r.class_id, confidence=r.confidence,
        frame=r.frame, cx=r.cx, cy=r.cy, w=r.w, h=r.h,
        lat=r.lat, lon=r.lon, timestamp_ms=r.timestamp_ms,
    )


def create_app(
    root,
    anomalies_path=None,
    ui_dir=None,
    clock: Callable[[], int] | None = None,
) -> FastAPI:
    root = str(root)
    crops = read_crop_manifest(os.path.join(root, "crops.csv"))
    crops_by_id = {r.crop_id: r for r in crops}
    crops_dir = os.path.join(root, "crops")
    store = LabelStore(os.path.join(root, "labels.csv"), clock=clock)

    if anomalies_path is None:
        candidate = os.path.join(root, "anomalies.csv")
        anomalies_path = candidate if os.path.exists(candidate) else None
    anomalies = read_anomalies(anomalies_path) if anomalies_path else []

    app = FastAPI(title="roadsight annotation service")

    @app.exception_handler(RequestValidationError)
    async def _validation_to_400(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    def crop_meta(record, label_row) -> CropMeta:
        return CropMeta(
            crop_id=record.crop_id,
            class_id=record.class_id,
            conf=record.conf,
            frame=record.frame,
            timestamp_ms=record.timestamp_ms,
            image_url=f"/api/crops/{record.crop_id}/image",
            label=label_row.label if label_row else None,
        )

    @app.get("/api/crops", response_model=CropPage)
    def list_crops(status: str = "unlabeled", limit: int = 50):
        if status not in ("unlabeled", "labeled", "all"):
            raise HTTPException(400, f"bad status {status!r}")
        if limit < 1:
            raise HTTPException(400, f"limit must be >= 1, got {limit}")
        index = store.snapshot()

        def is_unlabeled(cid: str) -> bool:
            row = index.get(cid)
            return row is None or row.label == "skip"

        items = []
        for cid in sorted(crops_by_id):
            if status == "unlabeled" and not is_unlabeled(cid):
                continue
            if status == "labeled" and is_unlabeled(cid):
                continue
            items.append(crop_meta(crops_by_id[cid], index.get(cid)))
            if len(items) >= limit:
                break
        return CropPage(items=items)

    @app.get("/api/crops/{crop_id}/image")
    def crop_image(crop_id: str):
        if crop_id not in crops_by_id:
            raise HTTPException(404, f"unknown crop {crop_id!r}")
        img = read_ppm(os.path.join(crops_dir, f"{crop_id}.ppm"))
        return Response(content=encode_png_stored(img), media_type="image/png")

    @app.post("/api/crops/{crop_id}/label", response_model=LabelOut)
    def post_label(crop_id: str, body: LabelRequest):
        if crop_id not in crops_by_id:
            raise HTTPException(404, f"unknown crop {crop_id!r}")
        row = store.append(crop_id, body.label, body.annotator)
        return LabelOut(
            crop_id=row.crop_id,
            label=row.label,
            annotator=row.annotator,
            labeled_at_ms=row.labeled_at_ms,
        )

    @app.get("/api/anomalies", response_model=AnomalyPage)
    def list_anomalies(kind: str = "", min_conf: float = 0.0, bbox: str = ""):
        if kind not in ("", "road_damage", "damaged_sign"):
            raise HTTPException(400, f"bad kind {kind!r}")
        if not 0.0 <= min_conf <= 1.0:
            raise HTTPException(400, f"min_conf must be in [0,1], got {min_conf}")
        rect = None
        if bbox:
            parts = bbox.split(",")
            if len(parts) != 4:
                raise HTTPException(400, "bbox must be min_lat,min_lon,max_lat,max_lon")
            try:
                rect = tuple(float(p) for p in parts)
            except ValueError:
                raise HTTPException(400, f"bad bbox {bbox!r}")
        items = []
        for r in anomalies:
            if kind and r.kind != kind:
                continue
            if r.confidence < min_conf:
                continue
            if rect is not None:
                if r.lat is None or r.lon is None:
                    continue
                if not (rect[0] <= r.lat <= rect[2] and rect[1] <= r.lon <= rect[3]):
                    continue
            items.append(_anomaly_out(r))
        return AnomalyPage(items=items)

    @app.get("/api/stats", response_model=StatsOut)
    def stats():
        index = store.snapshot()
        damaged = undamaged = skipped = 0
        for cid in crops_by_id:
            row = index.get(cid)
            if row is None:
                continue
            if row.label == "damaged":
                damaged += 1
            elif row.label == "undamaged":
                undamaged += 1
            elif row.label == "skip":
                skipped += 1
        road = sum(1 for r in anomalies if r.kind == "road_damage")
        sign = sum(1 for r in anomalies if r.kind == "damaged_sign")
        return StatsOut(
            total_crops=len(crops_by_id),
            labeled=damaged + undamaged,
            damaged=damaged,
            undamaged=undamaged,
            skipped=skipped,
            anomalies=AnomalyCounts(
                total=len(anomalies), road_damage=road, damaged_sign=sign
            ),
        )

    if ui_dir and os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
