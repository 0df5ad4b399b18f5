import math
import os
import pathlib

import pytest

from roadsight.detections import PredBox
from roadsight.errors import EmptyRect, ParseError
from roadsight.imaging import PixelRect
from roadsight.pipeline import (
    CropRecord,
    GpsTrack,
    LabelRow,
    box_to_rect,
    build_labeled_dataset,
    crop_id_for,
    emit_anomalies,
    extract_crops,
    format_summary_table,
    geo_interpolate,
    read_anomalies,
    read_crop_manifest,
    read_frame_manifest,
    read_gps_csv,
    read_labels_csv,
    summarize,
    write_anomalies,
    write_summary,
)

DATA = pathlib.Path(__file__).parent / "data"
CORPUS = DATA / "mini_corpus"
GOLDEN = DATA / "golden"


# -- crop geometry -------------------------------------------------------------


def test_box_to_rect_no_margin():
    box = PredBox(0, 0.5, 0.5, 0.25, 0.25, 0.9)
    rect = box_to_rect(box, 640, 480, 0.0)
    assert (rect.x0, rect.y0, rect.x1, rect.y1) == (240, 180, 400, 300)


def test_box_to_rect_margin_ten_percent():
    box = PredBox(0, 0.5, 0.5, 0.25, 0.25, 0.9)
    rect = box_to_rect(box, 640, 480, 0.10)
    assert (rect.x0, rect.y0, rect.x1, rect.y1) == (224, 168, 416, 312)


def test_box_to_rect_clips_and_can_empty():
    box = PredBox(0, 0.0, 0.5, 0.01, 0.2, 0.9)
    rect = box_to_rect(box, 100, 100, 0.0)  # half the box is off-frame
    assert rect.x0 == 0 and rect.x1 >= 1
    with pytest.raises(EmptyRect):
        # box fully outside after rounding
        box_to_rect(PredBox(0, 0.0, 0.0, 0.002, 0.002, 0.9), 10, 10, 0.0)


def test_crop_id_is_stable():
    rect = PixelRect(1, 2, 3, 4)
    a = crop_id_for("frame_00", 0, rect)
    b = crop_id_for("frame_00", 0, PixelRect(1, 2, 3, 4))
    assert a == b and len(a) == 16
    assert crop_id_for("frame_01", 0, rect) != a
    assert crop_id_for("frame_00", 1, rect) != a


# -- extraction over the committed corpus -----------------------------------------


def test_extract_crops_matches_golden_manifest(tmp_path):
    records, skipped = extract_crops(CORPUS / "frames.csv", CORPUS / "preds", tmp_path)
    assert skipped == 0
    assert len(records) == 6
    produced = (tmp_path / "crops.csv").read_bytes()
    assert produced == (GOLDEN / "crops.csv").read_bytes()
    for r in records:
        assert (tmp_path / "crops" / f"{r.crop_id}.ppm").exists()
        assert 0 <= r.rect.x0 < r.rect.x1 <= 64
        assert 0 <= r.rect.y0 < r.rect.y1 <= 48


def test_extract_crops_threshold_filters(tmp_path):
    records, _ = extract_crops(
        CORPUS / "frames.csv", CORPUS / "preds", tmp_path, conf_thr=0.82
    )
    assert {r.frame for r in records} == {"frame_00", "frame_01"}


def test_extract_reruns_identically(tmp_path):
    a, _ = extract_crops(CORPUS / "frames.csv", CORPUS / "preds", tmp_path / "a")
    b, _ = extract_crops(CORPUS / "frames.csv", CORPUS / "preds", tmp_path / "b")
    assert [r.crop_id for r in a] == [r.crop_id for r in b]


def test_crop_manifest_round_trip(tmp_path):
    records, _ = extract_crops(CORPUS / "frames.csv", CORPUS / "preds", tmp_path)
    assert read_crop_manifest(tmp_path / "crops.csv") == records


def test_duplicate_detections_yield_one_crop(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    (src / "frames").mkdir()
    frame = (CORPUS / "frames" / "frame_00.ppm").read_bytes()
    (src / "frames" / "f.ppm").write_bytes(frame)
    (src / "frames.csv").write_text("frame,timestamp_ms\nframes/f.ppm,0\n")
    preds = tmp_path / "preds"
    preds.mkdir()
    (preds / "f.txt").write_text("0 0.5 0.5 0.25 0.25 0.9\n0 0.5 0.5 0.25 0.25 0.9\n")
    records, skipped = extract_crops(src / "frames.csv", preds, tmp_path / "out")
    assert len(records) == 1
    assert skipped == 1
    assert len({r.crop_id for r in records}) == 1


def test_negative_margin_rejected():
    with pytest.raises(ValueError):
        box_to_rect(PredBox(0, 0.5, 0.5, 0.2, 0.2, 0.9), 100, 100, -0.1)


def test_frame_manifest_requires_header(tmp_path):
    (tmp_path / "bad.csv").write_text("nope\n")
    with pytest.raises(ParseError):
        read_frame_manifest(tmp_path / "bad.csv")


# -- geo interpolation ---------------------------------------------------------------


TRACK = GpsTrack([(0, 40.0, 14.0), (10000, 40.001, 14.001)])


def test_geo_exact_at_knot():
    assert geo_interpolate(TRACK, 0) == (40.0, 14.0)
    assert geo_interpolate(TRACK, 10000) == (40.001, 14.001)


def test_geo_linear_midpoint():
    lat, lon = geo_interpolate(TRACK, 5000)
    assert abs(lat - 40.0005) < 1e-9
    assert abs(lon - 14.0005) < 1e-9


def test_geo_tolerance_gate():
    assert geo_interpolate(TRACK, 20000, tolerance_ms=5000) is None
    assert geo_interpolate(TRACK, 14000, tolerance_ms=5000) == (40.001, 14.001)
    assert geo_interpolate(TRACK, -3000, tolerance_ms=5000) == (40.0, 14.0)


def test_geo_monotone_along_segment():
    prev = None
    for t in range(0, 10001, 500):
        lat, lon = geo_interpolate(TRACK, t)
        if prev is not None:
            assert lat >= prev[0] and lon >= prev[1]
        prev = (lat, lon)


def test_gps_csv_validation(tmp_path):
    (tmp_path / "gps.csv").write_text("timestamp_ms,lat,lon\n5,40.0,14.0\n5,40.1,14.1\n")
    with pytest.raises(ParseError, match="strictly increasing"):
        read_gps_csv(tmp_path / "gps.csv")
    (tmp_path / "gps.csv").write_text("timestamp_ms,lat,lon\n5,95.0,14.0\n")
    with pytest.raises(ParseError, match="out of range"):
        read_gps_csv(tmp_path / "gps.csv")
    assert read_gps_csv(CORPUS / "gps.csv").points[0] == (0, 41.56, 14.66)


# -- labeled dataset --------------------------------------------------------------------


def fake_records(n):
    return [
        CropRecord(f"id{i:04d}", f"f{i}", 0, 0.9, PixelRect(0, 0, 2, 2), i)
        for i in range(n)
    ]


def label_rows(pairs):
    return [LabelRow(cid, label, "t", i) for i, (cid, label) in enumerate(pairs)]


def test_paper_imbalance_ratio(tmp_path):
    records = fake_records(249)
    rows = label_rows(
        [(f"id{i:04d}", "damaged") for i in range(203)]
        + [(f"id{i:04d}", "undamaged") for i in range(203, 249)]
    )
    dataset, report = build_labeled_dataset(records, rows, tmp_path)
    assert (report.damaged, report.undamaged) == (203, 46)
    assert abs(report.ratio - 203 / 46) < 1e-9
    assert abs(report.ratio - 4.413) < 1e-3
    assert len(dataset) == 249


def test_empty_labels(tmp_path):
    dataset, report = build_labeled_dataset(fake_records(3), [], tmp_path)
    assert len(dataset) == 0
    assert report.damaged == report.undamaged == 0


def test_duplicate_label_last_write_wins(tmp_path):
    rows = label_rows([("id0000", "damaged"), ("id0000", "undamaged")])
    dataset, _ = build_labeled_dataset(fake_records(1), rows, tmp_path)
    assert dataset.items[0][1] == 0  # undamaged


def test_unknown_ids_collected_and_conserved(tmp_path):
    rows = label_rows(
        [("id0000", "damaged"), ("ghost", "damaged"), ("id0001", "skip")]
    )
    dataset, report = build_labeled_dataset(fake_records(2), rows, tmp_path)
    assert report.unknown_ids == ["ghost"]
    assert report.rows_assigned + report.rows_skip + report.rows_unknown == 3
    assert len(dataset) == 1


def test_labels_csv_round_trip():
    rows = read_labels_csv(CORPUS / "labels.csv")
    assert len(rows) == 4
    assert {r.label for r in rows} == {"damaged", "undamaged"}


# -- anomaly emission ----------------------------------------------------------------------


def unit_fixture():
    track = GpsTrack([(0, 40.0, 14.0), (10000, 40.001, 14.001), (20000, 40.002, 14.001)])
    damage = [
        ("f1", 5000, PredBox(1, 0.5, 0.5, 0.25, 0.25, 0.9)),
        ("f2", 25001, PredBox(1, 0.3, 0.3, 0.1, 0.1, 0.3)),
        ("f2", 2000, PredBox(1, 0.7, 0.7, 0.1, 0.1, 0.2)),  # below detector thr
    ]
    signs = [
        ("f1", 10000, PredBox(0, 0.6, 0.4, 0.2, 0.3, 0.88), 0.93),
        ("f3", 3000, PredBox(0, 0.2, 0.2, 0.1, 0.1, 0.7), 0.2),  # below sign thr
    ]
    return track, damage, signs


def test_emit_empty():
    records = emit_anomalies([], [], None)
    assert records == []


def test_emit_counts_and_fields():
    track, damage, signs = unit_fixture()
    records = emit_anomalies(damage, signs, track)
    assert len(records) == 3
    assert [r.kind for r in records] == ["road_damage", "damaged_sign", "road_damage"]
    assert [r.timestamp_ms for r in records] == [5000, 10000, 25001]
    # hand-computed geotags: segment midpoint, exact knot, outside tolerance
    assert abs(records[0].lat - 40.0005) < 1e-9
    assert abs(records[0].lon - 14.0005) < 1e-9
    assert (records[1].lat, records[1].lon) == (40.001, 14.001)
    assert records[2].lat is None and records[2].lon is None
    assert records[1].confidence == 0.93  # classifier probability, not det conf


def test_emit_matches_golden_and_round_trips(tmp_path):
    track, damage, signs = unit_fixture()
    records = emit_anomalies(damage, signs, track)
    write_anomalies(records, tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_bytes() == (GOLDEN / "anomalies_unit.csv").read_bytes()
    # the 6-decimal file is canonical: read -> write reproduces it byte-exactly
    reread = read_anomalies(tmp_path / "a.csv")
    write_anomalies(reread, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_bytes() == (tmp_path / "a.csv").read_bytes()
    assert [r.id for r in reread] == [r.id for r in records]


# -- summary ----------------------------------------------------------------------------------


def test_summarize_empty(tmp_path):
    write_anomalies([], tmp_path / "a.csv")
    s = summarize(tmp_path / "a.csv")
    assert s.total == 0
    assert s.geotagged_fraction == 0.0
    assert s.t_min is None


def test_summarize_golden_counts():
    s = summarize(GOLDEN / "anomalies_unit.csv")
    assert s.total == 3
    assert s.by_kind == {"road_damage": 2, "damaged_sign": 1}
    assert s.by_kind_class == {("road_damage", 1): 2, ("damaged_sign", 0): 1}
    assert s.geotagged == 2
    assert abs(s.geotagged_fraction - 2 / 3) < 1e-12
    assert (s.t_min, s.t_max) == (5000, 25001)


def test_summary_file_and_table(tmp_path):
    s = summarize(GOLDEN / "anomalies_unit.csv")
    write_summary(s, tmp_path / "summary.txt")
    text = (tmp_path / "summary.txt").read_text()
    assert "total=3" in text
    assert "road_damage=2" in text
    assert "geotagged_fraction=0.666667" in text
    assert "class.road_damage.1=2" in text
    table = format_summary_table(s)
    assert "road damage       2" in table
