"""Single executable exposing every pipeline stage as a subcommand.

Exit status: 0 success, 1 operational failure (I/O, parse, model), 2 usage
error. Diagnostics go to stderr; results to stdout or the named output files.
"""

from __future__ import annotations

import functools
import os
import sys

import click

from . import classifier, detections, pipeline
from .errors import ToolError
from .imaging import crop, read_ppm
from .store import LabelStore


def operational(fn):
    """Map domain/I-O failures to exit status 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ToolError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.option("--seed", default=42, show_default=True, help="Seed for all randomness.")
@click.pass_context
def main(ctx, seed):
    """Road-asset inspection toolkit."""
    ctx.obj = {"seed": seed}


@main.command("eval")
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--conf", default=0.25, show_default=True, help="Confidence threshold for P/R.")
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
@operational
def eval_cmd(gt_dir, pred_dir, conf, out_file):
    """Evaluate detections against ground truth (mAP50, mAP50-95, P, R)."""
    report = detections.evaluate(gt_dir, pred_dir, conf_thr=conf)
    detections.write_report(report, out_file)
    click.echo(detections.format_report(report))


@main.command("crops")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--conf", default=0.25, show_default=True)
@click.option("--margin", default=0.10, show_default=True)
@operational
def crops_cmd(manifest, pred_dir, out_dir, conf, margin):
    """Extract detection crops from frames into OUT/crops plus OUT/crops.csv."""
    records, skipped = pipeline.extract_crops(
        manifest, pred_dir, out_dir, conf_thr=conf, margin_frac=margin
    )
    click.echo(f"{len(records)} crops written to {out_dir} ({skipped} skipped)")


@main.command("anchors")
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--k", required=True, type=int)
@click.option("--out", "out_file", type=click.Path(dir_okay=False))
@operational
def anchors_cmd(gt_dir, k, out_file):
    """Compute k anchor boxes from ground-truth sizes (k-means, 1-IoU)."""
    if k < 1:
        raise click.UsageError(f"--k must be >= 1, got {k}")
    gts = detections.load_ground_truth_dir(gt_dir)
    boxes = [(b.w, b.h) for stem in sorted(gts) for b in gts[stem]]
    anchors = detections.anchor_kmeans(boxes, k)
    lines = [
        f"{w:.6f} {h:.6f}"
        for w, h in sorted(anchors.centroids, key=lambda c: c[0] * c[1])
    ]
    if out_file:
        with open(out_file, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    click.echo("\n".join(lines))


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Crops directory produced by `crops` (crops.csv + crops/).")
@click.option("--labels", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--tiny", is_flag=True, help="Start from the 48px tiny preset.")
@click.option("--out", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--history", "history_path", type=click.Path(dir_okay=False),
              help="History CSV path [default: MODEL.history.csv].")
@click.pass_context
@operational
def train_cmd(ctx, data_dir, labels, config_file, tiny, model_path, history_path):
    """Train the damaged-sign classifier on labeled crops."""
    base = classifier.tiny_train_config(ctx.obj["seed"]) if tiny else classifier.TrainConfig(seed=ctx.obj["seed"])
    cfg = classifier.load_train_config(config_file, base) if config_file else base

    records = pipeline.read_crop_manifest(os.path.join(data_dir, "crops.csv"))
    rows = pipeline.read_labels_csv(labels)
    dataset, report = pipeline.build_labeled_dataset(
        records, rows, os.path.join(data_dir, "crops")
    )
    click.echo(
        f"dataset: {report.damaged} damaged / {report.undamaged} undamaged"
        f" (ratio {report.ratio:.3f})", err=True,
    )
    if report.unknown_ids:
        click.echo(f"warning: {len(report.unknown_ids)} unknown crop ids skipped", err=True)

    def progress(row):
        click.echo(
            f"epoch {row.epoch:3d}  loss {row.train_loss:.4f}  acc {row.train_acc:.3f}"
            f"  val_loss {row.val_loss:.4f}  val_acc {row.val_acc:.3f}", err=True,
        )

    checkpoint, history = classifier.train(dataset, cfg, on_epoch=progress)
    classifier.save_model(checkpoint, model_path)
    classifier.emit_history_csv(history, history_path or model_path + ".history.csv")
    click.echo(f"model written to {model_path}")


@main.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "inputs", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", default=0.5, show_default=True)
@operational
def predict_cmd(model_path, inputs, threshold):
    """Classify crop images; prints `path probability verdict` per input."""
    checkpoint = classifier.load_model(model_path)
    for path in inputs:
        prob = classifier.predict(checkpoint, read_ppm(path))
        verdict = "damaged" if prob >= threshold else "undamaged"
        click.echo(f"{path} {prob:.6f} {verdict}")


@main.command("anomalies")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gps", "gps_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
@click.option("--conf", default=0.25, show_default=True, help="Detector confidence threshold.")
@click.option("--sign-thr", default=0.5, show_default=True, help="Damaged-sign probability threshold.")
@click.option("--damage-classes", default="", help="Comma-separated class ids treated as road damage.")
@click.option("--margin", default=0.10, show_default=True, help="Crop margin for sign classification.")
@click.option("--tolerance-ms", default=5000, show_default=True, help="GPS clamp tolerance.")
@operational
def anomalies_cmd(manifest, pred_dir, model_path, gps_file, out_file, conf,
                  sign_thr, damage_classes, margin, tolerance_ms):
    """Emit geolocated anomaly records from detections plus the classifier."""
    try:
        damage_ids = {int(v) for v in damage_classes.split(",") if v.strip() != ""}
    except ValueError:
        raise click.UsageError(f"bad --damage-classes {damage_classes!r}")

    entries = pipeline.read_frame_manifest(manifest)
    preds = detections.load_predictions_dir(pred_dir)
    track = pipeline.read_gps_csv(gps_file) if gps_file else None
    checkpoint = classifier.load_model(model_path)
    base = os.path.dirname(os.path.abspath(manifest))

    damage_preds = []
    sign_preds = []
    skipped = 0
    for entry in entries:
        boxes = [b for b in preds.get(entry.stem, []) if b.conf >= conf]
        if not boxes:
            continue
        frame_path = entry.frame
        if not os.path.isabs(frame_path):
            frame_path = os.path.join(base, frame_path)
        img = None
        for box in boxes:
            if box.class_id in damage_ids:
                damage_preds.append((entry.stem, entry.timestamp_ms, box))
                continue
            if img is None:
                img = read_ppm(frame_path)
            try:
                rect = pipeline.box_to_rect(box, img.width, img.height, margin)
            except ToolError:
                skipped += 1
                continue
            prob = classifier.predict(checkpoint, crop(img, rect))
            sign_preds.append((entry.stem, entry.timestamp_ms, box, prob))

    records = pipeline.emit_anomalies(
        damage_preds, sign_preds, track,
        detector_thr=conf, sign_thr=sign_thr, geo_tolerance_ms=tolerance_ms,
    )
    pipeline.write_anomalies(records, out_file)
    click.echo(
        f"{len(records)} anomaly records written to {out_file}"
        f" ({skipped} sign crops skipped)"
    )


@main.command("summarize")
@click.option("--in", "in_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_file", type=click.Path(dir_okay=False))
@operational
def summarize_cmd(in_file, out_file):
    """Summarize an anomaly records file (counts, geotagged fraction, time range)."""
    summary = pipeline.summarize(in_file)
    if out_file:
        pipeline.write_summary(summary, out_file)
    click.echo(pipeline.format_summary_table(summary))


@main.command("serve")
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory with crops.csv, crops/, labels.csv, anomalies.csv.")
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--anomalies", "anomalies_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False),
              help="Static directory with the browser console.")
@operational
def serve_cmd(root, port, host, anomalies_file, ui_dir):
    """Run the annotation/review HTTP service until interrupted."""
    import uvicorn

    from .service import create_app

    app = create_app(root, anomalies_path=anomalies_file, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("label")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--labels", required=True, type=click.Path(dir_okay=False))
@click.option("--annotator", default="cli", show_default=True)
@operational
def label_cmd(data_dir, labels, annotator):
    """Terminal labeling queue: d=damaged, u=undamaged, s=skip, q=quit."""
    records = pipeline.read_crop_manifest(os.path.join(data_dir, "crops.csv"))
    store = LabelStore(labels)
    queue = [
        r for r in sorted(records, key=lambda r: r.crop_id)
        if store.latest(r.crop_id) is None or store.latest(r.crop_id).label == "skip"
    ]
    click.echo(f"{len(queue)} crops to label", err=True)
    done = 0
    for r in queue:
        path = os.path.join(data_dir, "crops", f"{r.crop_id}.ppm")
        click.echo(
            f"{path}  class={r.class_id} conf={r.conf:.2f} frame={r.frame}"
            f" t={r.timestamp_ms}ms"
        )
        try:
            key = click.prompt("[d/u/s/q]", type=click.Choice(["d", "u", "s", "q"]))
        except (click.Abort, EOFError):
            break
        if key == "q":
            break
        label = {"d": "damaged", "u": "undamaged", "s": "skip"}[key]
        store.append(r.crop_id, label, annotator)
        done += 1
    click.echo(f"labeled {done} crops", err=True)


if __name__ == "__main__":
    main()
