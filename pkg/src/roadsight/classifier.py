"""Build, train, evaluate, serialize, and run the damaged-sign CNN.

The architecture is three Conv/ReLU/MaxPool blocks (32, 64, 128 filters of
size 3x3), Flatten, Dense(512)+ReLU, Dropout(0.5), Dense(1)+Sigmoid, trained
with Adam on sigmoid focal cross-entropy for 20 epochs at batch size 32 over
an 80-20 split by default.

Reproducibility scheme (all PCG64 via numpy default_rng):
  - dataset split: seed
  - epoch shuffle: seed XOR epoch index (0-based)
  - per-sample augmentation stream: [seed, epoch, sample index in train split]
  - dropout stream: [seed, epoch, batch index, 0xD0]
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .augment import AugmentConfig, augment
from .errors import (
    ModelFormatError,
    ParseError,
    ShapeError,
    SingleClassTrainingSet,
    TooFewSamples,
)
from .imaging import ImageRGB8, read_ppm, resize_bilinear, to_float_norm
from .losses import FocalConfig, binary_metrics, sigmoid_focal_ce
from .nn import NetworkSpec, ParamSet, network_backward, network_forward, shape_infer
from .optim import AdamState, adam_step

FORMAT_VERSION = 1

DAMAGED = 1
UNDAMAGED = 0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    train_fraction: float = 0.8
    seed: int = 42
    input_size: int = 150
    threshold: float = 0.5
    focal: FocalConfig = FocalConfig()
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-7
    augment: AugmentConfig = AugmentConfig()

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


def tiny_train_config(seed: int = 42) -> TrainConfig:
    """Preset for minute-scale runs: 48px inputs, augmentation scaled to match."""
    return TrainConfig(
        seed=seed,
        input_size=48,
        lr=2e-3,
        augment=AugmentConfig(
            rotation_deg=10.0,
            width_shift=0.05,
            height_shift=0.05,
            shear_deg=5.0,
            zoom=0.05,
            hflip_prob=0.5,
            cutout_size=12,
            cutout_prob=0.5,
        ),
    )


@dataclass
class LabeledCropSet:
    items: list[tuple[str, int]]  # (image path, label), damaged=1

    def __len__(self) -> int:
        return len(self.items)

    def class_counts(self) -> tuple[int, int]:
        damaged = sum(1 for _, y in self.items if y == DAMAGED)
        return damaged, len(self.items) - damaged


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    train_prec: float
    train_rec: float
    val_loss: float
    val_acc: float
    val_prec: float
    val_rec: float


@dataclass
class ModelCheckpoint:
    spec: NetworkSpec
    params: ParamSet
    config: TrainConfig
    format_version: int = FORMAT_VERSION


def build_damagenet(input_size: int) -> NetworkSpec:
    """The damage classifier stack at a square RGB input size."""
    if input_size < 24:
        raise ShapeError(f"input_size must be >= 24, got {input_size}")
    return NetworkSpec(
        input_shape=(input_size, input_size, 3),
        layers=(
            nn.conv2d(32), nn.relu(), nn.maxpool2(),
            nn.conv2d(64), nn.relu(), nn.maxpool2(),
            nn.conv2d(128), nn.relu(), nn.maxpool2(),
            nn.flatten(),
            nn.dense(512), nn.relu(),
            nn.dropout(0.5),
            nn.dense(1), nn.sigmoid(),
        ),
    )


def split_dataset(
    dataset: LabeledCropSet, fraction: float, seed: int
) -> tuple[LabeledCropSet, LabeledCropSet]:
    """Seeded uniform shuffle; train gets floor(fraction*N), rest validates."""
    n = len(dataset)
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(fraction * n))
    train = [dataset.items[i] for i in order[:n_train]]
    val = [dataset.items[i] for i in order[n_train:]]
    return LabeledCropSet(train), LabeledCropSet(val)


def _load_split(items: list[tuple[str, int]], input_size: int) -> tuple[np.ndarray, np.ndarray]:
    xs = np.empty((len(items), input_size, input_size, 3), dtype=np.float32)
    ys = np.empty(len(items), dtype=np.float64)
    for i, (path, label) in enumerate(items):
        img = resize_bilinear(read_ppm(path), input_size, input_size)
        xs[i] = to_float_norm(img)
        ys[i] = label
    return xs, ys


def _eval_metrics(
    logits_spec: NetworkSpec,
    params: ParamSet,
    xs: np.ndarray,
    ys: np.ndarray,
    cfg: TrainConfig,
) -> tuple[float, dict]:
    logits, _ = network_forward(logits_spec, params, xs, mode="eval")
    z = logits[:, 0].astype(np.float64)
    loss_vec, _ = sigmoid_focal_ce(z, ys, cfg.focal)
    probs = 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))
    return float(loss_vec.mean()), binary_metrics(probs, ys, cfg.threshold)


def train(
    dataset: LabeledCropSet,
    cfg: TrainConfig,
    on_epoch=None,
) -> tuple[ModelCheckpoint, list[EpochMetrics]]:
    """Full training loop; deterministic given (data, config).

    on_epoch, when given, is called with each EpochMetrics as it completes.
    """
    train_set, val_set = split_dataset(dataset, cfg.train_fraction, cfg.seed)
    damaged, undamaged = train_set.class_counts()
    if damaged == 0 or undamaged == 0:
        raise SingleClassTrainingSet(
            f"training split has {damaged} damaged / {undamaged} undamaged"
        )

    x_train, y_train = _load_split(train_set.items, cfg.input_size)
    x_val, y_val = _load_split(val_set.items, cfg.input_size)

    spec = build_damagenet(cfg.input_size)
    logits_spec = spec.without_final_sigmoid()
    params = nn.init_params(spec, cfg.seed)
    adam = AdamState.for_params(
        params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps
    )

    n = len(train_set)
    history: list[EpochMetrics] = []
    for epoch in range(cfg.epochs):
        order = np.random.default_rng(cfg.seed ^ epoch).permutation(n)
        for b_idx, start in enumerate(range(0, n, cfg.batch_size)):
            batch_ids = order[start : start + cfg.batch_size]
            batch = np.stack(
                [
                    augment(
                        x_train[i],
                        cfg.augment,
                        np.random.default_rng([cfg.seed, epoch, int(i)]),
                    )
                    for i in batch_ids
                ]
            )
            labels = y_train[batch_ids]
            drop_rng = np.random.default_rng([cfg.seed, epoch, b_idx, 0xD0])
            logits, cache = network_forward(
                logits_spec, params, batch, mode="train", rng=drop_rng
            )
            _, dloss_dz = sigmoid_focal_ce(
                logits[:, 0].astype(np.float64), labels, cfg.focal
            )
            grad_out = (dloss_dz / len(batch_ids)).astype(np.float32)[:, None]
            grads = network_backward(cache, grad_out)
            params = adam_step(adam, params, grads)

        train_loss, train_m = _eval_metrics(logits_spec, params, x_train, y_train, cfg)
        val_loss, val_m = _eval_metrics(logits_spec, params, x_val, y_val, cfg)
        row = EpochMetrics(
            epoch=epoch + 1,
            train_loss=train_loss,
            train_acc=train_m["accuracy"],
            train_prec=train_m["precision"],
            train_rec=train_m["recall"],
            val_loss=val_loss,
            val_acc=val_m["accuracy"],
            val_prec=val_m["precision"],
            val_rec=val_m["recall"],
        )
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)

    checkpoint = ModelCheckpoint(spec=spec, params=params, config=cfg)
    return checkpoint, history


def predict(checkpoint: ModelCheckpoint, image: ImageRGB8) -> float:
    """Damaged probability for one crop; deterministic (dropout off)."""
    size = checkpoint.spec.input_shape[0]
    x = to_float_norm(resize_bilinear(image, size, size))
    out, _ = network_forward(checkpoint.spec, checkpoint.params, x, mode="eval")
    return float(out[0])


def predict_batch(checkpoint: ModelCheckpoint, images: list[ImageRGB8]) -> list[float]:
    size = checkpoint.spec.input_shape[0]
    batch = np.stack(
        [to_float_norm(resize_bilinear(img, size, size)) for img in images]
    )
    out, _ = network_forward(checkpoint.spec, checkpoint.params, batch, mode="eval")
    return [float(v) for v in out[:, 0]]


# -- training config file (flat key=value text) -------------------------------

_CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "train_fraction": float,
    "seed": int,
    "input_size": int,
    "threshold": float,
    "focal.alpha": float,
    "focal.gamma": float,
    "focal.epsilon": float,
    "adam.lr": float,
    "adam.beta1": float,
    "adam.beta2": float,
    "adam.eps": float,
    "augment.rotation_deg": float,
    "augment.width_shift": float,
    "augment.height_shift": float,
    "augment.shear_deg": float,
    "augment.zoom": float,
    "augment.hflip_prob": float,
    "augment.cutout_size": int,
    "augment.cutout_prob": float,
}


def config_to_pairs(cfg: TrainConfig) -> list[tuple[str, str]]:
    values = {
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "train_fraction": cfg.train_fraction,
        "seed": cfg.seed,
        "input_size": cfg.input_size,
        "threshold": cfg.threshold,
        "focal.alpha": cfg.focal.alpha,
        "focal.gamma": cfg.focal.gamma,
        "focal.epsilon": cfg.focal.epsilon,
        "adam.lr": cfg.lr,
        "adam.beta1": cfg.beta1,
        "adam.beta2": cfg.beta2,
        "adam.eps": cfg.adam_eps,
        "augment.rotation_deg": cfg.augment.rotation_deg,
        "augment.width_shift": cfg.augment.width_shift,
        "augment.height_shift": cfg.augment.height_shift,
        "augment.shear_deg": cfg.augment.shear_deg,
        "augment.zoom": cfg.augment.zoom,
        "augment.hflip_prob": cfg.augment.hflip_prob,
        "augment.cutout_size": cfg.augment.cutout_size,
        "augment.cutout_prob": cfg.augment.cutout_prob,
    }
    return [(k, repr(values[k])) for k in _CONFIG_KEYS]


def config_from_pairs(pairs: dict[str, str], base: TrainConfig | None = None) -> TrainConfig:
    cfg = base or TrainConfig()
    plain: dict[str, object] = {}
    focal: dict[str, float] = {}
    adam: dict[str, float] = {}
    aug: dict[str, object] = {}
    for key, raw in pairs.items():
        if key not in _CONFIG_KEYS:
            raise ParseError(f"unknown training config key {key!r}")
        try:
            value = _CONFIG_KEYS[key](raw)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {raw!r}") from exc
        group, _, name = key.partition(".")
        if not name:
            plain[key] = value
        elif group == "focal":
            focal[name] = value
        elif group == "adam":
            adam[name] = value
        else:
            aug[name] = value
    if focal:
        plain["focal"] = replace(cfg.focal, **focal)
    if adam:
        renames = {"lr": "lr", "beta1": "beta1", "beta2": "beta2", "eps": "adam_eps"}
        plain.update({renames[k]: v for k, v in adam.items()})
    if aug:
        plain["augment"] = replace(cfg.augment, **aug)
    return replace(cfg, **plain)


def load_train_config(path, base: TrainConfig | None = None) -> TrainConfig:
    """Parse the flat `key = value` training config file."""
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            key, _, raw = text.partition("=")
            pairs[key.strip()] = raw.strip()
    try:
        return config_from_pairs(pairs, base)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_train_config(path, cfg: TrainConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in config_to_pairs(cfg):
            fh.write(f"{key} = {value}\n")


# -- model serialization -------------------------------------------------------
#
# A checkpoint is a pair of files: a UTF-8 manifest at `path` and a raw blob at
# `path + ".bin"` holding every parameter tensor as little-endian float32,
# concatenated in layer order, weights before biases, row-major.


def _layer_to_line(layer: nn.LayerSpec) -> str:
    if layer.kind == "Conv2D":
        return f"Conv2D filters={layer.filters} kernel={layer.kernel}"
    if layer.kind == "MaxPool2":
        return f"MaxPool2 pool={layer.pool}"
    if layer.kind == "Dense":
        return f"Dense units={layer.units}"
    if layer.kind == "Dropout":
        return f"Dropout rate={layer.rate!r}"
    return layer.kind


def _layer_from_line(text: str) -> nn.LayerSpec:
    parts = text.split()
    kind = parts[0]
    kwargs: dict[str, str] = {}
    for p in parts[1:]:
        k, _, v = p.partition("=")
        kwargs[k] = v
    try:
        if kind == "Conv2D":
            return nn.conv2d(int(kwargs["filters"]), int(kwargs["kernel"]))
        if kind == "MaxPool2":
            return nn.maxpool2(int(kwargs["pool"]))
        if kind == "Dense":
            return nn.dense(int(kwargs["units"]))
        if kind == "Dropout":
            return nn.dropout(float(kwargs["rate"]))
        if kind in ("ReLU", "Flatten", "Sigmoid"):
            return nn.LayerSpec(kind=kind)
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad layer line {text!r}") from exc
    raise ModelFormatError(f"unknown layer kind {kind!r}")


def _shape_str(shape: tuple[int, ...]) -> str:
    return "x".join(str(d) for d in shape)


def save_model(checkpoint: ModelCheckpoint, path) -> None:
    path = str(path)
    spec, params = checkpoint.spec, checkpoint.params
    lines = [
        f"format_version={checkpoint.format_version}",
        "byte_order=little-endian",
        "dtype=float32",
        f"input_shape={_shape_str(spec.input_shape)}",
        f"layer_count={len(spec.layers)}",
    ]
    for i, layer in enumerate(spec.layers):
        lines.append(f"layer.{i}={_layer_to_line(layer)}")
    for i in sorted(params):
        w, b = params[i]
        lines.append(f"param.{i}={_shape_str(w.shape)} {_shape_str(b.shape)}")
    for key, value in config_to_pairs(checkpoint.config):
        lines.append(f"config.{key}={value}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(path + ".bin", "wb") as fh:
        for i in sorted(params):
            w, b = params[i]
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_model(path) -> ModelCheckpoint:
    path = str(path)
    fields: dict[str, str] = {}
    layers: dict[int, str] = {}
    shapes: dict[int, str] = {}
    config_pairs: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ModelFormatError(f"bad manifest line {line!r}")
                if key.startswith("layer."):
                    layers[int(key[6:])] = value
                elif key.startswith("param."):
                    shapes[int(key[6:])] = value
                elif key.startswith("config."):
                    config_pairs[key[7:]] = value
                else:
                    fields[key] = value
    except OSError as exc:
        raise ModelFormatError(f"cannot read manifest: {exc}") from exc
    except ValueError as exc:
        raise ModelFormatError(f"bad manifest key: {exc}") from exc

    if fields.get("format_version") != str(FORMAT_VERSION):
        raise ModelFormatError(
            f"unsupported format_version {fields.get('format_version')!r}"
        )
    if fields.get("dtype", "float32") != "float32":
        raise ModelFormatError(f"unsupported dtype {fields.get('dtype')!r}")
    try:
        input_shape = tuple(int(d) for d in fields["input_shape"].split("x"))
        layer_count = int(fields["layer_count"])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad manifest header: {exc}") from exc
    if sorted(layers) != list(range(layer_count)):
        raise ModelFormatError("layer list does not match layer_count")

    spec = NetworkSpec(
        input_shape=input_shape,  # type: ignore[arg-type]
        layers=tuple(_layer_from_line(layers[i]) for i in range(layer_count)),
    )
    try:
        shape_infer(spec)
    except ShapeError as exc:
        raise ModelFormatError(f"inconsistent architecture: {exc}") from exc
    expected = nn.param_shapes(spec)

    if sorted(shapes) != sorted(expected):
        raise ModelFormatError(
            f"param layers {sorted(shapes)} != inferred {sorted(expected)}"
        )
    for i in sorted(expected):
        w_shape, b_shape = expected[i]
        want = f"{_shape_str(w_shape)} {_shape_str(b_shape)}"
        if shapes.get(i) != want:
            raise ModelFormatError(
                f"param.{i} shape {shapes.get(i)!r} != inferred {want!r}"
            )

    try:
        with open(path + ".bin", "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read blob: {exc}") from exc
    total = sum(
        int(np.prod(w)) + int(np.prod(b)) for w, b in expected.values()
    )
    if len(blob) != 4 * total:
        raise ModelFormatError(f"blob has {len(blob)} bytes, expected {4 * total}")

    params: ParamSet = {}
    offset = 0
    for i in sorted(expected):
        w_shape, b_shape = expected[i]
        w_n = int(np.prod(w_shape))
        b_n = int(np.prod(b_shape))
        w = np.frombuffer(blob, dtype="<f4", count=w_n, offset=offset).reshape(w_shape)
        offset += 4 * w_n
        b = np.frombuffer(blob, dtype="<f4", count=b_n, offset=offset).reshape(b_shape)
        offset += 4 * b_n
        params[i] = (w.copy(), b.copy())

    cfg = config_from_pairs(config_pairs) if config_pairs else TrainConfig()
    return ModelCheckpoint(spec=spec, params=params, config=cfg)


def emit_history_csv(history: list[EpochMetrics], path) -> None:
    """epoch,train_loss,train_acc,train_prec,train_rec,val_loss,val_acc,val_prec,val_rec."""
    if not history:
        raise ValueError("history is empty")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            "epoch,train_loss,train_acc,train_prec,train_rec,"
            "val_loss,val_acc,val_prec,val_rec\n"
        )
        for row in history:
            fh.write(
                f"{row.epoch},{row.train_loss:.6f},{row.train_acc:.6f},"
                f"{row.train_prec:.6f},{row.train_rec:.6f},{row.val_loss:.6f},"
                f"{row.val_acc:.6f},{row.val_prec:.6f},{row.val_rec:.6f}\n"
            )
