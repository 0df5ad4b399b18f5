"""Minimal tensor network: forward/backward for every layer of the damage CNN.

Conventions (fixed so shapes and numbers are reproducible):
  - activations are row-major float arrays shaped H x W x C, batched N x H x W x C
  - convolution is cross-correlation, valid padding, stride 1
  - max pooling is 2x2 stride 2, trailing odd row/col dropped, ties break to the
    first cell in row-major window order
  - ReLU subgradient at exactly 0 is 0
  - dropout is inverted (scaled at train time), identity at inference
  - weights are Glorot-uniform, biases zero, fully determined by the seed

All functions preserve the input dtype: the training path runs float32, the
gradient-check harness feeds float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

ParamSet = dict[int, tuple[np.ndarray, np.ndarray]]
GradSet = dict[int, tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # Conv2D | MaxPool2 | ReLU | Flatten | Dense | Dropout | Sigmoid
    filters: int = 0
    kernel: int = 3
    pool: int = 2
    units: int = 0
    rate: float = 0.0


def conv2d(filters: int, kernel: int = 3) -> LayerSpec:
    return LayerSpec(kind="Conv2D", filters=filters, kernel=kernel)


def maxpool2(pool: int = 2) -> LayerSpec:
    return LayerSpec(kind="MaxPool2", pool=pool)


def relu() -> LayerSpec:
    return LayerSpec(kind="ReLU")


def flatten() -> LayerSpec:
    return LayerSpec(kind="Flatten")


def dense(units: int) -> LayerSpec:
    return LayerSpec(kind="Dense", units=units)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec(kind="Dropout", rate=rate)


def sigmoid() -> LayerSpec:
    return LayerSpec(kind="Sigmoid")


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]  # H, W, C
    layers: tuple[LayerSpec, ...]

    def without_final_sigmoid(self) -> "NetworkSpec":
        """Training view: the trailing sigmoid is folded into the loss."""
        if not self.layers or self.layers[-1].kind != "Sigmoid":
            return self
        return NetworkSpec(self.input_shape, self.layers[:-1])


def _validate_layer(layer: LayerSpec) -> None:
    if layer.kind == "Conv2D":
        if layer.filters < 1:
            raise ShapeError(f"Conv2D filters must be >= 1, got {layer.filters}")
        if layer.kernel < 1:
            raise ShapeError(f"Conv2D kernel must be >= 1, got {layer.kernel}")
    elif layer.kind == "Dense" and layer.units < 1:
        raise ShapeError(f"Dense units must be >= 1, got {layer.units}")
    elif layer.kind == "Dropout" and not 0.0 <= layer.rate < 1.0:
        raise ShapeError(f"Dropout rate must be in [0, 1), got {layer.rate}")
    elif layer.kind == "MaxPool2" and layer.pool != 2:
        raise ShapeError(f"MaxPool2 pool size is fixed at 2, got {layer.pool}")


def shape_infer(spec: NetworkSpec) -> tuple[list[tuple[int, ...]], int]:
    """Per-layer output shapes plus total parameter count.

    Conv2D (valid, stride 1): H -> H-k+1; MaxPool2: H -> floor(H/2);
    Dense: vector length -> units. Raises ShapeError if any dim drops below 1.
    """
    shapes: list[tuple[int, ...]] = []
    cur: tuple[int, ...] = tuple(spec.input_shape)
    n_params = 0
    for layer in spec.layers:
        _validate_layer(layer)
        if layer.kind == "Conv2D":
            if len(cur) != 3:
                raise ShapeError(f"Conv2D needs H x W x C input, got {cur}")
            h, w, c = cur
            k = layer.kernel
            if h < k or w < k:
                raise ShapeError(f"Conv2D kernel {k} does not fit {h}x{w}")
            cur = (h - k + 1, w - k + 1, layer.filters)
            n_params += (k * k * c + 1) * layer.filters
        elif layer.kind == "MaxPool2":
            if len(cur) != 3:
                raise ShapeError(f"MaxPool2 needs H x W x C input, got {cur}")
            h, w, c = cur
            if h < 2 or w < 2:
                raise ShapeError(f"MaxPool2 needs dims >= 2, got {h}x{w}")
            cur = (h // 2, w // 2, c)
        elif layer.kind == "Flatten":
            cur = (int(np.prod(cur)),)
        elif layer.kind == "Dense":
            if len(cur) != 1:
                raise ShapeError(f"Dense needs a flat vector input, got {cur}")
            n_params += (cur[0] + 1) * layer.units
            cur = (layer.units,)
        elif layer.kind in ("ReLU", "Dropout", "Sigmoid"):
            pass
        else:
            raise ShapeError(f"unknown layer kind {layer.kind!r}")
        shapes.append(cur)
    return shapes, n_params


def param_shapes(
    spec: NetworkSpec,
) -> dict[int, tuple[tuple[int, ...], tuple[int, ...]]]:
    """(weight shape, bias shape) for each parametric layer index."""
    shapes: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {}
    cur: tuple[int, ...] = tuple(spec.input_shape)
    for idx, layer in enumerate(spec.layers):
        if layer.kind == "Conv2D":
            h, w, c = cur
            k = layer.kernel
            shapes[idx] = ((k, k, c, layer.filters), (layer.filters,))
            cur = (h - k + 1, w - k + 1, layer.filters)
        elif layer.kind == "Dense":
            shapes[idx] = ((cur[0], layer.units), (layer.units,))
            cur = (layer.units,)
        elif layer.kind == "MaxPool2":
            cur = (cur[0] // 2, cur[1] // 2, cur[2])
        elif layer.kind == "Flatten":
            cur = (int(np.prod(cur)),)
    return shapes


def init_params(spec: NetworkSpec, seed: int) -> ParamSet:
    """Glorot-uniform weights U(-a, a), a = sqrt(6/(fan_in+fan_out)); zero biases.

    Conv fans count the receptive field: fan_in = k*k*Cin, fan_out = k*k*Cout.
    Draws happen in layer order, so the result is bit-determined by the seed.
    """
    rng = np.random.default_rng(seed)
    params: ParamSet = {}
    cur: tuple[int, ...] = tuple(spec.input_shape)
    for idx, layer in enumerate(spec.layers):
        if layer.kind == "Conv2D":
            h, w, c = cur
            k = layer.kernel
            a = np.sqrt(6.0 / (k * k * c + k * k * layer.filters))
            weights = rng.uniform(-a, a, size=(k, k, c, layer.filters))
            params[idx] = (
                weights.astype(np.float32),
                np.zeros(layer.filters, dtype=np.float32),
            )
            cur = (h - k + 1, w - k + 1, layer.filters)
        elif layer.kind == "Dense":
            fan_in = cur[0]
            a = np.sqrt(6.0 / (fan_in + layer.units))
            weights = rng.uniform(-a, a, size=(fan_in, layer.units))
            params[idx] = (
                weights.astype(np.float32),
                np.zeros(layer.units, dtype=np.float32),
            )
            cur = (layer.units,)
        elif layer.kind == "MaxPool2":
            cur = (cur[0] // 2, cur[1] // 2, cur[2])
        elif layer.kind == "Flatten":
            cur = (int(np.prod(cur)),)
    return params


# -- layer forward/backward ----------------------------------------------
#
# Each op accepts a single sample (H x W x C / vector) or a batch with a
# leading N axis; the batch axis is added and stripped transparently.


def _as_batch(x: np.ndarray, sample_ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == sample_ndim:
        return x[None], False
    if x.ndim == sample_ndim + 1:
        return x, True
    raise ShapeError(f"expected {sample_ndim}- or {sample_ndim + 1}-d input, got {x.ndim}-d")


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, Ho*Wo, k*k*C) patches in (u, v, c) flattening order."""
    n = x.shape[0]
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # N, Ho, Wo, C, k, k
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(
        n, -1, k * k * x.shape[3]
    )


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[i,j,o] = b[o] + sum_{u,v,c} x[i+u,j+v,c] * w[u,v,c,o]."""
    xb, batched = _as_batch(x, 3)
    k = w.shape[0]
    if xb.shape[3] != w.shape[2]:
        raise ShapeError(f"input channels {xb.shape[3]} != kernel channels {w.shape[2]}")
    if xb.shape[1] < k or xb.shape[2] < k:
        raise ShapeError(f"kernel {k} does not fit input {xb.shape[1]}x{xb.shape[2]}")
    ho, wo = xb.shape[1] - k + 1, xb.shape[2] - k + 1
    cols = _im2col(xb, k)
    out = cols @ w.reshape(-1, w.shape[3]) + b
    out = out.reshape(xb.shape[0], ho, wo, w.shape[3])
    return out if batched else out[0]


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of the forward contraction."""
    xb, batched = _as_batch(x, 3)
    gb, _ = _as_batch(grad_out, 3)
    k = w.shape[0]
    cout = w.shape[3]
    n, ho, wo = gb.shape[0], gb.shape[1], gb.shape[2]
    if gb.shape[3] != cout or n != xb.shape[0]:
        raise ShapeError("grad_out shape inconsistent with forward")

    go_flat = gb.reshape(n * ho * wo, cout)
    cols = _im2col(xb, k).reshape(n * ho * wo, -1)
    grad_w = (cols.T @ go_flat).reshape(w.shape)
    grad_b = go_flat.sum(axis=0)

    # grad_x = full correlation of grad_out with the spatially flipped kernel
    pad = k - 1
    go_pad = np.pad(gb, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    gcols = _im2col(go_pad, k).reshape(n * xb.shape[1] * xb.shape[2], -1)
    w_rot = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2)).reshape(
        k * k * cout, -1
    )
    grad_x = (gcols @ w_rot).reshape(xb.shape)
    if not batched:
        return grad_x[0], grad_w, grad_b
    return grad_x, grad_w, grad_b


@dataclass
class PoolCache:
    argmax: np.ndarray  # N x H2 x W2 x C indices into the flattened 2x2 window
    input_shape: tuple[int, ...]
    batched: bool


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, PoolCache]:
    xb, batched = _as_batch(x, 3)
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeError(f"MaxPool2 needs dims >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    win = xb[:, : 2 * h2, : 2 * w2].reshape(n, h2, 2, w2, 2, c)
    win = win.transpose(0, 1, 3, 2, 4, 5).reshape(n, h2, w2, 4, c)
    idx = win.argmax(axis=3)  # first max wins: row-major tie rule
    pooled = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    cache = PoolCache(argmax=idx, input_shape=xb.shape, batched=batched)
    return (pooled if batched else pooled[0]), cache


def maxpool2_backward(cache: PoolCache, grad_out: np.ndarray) -> np.ndarray:
    gb, _ = _as_batch(grad_out, 3)
    n, h, w, c = cache.input_shape
    h2, w2 = h // 2, w // 2
    flat = np.zeros((n, h2, w2, 4, c), dtype=gb.dtype)
    np.put_along_axis(flat, cache.argmax[:, :, :, None, :], gb[:, :, :, None, :], axis=3)
    grad = flat.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    grad = grad.reshape(n, 2 * h2, 2 * w2, c)
    if h % 2 or w % 2:  # dropped odd row/col gets zero gradient
        grad = np.pad(grad, ((0, 0), (0, h % 2), (0, w % 2), (0, 0)))
    return grad if cache.batched else grad[0]


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * y * (1.0 - y)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    xb, batched = _as_batch(x, 1)
    if xb.shape[1] != w.shape[0]:
        raise ShapeError(f"dense input {xb.shape[1]} != weight rows {w.shape[0]}")
    out = xb @ w + b
    return out if batched else out[0]


def dense_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xb, batched = _as_batch(x, 1)
    gb, _ = _as_batch(grad_out, 1)
    grad_w = xb.T @ gb
    grad_b = gb.sum(axis=0)
    grad_x = gb @ w.T
    return (grad_x if batched else grad_x[0]), grad_w, grad_b


def flatten_forward(x: np.ndarray, batched: bool) -> np.ndarray:
    return x.reshape(x.shape[0], -1) if batched else x.reshape(-1)


def flatten_backward(grad_out: np.ndarray, input_shape: tuple[int, ...]) -> np.ndarray:
    return grad_out.reshape(input_shape)


def dropout_forward(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout: kept cells scale by 1/(1-rate); inference is identity."""
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
    return x * mask, mask


def dropout_backward(mask: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * mask


# -- whole-network composition ---------------------------------------------


@dataclass
class NetworkCache:
    spec: NetworkSpec
    params: ParamSet
    batched: bool
    saved: list = field(default_factory=list)  # (kind, payload) per layer


def network_forward(
    spec: NetworkSpec,
    params: ParamSet,
    batch: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, NetworkCache]:
    """Layer-by-layer composition in spec order; returns outputs plus the cache
    needed by network_backward."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    xb, batched = _as_batch(batch, 3)
    if xb.shape[1:] != tuple(spec.input_shape):
        raise ShapeError(
            f"batch sample shape {xb.shape[1:]} != spec input {spec.input_shape}"
        )
    cache = NetworkCache(spec=spec, params=params, batched=batched)
    x = xb
    for idx, layer in enumerate(spec.layers):
        if layer.kind == "Conv2D":
            w, b = params[idx]
            cache.saved.append(("Conv2D", x))
            x = conv2d_forward(x, w, b)
        elif layer.kind == "MaxPool2":
            x, pool_cache = maxpool2_forward(x)
            cache.saved.append(("MaxPool2", pool_cache))
        elif layer.kind == "ReLU":
            cache.saved.append(("ReLU", x))
            x = relu_forward(x)
        elif layer.kind == "Flatten":
            cache.saved.append(("Flatten", x.shape))
            x = flatten_forward(x, batched=True)
        elif layer.kind == "Dense":
            w, b = params[idx]
            cache.saved.append(("Dense", x))
            x = dense_forward(x, w, b)
        elif layer.kind == "Dropout":
            x, mask = dropout_forward(x, layer.rate, rng, training)
            cache.saved.append(("Dropout", mask))
        elif layer.kind == "Sigmoid":
            x = sigmoid_forward(x)
            cache.saved.append(("Sigmoid", x))
        else:
            raise ShapeError(f"unknown layer kind {layer.kind!r}")
    return (x if batched else x[0]), cache


def network_backward(cache: NetworkCache, grad_out: np.ndarray) -> GradSet:
    """Gradients for every parameter tensor, walking layers in reverse."""
    spec, params = cache.spec, cache.params
    grads: GradSet = {}
    g = grad_out if cache.batched else grad_out[None]
    for idx in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[idx]
        kind, saved = cache.saved[idx]
        if kind != layer.kind:
            raise ShapeError("cache does not match spec layer order")
        if kind == "Conv2D":
            w, _ = params[idx]
            g, gw, gb = conv2d_backward(saved, w, g)
            grads[idx] = (gw, gb)
        elif kind == "MaxPool2":
            g = maxpool2_backward(saved, g)
        elif kind == "ReLU":
            g = relu_backward(saved, g)
        elif kind == "Flatten":
            g = flatten_backward(g, saved)
        elif kind == "Dense":
            w, _ = params[idx]
            g, gw, gb = dense_backward(saved, w, g)
            grads[idx] = (gw, gb)
        elif kind == "Dropout":
            g = dropout_backward(saved, g)
        elif kind == "Sigmoid":
            g = sigmoid_backward(saved, g)
    return grads
