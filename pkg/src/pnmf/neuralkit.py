"""Minimal neural-network kernel shared by the classifier and denoiser.

Five layer kinds (dense, conv1d, relu, flatten, softmax), exact
reverse-mode gradients, Adam, and a deterministic training loop.  No
external ML framework: the nets here are a few thousand parameters and
the whole pipeline must be bit-reproducible.

Matrix products use ``np.einsum`` without optimization on purpose: its
per-row accumulation order is fixed, so a sample's activations are
bit-identical no matter how the batch is composed, which the defense
and attack stages rely on.

Weights are stored float32 (the container precision); all arithmetic
runs in float64 on upcast copies.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from pnmf.errors import BadConfig, ShapeError, StateError, TrainingDiverged
from pnmf.rng import keyed_rng


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    channels_in: int = 0
    channels_out: int = 0
    kernel: int = 0
    stride: int = 1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 60
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainLog:
    iter_loss: list = field(default_factory=list)
    epoch_train_metric: list = field(default_factory=list)
    epoch_val_metric: list = field(default_factory=list)
    metric_name: str = "accuracy"
    best_epoch: int = -1


@dataclass
class NetModel:
    layers: list
    weights: np.ndarray  # float32, flat
    train_config: TrainConfig = field(default_factory=TrainConfig)


def dense(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec("dense", in_dim, out_dim)


def conv1d(channels_in: int, channels_out: int, kernel: int, stride: int, width_in: int) -> LayerSpec:
    if kernel > width_in:
        raise BadConfig(f"kernel {kernel} exceeds input width {width_in}")
    width_out = (width_in - kernel) // stride + 1
    return LayerSpec(
        "conv1d",
        in_dim=channels_in * width_in,
        out_dim=channels_out * width_out,
        channels_in=channels_in,
        channels_out=channels_out,
        kernel=kernel,
        stride=stride,
    )


def relu(dim: int) -> LayerSpec:
    return LayerSpec("relu", dim, dim)


def flatten(dim: int) -> LayerSpec:
    return LayerSpec("flatten", dim, dim)


def softmax(dim: int) -> LayerSpec:
    return LayerSpec("softmax", dim, dim)


def param_count(layer: LayerSpec) -> int:
    if layer.kind == "dense":
        return layer.in_dim * layer.out_dim + layer.out_dim
    if layer.kind == "conv1d":
        return layer.channels_out * layer.channels_in * layer.kernel + layer.channels_out
    return 0


def total_params(layers) -> int:
    return sum(param_count(l) for l in layers)


def validate_stack(layers):
    for prev, nxt in zip(layers, layers[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ShapeError(
                f"layer dims do not chain: {prev.kind}({prev.out_dim}) -> {nxt.kind}({nxt.in_dim})"
            )


def init_model(layers, seed: int, train_config: TrainConfig | None = None) -> NetModel:
    """Seeded uniform Glorot-style initialization, biases zero."""
    validate_stack(list(layers))
    rng = keyed_rng(seed, "net-init")
    chunks = []
    for layer in layers:
        n = param_count(layer)
        if n == 0:
            continue
        if layer.kind == "dense":
            fan_in, fan_out = layer.in_dim, layer.out_dim
            n_w = fan_in * fan_out
        else:
            fan_in = layer.channels_in * layer.kernel
            fan_out = layer.channels_out * layer.kernel
            n_w = layer.channels_out * layer.channels_in * layer.kernel
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=n_w)
        b = np.zeros(n - n_w)
        chunks.append(np.concatenate([w, b]))
    weights = np.concatenate(chunks) if chunks else np.zeros(0)
    return NetModel(
        layers=list(layers),
        weights=weights.astype(np.float32),
        train_config=train_config or TrainConfig(),
    )


def _layer_params(layer: LayerSpec, theta: np.ndarray, offset: int):
    """Slice (weight, bias) views for one layer out of the flat vector."""
    if layer.kind == "dense":
        n_w = layer.in_dim * layer.out_dim
        w = theta[offset : offset + n_w].reshape(layer.in_dim, layer.out_dim)
        b = theta[offset + n_w : offset + n_w + layer.out_dim]
        return w, b, offset + n_w + layer.out_dim
    if layer.kind == "conv1d":
        n_w = layer.channels_out * layer.channels_in * layer.kernel
        w = theta[offset : offset + n_w].reshape(
            layer.channels_out, layer.channels_in, layer.kernel
        )
        b = theta[offset + n_w : offset + n_w + layer.channels_out]
        return w, b, offset + n_w + layer.channels_out
    return None, None, offset


def forward(model: NetModel, batch, weights=None, cache=None, stop_before_softmax=False):
    """Evaluate the stack on a batch (rows = samples).

    ``weights`` overrides the stored parameter vector (used by the
    finite-difference tests and the training loop, which keeps a
    float64 working copy).  When ``cache`` is a list, per-layer inputs
    are appended for a later backward pass.  ``stop_before_softmax``
    returns logits when the final layer is a softmax.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != model.layers[0].in_dim:
        raise ShapeError(
            f"input dim {x.shape[1]} does not match first layer ({model.layers[0].in_dim})"
        )
    theta = np.asarray(model.weights if weights is None else weights, dtype=np.float64)
    offset = 0
    for layer in model.layers:
        if stop_before_softmax and layer is model.layers[-1] and layer.kind == "softmax":
            break
        w, b, offset = _layer_params(layer, theta, offset)
        if cache is not None:
            cache.append(x)
        if layer.kind == "dense":
            x = np.einsum("nd,do->no", x, w) + b
        elif layer.kind == "conv1d":
            x3 = x.reshape(x.shape[0], layer.channels_in, -1)
            windows = sliding_window_view(x3, layer.kernel, axis=2)[:, :, :: layer.stride, :]
            x = np.einsum("ncwk,ock->now", windows, w) + b[None, :, None]
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "relu":
            x = np.maximum(x, 0.0)
        elif layer.kind == "flatten":
            pass
        elif layer.kind == "softmax":
            x = _softmax_rows(x)
        else:
            raise BadConfig(f"unknown layer kind {layer.kind!r}")
    return x


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def backward(model: NetModel, cache, upstream, weights=None, stop_before_softmax=False):
    """Reverse pass given upstream = dLoss/d(output).

    Returns ``(param_grad, input_grad)``.  ``cache`` must come from the
    matching forward call.
    """
    if cache is None or not cache:
        raise StateError("backward requires the forward cache for this batch")
    theta = np.asarray(model.weights if weights is None else weights, dtype=np.float64)
    layers = list(model.layers)
    if stop_before_softmax and layers and layers[-1].kind == "softmax":
        layers = layers[:-1]
    if len(cache) != len(layers):
        raise StateError("cache length does not match layer count")

    offsets = []
    offset = 0
    for layer in layers:
        offsets.append(offset)
        offset += param_count(layer)
    grad_theta = np.zeros_like(theta)
    g = np.asarray(upstream, dtype=np.float64)

    for layer, x, off in zip(reversed(layers), reversed(cache), reversed(offsets)):
        w, b, _ = _layer_params(layer, theta, off)
        if layer.kind == "dense":
            gw = np.einsum("nd,no->do", x, g)
            gb = g.sum(axis=0)
            grad_theta[off : off + gw.size] = gw.ravel()
            grad_theta[off + gw.size : off + gw.size + gb.size] = gb
            g = np.einsum("no,do->nd", g, w)
        elif layer.kind == "conv1d":
            n = x.shape[0]
            x3 = x.reshape(n, layer.channels_in, -1)
            width_in = x3.shape[2]
            windows = sliding_window_view(x3, layer.kernel, axis=2)[:, :, :: layer.stride, :]
            width_out = windows.shape[2]
            g3 = g.reshape(n, layer.channels_out, width_out)
            gw = np.einsum("ncwk,now->ock", windows, g3)
            gb = g3.sum(axis=(0, 2))
            grad_theta[off : off + gw.size] = gw.ravel()
            grad_theta[off + gw.size : off + gw.size + gb.size] = gb
            gx = np.zeros_like(x3)
            stop = layer.stride * width_out
            for j in range(layer.kernel):
                gx[:, :, j : j + stop : layer.stride] += np.einsum(
                    "now,oc->ncw", g3, w[:, :, j]
                )
            g = gx.reshape(n, -1)
        elif layer.kind == "relu":
            g = g * (x > 0.0)
        elif layer.kind == "flatten":
            pass
        elif layer.kind == "softmax":
            y = _softmax_rows(x)
            g = y * (g - np.sum(g * y, axis=1, keepdims=True))
    return grad_theta, g


def vjp_input(model: NetModel, batch, upstream, weights=None):
    """Gradient of ``upstream . output`` w.r.t. the batch inputs."""
    cache = []
    forward(model, batch, weights=weights, cache=cache)
    _, g = backward(model, cache, upstream, weights=weights)
    return g


def cross_entropy_from_logits(logits, labels):
    """Per-sample CE of softmax(logits); labels are int class indices."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(z.shape[0]), labels]


def _ce_grad_at_logits(logits, labels):
    p = _softmax_rows(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels).astype(int)
    g = p.copy()
    g[np.arange(g.shape[0]), labels] -= 1.0
    return g


def input_gradient(model: NetModel, batch, loss: str, targets, weights=None):
    """Per-sample gradient of the per-sample loss w.r.t. each input row.

    ``loss`` is ``cross_entropy`` (softmax head folded into the loss)
    or ``mse`` (per-sample mean over output dims).
    """
    cache = []
    if loss == "cross_entropy":
        logits = forward(model, batch, weights=weights, cache=cache, stop_before_softmax=True)
        upstream = _ce_grad_at_logits(logits, targets)
        _, g = backward(model, cache, upstream, weights=weights, stop_before_softmax=True)
        return g
    if loss == "mse":
        out = forward(model, batch, weights=weights, cache=cache)
        target = np.asarray(targets, dtype=np.float64)
        upstream = 2.0 * (out - target) / out.shape[1]
        _, g = backward(model, cache, upstream, weights=weights)
        return g
    raise BadConfig(f"unknown loss {loss!r}")


def _batch_loss_and_grad(model, theta, xb, yb, loss, wb=None):
    # non-finite losses surface as TrainingDiverged, not warnings
    with np.errstate(over="ignore", invalid="ignore"):
        cache = []
        if loss == "cross_entropy":
            logits = forward(model, xb, weights=theta, cache=cache, stop_before_softmax=True)
            losses = cross_entropy_from_logits(logits, yb)
            upstream = _ce_grad_at_logits(logits, yb) / xb.shape[0]
            grad, _ = backward(model, cache, upstream, weights=theta, stop_before_softmax=True)
            return float(losses.mean()), grad
        out = forward(model, xb, weights=theta, cache=cache)
        diff = out - yb
        if wb is not None:
            diff_w = diff * wb[:, None]
            value = float(np.mean(diff * diff_w))
            upstream = 2.0 * diff_w / diff.size
        else:
            value = float(np.mean(diff * diff))
            upstream = 2.0 * diff / diff.size
        grad, _ = backward(model, cache, upstream, weights=theta)
        return value, grad


def _val_metric(model, theta, x_val, y_val, loss):
    if loss == "cross_entropy":
        logits = forward(model, x_val, weights=theta, stop_before_softmax=True)
        return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y_val).astype(int)))
    out = forward(model, x_val, weights=theta)
    return float(np.mean((out - np.asarray(y_val, dtype=np.float64)) ** 2))


def train(model: NetModel, data, targets, loss: str, config: TrainConfig,
          val_data=None, val_targets=None, sample_weight=None):
    """Adam over seeded shuffled mini-batches; keeps the best-val weights.

    For ``cross_entropy`` the validation metric is accuracy (higher
    wins); for ``mse`` it is the validation MSE (lower wins).  Without
    a validation set the final weights are kept.  ``sample_weight``
    (mse only) rescales each sample's squared-error contribution; the
    validation metric stays unweighted.  Returns a new NetModel
    (float32 weights) plus the TrainLog.
    """
    if loss not in ("cross_entropy", "mse"):
        raise BadConfig(f"unknown loss {loss!r}")
    if config.epochs < 1:
        raise BadConfig("epochs must be >= 1")
    if sample_weight is not None and loss != "mse":
        raise BadConfig("sample_weight is only supported for the mse loss")
    x = np.asarray(data, dtype=np.float64)
    n = x.shape[0]
    y = np.asarray(targets)
    w = None if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    theta = np.asarray(model.weights, dtype=np.float64).copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    rng = keyed_rng(config.seed, "train-shuffle")
    log = TrainLog(metric_name="accuracy" if loss == "cross_entropy" else "mse")
    higher_is_better = loss == "cross_entropy"
    best_metric = None
    best_theta = theta.copy()
    step = 0
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch_loss, grad = _batch_loss_and_grad(
                model, theta, x[idx], y[idx], loss, None if w is None else w[idx]
            )
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(step)
            step += 1
            m = config.beta1 * m + (1.0 - config.beta1) * grad
            v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
            m_hat = m / (1.0 - config.beta1**step)
            v_hat = v / (1.0 - config.beta2**step)
            theta = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
            log.iter_loss.append(batch_loss)
        log.epoch_train_metric.append(_val_metric(model, theta, x, y, loss))
        if val_data is not None:
            metric = _val_metric(model, theta, val_data, val_targets, loss)
            log.epoch_val_metric.append(metric)
            better = (
                best_metric is None
                or (higher_is_better and metric > best_metric)
                or (not higher_is_better and metric < best_metric)
            )
            if better:
                best_metric = metric
                best_theta = theta.copy()
                log.best_epoch = epoch
        else:
            best_theta = theta
            log.best_epoch = epoch
    trained = NetModel(
        layers=list(model.layers),
        weights=best_theta.astype(np.float32),
        train_config=config,
    )
    return trained, log


def save_architecture(model: NetModel, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "layers": [asdict(l) for l in model.layers],
        "train_config": asdict(model.train_config),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_architecture(path, weights) -> NetModel:
    with open(path) as fh:
        payload = json.load(fh)
    layers = [LayerSpec(**l) for l in payload["layers"]]
    model = NetModel(
        layers=layers,
        weights=np.asarray(weights, dtype=np.float32).ravel(),
        train_config=TrainConfig(**payload["train_config"]),
    )
    if model.weights.size != total_params(layers):
        raise ShapeError(
            f"weight vector has {model.weights.size} entries, stack needs {total_params(layers)}"
        )
    return model
