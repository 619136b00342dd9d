"""A small trainable CNN with per-step hooks exposing weights and activations.

The stack is conv -> relu -> pool -> conv -> relu -> pool -> dense -> relu ->
softmax, trained with plain SGD on mean cross-entropy.  Everything runs in
float64 so gradient checks and golden files are deterministic.  Convolutions
use valid padding and stride 1; pooling is non-overlapping 2x2 max with the
trailing odd row/column dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite ("numerical divergence")."""

    def __init__(self, step: int):
        super().__init__(f"numerical divergence at step {step}")
        self.step = step


# ---------------------------------------------------------------------------
# Pure ops


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(0, x)


def _window_columns(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """[b,h,w,c] -> [b*oh*ow, kh*kw*c] patch matrix (row index order p, q, r)."""
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))  # [b,oh,ow,c,p,q]
    b, oh, ow = windows.shape[:3]
    return windows.transpose(0, 1, 2, 4, 5, 3).reshape(b * oh * ow, kh * kw * x.shape[3])


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid-padding stride-1 convolution.

    x [b,h,w,c], kernel [kh,kw,c,f], bias [f] -> [b, h-kh+1, w-kw+1, f] with
    out[s,i,j,k] = bias[k] + sum_{p,q,r} x[s,i+p,j+q,r] * kernel[p,q,r,k].
    """
    b, h, w, c = x.shape
    kh, kw, kc, f = kernel.shape
    if kc != c:
        raise ShapeError(f"kernel expects {kc} channels, input has {c}")
    if h < kh or w < kw:
        raise ShapeError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
    cols = _window_columns(x, kh, kw)
    out = cols @ kernel.reshape(kh * kw * c, f) + bias
    return out.reshape(b, h - kh + 1, w - kw + 1, f)


def conv2d_backward(x, kernel, dout, need_dx: bool = True):
    """Gradients of conv2d: returns (dx, dkernel, dbias) for upstream dout."""
    b, h, w, c = x.shape
    kh, kw, _, f = kernel.shape
    cols = _window_columns(x, kh, kw)
    dflat = dout.reshape(-1, f)
    dkernel = (cols.T @ dflat).reshape(kh, kw, c, f)
    dbias = dout.sum(axis=(0, 1, 2))
    if not need_dx:
        return None, dkernel, dbias
    padded = np.pad(dout, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    dcols = _window_columns(padded, kh, kw)  # [b*h*w, kh*kw*f]
    flipped = kernel[::-1, ::-1, :, :].transpose(0, 1, 3, 2).reshape(kh * kw * f, c)
    dx = (dcols @ flipped).reshape(b, h, w, c)
    return dx, dkernel, dbias


def maxpool(x: np.ndarray, size: int = 2) -> np.ndarray:
    """Non-overlapping size x size max pooling per channel; odd remainder dropped."""
    b, h, w, f = x.shape
    if h < size or w < size:
        raise ShapeError(f"input {h}x{w} too small for pooling size {size}")
    oh, ow = h // size, w // size
    cropped = x[:, : oh * size, : ow * size, :]
    return cropped.reshape(b, oh, size, ow, size, f).max(axis=(2, 4))


def maxpool_backward(x, dout, size: int = 2):
    """Route pooled gradients back to the (first) argmax of each window."""
    b, h, w, f = x.shape
    oh, ow = h // size, w // size
    flat = (
        x[:, : oh * size, : ow * size, :]
        .reshape(b, oh, size, ow, size, f)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, oh, ow, size * size, f)
    )
    arg = flat.argmax(axis=3)
    grad = np.zeros_like(flat)
    np.put_along_axis(grad, arg[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    dx = np.zeros_like(x)
    dx[:, : oh * size, : ow * size, :] = (
        grad.reshape(b, oh, ow, size, size, f)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, oh * size, ow * size, f)
    )
    return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Network specification


@dataclass(frozen=True)
class Conv:
    filters: int
    window: int = 3


@dataclass(frozen=True)
class MaxPool:
    size: int = 2


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class SoftmaxOutput:
    classes: int


LayerSpec = Conv | MaxPool | Dense | SoftmaxOutput


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list plus the input image shape [height, width, channels]."""

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int] = (28, 28, 1)

    def __post_init__(self):
        self.chain_shapes()  # raises if adjacent layers are inconsistent

    def chain_shapes(self) -> list[tuple]:
        """Propagate shapes through the stack, raising ShapeError on mismatch."""
        h, w, c = self.input_shape
        shapes: list[tuple] = [(h, w, c)]
        flat: int | None = None
        for layer in self.layers:
            if isinstance(layer, Conv):
                if flat is not None:
                    raise ShapeError("conv layer after flattening")
                if h < layer.window or w < layer.window:
                    raise ShapeError(f"input {h}x{w} too small for {layer.window}x{layer.window} conv")
                h, w = h - layer.window + 1, w - layer.window + 1
                c = layer.filters
                shapes.append((h, w, c))
            elif isinstance(layer, MaxPool):
                if flat is not None:
                    raise ShapeError("pool layer after flattening")
                if h < layer.size or w < layer.size:
                    raise ShapeError(f"input {h}x{w} too small for pooling size {layer.size}")
                h, w = h // layer.size, w // layer.size
                shapes.append((h, w, c))
            elif isinstance(layer, (Dense, SoftmaxOutput)):
                if flat is None:
                    flat = h * w * c
                units = layer.units if isinstance(layer, Dense) else layer.classes
                shapes.append((flat, units))
                flat = units
            else:
                raise TypeError(f"unknown layer spec {layer!r}")
        if not self.layers or not isinstance(self.layers[-1], SoftmaxOutput):
            raise ShapeError("network must end in a softmax output layer")
        return shapes

    @property
    def classes(self) -> int:
        return self.layers[-1].classes


def default_spec() -> NetworkSpec:
    """conv(16,3x3) -> pool(2) -> conv(32,3x3) -> pool(2) -> dense(512) -> softmax(10)."""
    return NetworkSpec(
        layers=(Conv(16, 3), MaxPool(2), Conv(32, 3), MaxPool(2), Dense(512), SoftmaxOutput(10)),
        input_shape=(28, 28, 1),
    )


# ---------------------------------------------------------------------------
# Parameterized layers


class ConvLayer:
    def __init__(self, kernel: np.ndarray, bias: np.ndarray):
        self.kernel = kernel  # [w,w,c,f]
        self.bias = bias  # [f]
        self._x = None
        self._pre = None

    @property
    def filters(self) -> int:
        return self.kernel.shape[3]

    def forward(self, x):
        self._x = x
        self._pre = conv2d(x, self.kernel, self.bias)
        return relu(self._pre)

    def backward(self, dout, need_dx: bool = True):
        dpre = np.where(self._pre > 0, dout, 0.0)
        dx, dk, db = conv2d_backward(self._x, self.kernel, dpre, need_dx=need_dx)
        return dx, {"kernel": dk, "bias": db}

    def params(self):
        return {"kernel": self.kernel, "bias": self.bias}


class MaxPoolLayer:
    def __init__(self, size: int = 2):
        self.size = size
        self._x = None

    def forward(self, x):
        self._x = x
        return maxpool(x, self.size)

    def backward(self, dout):
        return maxpool_backward(self._x, dout, self.size), {}

    def params(self):
        return {}


class DenseLayer:
    def __init__(self, weight: np.ndarray, bias: np.ndarray, activation: str):
        self.weight = weight  # [in, out]
        self.bias = bias
        self.activation = activation  # "relu" or "linear"
        self._x = None
        self._pre = None

    def forward(self, x):
        self._x = x
        self._pre = x @ self.weight + self.bias
        return relu(self._pre) if self.activation == "relu" else self._pre

    def backward(self, dout):
        dpre = np.where(self._pre > 0, dout, 0.0) if self.activation == "relu" else dout
        dw = self._x.T @ dpre
        db = dpre.sum(axis=0)
        dx = dpre @ self.weight.T
        return dx, {"weight": dw, "bias": db}

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


# ---------------------------------------------------------------------------
# Network


@dataclass
class StepRecord:
    """Immutable snapshot handed to the visualization adaptor after a step."""

    step: int
    loss: float
    activations: dict[int, np.ndarray] = field(default_factory=dict)  # conv id -> [b,m,m,f] post-relu
    weights: dict[int, np.ndarray] = field(default_factory=dict)  # conv id -> [w,w,c,f]
    biases: dict[int, np.ndarray] = field(default_factory=dict)


class Network:
    """Owns the layer parameters and the monotonically increasing step counter."""

    def __init__(self, spec: NetworkSpec, layers: list, step_counter: int = 0):
        self.spec = spec
        self.layers = layers
        self.step_counter = step_counter
        # conv layer ids are assigned in network order: 0, 1, ...
        self.conv_ids = [i for i, l in enumerate(layers) if isinstance(l, ConvLayer)]

    @classmethod
    def from_spec(cls, spec: NetworkSpec, seed: int = 0) -> "Network":
        """Initialize all parameters uniformly in [-0.1, 0.1] from a seeded generator."""
        rng = np.random.default_rng(seed)
        h, w, c = spec.input_shape
        flat: int | None = None
        layers: list = []
        for ls in spec.layers:
            if isinstance(ls, Conv):
                kernel = rng.uniform(-0.1, 0.1, (ls.window, ls.window, c, ls.filters))
                bias = rng.uniform(-0.1, 0.1, ls.filters)
                layers.append(ConvLayer(kernel, bias))
                h, w, c = h - ls.window + 1, w - ls.window + 1, ls.filters
            elif isinstance(ls, MaxPool):
                layers.append(MaxPoolLayer(ls.size))
                h, w = h // ls.size, w // ls.size
            else:
                if flat is None:
                    flat = h * w * c
                units = ls.units if isinstance(ls, Dense) else ls.classes
                weight = rng.uniform(-0.1, 0.1, (flat, units))
                bias = rng.uniform(-0.1, 0.1, units)
                activation = "relu" if isinstance(ls, Dense) else "linear"
                layers.append(DenseLayer(weight, bias, activation))
                flat = units
        return cls(spec, layers)

    def conv_layer(self, conv_id: int) -> ConvLayer:
        return self.layers[self.conv_ids[conv_id]]

    def filter_counts(self) -> list[int]:
        return [self.conv_layer(i).filters for i in range(len(self.conv_ids))]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Forward pass to logits; layer caches are left in place for backward."""
        out = x
        flattened = False
        for layer in self.layers:
            if isinstance(layer, DenseLayer) and not flattened:
                out = out.reshape(out.shape[0], -1)
                flattened = True
            out = layer.forward(out)
        return out

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def loss_and_grads(self, images: np.ndarray, labels: np.ndarray):
        """Batch-summed cross-entropy loss and gradients for every parameter.

        The objective is the sum (not the mean) of per-sample cross-entropies:
        with the fixed [-0.1, 0.1] initialization and plain SGD, per-batch
        mean gradients are so small at desk scale that lr=0.001 barely moves
        in the first thousand steps.
        """
        n = images.shape[0]
        logits = self.forward(images)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -logp[np.arange(n), labels].sum()
        dlogits = np.exp(logp)
        dlogits[np.arange(n), labels] -= 1.0

        grads: dict[int, dict[str, np.ndarray]] = {}
        dout = dlogits
        unflattened = False
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            if isinstance(layer, (ConvLayer, MaxPoolLayer)) and not unflattened:
                # crossing back over the implicit flatten
                dout = dout.reshape(self._conv_output_shape(idx, n))
                unflattened = True
            if isinstance(layer, ConvLayer):
                dout, g = layer.backward(dout, need_dx=idx > 0)
            else:
                dout, g = layer.backward(dout)
            if g:
                grads[idx] = g
        return loss, grads

    def _conv_output_shape(self, idx: int, n: int) -> tuple[int, int, int, int]:
        """Output shape of layer idx for batch size n (used to undo flattening)."""
        h, w, c = self.spec.input_shape
        for ls in self.spec.layers[: idx + 1]:
            if isinstance(ls, Conv):
                h, w, c = h - ls.window + 1, w - ls.window + 1, ls.filters
            elif isinstance(ls, MaxPool):
                h, w = h // ls.size, w // ls.size
        return (n, h, w, c)

    def apply_gradients(self, grads, lr: float):
        for idx, layer_grads in grads.items():
            params = self.layers[idx].params()
            for name, g in layer_grads.items():
                params[name] -= lr * g

    def train_step(self, images: np.ndarray, labels: np.ndarray, lr: float):
        """One SGD step; returns (loss, StepRecord with post-relu conv activations)."""
        if images.shape[0] == 0:
            raise ValueError("empty batch")
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        loss, grads = self.loss_and_grads(images, labels)
        self.step_counter += 1
        if not np.isfinite(loss):
            raise TrainingDiverged(self.step_counter)
        self.apply_gradients(grads, lr)
        record = StepRecord(step=self.step_counter, loss=float(loss))
        for cid in range(len(self.conv_ids)):
            layer = self.conv_layer(cid)
            record.activations[cid] = relu(layer._pre).copy()
            record.weights[cid] = layer.kernel.copy()
            record.biases[cid] = layer.bias.copy()
        return loss, record

    def evaluate(self, images: np.ndarray, labels: np.ndarray, batch: int = 256) -> float:
        """Fraction of argmax-correct predictions."""
        if images.shape[0] == 0:
            raise ValueError("empty dataset")
        correct = 0
        for start in range(0, images.shape[0], batch):
            logits = self.forward(images[start : start + batch])
            correct += int((logits.argmax(axis=1) == labels[start : start + batch]).sum())
        return correct / images.shape[0]

    def flat_weights(self, conv_id: int = 0) -> np.ndarray:
        """Row-major flattened kernel of a conv layer (trajectory coordinates)."""
        return self.conv_layer(conv_id).kernel.ravel()
