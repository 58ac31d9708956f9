"""Network description, parameter bookkeeping and end-to-end passes.

A :class:`ModelSpec` is a flat list of :class:`LayerSpec`; a :class:`Model`
pairs it with a dict of parameter arrays keyed ``"<layer index>.<role>"``
where role is ``kernel``/``weights``/``bias``.
"""
from __future__ import annotations

import dataclasses
import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from specklenet import layers as L
from specklenet.errors import ShapeError
from specklenet.layers import Padding

MIN_INPUT_SIZE = 4


class LayerKind(enum.IntEnum):
    # values are the on-disk codes of the weight file
    CONV = 0
    DEPTHWISE = 1
    POINTWISE = 2
    RELU = 3
    GAP = 4
    DENSE = 5
    SOFTMAX = 6


PARAMETERIZED = (LayerKind.CONV, LayerKind.DEPTHWISE, LayerKind.POINTWISE, LayerKind.DENSE)


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    filters: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: Padding = Padding.SAME

    @property
    def has_params(self) -> bool:
        return self.kind in PARAMETERIZED


def conv(filters, kernel_size=3, stride=1, padding=Padding.SAME):
    return LayerSpec(LayerKind.CONV, filters, kernel_size, stride, Padding(padding))


def depthwise(kernel_size=3, stride=1, padding=Padding.SAME):
    return LayerSpec(LayerKind.DEPTHWISE, 0, kernel_size, stride, Padding(padding))


def pointwise(filters, stride=1):
    return LayerSpec(LayerKind.POINTWISE, filters, 1, stride, Padding.SAME)


def dense(width):
    return LayerSpec(LayerKind.DENSE, width)


RELU = LayerSpec(LayerKind.RELU)
GAP = LayerSpec(LayerKind.GAP)
SOFTMAX = LayerSpec(LayerKind.SOFTMAX)


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    input_channels: int = 1
    num_classes: int = 59

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Shapes of every parameter tensor; validates channel chaining."""
        shapes: dict[str, tuple[int, ...]] = {}
        channels = self.input_channels
        spatial = True
        last_width = None
        for i, layer in enumerate(self.layers):
            k = layer.kind
            if k in (LayerKind.CONV, LayerKind.POINTWISE, LayerKind.DEPTHWISE):
                if not spatial:
                    raise ShapeError(f"layer {i} ({k.name}) follows pooling; spatial layers must come first")
                if k is LayerKind.POINTWISE and layer.kernel_size != 1:
                    raise ShapeError(f"layer {i}: pointwise kernel must be 1, got {layer.kernel_size}")
                if layer.kernel_size < 1 or layer.kernel_size % 2 == 0 or layer.stride < 1:
                    raise ShapeError(f"layer {i}: bad kernel {layer.kernel_size} / stride {layer.stride}")
                ks = layer.kernel_size
                if k is LayerKind.DEPTHWISE:
                    shapes[f"{i}.kernel"] = (ks, ks, channels)
                    shapes[f"{i}.bias"] = (channels,)
                else:
                    if layer.filters < 1:
                        raise ShapeError(f"layer {i}: filters must be >= 1")
                    shapes[f"{i}.kernel"] = (ks, ks, channels, layer.filters)
                    shapes[f"{i}.bias"] = (layer.filters,)
                    channels = layer.filters
            elif k is LayerKind.GAP:
                if not spatial:
                    raise ShapeError(f"layer {i}: second pooling layer")
                spatial = False
            elif k is LayerKind.DENSE:
                if spatial:
                    raise ShapeError(f"layer {i}: dense layer before pooling")
                if layer.filters < 1:
                    raise ShapeError(f"layer {i}: dense width must be >= 1")
                shapes[f"{i}.weights"] = (channels, layer.filters)
                shapes[f"{i}.bias"] = (layer.filters,)
                channels = layer.filters
                last_width = layer.filters
            elif k is LayerKind.SOFTMAX:
                if i != len(self.layers) - 1:
                    raise ShapeError(f"layer {i}: softmax must be the last layer")
        if self.layers and last_width != self.num_classes:
            raise ShapeError(f"final dense width {last_width} != num_classes {self.num_classes}")
        return shapes


def canonical_spec(num_classes: int = 59) -> ModelSpec:
    return ModelSpec(
        layers=(
            conv(32, 3, stride=2), RELU,
            depthwise(3, stride=1), RELU,
            pointwise(128), RELU,
            pointwise(256, stride=2), RELU,
            GAP,
            dense(512), RELU,
            dense(256), RELU,
            dense(128), RELU,
            dense(num_classes),
            SOFTMAX,
        ),
        input_channels=1,
        num_classes=num_classes,
    )


def reduced_spec(num_classes: int = 5) -> ModelSpec:
    """Same topology as the canonical network at a fraction of the width."""
    return ModelSpec(
        layers=(
            conv(4, 3, stride=2), RELU,
            depthwise(3), RELU,
            pointwise(6), RELU,
            pointwise(8, stride=2), RELU,
            GAP,
            dense(8), RELU,
            dense(7), RELU,
            dense(6), RELU,
            dense(num_classes),
            SOFTMAX,
        ),
        input_channels=1,
        num_classes=num_classes,
    )


def layer_parameter_counts(spec: ModelSpec) -> list[tuple[int, LayerKind, int]]:
    shapes = spec.param_shapes()
    counts = []
    for i, layer in enumerate(spec.layers):
        if layer.has_params:
            n = sum(int(np.prod(s)) for key, s in shapes.items() if key.split(".")[0] == str(i))
            counts.append((i, layer.kind, n))
    return counts


def parameter_count(spec: ModelSpec) -> int:
    return sum(int(np.prod(s)) for s in spec.param_shapes().values())


@dataclass
class Model:
    spec: ModelSpec
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.spec.param_shapes()
        if set(expected) != set(self.params):
            raise ShapeError(f"parameter keys {sorted(self.params)} != expected {sorted(expected)}")
        for key, shape in expected.items():
            if self.params[key].shape != shape:
                raise ShapeError(f"parameter {key} has shape {self.params[key].shape}, expected {shape}")

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype if self.params else np.dtype(np.float32)

    def astype(self, dtype) -> "Model":
        return Model(self.spec, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> "Model":
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()})


def init_model(spec: ModelSpec, seed: int = 42, dtype=np.float32) -> Model:
    """He-uniform weights bounded by sqrt(6 / fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for key, shape in spec.param_shapes().items():
        if key.endswith(".bias"):
            params[key] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 4:
            fan_in = shape[0] * shape[1] * shape[2]
        elif len(shape) == 3:
            fan_in = shape[0] * shape[1]
        else:
            fan_in = shape[0]
        limit = L.he_uniform_limit(fan_in)
        params[key] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return Model(spec, params)


def _check_input(model: Model, x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeError(f"expected (H, W, C) or (N, H, W, C) input, got shape {x.shape}")
    if x.shape[-1] != model.spec.input_channels:
        raise ShapeError(
            f"input has {x.shape[-1]} channels, model expects {model.spec.input_channels}; "
            "extract the green channel first"
        )
    if min(x.shape[1:3]) < MIN_INPUT_SIZE:
        raise ShapeError(f"input spatial size {x.shape[1:3]} below minimum {MIN_INPUT_SIZE}")


@dataclass(frozen=True)
class _Step:
    stride: int  # stride actually applied
    subsample: int = 1  # evaluate every n-th output position only
    slice_input: int = 1  # subsample the layer input before running it


@functools.lru_cache(maxsize=32)
def execution_plan(spec: ModelSpec, fast: bool = True) -> tuple[_Step, ...]:
    """Per-layer execution steps with strided 1x1 layers hoisted upstream.

    A 1x1 layer with stride s reads only every s-th position, and ReLU and
    stride-1 1x1 layers commute with that slicing, so the stride can move
    back to the nearest spatial kernel, which then evaluates only the
    positions that are eventually read.
    """
    layers = spec.layers
    steps = [_Step(layer.stride) for layer in layers]
    if not fast:
        return tuple(steps)
    for i, layer in enumerate(layers):
        if layer.kind is not LayerKind.POINTWISE or layer.stride == 1:
            continue
        steps[i] = _Step(1)
        j = i - 1
        while j >= 0 and (layers[j].kind is LayerKind.RELU
                          or (layers[j].kind is LayerKind.POINTWISE and layers[j].stride == 1)):
            j -= 1
        if j >= 0 and layers[j].kind in (LayerKind.CONV, LayerKind.DEPTHWISE) and steps[j].subsample == 1:
            steps[j] = dataclasses.replace(steps[j], subsample=layer.stride)
        else:
            steps[j + 1] = dataclasses.replace(steps[j + 1], slice_input=layer.stride)
    return tuple(steps)


def _params_for(model: Model, i: int, layer: LayerSpec, stride: int):
    p = model.params
    if layer.kind is LayerKind.DEPTHWISE:
        return L.DepthwiseParams(p[f"{i}.kernel"], p[f"{i}.bias"], stride, layer.padding)
    if layer.kind is LayerKind.DENSE:
        return L.DenseParams(p[f"{i}.weights"], p[f"{i}.bias"])
    return L.ConvParams(p[f"{i}.kernel"], p[f"{i}.bias"], stride, layer.padding)


def forward_batch(model: Model, x: np.ndarray, cache: list | None = None, fast: bool = True,
                  trace: list | None = None) -> np.ndarray:
    """Run ``(N, H, W, C)`` through the network and return ``(N, num_classes)``.

    When ``cache`` is a list, the input of every layer is appended to it for
    :func:`backward` (``None`` for ReLU layers, whose output carries the same
    mask), followed by bookkeeping for sliced inputs. ``fast=False`` disables
    stride hoisting so every layer produces its full-size output; ``trace``
    collects every layer's output.
    """
    x = np.asarray(x, dtype=model.dtype)
    _check_input(model, x)
    plan = execution_plan(model.spec, fast)
    shapes_before_slice: dict[int, tuple] = {}
    owned = False  # x is a fresh buffer nothing else references
    for i, (layer, step) in enumerate(zip(model.spec.layers, plan)):
        k = layer.kind
        if step.slice_input > 1:
            shapes_before_slice[i] = x.shape
            x = x[:, ::step.slice_input, ::step.slice_input, :]
            owned = False
        if cache is not None:
            cache.append(None if k is LayerKind.RELU else x)
        if k is LayerKind.RELU:
            if owned:
                np.maximum(x, 0, out=x)
            else:
                x = L.relu(x)
        elif k is LayerKind.GAP:
            x = L.global_avg_pool(x)
        elif k is LayerKind.SOFTMAX:
            x = L.softmax(x)
        elif k is LayerKind.DENSE:
            x = L.dense_forward(x, _params_for(model, i, layer, step.stride))
        elif k is LayerKind.DEPTHWISE:
            x = L.depthwise_forward(x, _params_for(model, i, layer, step.stride), step.subsample)
        else:
            x = L.conv2d_forward(x, _params_for(model, i, layer, step.stride), step.subsample)
        owned = layer.has_params and trace is None
        if trace is not None:
            trace.append(x)
    if cache is not None:
        cache.append(shapes_before_slice)
    return x


def forward(model: Model, image: np.ndarray, intermediates: list | None = None) -> np.ndarray:
    """Class probabilities for one ``(H, W, 1)`` image.

    ``intermediates`` receives ``(layer index, kind, output)`` for every
    layer, computed without stride hoisting so the shapes are the true ones.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"expected a single (H, W, C) image, got shape {image.shape}")
    if intermediates is None:
        return forward_batch(model, image[None])[0]
    trace: list = []
    probs = forward_batch(model, image[None], fast=False, trace=trace)
    for i, (layer, out) in enumerate(zip(model.spec.layers, trace)):
        intermediates.append((i, layer.kind, out[0]))
    return probs[0]


def backward(model: Model, cache: list, grad_top: np.ndarray, top_is_logits: bool = True,
             fast: bool = True) -> dict[str, np.ndarray]:
    """Parameter gradients from a cached :func:`forward_batch` pass.

    ``grad_top`` is the gradient w.r.t. the logits (the fused softmax +
    cross-entropy path) or, with ``top_is_logits=False``, w.r.t. the
    probabilities. ``fast`` must match the forward call. The input gradient
    is stored under ``"input"``.
    """
    grads: dict[str, np.ndarray] = {}
    plan = execution_plan(model.spec, fast)
    g = grad_top
    for i in range(len(model.spec.layers) - 1, -1, -1):
        layer, step = model.spec.layers[i], plan[i]
        x = cache[i]
        k = layer.kind
        if k is LayerKind.SOFTMAX:
            if not top_is_logits:
                g = L.softmax_backward(L.softmax(x), g)
        elif k is LayerKind.RELU:
            # every g reaching here was allocated by a previous backward step
            np.multiply(g, cache[i + 1] > 0, out=g)
        elif k is LayerKind.GAP:
            g = L.gap_backward(x.shape[1], x.shape[2], g)
        elif k is LayerKind.DENSE:
            g, grads[f"{i}.weights"], grads[f"{i}.bias"] = L.dense_backward(
                x, _params_for(model, i, layer, step.stride), g)
        elif k is LayerKind.DEPTHWISE:
            g, grads[f"{i}.kernel"], grads[f"{i}.bias"] = L.depthwise_backward(
                x, _params_for(model, i, layer, step.stride), g, step.subsample)
        else:
            g, grads[f"{i}.kernel"], grads[f"{i}.bias"] = L.conv2d_backward(
                x, _params_for(model, i, layer, step.stride), g, step.subsample)
        if step.slice_input > 1:
            s = step.slice_input
            full = np.zeros(cache[-1][i], dtype=g.dtype)
            full[:, ::s, ::s, :] = g
            g = full
    grads["input"] = g
    return grads


def predict(model: Model, image: np.ndarray) -> tuple[int, float]:
    probs = forward(model, image)
    idx = int(np.argmax(probs))  # first maximum wins ties
    return idx, float(probs[idx])


def output_shapes(spec: ModelSpec, height: int, width: int) -> list[tuple[int, LayerKind, tuple[int, ...]]]:
    """Per-layer output shapes for an input of the given size, without running it."""
    shapes = []
    h, w, c = height, width, spec.input_channels
    flat = None
    for i, layer in enumerate(spec.layers):
        k = layer.kind
        if k in (LayerKind.CONV, LayerKind.POINTWISE, LayerKind.DEPTHWISE):
            h = L.output_size(h, layer.kernel_size, layer.stride, layer.padding)
            w = L.output_size(w, layer.kernel_size, layer.stride, layer.padding)
            if k is not LayerKind.DEPTHWISE:
                c = layer.filters
            shapes.append((i, k, (h, w, c)))
        elif k is LayerKind.GAP:
            flat = c
            shapes.append((i, k, (flat,)))
        elif k is LayerKind.DENSE:
            flat = layer.filters
            shapes.append((i, k, (flat,)))
        else:
            shapes.append((i, k, shapes[-1][2] if shapes else (h, w, c)))
    return shapes
