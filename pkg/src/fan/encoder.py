"""CNN + bidirectional LSTM encoder producing the feature sequence h_1..h_T."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rfgeom
from .adcore import ops
from .adcore.tensor import ShapeError, Tensor
from .rfgeom import LayerSpec, LayerStack


@dataclass(frozen=True)
class Conv:
    kernel: tuple[int, int]  # (k_W, k_H)
    channels: int
    stride: tuple[int, int] = (1, 1)
    pad: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class Pool:
    kernel: tuple[int, int]
    stride: tuple[int, int]
    pad: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class ResBlocks:
    """``count`` blocks of two 3x3 convs (stride 1, pad 1) plus a skip."""
    channels: int
    count: int


@dataclass
class Stage:
    name: str
    layers: list


@dataclass
class EncoderConfig:
    stages: list[Stage]
    input_size: tuple[int, int] = (32, 256)  # (H, W)
    input_channels: int = 1
    hidden: int = 256
    name: str = "custom"

    def geometry(self) -> LayerStack:
        stack = LayerStack()
        for stage in self.stages:
            for layer in stage.layers:
                stack.extend(_layer_geometry(layer))
        return stack

    def stage_sizes(self) -> list[tuple[str, tuple[int, int]]]:
        """(stage name, (H, W) output) per stage; raises naming the failing stage."""
        h, w = self.input_size
        out = []
        for stage in self.stages:
            for layer in stage.layers:
                for spec in _layer_geometry(layer):
                    try:
                        h, w = LayerStack([spec]).output_size((h, w))
                    except rfgeom.GeometryError as exc:
                        raise ShapeError(f"stage {stage.name!r}: {exc}") from None
            out.append((stage.name, (h, w)))
        return out

    def cnn_channels(self) -> int:
        c = self.input_channels
        for stage in self.stages:
            for layer in stage.layers:
                if isinstance(layer, (Conv, ResBlocks)):
                    c = layer.channels
        return c

    @property
    def seq_len(self) -> int:
        return self.stage_sizes()[-1][1][1]

    @property
    def feature_dim(self) -> int:
        return 2 * self.hidden


def _layer_geometry(layer) -> list[LayerSpec]:
    if isinstance(layer, Conv):
        return [LayerSpec("conv", layer.kernel, layer.stride, layer.pad)]
    if isinstance(layer, Pool):
        return [LayerSpec("pool", layer.kernel, layer.stride, layer.pad)]
    if isinstance(layer, ResBlocks):
        # the skip path is shape-preserving and adds nothing to the field of the main path
        return [LayerSpec("conv", (3, 3), (1, 1), (1, 1))] * (2 * layer.count)
    raise TypeError(f"unknown layer {layer!r}")


def _c3(ch):
    return Conv((3, 3), ch, (1, 1), (1, 1))


def paper_config() -> EncoderConfig:
    """The 32-layer ResNet-style encoder for 1 x 32 x 256 inputs, BLSTM with 256 units."""
    return EncoderConfig(
        name="paper",
        input_size=(32, 256),
        hidden=256,
        stages=[
            Stage("conv1_x", [_c3(32), _c3(64)]),
            Stage("conv2_x", [Pool((2, 2), (2, 2)), ResBlocks(128, 1), _c3(128)]),
            Stage("conv3_x", [Pool((2, 2), (2, 2)), ResBlocks(256, 2), _c3(256)]),
            Stage("conv4_x", [Pool((2, 2), (1, 2), (1, 0)), ResBlocks(512, 5), _c3(512)]),
            Stage("conv5_x", [ResBlocks(512, 3), Conv((2, 2), 512, (1, 2), (1, 0)),
                              Conv((2, 2), 512, (1, 1), (0, 0))]),
        ],
    )


def toy_config(hidden: int = 32, input_size: tuple[int, int] = (16, 64)) -> EncoderConfig:
    """Two conv+pool stages and a height-collapsing conv; net horizontal stride 4."""
    h4 = input_size[0] // 4
    return EncoderConfig(
        name="toy",
        input_size=input_size,
        hidden=hidden,
        stages=[
            Stage("stage1", [_c3(16), Pool((2, 2), (2, 2))]),
            Stage("stage2", [_c3(32), Pool((2, 2), (2, 2))]),
            Stage("collapse", [Conv((1, h4), 64)]),
        ],
    )


PRESETS = {"paper": paper_config, "toy": toy_config}


def preset(name: str, **overrides) -> EncoderConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown encoder preset {name!r}; known: {sorted(PRESETS)}") from None
    return factory(**overrides)


@dataclass
class FeatureSequence:
    """Encoder output: vectors (T, D) or batched (N, T, D), centers (T, 2) as 1-indexed (x, y)."""
    vectors: Tensor
    centers: np.ndarray
    taps: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.vectors.shape[-2]

    @property
    def dim(self) -> int:
        return self.vectors.shape[-1]


def _glorot(rng, shape, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-lim, lim, size=shape), requires_grad=True)


def _conv_param(rng, co, ci, kh, kw):
    return (_glorot(rng, (co, ci, kh, kw), ci * kh * kw, co * kh * kw),
            Tensor(np.zeros(co), requires_grad=True))


def lstm_params(rng, n_in: int, hidden: int, forget_bias: float = 1.0) -> dict[str, Tensor]:
    """Gate rows ordered i, f, g, o; the forget-gate bias starts open."""
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = forget_bias
    return {
        "w_x": _glorot(rng, (4 * hidden, n_in), n_in, 4 * hidden),
        "w_h": _glorot(rng, (4 * hidden, hidden), hidden, 4 * hidden),
        "b": Tensor(b, requires_grad=True),
    }


def run_lstm(xs: list[Tensor], params: dict[str, Tensor], reverse: bool = False) -> list[Tensor]:
    """Unroll an LSTM over a list of (N, n_in) steps from zero state; outputs in input order."""
    hid = params["w_h"].shape[1]
    lead = xs[0].shape[:-1]
    h = Tensor(np.zeros(lead + (hid,)))
    c = Tensor(np.zeros(lead + (hid,)))
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    out = [None] * len(xs)
    for t in order:
        h, c = ops.lstm_cell(xs[t], h, c, params)
        out[t] = h
    return out


class Encoder:
    def __init__(self, config: EncoderConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        self.centers = rfgeom.feature_centers(config.geometry(), config.input_size)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def tap_names(self) -> list[str]:
        """Conv outputs that keep input resolution, usable as crop sources."""
        names = []
        stack = LayerStack()
        for stage in self.config.stages:
            for i, layer in enumerate(stage.layers):
                stack.extend(_layer_geometry(layer))
                if isinstance(layer, (Conv, ResBlocks)):
                    if stack.net_stride() == (1, 1) and stack.output_size(self.config.input_size) == self.config.input_size \
                            and all(l.kernel[0] == 2 * l.pad[0] + 1 and l.kernel[1] == 2 * l.pad[1] + 1 for l in stack):
                        names.append(f"{stage.name}.{i}")
        return names

    def cnn(self, images: Tensor, keep: frozenset = frozenset()) -> tuple[Tensor, dict[str, Tensor]]:
        p = self.params
        x = images
        taps = {}
        for stage in self.config.stages:
            for i, layer in enumerate(stage.layers):
                key = f"{stage.name}.{i}"
                if isinstance(layer, Conv):
                    kw, kh = layer.kernel
                    sw, sh = layer.stride
                    pw, ph = layer.pad
                    x = ops.relu(ops.conv2d(x, p[key + ".w"], p[key + ".b"], (sh, sw), (ph, pw)))
                elif isinstance(layer, Pool):
                    kw, kh = layer.kernel
                    sw, sh = layer.stride
                    pw, ph = layer.pad
                    x = ops.maxpool2d(x, (kh, kw), (sh, sw), (ph, pw))
                else:
                    for r in range(layer.count):
                        rk = f"{key}.{r}"
                        y = ops.relu(ops.conv2d(x, p[rk + ".w1"], p[rk + ".b1"], 1, 1))
                        y = ops.conv2d(y, p[rk + ".w2"], p[rk + ".b2"], 1, 1)
                        skip = x
                        if rk + ".wp" in p:
                            skip = ops.conv2d(x, p[rk + ".wp"], p[rk + ".bp"], 1, 0)
                        x = ops.relu(y + skip)
                if key in keep:
                    taps[key] = x
        return x, taps

    def __call__(self, images, keep=frozenset()) -> FeatureSequence:
        return encode(images, self, keep=keep)


def build_encoder(config: EncoderConfig, rng_seed: int = 0) -> Encoder:
    """Initialise parameters (Glorot-uniform weights, zero biases)."""
    config.stage_sizes()  # shape-check before allocating anything
    rng = np.random.default_rng(rng_seed)
    params: dict[str, Tensor] = {}
    c = config.input_channels
    for stage in config.stages:
        for i, layer in enumerate(stage.layers):
            key = f"{stage.name}.{i}"
            if isinstance(layer, Conv):
                kw, kh = layer.kernel
                params[key + ".w"], params[key + ".b"] = _conv_param(rng, layer.channels, c, kh, kw)
                c = layer.channels
            elif isinstance(layer, ResBlocks):
                for r in range(layer.count):
                    rk = f"{key}.{r}"
                    params[rk + ".w1"], params[rk + ".b1"] = _conv_param(rng, layer.channels, c, 3, 3)
                    params[rk + ".w2"], params[rk + ".b2"] = _conv_param(rng, layer.channels, layer.channels, 3, 3)
                    if c != layer.channels:
                        params[rk + ".wp"], params[rk + ".bp"] = _conv_param(rng, layer.channels, c, 1, 1)
                    c = layer.channels
    for direction in ("fw", "bw"):
        for k, v in lstm_params(rng, c, config.hidden).items():
            params[f"blstm.{direction}.{k}"] = v
    for k, v in params.items():
        v.name = k
    return Encoder(config, params)


def encode(images, encoder: Encoder, keep=frozenset()) -> FeatureSequence:
    """Run CNN + BLSTM on a C x H x W image or an N x C x H x W batch."""
    images = images if isinstance(images, Tensor) else Tensor(images)
    cfg = encoder.config
    single = images.ndim == 3
    if single:
        images = ops.reshape(images, (1,) + images.shape)
    if images.ndim != 4 or images.shape[1:] != (cfg.input_channels,) + tuple(cfg.input_size):
        raise ShapeError(f"image shape {images.shape[1:]} != configured "
                         f"{(cfg.input_channels,) + tuple(cfg.input_size)}")
    fmap, taps = encoder.cnn(images, keep=frozenset(keep))
    n, d, h, t = fmap.shape
    if h != 1:
        raise ShapeError(f"CNN output height {h} != 1")
    seq = ops.transpose(ops.reshape(fmap, (n, d, t)), (2, 0, 1))  # T x N x D
    xs = [seq[j] for j in range(t)]
    p = encoder.params
    fw = run_lstm(xs, {k: p[f"blstm.fw.{k}"] for k in ("w_x", "w_h", "b")})
    bw = run_lstm(xs, {k: p[f"blstm.bw.{k}"] for k in ("w_x", "w_h", "b")}, reverse=True)
    hs = ops.stack([ops.concat([f, b], axis=-1) for f, b in zip(fw, bw)], axis=1)  # N x T x 2H
    if single:
        hs = ops.reshape(hs, hs.shape[1:])
        taps = {k: ops.reshape(v, v.shape[1:]) for k, v in taps.items()}
    return FeatureSequence(hs, encoder.centers, taps)
