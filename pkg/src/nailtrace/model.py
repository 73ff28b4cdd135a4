"""Cascaded two-branch encoder-decoder segmentation model.

Two MobileNetV2-style encoder prefixes: a shallow branch on the
full-resolution input (stages high1..4) and a deep branch on a 2x
bilinearly downsampled input (stages low1..8).  The deep branch keeps a
16x overall stride by removing the last stride-2 and dilating stages 7-8
by 2.  The decoder fuses upsampled deep features with shallow features
twice and emits fg/bg, per-finger class and base-tip direction heads at
H/16, H/8 (auxiliary) and full resolution.

Stage table (stage index -> MobileNetV2 piece):
  1: stem conv           5: bottleneck group 4 (t6 c64 n4 s2)
  2: group 1 (t1 c16)    6: group 5 (t6 c96 n3 s1)
  3: group 2 (t6 c24 s2) 7: group 6 (t6 c160 n3; low branch: s1, dil 2)
  4: group 3 (t6 c32 s2) 8: group 7 (t6 c320 n1; low branch: dil 2)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractViolation
from .tensor import ConvSpec, Tensor

# (expansion, base channels, repeats, stride) for bottleneck groups 1..7
_GROUP_SETTINGS = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
]


def make_divisible(v: float, divisor: int = 8) -> int:
    new_v = max(divisor, int(v + divisor / 2) // divisor * divisor)
    if new_v < 0.9 * v:
        new_v += divisor
    return new_v


@dataclass
class ModelConfig:
    input_size: tuple[int, int] = (288, 288)
    width_multiplier: float = 1.0
    encoder_variant: str = "deep55"  # deep55 | shallow43
    cascade_enabled: bool = True
    low_branch_downsample: int = 2
    num_finger_classes: int = 10

    def __post_init__(self):
        h, w = self.input_size
        # 336 px (a supported training resolution) is not a multiple of 32;
        # 16 is the real architectural constraint (deepest integer stride),
        # the decoder tolerates the odd H/32 map.
        if h % 16 or w % 16:
            raise ConfigError(f"input size {h}x{w} must be divisible by 16")
        if self.width_multiplier <= 0:
            raise ConfigError("width_multiplier must be positive")
        if self.encoder_variant not in ("deep55", "shallow43"):
            raise ConfigError(f"unknown encoder variant {self.encoder_variant!r}")

    def to_json(self, path: str | Path) -> None:
        doc = asdict(self)
        doc["input_size"] = list(self.input_size)
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelConfig":
        doc = json.loads(Path(path).read_text())
        doc["input_size"] = tuple(doc["input_size"])
        return cls(**doc)


@dataclass
class SegOutput:
    """Three-head prediction bundle; aux ordered coarse to fine."""

    fgbg_logits: Tensor  # N x 2 x H x W
    class_logits: Tensor  # N x K x H x W
    field: Tensor  # N x 2 x H x W
    aux: list[tuple[int, Tensor, Tensor, Tensor]] = field(default_factory=list)
    # aux entries: (downsample factor relative to input, fgbg, class, field)


# ---------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------

class _ConvBN:
    """Conv (no bias) + batch norm + optional ReLU6."""

    def __init__(self, rng, spec: ConvSpec, act: bool, dtype):
        self.spec = spec
        kh, kw = spec.kernel
        fan_out = spec.out_channels * kh * kw // spec.groups
        std = np.sqrt(2.0 / fan_out)
        shape = (spec.out_channels, spec.in_channels // spec.groups, kh, kw)
        self.weight = T.tensor(rng.standard_normal(shape) * std, requires_grad=True, dtype=dtype)
        self.gamma = T.tensor(np.ones(spec.out_channels), requires_grad=True, dtype=dtype)
        self.beta = T.tensor(np.zeros(spec.out_channels), requires_grad=True, dtype=dtype)
        self.running_mean = np.zeros(spec.out_channels, dtype=np.float64)
        self.running_var = np.ones(spec.out_channels, dtype=np.float64)
        self.act = act

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        y = T.conv2d(x, self.weight, None, self.spec)
        y = T.batch_norm2d(y, self.gamma, self.beta, self.running_mean, self.running_var, training)
        return T.relu6(y) if self.act else y

    def params(self, prefix: str):
        yield prefix + ".weight", self.weight
        yield prefix + ".bn.gamma", self.gamma
        yield prefix + ".bn.beta", self.beta

    def buffers(self, prefix: str):
        yield prefix + ".bn.running_mean", self.running_mean
        yield prefix + ".bn.running_var", self.running_var

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        if name.endswith("running_mean"):
            self.running_mean[:] = value
        else:
            self.running_var[:] = value


class _Conv:
    """Plain conv with bias (classifier / field heads)."""

    def __init__(self, rng, spec: ConvSpec, dtype, init_std: Optional[float] = None):
        kh, kw = spec.kernel
        self.spec = spec
        fan_out = spec.out_channels * kh * kw // spec.groups
        std = np.sqrt(2.0 / fan_out) if init_std is None else init_std
        shape = (spec.out_channels, spec.in_channels // spec.groups, kh, kw)
        self.weight = T.tensor(rng.standard_normal(shape) * std, requires_grad=True, dtype=dtype)
        self.bias = T.tensor(np.zeros(spec.out_channels), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.spec)

    def params(self, prefix: str):
        yield prefix + ".weight", self.weight
        yield prefix + ".bias", self.bias


class _Bottleneck:
    """Inverted residual block: expand 1x1 -> depthwise 3x3 -> project 1x1."""

    def __init__(self, rng, cin, cout, expansion, stride, dilation, dtype):
        hidden = cin * expansion
        self.expand = None
        if expansion != 1:
            self.expand = _ConvBN(rng, ConvSpec(cin, hidden, (1, 1)), act=True, dtype=dtype)
        self.depthwise = _ConvBN(
            rng,
            ConvSpec(hidden, hidden, (3, 3), stride=stride, dilation=dilation, groups=hidden),
            act=True,
            dtype=dtype,
        )
        self.project = _ConvBN(rng, ConvSpec(hidden, cout, (1, 1)), act=False, dtype=dtype)
        self.residual = stride == 1 and cin == cout

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        y = x
        if self.expand is not None:
            y = self.expand(y, training)
        y = self.depthwise(y, training)
        y = self.project(y, training)
        if self.residual:
            y = T.add(y, x)
        return y

    def children(self, prefix: str):
        if self.expand is not None:
            yield prefix + ".expand", self.expand
        yield prefix + ".dw", self.depthwise
        yield prefix + ".proj", self.project


class _EncoderBranch:
    """A prefix of the 8-stage encoder; records per-stage outputs."""

    def __init__(self, rng, alpha, num_stages, strides, dilations, dtype):
        stem_ch = make_divisible(32 * alpha)
        self.stem = _ConvBN(rng, ConvSpec(3, stem_ch, (3, 3), stride=2), act=True, dtype=dtype)
        self.groups: list[list[_Bottleneck]] = []
        self.stage_channels = [stem_ch]
        cin = stem_ch
        for gi in range(num_stages - 1):
            expansion, c, n, _ = _GROUP_SETTINGS[gi]
            cout = make_divisible(c * alpha)
            blocks = []
            for bi in range(n):
                stride = strides[gi] if bi == 0 else 1
                blocks.append(
                    _Bottleneck(rng, cin, cout, expansion, stride, dilations[gi], dtype)
                )
                cin = cout
            self.groups.append(blocks)
            self.stage_channels.append(cout)

    def __call__(self, x: Tensor, training: bool) -> list[Tensor]:
        outs = [self.stem(x, training)]
        y = outs[0]
        for blocks in self.groups:
            for b in blocks:
                y = b(y, training)
            outs.append(y)
        return outs  # outs[k] is stage k+1 output

    def children(self, prefix: str):
        yield prefix + ".stage1", self.stem
        for gi, blocks in enumerate(self.groups):
            for bi, b in enumerate(blocks):
                yield from b.children(f"{prefix}.stage{gi + 2}.block{bi}")


class _FusionBlock:
    """2x upsample F1, dilated 3x3 conv; 1x1-project F2; elementwise sum; ReLU6."""

    def __init__(self, rng, f1_ch, f2_ch: Optional[int], out_ch, dtype):
        self.f1_conv = _ConvBN(
            rng, ConvSpec(f1_ch, out_ch, (3, 3), dilation=2), act=False, dtype=dtype
        )
        self.f2_proj = None
        if f2_ch is not None:
            self.f2_proj = _ConvBN(rng, ConvSpec(f2_ch, out_ch, (1, 1)), act=False, dtype=dtype)

    def __call__(self, f1: Tensor, f2: Optional[Tensor], training: bool) -> Tensor:
        up = T.bilinear_upsample(f1, 2)
        if f2 is not None:
            # Odd feature sizes (e.g. 336 px inputs) leave the upsampled map
            # one row/column larger than F2; trim to F2's extent.
            dh = up.shape[2] - f2.shape[2]
            dw = up.shape[3] - f2.shape[3]
            if dh < 0 or dh > 1 or dw < 0 or dw > 1:
                raise ContractViolation(
                    f"F2 spatial {f2.shape[2:]} incompatible with upsampled F1 {up.shape[2:]}"
                )
            if dh or dw:
                up = T.crop2d(up, f2.shape[2], f2.shape[3])
        y = self.f1_conv(up, training)
        if self.f2_proj is not None:
            if f2 is None:
                raise ContractViolation("fusion block built with a projection needs F2")
            y = T.add(y, self.f2_proj(f2, training))
        return T.relu6(y)

    def children(self, prefix: str):
        yield prefix + ".f1conv", self.f1_conv
        if self.f2_proj is not None:
            yield prefix + ".f2proj", self.f2_proj


class _OutputBranch:
    """Three 1x1 classifiers: fg/bg (2), finger class (K), direction field (2)."""

    # near-zero classifier init keeps initial losses at chance level instead
    # of the huge values a fan-out init produces on 1x1 heads
    HEAD_INIT_STD = 0.01

    def __init__(self, rng, cin, num_classes, dtype):
        std = self.HEAD_INIT_STD
        self.fgbg = _Conv(rng, ConvSpec(cin, 2, (1, 1)), dtype, init_std=std)
        self.classes = _Conv(rng, ConvSpec(cin, num_classes, (1, 1)), dtype, init_std=std)
        self.field = _Conv(rng, ConvSpec(cin, 2, (1, 1)), dtype, init_std=std)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        return self.fgbg(x), self.classes(x), self.field(x)

    def children(self, prefix: str):
        yield prefix + ".fgbg", self.fgbg
        yield prefix + ".classes", self.classes
        yield prefix + ".field", self.field


# ---------------------------------------------------------------------
# model
# ---------------------------------------------------------------------

class SegModel:
    """Built network; construct via :func:`build_model`."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.training = False
        rng = np.random.default_rng(seed)
        alpha = config.width_multiplier

        low_stages = 8 if config.encoder_variant == "deep55" else 7
        low_strides = [s for (_, _, _, s) in _GROUP_SETTINGS]
        low_dilations = [1] * 7
        low_strides[5] = 1  # stage 7: stride 2 -> 1, keeps overall stride at 16x
        low_dilations[5] = 2
        low_dilations[6] = 2
        self.low = _EncoderBranch(rng, alpha, low_stages, low_strides, low_dilations, dtype)

        self.high = None
        if config.cascade_enabled:
            high_strides = [s for (_, _, _, s) in _GROUP_SETTINGS]
            self.high = _EncoderBranch(rng, alpha, 4, high_strides, [1] * 7, dtype)

        fuse_ch = max(16, make_divisible(96 * alpha))
        f1_ch = self.low.stage_channels[low_stages - 1]
        low4_ch = self.low.stage_channels[3]
        high4_ch = self.high.stage_channels[3] if self.high is not None else None
        self.fusion1 = _FusionBlock(rng, f1_ch, low4_ch, fuse_ch, dtype)
        self.fusion2 = _FusionBlock(rng, fuse_ch, high4_ch, fuse_ch, dtype)
        k = config.num_finger_classes
        self.head_aux1 = _OutputBranch(rng, fuse_ch, k, dtype)
        self.head_aux2 = _OutputBranch(rng, fuse_ch, k, dtype)
        self.head_final = _OutputBranch(rng, fuse_ch, k, dtype)

    # -- structure ----------------------------------------------------

    def _convbn_layers(self):
        yield from self.low.children("low")
        if self.high is not None:
            yield from self.high.children("high")
        yield from self.fusion1.children("fusion1")
        yield from self.fusion2.children("fusion2")

    def _head_layers(self):
        yield from self.head_aux1.children("head_aux1")
        yield from self.head_aux2.children("head_aux2")
        yield from self.head_final.children("head_final")

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for prefix, layer in self._convbn_layers():
            out.extend(layer.params(prefix))
        for prefix, layer in self._head_layers():
            out.extend(layer.params(prefix))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train_mode(self, flag: bool = True) -> "SegModel":
        self.training = flag
        return self

    def at_input_size(self, size: tuple[int, int]) -> "SegModel":
        """Shallow clone sharing all layers, accepting a different input size."""
        if tuple(size) == self.config.input_size:
            return self
        import copy
        from dataclasses import replace

        clone = copy.copy(self)
        clone.config = replace(self.config, input_size=tuple(size))
        return clone

    # -- checkpoint ---------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        state: dict[str, np.ndarray] = {}
        for name, p in self.named_parameters():
            state[name] = p.data
        for prefix, layer in self._convbn_layers():
            for bname, buf in layer.buffers(prefix):
                state[bname] = buf
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        buffer_owners = {}
        for prefix, layer in self._convbn_layers():
            for bname, _ in layer.buffers(prefix):
                buffer_owners[bname] = layer
        params = dict(self.named_parameters())
        for name, value in state.items():
            if name in params:
                p = params[name]
                if p.data.shape != value.shape:
                    raise IOError(f"checkpoint tensor {name}: shape {value.shape} != {p.data.shape}")
                p.data = np.ascontiguousarray(value, dtype=self.dtype)
            elif name in buffer_owners:
                buffer_owners[name].set_buffer(name, value.astype(np.float64))
            else:
                raise IOError(f"checkpoint tensor {name} not present in model")

    def checksum(self) -> float:
        return float(sum(np.abs(p.data.astype(np.float64)).sum() for p in self.parameters()))

    # -- forward ------------------------------------------------------

    def forward(self, images: Tensor) -> SegOutput:
        n, c, h, w = images.shape
        ch, cw = self.config.input_size
        if c != 3:
            raise ContractViolation(f"expected 3 input channels, got {c}")
        if (h, w) != (ch, cw):
            raise ContractViolation(f"input {h}x{w} does not match config {ch}x{cw}")
        training = self.training

        x_low = images
        for _ in range(self.config.low_branch_downsample // 2):
            x_low = T.avgpool2(x_low)
        low_outs = self.low(x_low, training)
        f1 = low_outs[-1]
        low4 = low_outs[3]

        fused1 = self.fusion1(f1, low4, training)  # H/16
        if self.high is not None:
            high4 = self.high(images, training)[3]  # H/8
            fused2 = self.fusion2(fused1, high4, training)
        else:
            fused2 = self.fusion2(fused1, None, training)  # H/8

        a1 = self.head_aux1(fused1)
        a2 = self.head_aux2(fused2)
        fgbg, classes, fld = self.head_final(fused2)
        fgbg = T.bilinear_upsample(fgbg, 8)
        classes = T.bilinear_upsample(classes, 8)
        fld = T.bilinear_upsample(fld, 8)
        return SegOutput(
            fgbg_logits=fgbg,
            class_logits=classes,
            field=fld,
            aux=[(16, *a1), (8, *a2)],
        )

    __call__ = forward


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> SegModel:
    """Construct the network with seeded He fan-out initialization."""
    return SegModel(config, seed=seed, dtype=dtype)


def save_model(model: SegModel, checkpoint_path: str | Path, config_path: str | Path) -> None:
    from .checkpoint import save_checkpoint

    save_checkpoint(checkpoint_path, model.state_dict())
    model.config.to_json(config_path)


def load_model(checkpoint_path: str | Path, config_path: str | Path, dtype=np.float32) -> SegModel:
    from .checkpoint import load_checkpoint

    config = ModelConfig.from_json(config_path)
    model = SegModel(config, seed=0, dtype=dtype)
    model.load_state_dict(load_checkpoint(checkpoint_path))
    return model
