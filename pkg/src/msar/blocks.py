"""Network building blocks and the architecture zoo.

Networks are described declaratively by NetworkSpec and built into
executable module trees by build_network.  Four families are covered:
plain convolutional stacks, residual networks (small-image and
large-image variants), densely connected networks with bottleneck steps
and compressing transitions, and grouped-convolution residual networks.
The grouped family is described for cost analysis only; its specs are
rejected at build time.

Every module exposes parameters() as (name, tensor, kind) triples, with
kind one of "weight", "bias", "norm", plus norm_states() for running
normalization statistics.  Names are hierarchical and stable, and a
plain network's names are a subset of its recalibrated twin's names, so
weights transfer between the two by name.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .recalibrate import MultiScaleConfig, MultiScaleRecalibration
from .tensor import (BNState, Tensor, add, batch_norm, concat_channels,
                     conv2d, global_avg_pool, avg_pool2d, linear, max_pool2d,
                     relu)

FAMILIES = ("plain", "residual", "dense", "grouped")
STAGE_MODES = ("multi", "single")


@dataclass(frozen=True)
class MsarSettings:
    """Recalibration settings applied at every block or step.

    stage_mode selects the pooled context in dense steps: "multi" pools
    the accumulated input map, "single" pools the freshly produced
    features.  Residual blocks always pool the tensor they gate.
    """

    scales: tuple[int, ...] = (1, 2, 4)
    strategy: str = "regional"
    stage_mode: str = "multi"

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(k) for k in self.scales))
        MultiScaleConfig(self.scales, self.strategy)  # reuse its validation
        if self.stage_mode not in STAGE_MODES:
            raise ValueError(f"stage_mode must be one of {STAGE_MODES}, got {self.stage_mode!r}")

    def config(self) -> MultiScaleConfig:
        return MultiScaleConfig(self.scales, self.strategy)


@dataclass(frozen=True)
class StageSpec:
    """One stage: `blocks` repeated units of the given output width.

    For the dense family, width is the per-step growth and stride is
    ignored (transitions between stages do the downsampling).
    """

    width: int
    blocks: int
    stride: int = 1

    def __post_init__(self):
        if self.width < 1 or self.blocks < 1:
            raise ValueError(f"invalid stage: width={self.width} blocks={self.blocks}")
        if self.stride not in (1, 2):
            raise ValueError(f"stage stride must be 1 or 2, got {self.stride}")


@dataclass(frozen=True)
class NetworkSpec:
    """Declarative description of a whole classifier."""

    name: str
    family: str
    input_size: int
    classes: int
    stem_width: int
    stages: tuple[StageSpec, ...]
    msar: MsarSettings | None = None
    stem_kernel: int = 3
    stem_stride: int = 1
    stem_pool: bool = False
    growth: int = 0                 # dense family
    bottleneck_factor: int = 4      # dense family
    compression: float = 0.5        # dense family transition keep-fraction
    groups: int = 1                 # grouped residual family
    input_channels: int = 3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "dense" and self.growth < 1:
            raise ValueError("dense family needs a positive growth rate")
        if self.family == "plain" and self.msar is not None:
            raise ValueError("plain stacks do not take recalibration settings")
        if self.input_size < 1 or self.classes < 2 or self.stem_width < 1:
            raise ValueError("invalid spec dimensions")


def residual_reduced(width: int, num_scales: int) -> int:
    """Bottleneck width of a recalibration site on a residual block."""
    return max(1, width // (4 * num_scales))


def dense_reduced(growth: int) -> int:
    """Bottleneck width of a recalibration site on a dense step."""
    return max(1, growth // 2)


# ---------------------------------------------------------------------------
# leaf modules
# ---------------------------------------------------------------------------

class Conv:
    def __init__(self, name, c_in, c_out, k, stride, pad, rng, dtype):
        self.name = name
        self.stride = stride
        self.pad = pad
        fan_in = k * k * c_in
        self.w = Tensor(rng.standard_normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in),
                        dtype=dtype)

    def forward(self, x):
        return conv2d(x, self.w, stride=self.stride, pad=self.pad)

    def parameters(self):
        return [(f"{self.name}.weight", self.w, "weight")]

    def norm_states(self):
        return []


class BatchNorm:
    def __init__(self, name, features, dtype):
        self.name = name
        self.gamma = Tensor(np.ones(features), dtype=dtype)
        self.beta = Tensor(np.zeros(features), dtype=dtype)
        self.state = BNState(features, dtype=dtype)

    def forward(self, x, training):
        return batch_norm(x, self.gamma, self.beta, self.state, training)

    def parameters(self):
        return [(f"{self.name}.gamma", self.gamma, "norm"),
                (f"{self.name}.beta", self.beta, "norm")]

    def norm_states(self):
        return [(self.name, self.state)]


class Linear:
    def __init__(self, name, d_in, d_out, rng, dtype):
        self.name = name
        self.w = Tensor(rng.standard_normal((d_out, d_in)) * np.sqrt(1.0 / d_in),
                        dtype=dtype)
        self.b = Tensor(np.zeros(d_out), dtype=dtype)

    def forward(self, x):
        return linear(x, self.w, self.b)

    def parameters(self):
        return [(f"{self.name}.weight", self.w, "weight"),
                (f"{self.name}.bias", self.b, "bias")]

    def norm_states(self):
        return []


# ---------------------------------------------------------------------------
# composite blocks
# ---------------------------------------------------------------------------

class ResidualBlock:
    """conv-norm-relu-conv-norm, optional recalibration, skip add, relu.

    The skip path is the identity, or a bare 1x1 strided convolution when
    the shape changes.  Recalibration gates the second normalization's
    output before the addition, pooling from that same tensor.
    """

    def __init__(self, name, c_in, c_out, stride, out_size, msar, rng, dtype):
        self.name = name
        self.conv1 = Conv(f"{name}.conv1", c_in, c_out, 3, stride, 1, rng, dtype)
        self.norm1 = BatchNorm(f"{name}.norm1", c_out, dtype)
        self.conv2 = Conv(f"{name}.conv2", c_out, c_out, 3, 1, 1, rng, dtype)
        self.norm2 = BatchNorm(f"{name}.norm2", c_out, dtype)
        self.project = (Conv(f"{name}.project", c_in, c_out, 1, stride, 0, rng, dtype)
                        if stride != 1 or c_in != c_out else None)
        self.recal = None
        if msar is not None:
            reduced = residual_reduced(c_out, len(msar.scales))
            self.recal = MultiScaleRecalibration(
                f"{name}.recal", msar.config(), c_out, c_out,
                out_size, out_size, reduced, rng, dtype)

    def forward(self, x, training, recalibrate=True):
        y = relu(self.norm1.forward(self.conv1.forward(x), training))
        y = self.norm2.forward(self.conv2.forward(y), training)
        if self.recal is not None and recalibrate:
            y = self.recal.forward(y, training)
        skip = self.project.forward(x) if self.project is not None else x
        return relu(add(y, skip))

    def _children(self):
        kids = [self.conv1, self.norm1, self.conv2, self.norm2]
        if self.recal is not None:
            kids.append(self.recal)
        if self.project is not None:
            kids.append(self.project)
        return kids

    def parameters(self):
        return [p for kid in self._children() for p in kid.parameters()]

    def norm_states(self):
        return [s for kid in self._children() for s in kid.norm_states()]


class DenseStep:
    """Pre-activation bottleneck step: norm-relu-1x1, norm-relu-3x3, concat.

    Recalibration gates the freshly produced features before they are
    concatenated onto the running map; the pooled context comes from the
    step's accumulated input map (multi stage-mode) or from the new
    features themselves (single stage-mode).
    """

    def __init__(self, name, c_in, growth, bottleneck_factor, out_size, msar, rng, dtype):
        self.name = name
        inner = bottleneck_factor * growth
        self.norm1 = BatchNorm(f"{name}.norm1", c_in, dtype)
        self.conv1 = Conv(f"{name}.conv1", c_in, inner, 1, 1, 0, rng, dtype)
        self.norm2 = BatchNorm(f"{name}.norm2", inner, dtype)
        self.conv2 = Conv(f"{name}.conv2", inner, growth, 3, 1, 1, rng, dtype)
        self.stage_mode = msar.stage_mode if msar is not None else "multi"
        self.recal = None
        if msar is not None:
            d_in = c_in if msar.stage_mode == "multi" else growth
            self.recal = MultiScaleRecalibration(
                f"{name}.recal", msar.config(), d_in, growth,
                out_size, out_size, dense_reduced(growth), rng, dtype)

    def forward(self, x, training, recalibrate=True):
        y = self.conv1.forward(relu(self.norm1.forward(x, training)))
        y = self.conv2.forward(relu(self.norm2.forward(y, training)))
        if self.recal is not None and recalibrate:
            src = x if self.stage_mode == "multi" else y
            y = self.recal.forward(y, training, pool_src=src)
        return concat_channels(x, y)

    def _children(self):
        kids = [self.norm1, self.conv1, self.norm2, self.conv2]
        if self.recal is not None:
            kids.append(self.recal)
        return kids

    def parameters(self):
        return [p for kid in self._children() for p in kid.parameters()]

    def norm_states(self):
        return [s for kid in self._children() for s in kid.norm_states()]


class PlainBlock:
    """conv-norm-relu unit for unshortcut stacks."""

    def __init__(self, name, c_in, c_out, stride, rng, dtype):
        self.name = name
        self.conv = Conv(f"{name}.conv", c_in, c_out, 3, stride, 1, rng, dtype)
        self.norm = BatchNorm(f"{name}.norm", c_out, dtype)

    def forward(self, x, training, recalibrate=True):
        return relu(self.norm.forward(self.conv.forward(x), training))

    def parameters(self):
        return self.conv.parameters() + self.norm.parameters()

    def norm_states(self):
        return self.norm.norm_states()


class Transition:
    """norm-relu-1x1 compression followed by 2x2 average pooling."""

    def __init__(self, name, c_in, c_out, rng, dtype):
        self.name = name
        self.norm = BatchNorm(f"{name}.norm", c_in, dtype)
        self.conv = Conv(f"{name}.conv", c_in, c_out, 1, 1, 0, rng, dtype)

    def forward(self, x, training):
        return avg_pool2d(self.conv.forward(relu(self.norm.forward(x, training))), 2)

    def parameters(self):
        return self.norm.parameters() + self.conv.parameters()

    def norm_states(self):
        return self.norm.norm_states()


# ---------------------------------------------------------------------------
# whole networks
# ---------------------------------------------------------------------------

class Network:
    """Executable classifier built from a NetworkSpec."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator, dtype=np.float64):
        if spec.family == "grouped":
            raise ValueError(
                "grouped-convolution networks are supported by the cost model only; "
                "they cannot be built for execution")
        self.spec = spec
        self.dtype = dtype
        self._modules = []
        if spec.family == "dense":
            self._build_dense(spec, rng, dtype)
        else:
            self._build_stagewise(spec, rng, dtype)

    # -- construction ------------------------------------------------------

    def _build_stagewise(self, spec, rng, dtype):
        pad = spec.stem_kernel // 2
        self.stem_conv = Conv("stem.conv", spec.input_channels, spec.stem_width,
                              spec.stem_kernel, spec.stem_stride, pad, rng, dtype)
        self.stem_norm = BatchNorm("stem.norm", spec.stem_width, dtype)
        self._modules += [self.stem_conv, self.stem_norm]
        size = spec.input_size // spec.stem_stride
        if spec.stem_pool:
            size = (size + 2 - 3) // 2 + 1
        self.blocks = []
        width = spec.stem_width
        for i, stage in enumerate(spec.stages):
            for j in range(stage.blocks):
                stride = stage.stride if j == 0 else 1
                size //= stride
                if spec.family == "residual":
                    block = ResidualBlock(f"stage{i}.block{j}", width, stage.width,
                                          stride, size, spec.msar, rng, dtype)
                else:
                    block = PlainBlock(f"stage{i}.block{j}", width, stage.width,
                                       stride, rng, dtype)
                self.blocks.append(block)
                self._modules.append(block)
                width = stage.width
        self.head_norm = None
        self.fc = Linear("head.fc", width, spec.classes, rng, dtype)
        self._modules.append(self.fc)

    def _build_dense(self, spec, rng, dtype):
        self.stem_conv = Conv("stem.conv", spec.input_channels, spec.stem_width,
                              spec.stem_kernel, 1, spec.stem_kernel // 2, rng, dtype)
        self._modules.append(self.stem_conv)
        size = spec.input_size
        self.blocks = []       # interleaved DenseStep / Transition in forward order
        width = spec.stem_width
        for i, stage in enumerate(spec.stages):
            for j in range(stage.blocks):
                step = DenseStep(f"stage{i}.step{j}", width, spec.growth,
                                 spec.bottleneck_factor, size, spec.msar, rng, dtype)
                self.blocks.append(step)
                self._modules.append(step)
                width += spec.growth
            if i < len(spec.stages) - 1:
                out = int(width * spec.compression)
                trans = Transition(f"transition{i}", width, out, rng, dtype)
                self.blocks.append(trans)
                self._modules.append(trans)
                width = out
                size //= 2
        self.head_norm = BatchNorm("head.norm", width, dtype)
        self.fc = Linear("head.fc", width, spec.classes, rng, dtype)
        self._modules += [self.head_norm, self.fc]

    # -- execution ----------------------------------------------------------

    def forward(self, x, training=False, recalibrate=True):
        if not isinstance(x, Tensor):
            x = Tensor(x, dtype=self.dtype)
        if self.spec.family == "dense":
            y = self.stem_conv.forward(x)
            for block in self.blocks:
                if isinstance(block, Transition):
                    y = block.forward(y, training)
                else:
                    y = block.forward(y, training, recalibrate)
            y = relu(self.head_norm.forward(y, training))
        else:
            y = relu(self.stem_norm.forward(self.stem_conv.forward(x), training))
            if self.spec.stem_pool:
                y = max_pool2d(y, 3, 2, 1)
            for block in self.blocks:
                y = block.forward(y, training, recalibrate)
        return self.fc.forward(global_avg_pool(y))

    # -- registry ------------------------------------------------------------

    def parameters(self):
        return [p for m in self._modules for p in m.parameters()]

    def norm_states(self):
        return [s for m in self._modules for s in m.norm_states()]

    def parameter_count(self) -> int:
        """Trainable entries plus running normalization statistics."""
        trainable = sum(t.size for _, t, _ in self.parameters())
        running = sum(s.mean.size + s.var.size for _, s in self.norm_states())
        return trainable + running


def build_network(spec: NetworkSpec, seed: int = 0, dtype=np.float64) -> Network:
    """Materialize a spec with deterministic, seed-reproducible weights."""
    return Network(spec, np.random.default_rng(seed), dtype)


# ---------------------------------------------------------------------------
# architecture zoo
# ---------------------------------------------------------------------------

def _tagged(base: str, msar: MsarSettings | None) -> str:
    return f"{base}-msar" if msar is not None else base


def resnet_cifar(depth: int, classes: int = 10,
                 msar: MsarSettings | None = None) -> NetworkSpec:
    """Small-image residual network of depth 6n+2 (20, 32, 44, 56, ...)."""
    if depth < 8 or (depth - 2) % 6:
        raise ValueError(f"depth must be 6n+2 with n >= 1, got {depth}")
    n = (depth - 2) // 6
    return NetworkSpec(
        name=_tagged(f"resnet{depth}", msar), family="residual",
        input_size=32, classes=classes, stem_width=16,
        stages=(StageSpec(16, n, 1), StageSpec(32, n, 2), StageSpec(64, n, 2)),
        msar=msar)


def resnet_ilsvrc(depth: int, classes: int = 1000,
                  msar: MsarSettings | None = None) -> NetworkSpec:
    """Large-image residual network with a 7x7 stem (depths 18 and 34)."""
    plans = {18: (2, 2, 2, 2), 34: (3, 4, 6, 3)}
    if depth not in plans:
        raise ValueError(f"supported large-image depths are {sorted(plans)}, got {depth}")
    b = plans[depth]
    return NetworkSpec(
        name=_tagged(f"resnet{depth}", msar), family="residual",
        input_size=224, classes=classes, stem_width=64,
        stem_kernel=7, stem_stride=2, stem_pool=True,
        stages=(StageSpec(64, b[0], 1), StageSpec(128, b[1], 2),
                StageSpec(256, b[2], 2), StageSpec(512, b[3], 2)),
        msar=msar)


def densenet_cifar(depth: int = 100, growth: int = 12, classes: int = 10,
                   msar: MsarSettings | None = None) -> NetworkSpec:
    """Small-image dense network of depth 6n+4 with bottleneck steps."""
    if depth < 10 or (depth - 4) % 6:
        raise ValueError(f"depth must be 6n+4 with n >= 1, got {depth}")
    steps = (depth - 4) // 6
    return NetworkSpec(
        name=_tagged(f"densenet{depth}", msar), family="dense",
        input_size=32, classes=classes, stem_width=2 * growth,
        stages=(StageSpec(growth, steps), StageSpec(growth, steps),
                StageSpec(growth, steps)),
        growth=growth, msar=msar)


def resnext50_ilsvrc(classes: int = 1000,
                     msar: MsarSettings | None = None) -> NetworkSpec:
    """Grouped-convolution residual network, cost analysis only."""
    return NetworkSpec(
        name=_tagged("resnext50", msar), family="grouped",
        input_size=224, classes=classes, stem_width=64,
        stem_kernel=7, stem_stride=2, stem_pool=True, groups=32,
        stages=(StageSpec(256, 3, 1), StageSpec(512, 4, 2),
                StageSpec(1024, 6, 2), StageSpec(2048, 3, 2)),
        msar=msar)
