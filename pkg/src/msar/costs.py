"""Analytical parameter and multiply counts for NetworkSpec architectures.

Conventions, applied uniformly:

* one flop = one multiply-accumulate;
* convolutions carry no bias; a convolution costs k*k*c_in*c_out/groups
  parameters and that many multiplies per output position;
* normalization layers hold four per-feature arrays (scale, shift, and
  the two running statistics) and cost no multiplies;
* activations, pooling, upsampling, and elementwise gating cost no
  multiplies;
* the classifier layer has a bias parameter but is charged only for its
  matrix multiplies;
* compression convolutions inside dense-family downsampling transitions
  are charged for parameters but excluded from the multiply budget,
  which covers only feature-producing convolutions and the classifier;
* a recalibration site is charged once per image for pooling (one
  summed-area pass over its input map, shared by all scales) and per
  scale for the two bottleneck transforms applied to every pooled
  vector.

The walkers here mirror the builders in blocks.py layer for layer; the
test suite cross-checks them against the materialized networks.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .blocks import NetworkSpec, dense_reduced, residual_reduced
from .pooling import CoordinateSetSpec


def conv_cost(k: int, c_in: int, c_out: int, out_h: int, out_w: int,
              groups: int = 1) -> tuple[int, int]:
    """(parameters, multiplies) of one convolution layer."""
    if c_in % groups or c_out % groups:
        raise ValueError(f"channels {c_in}->{c_out} not divisible by {groups} groups")
    params = k * k * (c_in // groups) * c_out
    return params, params * out_h * out_w


@dataclass(frozen=True)
class MsarCost:
    """Extra cost of one recalibration site."""

    params_transform: int   # the two linear maps, summed over scales
    params_norm: int        # normalization state, four entries per feature
    flops_pool: int         # shared pooling pass over the site's input map
    flops_transform: int    # bottleneck multiplies over all pooled vectors

    @property
    def params(self) -> int:
        return self.params_transform + self.params_norm

    @property
    def flops(self) -> int:
        return self.flops_pool + self.flops_transform


def msar_cost(d_in: int, d_out: int, reduced: int,
              specs: tuple[CoordinateSetSpec, ...]) -> MsarCost:
    """Cost of recalibrating a d_out-channel map from d_in-channel context."""
    if not specs:
        raise ValueError("msar_cost: no scales given")
    wh = specs[0].width * specs[0].height
    return MsarCost(
        params_transform=len(specs) * reduced * (d_in + d_out),
        params_norm=len(specs) * 4 * (reduced + d_out),
        flops_pool=wh * d_in,
        flops_transform=sum(s.vector_count * reduced * (d_in + d_out) for s in specs),
    )


@dataclass(frozen=True)
class CostRow:
    name: str
    params: int
    flops: int
    is_recal: bool = False


@dataclass(frozen=True)
class CostReport:
    network: str
    rows: tuple[CostRow, ...]

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.rows)

    @property
    def recal_params(self) -> int:
        return sum(r.params for r in self.rows if r.is_recal)

    @property
    def recal_flops(self) -> int:
        return sum(r.flops for r in self.rows if r.is_recal)

    def param_overhead(self) -> Fraction:
        """Recalibration parameters relative to the plain network's."""
        return Fraction(self.recal_params, self.total_params - self.recal_params)

    def flop_overhead(self) -> Fraction:
        return Fraction(self.recal_flops, self.total_flops - self.recal_flops)

    def render_text(self) -> str:
        width = max(len("layer"), max(len(r.name) for r in self.rows))
        lines = [f"network: {self.network}",
                 f"{'layer':<{width}}  {'params':>12}  {'flops':>14}"]
        for r in self.rows:
            mark = " *" if r.is_recal else ""
            lines.append(f"{r.name:<{width}}  {r.params:>12}  {r.flops:>14}{mark}")
        lines.append(f"{'total':<{width}}  {self.total_params:>12}  {self.total_flops:>14}")
        if self.recal_params:
            lines.append(f"{'recalibration':<{width}}  {self.recal_params:>12}  "
                         f"{self.recal_flops:>14}")
            lines.append(f"parameter overhead {float(100 * self.param_overhead()):.2f}%  "
                         f"flop overhead {float(100 * self.flop_overhead()):.3f}%")
        return "\n".join(lines) + "\n"

    def render_csv(self) -> str:
        lines = ["layer,params,flops,recalibration"]
        for r in self.rows:
            lines.append(f"{r.name},{r.params},{r.flops},{int(r.is_recal)}")
        lines.append(f"total,{self.total_params},{self.total_flops},")
        return "\n".join(lines) + "\n"


def _norm_row(name: str, features: int) -> CostRow:
    return CostRow(name, 4 * features, 0)


def _recal_row(name: str, spec: NetworkSpec, d_in: int, d_out: int,
               reduced: int, size: int) -> CostRow:
    specs = spec.msar.config().specs(size, size)
    cost = msar_cost(d_in, d_out, reduced, specs)
    return CostRow(name, cost.params, cost.flops, is_recal=True)


def _residual_rows(spec: NetworkSpec) -> list[CostRow]:
    rows = []
    size = spec.input_size // spec.stem_stride
    p, f = conv_cost(spec.stem_kernel, spec.input_channels, spec.stem_width, size, size)
    rows.append(CostRow("stem.conv", p, f))
    rows.append(_norm_row("stem.norm", spec.stem_width))
    if spec.stem_pool:
        size = (size + 2 - 3) // 2 + 1
    width = spec.stem_width
    for i, stage in enumerate(spec.stages):
        for j in range(stage.blocks):
            stride = stage.stride if j == 0 else 1
            size //= stride
            base = f"stage{i}.block{j}"
            p, f = conv_cost(3, width, stage.width, size, size)
            rows.append(CostRow(f"{base}.conv1", p, f))
            rows.append(_norm_row(f"{base}.norm1", stage.width))
            p, f = conv_cost(3, stage.width, stage.width, size, size)
            rows.append(CostRow(f"{base}.conv2", p, f))
            rows.append(_norm_row(f"{base}.norm2", stage.width))
            if spec.msar is not None:
                reduced = residual_reduced(stage.width, len(spec.msar.scales))
                rows.append(_recal_row(f"{base}.recal", spec,
                                       stage.width, stage.width, reduced, size))
            if stride != 1 or width != stage.width:
                p, f = conv_cost(1, width, stage.width, size, size)
                rows.append(CostRow(f"{base}.project", p, f))
            width = stage.width
    rows.append(CostRow("head.fc", width * spec.classes + spec.classes,
                        width * spec.classes))
    return rows


def _plain_rows(spec: NetworkSpec) -> list[CostRow]:
    rows = []
    size = spec.input_size // spec.stem_stride
    p, f = conv_cost(spec.stem_kernel, spec.input_channels, spec.stem_width, size, size)
    rows.append(CostRow("stem.conv", p, f))
    rows.append(_norm_row("stem.norm", spec.stem_width))
    if spec.stem_pool:
        size = (size + 2 - 3) // 2 + 1
    width = spec.stem_width
    for i, stage in enumerate(spec.stages):
        for j in range(stage.blocks):
            stride = stage.stride if j == 0 else 1
            size //= stride
            base = f"stage{i}.block{j}"
            p, f = conv_cost(3, width, stage.width, size, size)
            rows.append(CostRow(f"{base}.conv", p, f))
            rows.append(_norm_row(f"{base}.norm", stage.width))
            width = stage.width
    rows.append(CostRow("head.fc", width * spec.classes + spec.classes,
                        width * spec.classes))
    return rows


def _grouped_rows(spec: NetworkSpec) -> list[CostRow]:
    rows = []
    size = spec.input_size // spec.stem_stride
    p, f = conv_cost(spec.stem_kernel, spec.input_channels, spec.stem_width, size, size)
    rows.append(CostRow("stem.conv", p, f))
    rows.append(_norm_row("stem.norm", spec.stem_width))
    if spec.stem_pool:
        size = (size + 2 - 3) // 2 + 1
    width = spec.stem_width
    for i, stage in enumerate(spec.stages):
        inner = stage.width // 2
        for j in range(stage.blocks):
            stride = stage.stride if j == 0 else 1
            size //= stride
            base = f"stage{i}.block{j}"
            p, f = conv_cost(1, width, inner, size, size)
            rows.append(CostRow(f"{base}.conv1", p, f))
            rows.append(_norm_row(f"{base}.norm1", inner))
            p, f = conv_cost(3, inner, inner, size, size, groups=spec.groups)
            rows.append(CostRow(f"{base}.conv2", p, f))
            rows.append(_norm_row(f"{base}.norm2", inner))
            p, f = conv_cost(1, inner, stage.width, size, size)
            rows.append(CostRow(f"{base}.conv3", p, f))
            rows.append(_norm_row(f"{base}.norm3", stage.width))
            if spec.msar is not None:
                reduced = residual_reduced(stage.width, len(spec.msar.scales))
                rows.append(_recal_row(f"{base}.recal", spec,
                                       stage.width, stage.width, reduced, size))
            if stride != 1 or width != stage.width:
                p, f = conv_cost(1, width, stage.width, size, size)
                rows.append(CostRow(f"{base}.project", p, f))
            width = stage.width
    rows.append(CostRow("head.fc", width * spec.classes + spec.classes,
                        width * spec.classes))
    return rows


def _dense_rows(spec: NetworkSpec) -> list[CostRow]:
    rows = []
    size = spec.input_size
    inner = spec.bottleneck_factor * spec.growth
    p, f = conv_cost(spec.stem_kernel, spec.input_channels, spec.stem_width, size, size)
    rows.append(CostRow("stem.conv", p, f))
    width = spec.stem_width
    for i, stage in enumerate(spec.stages):
        for j in range(stage.blocks):
            base = f"stage{i}.step{j}"
            rows.append(_norm_row(f"{base}.norm1", width))
            p, f = conv_cost(1, width, inner, size, size)
            rows.append(CostRow(f"{base}.conv1", p, f))
            rows.append(_norm_row(f"{base}.norm2", inner))
            p, f = conv_cost(3, inner, spec.growth, size, size)
            rows.append(CostRow(f"{base}.conv2", p, f))
            if spec.msar is not None:
                d_in = width if spec.msar.stage_mode == "multi" else spec.growth
                rows.append(_recal_row(f"{base}.recal", spec, d_in, spec.growth,
                                       dense_reduced(spec.growth), size))
            width += spec.growth
        if i < len(spec.stages) - 1:
            out = int(width * spec.compression)
            rows.append(_norm_row(f"transition{i}.norm", width))
            rows.append(CostRow(f"transition{i}.conv", width * out, 0))
            width = out
            size //= 2
    rows.append(_norm_row("head.norm", width))
    rows.append(CostRow("head.fc", width * spec.classes + spec.classes,
                        width * spec.classes))
    return rows


def report(spec: NetworkSpec) -> CostReport:
    """Layer-by-layer parameter and multiply budget of an architecture."""
    walker = {"plain": _plain_rows, "residual": _residual_rows,
              "grouped": _grouped_rows, "dense": _dense_rows}[spec.family]
    return CostReport(spec.name, tuple(walker(spec)))
