"""Spatially-asymmetric recalibration of feature maps.

Each scale pools the feature map over its coordinate sets, pushes every
pooled vector through a two-layer bottleneck (linear, normalization,
ReLU, then linear, normalization, logistic), and paints the resulting
gate values back onto the lattice.  Averaging the per-scale maps and
multiplying into the features recalibrates each position by context
gathered at several spatial ranges.  A single regional scale with one
cell collapses to the classic squeeze-and-excitation channel gate;
se_reference implements that case directly for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pooling import STRATEGIES, CoordinateSetSpec, broadcast_weights, coordinate_avg_pool
from .tensor import (BNState, Tensor, add, batch_norm, global_avg_pool,
                     linear, mul, relu, reshape, scale, sigmoid)


@dataclass(frozen=True)
class MultiScaleConfig:
    """Scale set and pooling strategy for one recalibration site."""

    scales: tuple[int, ...] = (1, 2, 4)
    strategy: str = "regional"

    def __post_init__(self):
        scales = tuple(int(k) for k in self.scales)
        object.__setattr__(self, "scales", scales)
        if not scales:
            raise ValueError("scale set must not be empty")
        if any(k < 1 for k in scales):
            raise ValueError(f"scale factors must be >= 1, got {scales}")
        if len(set(scales)) != len(scales):
            raise ValueError(f"duplicate scale factors in {scales}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")

    def specs(self, width: int, height: int) -> tuple[CoordinateSetSpec, ...]:
        return tuple(CoordinateSetSpec(self.strategy, k, width, height)
                     for k in self.scales)


class RecalibrationParams:
    """Bottleneck parameters for one scale: d_in -> reduced -> d_out."""

    def __init__(self, d_in: int, d_out: int, reduced: int, rng: np.random.Generator,
                 dtype=np.float64):
        if reduced < 1:
            raise ValueError(f"reduced width must be >= 1, got {reduced}")
        self.w1 = Tensor(rng.standard_normal((reduced, d_in)) * np.sqrt(2.0 / d_in),
                         dtype=dtype)
        self.g1 = Tensor(np.ones(reduced), dtype=dtype)
        self.b1 = Tensor(np.zeros(reduced), dtype=dtype)
        self.n1 = BNState(reduced, dtype=dtype)
        self.w2 = Tensor(rng.standard_normal((d_out, reduced)) * np.sqrt(1.0 / reduced),
                         dtype=dtype)
        self.g2 = Tensor(np.ones(d_out), dtype=dtype)
        self.b2 = Tensor(np.zeros(d_out), dtype=dtype)
        self.n2 = BNState(d_out, dtype=dtype)


def _bottleneck(flat: Tensor, p: RecalibrationParams, training: bool) -> Tensor:
    u = relu(batch_norm(linear(flat, p.w1), p.g1, p.b1, p.n1, training))
    return sigmoid(batch_norm(linear(u, p.w2), p.g2, p.b2, p.n2, training))


def sar_forward(pool_src: Tensor, params: RecalibrationParams,
                spec: CoordinateSetSpec, training: bool) -> Tensor:
    """Gate map of one scale: (N, d_in, H, W) -> (N, d_out, H, W) in (0, 1)."""
    y = coordinate_avg_pool(pool_src, spec)
    n, m, d = y.shape
    v = _bottleneck(reshape(y, (n * m, d)), params, training)
    z = reshape(v, (n, m, v.shape[1]))
    return broadcast_weights(z, spec)


def ms_sar(gate: Tensor, scale_pairs, training: bool,
           pool_src: Tensor | None = None) -> Tensor:
    """Multiply gate by the mean of per-scale gate maps.

    scale_pairs is a sequence of (RecalibrationParams, CoordinateSetSpec);
    pool_src defaults to the gated tensor itself.
    """
    if not scale_pairs:
        raise ValueError("ms_sar: no scales given")
    src = gate if pool_src is None else pool_src
    maps = [sar_forward(src, p, s, training) for p, s in scale_pairs]
    total = maps[0]
    for extra in maps[1:]:
        total = add(total, extra)
    if len(maps) > 1:
        total = scale(total, 1.0 / len(maps))
    return mul(gate, total)


def se_reference(x: Tensor, params: RecalibrationParams, training: bool) -> Tensor:
    """Squeeze-and-excitation gate: global average, bottleneck, channel scale."""
    n, d, h, w = x.shape
    v = _bottleneck(global_avg_pool(x), params, training)
    z = reshape(v, (n, 1, v.shape[1]))
    gates = broadcast_weights(z, CoordinateSetSpec("regional", 1, w, h))
    return mul(x, gates)


class ScaleRecalibration:
    """Parameters and pooling geometry for one scale at one site."""

    def __init__(self, name: str, spec: CoordinateSetSpec, d_in: int, d_out: int,
                 reduced: int, rng: np.random.Generator, dtype=np.float64):
        self.name = name
        self.spec = spec
        self.params = RecalibrationParams(d_in, d_out, reduced, rng, dtype)

    def forward(self, pool_src: Tensor, training: bool) -> Tensor:
        return sar_forward(pool_src, self.params, self.spec, training)

    def parameters(self):
        p = self.params
        return [
            (f"{self.name}.reduce.weight", p.w1, "weight"),
            (f"{self.name}.reduce_norm.gamma", p.g1, "norm"),
            (f"{self.name}.reduce_norm.beta", p.b1, "norm"),
            (f"{self.name}.expand.weight", p.w2, "weight"),
            (f"{self.name}.expand_norm.gamma", p.g2, "norm"),
            (f"{self.name}.expand_norm.beta", p.b2, "norm"),
        ]

    def norm_states(self):
        return [(f"{self.name}.reduce_norm", self.params.n1),
                (f"{self.name}.expand_norm", self.params.n2)]


class MultiScaleRecalibration:
    """All scales at one recalibration site plus the gating multiply."""

    def __init__(self, name: str, config: MultiScaleConfig, d_in: int, d_out: int,
                 width: int, height: int, reduced: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.name = name
        self.config = config
        self.scales = [
            ScaleRecalibration(f"{name}.scale{k}", spec, d_in, d_out, reduced, rng, dtype)
            for k, spec in zip(config.scales, config.specs(width, height))
        ]

    def forward(self, gate: Tensor, training: bool,
                pool_src: Tensor | None = None) -> Tensor:
        pairs = [(s.params, s.spec) for s in self.scales]
        return ms_sar(gate, pairs, training, pool_src=pool_src)

    def parameters(self):
        return [entry for s in self.scales for entry in s.parameters()]

    def norm_states(self):
        return [entry for s in self.scales for entry in s.norm_states()]
