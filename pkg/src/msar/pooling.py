"""Integral-image pooling over coordinate sets.

A summed-area table T holds prefix sums of a feature map, so the sum of
any axis-aligned rectangle costs four lookups.  Coordinate sets come in
two flavors: the sliding strategy assigns each position the square
window of half-width floor(sqrt(W*H)/K) around it (clipped at the
borders), and the regional strategy partitions the lattice into a KxK
grid of cells whose positions all share one pooled vector.

Regional cell means are computed by direct slice reduction (each pixel
is read exactly once, and a K=1 cell mean is bitwise identical to a
plain global average); sliding means go through the summed-area table,
one table per map shared by every query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _emit

STRATEGIES = ("sliding", "regional")


@dataclass(frozen=True)
class CoordinateSetSpec:
    """Pooling geometry for one scale on a W x H lattice."""

    strategy: str
    k: int
    width: int
    height: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.k < 1:
            raise ValueError(f"scale factor must be >= 1, got {self.k}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"empty lattice {self.width}x{self.height}")
        if self.strategy == "regional" and self.k > min(self.width, self.height):
            raise ValueError(
                f"regional K={self.k} exceeds min lattice side "
                f"{min(self.width, self.height)}; cells would be empty")

    @property
    def threshold(self) -> float:
        """Sliding window threshold sqrt(W*H)/K."""
        return (self.width * self.height) ** 0.5 / self.k

    @property
    def vector_count(self) -> int:
        """Distinct pooled vectors per image."""
        if self.strategy == "regional":
            return self.k * self.k
        return self.width * self.height


def _edges(n: int, k: int) -> list[int]:
    # equal partition boundaries: round(i*n/k), i = 0..k
    return [round(i * n / k) for i in range(k + 1)]


def _unwrap(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def build_sat(x) -> np.ndarray:
    """Prefix-sum table of a D x H x W slice: T[d,h,w] = sum x[d,:h+1,:w+1]."""
    x = _unwrap(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("build_sat: input contains non-finite entries")
    return np.cumsum(np.cumsum(x, axis=-2), axis=-1)


def rect_sum(sat: np.ndarray, d: int, h1: int, h2: int, w1: int, w2: int) -> float:
    """Sum of channel d over rows h1..h2 and columns w1..w2 (inclusive)."""
    height, width = sat.shape[-2], sat.shape[-1]
    if h1 > h2 or w1 > w2:
        raise ValueError(f"rect_sum: inverted bounds rows {h1}..{h2}, cols {w1}..{w2}")
    if h1 < 0 or w1 < 0 or h2 >= height or w2 >= width:
        raise ValueError(f"rect_sum: rectangle rows {h1}..{h2} cols {w1}..{w2} "
                         f"outside {height}x{width} lattice")
    t = sat[d]
    total = t[h2, w2]
    if h1 > 0:
        total = total - t[h1 - 1, w2]
    if w1 > 0:
        total = total - t[h2, w1 - 1]
    if h1 > 0 and w1 > 0:
        total = total + t[h1 - 1, w1 - 1]
    return float(total)


def coordinate_set(spec: CoordinateSetSpec, w: int, h: int):
    """Rectangle (h1, h2, w1, w2) of the coordinate set at (w, h), plus its size."""
    if not (0 <= w < spec.width and 0 <= h < spec.height):
        raise ValueError(f"position ({w},{h}) outside {spec.width}x{spec.height} lattice")
    if spec.strategy == "sliding":
        r = int(spec.threshold)
        h1, h2 = max(0, h - r), min(spec.height - 1, h + r)
        w1, w2 = max(0, w - r), min(spec.width - 1, w + r)
    else:
        he = _edges(spec.height, spec.k)
        we = _edges(spec.width, spec.k)
        ci = next(i for i in range(spec.k) if he[i] <= h < he[i + 1])
        cj = next(j for j in range(spec.k) if we[j] <= w < we[j + 1])
        h1, h2 = he[ci], he[ci + 1] - 1
        w1, w2 = we[cj], we[cj + 1] - 1
    return (h1, h2, w1, w2), (h2 - h1 + 1) * (w2 - w1 + 1)


def _cells(spec: CoordinateSetSpec):
    """Row-major list of regional cell rectangles (h1, h2, w1, w2)."""
    he = _edges(spec.height, spec.k)
    we = _edges(spec.width, spec.k)
    return [(he[i], he[i + 1] - 1, we[j], we[j + 1] - 1)
            for i in range(spec.k) for j in range(spec.k)]


def _window_bounds(n: int, r: int):
    pos = np.arange(n)
    return np.maximum(0, pos - r), np.minimum(n - 1, pos + r)


def _sliding_box_means(x: np.ndarray, spec: CoordinateSetSpec):
    """Mean of the clipped square window at every position of (..., H, W) maps."""
    height, width = spec.height, spec.width
    r = int(spec.threshold)
    sat = np.cumsum(np.cumsum(x, axis=-2), axis=-1)
    pad = np.zeros(x.shape[:-2] + (height + 1, width + 1), dtype=sat.dtype)
    pad[..., 1:, 1:] = sat
    h1, h2 = _window_bounds(height, r)
    w1, w2 = _window_bounds(width, r)
    sums = (pad[..., h2 + 1, :][..., w2 + 1]
            - pad[..., h1, :][..., w2 + 1]
            - pad[..., h2 + 1, :][..., w1]
            + pad[..., h1, :][..., w1])
    counts = (h2 - h1 + 1)[:, None] * (w2 - w1 + 1)[None, :]
    return sums / counts, counts.astype(np.float64)


def region_avg_pool(x, spec: CoordinateSetSpec) -> np.ndarray:
    """Pooled vectors of a D x H x W slice.

    Regional strategy: (K*K, D), one vector per cell, row-major cells.
    Sliding strategy: (H*W, D), one vector per position, row-major
    positions, each the rect_sum of its window divided by the window size.
    """
    x = _unwrap(x)
    if x.ndim != 3 or x.shape[1] != spec.height or x.shape[2] != spec.width:
        raise ValueError(f"region_avg_pool: expected (D,{spec.height},{spec.width}), got {x.shape}")
    if spec.strategy == "regional":
        return np.stack([x[:, h1:h2 + 1, w1:w2 + 1].mean(axis=(1, 2))
                         for h1, h2, w1, w2 in _cells(spec)])
    means, _ = _sliding_box_means(x, spec)
    return means.reshape(x.shape[0], -1).T


# ---------------------------------------------------------------------------
# differentiable batched pooling / upsampling
# ---------------------------------------------------------------------------

def coordinate_avg_pool(x: Tensor, spec: CoordinateSetSpec) -> Tensor:
    """(N, D, H, W) -> (N, M, D) coordinate-set averages, M = spec.vector_count."""
    n, d, height, width = x.shape
    if height != spec.height or width != spec.width:
        raise ValueError(f"coordinate_avg_pool: map {height}x{width} does not match "
                         f"spec lattice {spec.height}x{spec.width}")
    if spec.strategy == "regional":
        cells = _cells(spec)
        y = np.stack([x.data[:, :, h1:h2 + 1, w1:w2 + 1].mean(axis=(2, 3))
                      for h1, h2, w1, w2 in cells], axis=1)
        out = Tensor(y)

        def bwd(og):
            x.ensure_grad()
            for idx, (h1, h2, w1, w2) in enumerate(cells):
                count = (h2 - h1 + 1) * (w2 - w1 + 1)
                x.grad[:, :, h1:h2 + 1, w1:w2 + 1] += \
                    (og[:, idx, :] / count)[:, :, None, None]

        return _emit("coordinate_avg_pool", out, bwd)

    means, counts = _sliding_box_means(x.data, spec)
    out = Tensor(means.transpose(0, 2, 3, 1).reshape(n, height * width, d))

    def bwd(og):
        # window membership is symmetric, so the adjoint of the clipped-box
        # average is a clipped-box sum of og/|S| over the same geometry
        x.ensure_grad()
        u = og.reshape(n, height, width, d).transpose(0, 3, 1, 2) / counts
        box_means, _ = _sliding_box_means(u, spec)
        x.grad += box_means * counts

    return _emit("coordinate_avg_pool", out, bwd)


def broadcast_weights(z: Tensor, spec: CoordinateSetSpec) -> Tensor:
    """(N, M, D) pooled-position values -> (N, D, H, W) map by duplication."""
    n, m, d = z.shape
    if m != spec.vector_count:
        raise ValueError(f"broadcast_weights: {m} vectors but spec has {spec.vector_count}")
    height, width = spec.height, spec.width
    if spec.strategy == "sliding":
        out = Tensor(z.data.reshape(n, height, width, d).transpose(0, 3, 1, 2).copy())

        def bwd(og):
            z.ensure_grad()
            z.grad += og.transpose(0, 2, 3, 1).reshape(n, m, d)

        return _emit("broadcast_weights", out, bwd)

    cells = _cells(spec)
    full = np.empty((n, d, height, width), dtype=z.dtype)
    for idx, (h1, h2, w1, w2) in enumerate(cells):
        full[:, :, h1:h2 + 1, w1:w2 + 1] = z.data[:, idx, :][:, :, None, None]
    out = Tensor(full)

    def bwd(og):
        z.ensure_grad()
        for idx, (h1, h2, w1, w2) in enumerate(cells):
            z.grad[:, idx, :] += og[:, :, h1:h2 + 1, w1:w2 + 1].sum(axis=(2, 3))

    return _emit("broadcast_weights", out, bwd)
