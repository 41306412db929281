"""Axis-aligned interval boxes and sound box propagation through ReLU networks.

The box domain is closed under the affine and ReLU transformers used here, so
propagating a box layer by layer yields a sound over-approximation of the
network image. Optional input bisection tightens the bound: each half is
propagated separately and the componentwise hull of the results is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import Mlp


@dataclass(frozen=True, eq=False)
class IntervalBox:
    """Axis-aligned hyperrectangle [lo, hi], finite bounds, lo <= hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"bound shapes {lo.shape} vs {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError(f"lo > hi: {lo} vs {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IntervalBox)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def __repr__(self) -> str:
        return f"IntervalBox({self.lo.tolist()}, {self.hi.tolist()})"

    def _check_dim(self, other: "IntervalBox") -> None:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def contains(self, other: "IntervalBox") -> bool:
        """True iff other is a subset of self (closed boxes)."""
        self._check_dim(other)
        return bool(np.all(self.lo <= other.lo) and np.all(other.hi <= self.hi))

    def contains_point(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.lo.shape:
            raise ValueError(f"point shape {x.shape} vs box dim {self.dim}")
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def intersects(self, other: "IntervalBox") -> bool:
        """True iff the closed boxes share at least one point."""
        self._check_dim(other)
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def bisect(self, dim: int, point: float) -> tuple["IntervalBox", "IntervalBox"]:
        """Split along one axis at an interior point; the halves share only that face."""
        if not (self.lo[dim] < point < self.hi[dim]):
            raise ValueError(
                f"split point {point} outside open interval ({self.lo[dim]}, {self.hi[dim]}) on dim {dim}"
            )
        left_hi = self.hi.copy()
        left_hi[dim] = point
        right_lo = self.lo.copy()
        right_lo[dim] = point
        return IntervalBox(self.lo, left_hi), IntervalBox(right_lo, self.hi)

    def clip_to(self, domain: "IntervalBox") -> "IntervalBox":
        """Clamp both bounds into the domain (degenerates to a boundary sliver if disjoint)."""
        self._check_dim(domain)
        return IntervalBox(
            np.clip(self.lo, domain.lo, domain.hi),
            np.clip(self.hi, domain.lo, domain.hi),
        )


def hull(boxes: list[IntervalBox]) -> IntervalBox:
    """Smallest box containing all the given boxes."""
    if not boxes:
        raise ValueError("empty hull")
    lo = np.min([b.lo for b in boxes], axis=0)
    hi = np.max([b.hi for b in boxes], axis=0)
    return IntervalBox(lo, hi)


def propagate_affine(w: np.ndarray, b: np.ndarray, x: IntervalBox) -> IntervalBox:
    """Exact interval image of x under the affine map w @ x + b.

    Per output row the bound splits w into positive and negative parts:
    lo' = w+ @ lo + w- @ hi + b and symmetrically for hi'.
    """
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    if w.ndim != 2 or w.shape[1] != x.dim:
        raise ValueError(f"weight shape {w.shape} incompatible with box dim {x.dim}")
    w_pos = np.maximum(w, 0.0)
    w_neg = np.minimum(w, 0.0)
    lo = w_pos @ x.lo + w_neg @ x.hi + b
    hi = w_pos @ x.hi + w_neg @ x.lo + b
    return IntervalBox(lo, hi)


def propagate_relu(x: IntervalBox) -> IntervalBox:
    """Componentwise [max(0, lo), max(0, hi)]: exact for ReLU on boxes."""
    return IntervalBox(np.maximum(x.lo, 0.0), np.maximum(x.hi, 0.0))


def propagate_network(net: Mlp, x: IntervalBox) -> IntervalBox:
    """Layerwise box propagation (no input splitting)."""
    if x.dim != net.input_dim:
        raise ValueError(f"box dim {x.dim} != network input dim {net.input_dim}")
    box = x
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        box = propagate_affine(w, b, box)
        if i < last:
            box = propagate_relu(box)
    return box


def _widest_dim(box: IntervalBox, norm_widths: np.ndarray) -> int | None:
    """Index of the widest dimension after normalisation, or None if nothing splits."""
    widths = box.widths
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(norm_widths > 0.0, widths / norm_widths, 0.0)
    scores = np.where(widths > 0.0, scores, 0.0)
    best = int(np.argmax(scores))
    if scores[best] <= 0.0:
        return None
    return best


def reach_box(net: Mlp, x: IntervalBox, split_depth: int = 0,
              norm_widths: np.ndarray | None = None) -> IntervalBox:
    """Sound over-approximation of {net(p) : p in x} as a box.

    With split_depth > 0 the input box is recursively bisected at the midpoint
    of its widest normalised dimension and the halves' results are hulled, which
    tightens (never loosens) the depth-0 bound. norm_widths gives the reference
    width per input dimension; it defaults to the widths of x itself, so
    zero-width (point) dimensions are never split.
    """
    if x.dim != net.input_dim:
        raise ValueError(f"box dim {x.dim} != network input dim {net.input_dim}")
    if norm_widths is None:
        norm_widths = x.widths
    else:
        norm_widths = np.asarray(norm_widths, dtype=float)
        if norm_widths.shape != (x.dim,):
            raise ValueError(f"norm_widths shape {norm_widths.shape} != ({x.dim},)")
    if split_depth <= 0:
        return propagate_network(net, x)
    dim = _widest_dim(x, norm_widths)
    if dim is None:
        return propagate_network(net, x)
    mid = 0.5 * (x.lo[dim] + x.hi[dim])
    if not (x.lo[dim] < mid < x.hi[dim]):  # interval too narrow to split in float64
        return propagate_network(net, x)
    left, right = x.bisect(dim, mid)
    return hull([
        reach_box(net, left, split_depth - 1, norm_widths),
        reach_box(net, right, split_depth - 1, norm_widths),
    ])
