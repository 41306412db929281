"""Goal space as a disjoint box partition, with reachability-driven refinement.

A GoalSpace covers the full state domain with pairwise interior-disjoint
boxes. When the reachable set computed from one region against a target is
neither contained in nor disjoint from the target, the source region is
recursively bisected until every piece is decidable or at the resolution
limit; the split is committed only if it actually separates behaviours
(at least one REACHED and one NOT_REACHED leaf).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .intervals import IntervalBox


class ReachVerdict(enum.Enum):
    REACHED = "REACHED"
    NOT_REACHED = "NOT_REACHED"
    AMBIGUOUS = "AMBIGUOUS"


def classify(reach: IntervalBox, target: IntervalBox) -> ReachVerdict:
    """REACHED iff reach is inside target, NOT_REACHED iff disjoint, else AMBIGUOUS."""
    if target.contains(reach):
        return ReachVerdict.REACHED
    if not reach.intersects(target):
        return ReachVerdict.NOT_REACHED
    return ReachVerdict.AMBIGUOUS


@dataclass
class GoalRegion:
    id: int
    box: IntervalBox
    parent_id: int | None = None


@dataclass
class RefinementReport:
    """Outcome of one refine() call; leaves carry the analysis verdicts."""

    source_id: int
    target_id: int
    committed: bool
    leaves: list[tuple[IntervalBox, ReachVerdict]]
    new_region_ids: list[int] = field(default_factory=list)


class GoalSpace:
    """The evolving partition of the state domain into goal regions."""

    def __init__(self, regions: list[GoalRegion], state_domain: IntervalBox, generation: int = 0):
        self.regions = list(regions)
        self.state_domain = state_domain
        self.generation = generation
        self._next_id = 1 + max((r.id for r in self.regions), default=-1)
        self._rebuild_cache()

    @classmethod
    def single_region(cls, state_domain: IntervalBox) -> "GoalSpace":
        return cls([GoalRegion(0, state_domain)], state_domain)

    @classmethod
    def split_halves(cls, state_domain: IntervalBox, dim: int = 0) -> "GoalSpace":
        mid = float(state_domain.center[dim])
        left, right = state_domain.bisect(dim, mid)
        return cls([GoalRegion(0, left), GoalRegion(1, right)], state_domain)

    @classmethod
    def from_boxes(cls, boxes: list[IntervalBox], state_domain: IntervalBox) -> "GoalSpace":
        return cls([GoalRegion(i, b) for i, b in enumerate(boxes)], state_domain)

    @property
    def dim(self) -> int:
        return self.state_domain.dim

    def __len__(self) -> int:
        return len(self.regions)

    def ids(self) -> list[int]:
        return sorted(r.id for r in self.regions)

    def region(self, region_id: int) -> GoalRegion:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(f"unknown region id {region_id}")

    def _rebuild_cache(self) -> None:
        if self.regions:
            self._cache_lo = np.stack([r.box.lo for r in self.regions])
            self._cache_hi = np.stack([r.box.hi for r in self.regions])
            self._cache_ids = np.array([r.id for r in self.regions])
        else:
            self._cache_lo = np.empty((0, self.dim))
            self._cache_hi = np.empty((0, self.dim))
            self._cache_ids = np.empty((0,), dtype=int)

    def locate(self, s: np.ndarray) -> int:
        """Region id owning state s (clamped into the domain first).

        A point on a shared face belongs to the containing region with the
        smallest id, which makes the map total and unique.
        """
        s = np.clip(np.asarray(s, dtype=float), self.state_domain.lo, self.state_domain.hi)
        inside = np.all((self._cache_lo <= s) & (s <= self._cache_hi), axis=1)
        candidates = self._cache_ids[inside]
        if candidates.size == 0:  # unreachable if the partition invariant holds
            raise RuntimeError(f"no region contains state {s.tolist()}; partition broken")
        return int(candidates.min())

    def snapshot(self) -> list[dict]:
        """JSON-serialisable partition description, sorted by region id."""
        return [
            {
                "id": r.id,
                "parent_id": r.parent_id,
                "lo": r.box.lo.tolist(),
                "hi": r.box.hi.tolist(),
            }
            for r in sorted(self.regions, key=lambda r: r.id)
        ]

    @classmethod
    def from_snapshot(cls, entries: list[dict], state_domain: IntervalBox,
                      generation: int = 0) -> "GoalSpace":
        regions = [
            GoalRegion(int(e["id"]), IntervalBox(e["lo"], e["hi"]),
                       None if e.get("parent_id") is None else int(e["parent_id"]))
            for e in entries
        ]
        return cls(regions, state_domain, generation)

    def invariant_check(self, min_width: np.ndarray | float | None = None,
                        rel_tol: float = 1e-9) -> list[str]:
        """Verify disjointness and coverage; returns violation strings (empty = ok)."""
        violations: list[str] = []
        for r in self.regions:
            if not self.state_domain.contains(r.box):
                violations.append(f"region {r.id} leaves the state domain")
        n = len(self.regions)
        for i in range(n):
            for j in range(i + 1, n):
                a, b = self.regions[i], self.regions[j]
                olo = np.maximum(a.box.lo, b.box.lo)
                ohi = np.minimum(a.box.hi, b.box.hi)
                if np.all(olo < ohi):
                    violations.append(f"regions {a.id} and {b.id} overlap in the interior")
        total = sum(r.box.volume for r in self.regions)
        domain_vol = self.state_domain.volume
        if abs(total - domain_vol) > rel_tol * max(domain_vol, 1.0):
            violations.append(
                f"coverage gap: region volumes sum to {total}, domain volume is {domain_vol}"
            )
        if min_width is not None:
            mw = np.broadcast_to(np.asarray(min_width, dtype=float), (self.dim,))
            for r in self.regions:
                if np.any(r.box.widths < mw - 1e-12):
                    violations.append(f"region {r.id} narrower than min width {mw.tolist()}")
        return violations


def _pick_split(box: IntervalBox, target: IntervalBox,
                reach_fn: Callable[[IntervalBox], IntervalBox],
                min_width: np.ndarray, norm_widths: np.ndarray
                ) -> tuple[IntervalBox, IntervalBox] | None:
    """Choose the midpoint bisection to try next, or None if no dim may split.

    Splits whose children would fall below min_width are excluded. Among the
    rest, prefer a dimension where at least one child is already decidable;
    tie-break by widest normalised width, then lowest dimension index.
    """
    best_key = None
    best_children = None
    widths = box.widths
    for d in range(box.dim):
        if widths[d] <= 0.0 or 0.5 * widths[d] < min_width[d]:
            continue
        mid = 0.5 * (box.lo[d] + box.hi[d])
        if not (box.lo[d] < mid < box.hi[d]):
            continue
        children = box.bisect(d, mid)
        decidable = any(
            classify(reach_fn(c), target) is not ReachVerdict.AMBIGUOUS for c in children
        )
        norm = widths[d] / norm_widths[d] if norm_widths[d] > 0.0 else 0.0
        key = (1 if decidable else 0, norm, -d)
        if best_key is None or key > best_key:
            best_key = key
            best_children = children
    return best_children


def refine(gs: GoalSpace, source_id: int, target_id: int,
           reach_fn: Callable[[IntervalBox], IntervalBox],
           min_width: np.ndarray | float, max_depth: int = 6) -> RefinementReport:
    """Recursively split the source region until reachability of the target is decidable.

    reach_fn maps a source box to its over-approximated reachable set. Leaves
    are REACHED, NOT_REACHED, or AMBIGUOUS at the resolution limit. The split
    is committed (source replaced by all leaves, generation bumped) only when
    both a REACHED and a NOT_REACHED leaf exist; otherwise nothing changes.
    """
    source = gs.region(source_id)
    target = gs.region(target_id)
    min_w = np.broadcast_to(np.asarray(min_width, dtype=float), (gs.dim,))
    norm_widths = gs.state_domain.widths

    def analyze(box: IntervalBox, depth: int) -> list[tuple[IntervalBox, ReachVerdict]]:
        verdict = classify(reach_fn(box), target.box)
        if verdict is not ReachVerdict.AMBIGUOUS:
            return [(box, verdict)]
        if depth >= max_depth:
            return [(box, ReachVerdict.AMBIGUOUS)]
        children = _pick_split(box, target.box, reach_fn, min_w, norm_widths)
        if children is None:
            return [(box, ReachVerdict.AMBIGUOUS)]
        left = analyze(children[0], depth + 1)
        right = analyze(children[1], depth + 1)
        # merge same-verdict sibling leaves: if every state of both halves has
        # the same decided behaviour, their union does too, so keep the coarser
        # box instead of shattering the partition
        if len(left) == 1 and len(right) == 1 and left[0][1] is right[0][1]:
            return [(box, left[0][1])]
        return left + right

    leaves = analyze(source.box, 0)
    verdicts = {v for _, v in leaves}
    committed = ReachVerdict.REACHED in verdicts and ReachVerdict.NOT_REACHED in verdicts
    report = RefinementReport(source_id, target_id, committed, leaves)
    if not committed:
        return report

    new_regions = []
    for box, _ in leaves:
        new_regions.append(GoalRegion(gs._next_id, box, parent_id=source_id))
        report.new_region_ids.append(gs._next_id)
        gs._next_id += 1
    gs.regions = [r for r in gs.regions if r.id != source_id] + new_regions
    gs.generation += 1
    gs._rebuild_cache()
    return report
