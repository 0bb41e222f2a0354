"""Terrain planning across frame groups and cellular-automata base masks with terrain patches."""

from __future__ import annotations

import math
import warnings
from collections import Counter, deque
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .errors import DisconnectedMask, GenerationFailed, NoTerrainEvidence, PipelineWarning
from .llm import TERRAIN_KEYWORDS, ClassificationResult, singular
from .narrative import AffordanceType, StoryBundle, normalize_entity_name

WALKABLE_RANGE = (0.35, 0.90)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class CAParams:
    width: int = 20
    height: int = 20
    initial_walkable_prob: float = 0.55
    iterations: int = 4
    birth_threshold: int = 5
    max_retries: int = 10

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("grid must be at least 8x8")
        if not 0.0 < self.initial_walkable_prob <= 1.0:
            raise ValueError("initial_walkable_prob must lie in (0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0 <= self.birth_threshold <= 9:
            raise ValueError("birth_threshold must lie in 0..9")
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")


def count_components(walkable: np.ndarray) -> int:
    _, n = ndimage.label(walkable, structure=FOUR_CONNECTED)
    return int(n)


@dataclass(frozen=True, eq=False)
class BaseMask:
    """Walkable cells, indexed ``walkable[y, x]``; always a single 4-connected region."""

    walkable: np.ndarray
    seed: int = 0
    params: CAParams | None = None

    def __post_init__(self):
        arr = np.asarray(self.walkable, dtype=bool)
        arr.setflags(write=False)
        object.__setattr__(self, "walkable", arr)
        if arr.ndim != 2:
            raise ValueError("mask must be 2-D")
        n = count_components(arr)
        if n != 1:
            raise DisconnectedMask(f"walkable region has {n} 4-connected components, expected 1")

    @property
    def width(self) -> int:
        return self.walkable.shape[1]

    @property
    def height(self) -> int:
        return self.walkable.shape[0]

    @property
    def walkable_count(self) -> int:
        return int(self.walkable.sum())

    @property
    def walkable_fraction(self) -> float:
        return self.walkable_count / self.walkable.size

    def is_walkable(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height and bool(self.walkable[y, x])

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def walkable_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.walkable)
        return [(int(x), int(y)) for y, x in zip(ys, xs)]

    def __eq__(self, other):
        return isinstance(other, BaseMask) and np.array_equal(self.walkable, other.walkable)

    __hash__ = None


@dataclass(frozen=True)
class PatchRegion:
    label: str
    cells: frozenset[tuple[int, int]]


def ca_smooth(grid: np.ndarray, iterations: int, birth_threshold: int) -> np.ndarray:
    """Each pass: a cell is walkable iff its 3x3 window (itself included) has >= threshold walkable cells.

    Cells outside the grid count as blocked.
    """
    h, w = grid.shape
    for _ in range(iterations):
        padded = np.pad(grid, 1, constant_values=False).astype(np.int8)
        counts = sum(padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy in (-1, 0, 1) for dx in (-1, 0, 1))
        grid = counts >= birth_threshold
    return grid


def largest_component(grid: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(grid, structure=FOUR_CONNECTED)
    if n == 0:
        return np.zeros_like(grid, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    # argmax takes the first (scan-order) label on ties
    return labels == int(np.argmax(sizes)) + 1


def generate_base_mask(params: CAParams = CAParams(), seed: int = 0) -> BaseMask:
    lo, hi = WALKABLE_RANGE
    last = None
    for attempt in range(params.max_retries + 1):
        rng = np.random.default_rng(seed + attempt)
        grid = rng.random((params.height, params.width)) < params.initial_walkable_prob
        grid = ca_smooth(grid, params.iterations, params.birth_threshold)
        grid = largest_component(grid)
        last = grid.mean()
        if grid.any() and lo <= last <= hi:
            return BaseMask(grid, seed + attempt, params)
    raise GenerationFailed(
        f"no mask with walkable fraction in [{lo}, {hi}] after {params.max_retries + 1} attempts "
        f"from seed {seed} (last fraction {last:.3f})"
    )


def insert_patch(mask: BaseMask, label: str, target_fraction: float, seed: int) -> PatchRegion:
    """Grow a 4-connected blob of walkable cells from a random start until it covers the target share."""
    if not 0.0 < target_fraction < 1.0:
        raise ValueError("target_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    cells = mask.walkable_cells()
    target = max(1, math.ceil(target_fraction * len(cells)))
    start = cells[int(rng.integers(len(cells)))]
    blob = {start}
    frontier = deque([start])
    steps = ((1, 0), (-1, 0), (0, 1), (0, -1))
    while frontier and len(blob) < target:
        x, y = frontier.popleft()
        for i in rng.permutation(4):
            dx, dy = steps[i]
            nxt = (x + dx, y + dy)
            if nxt not in blob and mask.is_walkable(*nxt):
                blob.add(nxt)
                frontier.append(nxt)
                if len(blob) >= target:
                    break
    if len(blob) < target:
        warnings.warn(f"patch {label!r} reached {len(blob)} of {target} cells", PipelineWarning, stacklevel=2)
    return PatchRegion(label, frozenset(blob))


@dataclass(frozen=True)
class TerrainPlan:
    base_terrain: tuple[str, ...]
    patch_labels: tuple[tuple[str, ...], ...]
    group_id: tuple[int, ...]
    warnings: tuple[str, ...] = ()

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i, g in enumerate(self.group_id):
            out.setdefault(g, []).append(i)
        return [out[g] for g in sorted(out)]

    def to_dict(self) -> dict:
        return {
            "base_terrain": list(self.base_terrain),
            "patch_labels": [list(p) for p in self.patch_labels],
            "group_id": list(self.group_id),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> TerrainPlan:
        return cls(tuple(doc["base_terrain"]), tuple(tuple(p) for p in doc["patch_labels"]),
                   tuple(doc["group_id"]), tuple(doc.get("warnings", ())))


def _dominant(votes: Counter) -> str | None:
    if not votes:
        return None
    top = max(votes.values())
    return min(label for label, n in votes.items() if n == top)


def _is_patch_candidate(name: str, keywords: frozenset[str]) -> bool:
    return any(t in keywords or singular(t) in keywords for t in name.split())


def infer_terrain_plan(
    bundle: StoryBundle,
    classifications: Mapping[str, ClassificationResult],
    *,
    default_base: str = "grass",
    keywords: frozenset[str] = TERRAIN_KEYWORDS,
) -> TerrainPlan:
    """Group consecutive frames by location continuity, then pick base and patch terrains per group."""
    frame_votes: list[Counter] = []
    frame_patches: list[list[str]] = []
    for frame in bundle.frames:
        votes: Counter = Counter()
        patches: list[str] = []
        for obj in frame.objects:
            key = normalize_entity_name(obj.name)
            cls = classifications.get(key) or classifications.get(obj.name)
            if cls is None:
                raise KeyError(f"object {obj.name!r} in frame {frame.name!r} was not classified")
            terrain = (cls.suggested_terrain or "").strip().lower()
            if cls.affordance is AffordanceType.TERRAIN:
                if terrain:
                    votes[terrain] += 1
            elif _is_patch_candidate(key, keywords):
                patches.append(terrain or key)
        frame_votes.append(votes)
        frame_patches.append(patches)

    group_ids: list[int] = []
    group_votes: Counter = Counter()
    gid = -1
    for i, frame in enumerate(bundle.frames):
        mine = _dominant(frame_votes[i])
        theirs = _dominant(group_votes)
        continuous = i > 0 and not frame.scene_break and (mine is None or theirs is None or mine == theirs)
        if not continuous:
            gid += 1
            group_votes = Counter()
        group_votes.update(frame_votes[i])
        group_ids.append(gid)

    base = [""] * len(bundle.frames)
    patch: list[tuple[str, ...]] = [()] * len(bundle.frames)
    notes: list[str] = []
    for g in sorted(set(group_ids)):
        members = [i for i, x in enumerate(group_ids) if x == g]
        votes = sum((frame_votes[i] for i in members), Counter())
        label = _dominant(votes)
        if label is None:
            label = default_base
            msg = (f"no terrain evidence for frames {[bundle.frames[i].name for i in members]}; "
                   f"using default base {default_base!r}")
            warnings.warn(msg, NoTerrainEvidence, stacklevel=2)
            notes.append(msg)
        labels: list[str] = []
        for i in members:
            for p in frame_patches[i]:
                if p not in labels:
                    labels.append(p)
        for i in members:
            base[i] = label
            patch[i] = tuple(labels)
    return TerrainPlan(tuple(base), tuple(patch), tuple(group_ids), tuple(notes))
