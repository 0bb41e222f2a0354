"""Layered occupancy grid, random initial placement, and predicate-driven refinement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping

import numpy as np

from .errors import GridFull
from .narrative import AffordanceType, PredicateTriple, SceneFrame, normalize_entity_name
from .relations import (
    CanonicalRelation,
    Position,
    RelationMapTable,
    RelationReview,
    apply_offset,
    check_predicate,
    normalize_relation,
)
from .terrain import BaseMask, PatchRegion
from .tiles import MatchResult

if TYPE_CHECKING:
    from .llm import LLMGateway

OBJECT_LAYERS = (
    AffordanceType.ENVIRONMENTAL_OBJECT,
    AffordanceType.INTERACTIVE_OBJECT,
    AffordanceType.ITEM_COLLECTIBLE,
    AffordanceType.CHARACTER_CREATURE,
)
TOP_LAYER = AffordanceType.CHARACTER_CREATURE.layer

ACTIONS = ("placed", "moved", "skipped_oob", "skipped_blocked", "skipped_overlap", "skipped_conflict",
           "entity_missing")


@dataclass(eq=False)
class SceneGrid:
    """Object layers over a base mask.

    ``layers[aff][y, x]`` holds the slot id of the entity occupying that cell in that layer (0 = empty).
    An entity's layer may sit above its natural affordance layer after an on-top-of promotion.
    """

    base: BaseMask
    patches: tuple[PatchRegion, ...] = ()
    layers: dict[AffordanceType, np.ndarray] = field(default_factory=dict)
    object_positions: dict[str, Position] = field(default_factory=dict)
    slots: dict[str, int] = field(default_factory=dict)
    affordances: dict[str, AffordanceType] = field(default_factory=dict)
    tiles: dict[str, str | None] = field(default_factory=dict)

    def __post_init__(self):
        shape = (self.base.height, self.base.width)
        for aff in OBJECT_LAYERS:
            self.layers.setdefault(aff, np.zeros(shape, dtype=np.int32))

    @property
    def width(self) -> int:
        return self.base.width

    @property
    def height(self) -> int:
        return self.base.height

    def _matrix(self, layer: int) -> np.ndarray:
        return self.layers[AffordanceType.from_layer(layer)]

    def occupant(self, x: int, y: int, layer: int) -> str | None:
        slot = int(self._matrix(layer)[y, x])
        if slot == 0:
            return None
        for name, s in self.slots.items():
            if s == slot:
                return name
        raise AssertionError(f"slot {slot} has no entity")

    def add(self, entity: str, affordance: AffordanceType, x: int, y: int, layer: int | None = None,
            tile_id: str | None = None, slot: int | None = None) -> None:
        if entity in self.object_positions:
            raise ValueError(f"{entity!r} already placed")
        self.slots[entity] = slot if slot is not None else max(self.slots.values(), default=0) + 1
        self.affordances[entity] = affordance
        self.tiles[entity] = tile_id
        self._put(entity, Position(x, y, affordance.layer if layer is None else layer))

    def _put(self, entity: str, pos: Position) -> None:
        matrix = self._matrix(pos.layer)
        if matrix[pos.y, pos.x] not in (0, self.slots[entity]):
            raise ValueError(f"cell ({pos.x}, {pos.y}) layer {pos.layer} already occupied")
        matrix[pos.y, pos.x] = self.slots[entity]
        self.object_positions[entity] = pos

    def move(self, entity: str, pos: Position) -> None:
        old = self.object_positions[entity]
        self._matrix(old.layer)[old.y, old.x] = 0
        self._put(entity, pos)

    def copy(self) -> SceneGrid:
        return SceneGrid(
            self.base, self.patches, {k: v.copy() for k, v in self.layers.items()},
            dict(self.object_positions), dict(self.slots), dict(self.affordances), dict(self.tiles),
        )

    def validate(self) -> None:
        """Raise AssertionError unless matrices and positions agree one-to-one on walkable cells."""
        seen: dict[int, tuple[int, int, int]] = {}
        for aff, matrix in self.layers.items():
            for y, x in zip(*np.nonzero(matrix)):
                slot = int(matrix[y, x])
                assert slot not in seen, f"slot {slot} appears twice"
                seen[slot] = (int(x), int(y), aff.layer)
        assert len(seen) == len(self.object_positions), "matrix entries and positions differ in count"
        for name, pos in self.object_positions.items():
            assert seen.get(self.slots[name]) == (pos.x, pos.y, pos.layer), f"{name} position disagrees with matrix"
            assert self.base.is_walkable(pos.x, pos.y), f"{name} sits on a blocked cell"
            assert 1 <= pos.layer <= TOP_LAYER

    def __eq__(self, other):
        if not isinstance(other, SceneGrid):
            return NotImplemented
        return (
            self.base == other.base
            and self.patches == other.patches
            and self.object_positions == other.object_positions
            and self.slots == other.slots
            and self.affordances == other.affordances
            and self.tiles == other.tiles
            and all(np.array_equal(self.layers[a], other.layers[a]) for a in OBJECT_LAYERS)
        )


@dataclass(frozen=True)
class TripleRecord:
    triple: PredicateTriple
    relation: CanonicalRelation
    satisfied_before: bool
    satisfied_after: bool
    action: str
    promoted: bool = False
    nearest: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.triple.subject, "relation_raw": self.triple.relation, "object": self.triple.object,
            "relation": self.relation.value, "satisfied_before": self.satisfied_before,
            "satisfied_after": self.satisfied_after, "action": self.action,
            "promoted": self.promoted, "nearest": self.nearest,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> TripleRecord:
        return cls(PredicateTriple(doc["subject"], doc["relation_raw"], doc["object"]),
                   CanonicalRelation(doc["relation"]), doc["satisfied_before"], doc["satisfied_after"],
                   doc["action"], doc.get("promoted", False), doc.get("nearest", False))


@dataclass(frozen=True)
class PlacementReport:
    frame: str
    records: tuple[TripleRecord, ...]

    @property
    def satisfied_before(self) -> int:
        return sum(r.satisfied_before for r in self.records)

    @property
    def satisfied_after(self) -> int:
        return sum(r.satisfied_after for r in self.records)

    def to_dict(self) -> dict[str, Any]:
        return {"frame": self.frame, "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> PlacementReport:
        return cls(doc["frame"], tuple(TripleRecord.from_dict(r) for r in doc["records"]))


def _tile_id(match: MatchResult | str | None) -> str | None:
    if match is None or isinstance(match, str):
        return match
    return match.tile_id


def initial_place(
    frame: SceneFrame,
    matches: Mapping[str, MatchResult | str | None],
    mask: BaseMask,
    seed: int,
    patches: tuple[PatchRegion, ...] = (),
) -> SceneGrid:
    """Drop each non-terrain object on a uniformly random free walkable cell of its affordance layer."""
    rng = np.random.default_rng(seed)
    grid = SceneGrid(mask, tuple(patches))
    cells = mask.walkable_cells()
    for obj in frame.objects:
        if obj.affordance is None:
            raise ValueError(f"object {obj.name!r} has no affordance; classify before placing")
        if obj.affordance is AffordanceType.TERRAIN:
            continue
        key = normalize_entity_name(obj.name)
        if key in grid.object_positions:
            continue
        matrix = grid.layers[obj.affordance]
        free = [c for c in cells if matrix[c[1], c[0]] == 0]
        if not free:
            raise GridFull(f"no free walkable cell left in the {obj.affordance.label} layer for {obj.name!r}")
        x, y = free[int(rng.integers(len(free)))]
        grid.add(key, obj.affordance, x, y, tile_id=_tile_id(matches.get(key, matches.get(obj.name))))
    return grid


def _resolve(name: str, aliases: Mapping[str, str] | None) -> str:
    key = normalize_entity_name(name)
    return aliases.get(key, key) if aliases else key


def canonical_relations(
    frame: SceneFrame,
    table: RelationMapTable | None = None,
    gateway: LLMGateway | None = None,
    review: RelationReview | None = None,
) -> list[CanonicalRelation]:
    return [normalize_relation(t.relation, table, gateway, review) for t in frame.triples]


class _Refiner:
    def __init__(self, grid: SceneGrid, entities: list[tuple[str, str]], relations: list[CanonicalRelation]):
        self.grid = grid
        self.entities = entities
        self.relations = relations

    def holds(self, j: int, override: tuple[str, Position] | None = None) -> bool:
        a, b = self.entities[j]
        pos = dict(self.grid.object_positions)
        if override is not None:
            pos[override[0]] = override[1]
        if a not in pos or b not in pos:
            return False
        return check_predicate(pos[a], pos[b], self.relations[j])

    def reason(self, i: int, entity: str, cand: Position, protected: list[int]) -> str | None:
        """Why ``entity`` cannot take ``cand`` for triple ``i`` (None when it can)."""
        g = self.grid
        if not g.base.in_bounds(cand.x, cand.y):
            return "skipped_oob"
        if not g.base.is_walkable(cand.x, cand.y):
            return "skipped_blocked"
        occupant = g.occupant(cand.x, cand.y, cand.layer)
        if occupant not in (None, entity):
            return "skipped_overlap"
        if not self.holds(i, (entity, cand)):
            return "skipped_conflict"
        if any(not self.holds(j, (entity, cand)) for j in protected):
            return "skipped_conflict"
        return None


def apply_spatial_relations(
    grid: SceneGrid,
    frame: SceneFrame,
    table: RelationMapTable | None = None,
    *,
    gateway: LLMGateway | None = None,
    review: RelationReview | None = None,
    aliases: Mapping[str, str] | None = None,
    nearest_search: bool = True,
) -> tuple[SceneGrid, PlacementReport]:
    """Single pass over the frame's triples in narrative order, moving each subject relative to its object.

    A subject goes to the exact offset cell when that cell is in bounds, walkable, free in the subject's
    layer, and keeps every earlier triple that currently holds for the subject. With ``nearest_search``
    the closest cell meeting the same conditions is used when the exact cell fails (directional
    relations only). Otherwise the subject stays put and the record notes why.
    """
    grid = grid.copy()
    relations = canonical_relations(frame, table, gateway, review)
    entities = [(_resolve(t.subject, aliases), _resolve(t.object, aliases)) for t in frame.triples]
    refiner = _Refiner(grid, entities, relations)
    records = []
    for i, (triple, rel) in enumerate(zip(frame.triples, relations)):
        a, b = entities[i]
        pos = grid.object_positions
        if a not in pos or b not in pos:
            records.append(TripleRecord(triple, rel, False, False, "entity_missing"))
            continue
        before = refiner.holds(i)
        protected = [j for j in range(i) if a in entities[j] and refiner.holds(j)]
        natural = grid.affordances[a].layer
        anchor = pos[b]
        promoted = False
        if rel is CanonicalRelation.ON_TOP_OF:
            layer = natural if natural > anchor.layer else min(anchor.layer + 1, TOP_LAYER)
            promoted = layer != natural
        else:
            layer = natural
        target = apply_offset((anchor.x, anchor.y), rel)
        exact = Position(target.x, target.y, layer)
        why = refiner.reason(i, a, exact, protected)
        chosen, nearest = (exact, False) if why is None else (None, False)
        if chosen is None and nearest_search and rel is not CanonicalRelation.ON_TOP_OF:
            best = None
            for y in range(grid.height):
                for x in range(grid.width):
                    cand = Position(x, y, layer)
                    if refiner.reason(i, a, cand, protected) is None:
                        key = (abs(x - exact.x) + abs(y - exact.y), y, x)
                        if best is None or key < best[0]:
                            best = (key, cand)
            if best is not None:
                chosen, nearest = best[1], True
        if chosen is None:
            records.append(TripleRecord(triple, rel, before, before, why, promoted=False))
            continue
        action = "placed" if chosen == pos[a] else "moved"
        grid.move(a, chosen)
        records.append(TripleRecord(triple, rel, before, refiner.holds(i), action, promoted, nearest))
    return grid, PlacementReport(frame.name, tuple(records))


def triple_outcomes(
    grid: SceneGrid,
    frame: SceneFrame,
    relations: list[CanonicalRelation],
    aliases: Mapping[str, str] | None = None,
) -> list[bool]:
    """Per-triple truth on the final grid; a triple with an unplaced entity counts as unsatisfied."""
    out = []
    for t, rel in zip(frame.triples, relations):
        a, b = _resolve(t.subject, aliases), _resolve(t.object, aliases)
        pa, pb = grid.object_positions.get(a), grid.object_positions.get(b)
        out.append(pa is not None and pb is not None and check_predicate(pa, pb, rel))
    return out


def satisfaction_rate(
    grid: SceneGrid,
    frame: SceneFrame,
    table: RelationMapTable | None = None,
    *,
    gateway: LLMGateway | None = None,
    aliases: Mapping[str, str] | None = None,
) -> float:
    """Satisfied triples over all triples; a frame without triples scores 0.0."""
    if not frame.triples:
        return 0.0
    outcomes = triple_outcomes(grid, frame, canonical_relations(frame, table, gateway), aliases)
    return sum(outcomes) / len(outcomes)
