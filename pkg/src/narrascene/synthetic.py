"""Synthetic tilesets for tests and demos (no real asset library needed)."""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .narrative import AffordanceType, normalize_entity_name
from .tiles import TileRecord

ADJECTIVES = (
    "old", "mossy", "golden", "broken", "ancient", "dark", "small", "large", "glowing", "wooden",
    "stone", "iron", "crystal", "red", "blue", "green", "wild", "frozen", "burnt", "shiny",
)
NOUNS = {
    AffordanceType.TERRAIN: ("grass", "sand", "water", "dirt", "snow", "lava", "floor", "cobblestone", "swamp", "ice"),
    AffordanceType.ENVIRONMENTAL_OBJECT: ("tree", "rock", "bush", "wall", "house", "fence", "pillar", "statue", "ruin",
                                          "column", "tent", "lamp", "fountain", "bridge", "cliff"),
    AffordanceType.INTERACTIVE_OBJECT: ("door", "chest", "lever", "barrel", "table", "terminal", "throne", "altar",
                                        "crate", "desk", "bookshelf", "ladder"),
    AffordanceType.ITEM_COLLECTIBLE: ("coin", "key", "gem", "potion", "map", "scroll", "sword", "amulet", "book",
                                      "note", "compass", "apple"),
    AffordanceType.CHARACTER_CREATURE: ("knight", "dragon", "wolf", "slime", "merchant", "wizard", "pirate", "bat",
                                        "guard", "ghost", "spider", "hero"),
}
GROUPS = ("forest", "dungeon", "town", "desert", "sea", "city", "cave")


def synthetic_tiles(n: int, seed: int = 0) -> list[TileRecord]:
    """``n`` random tiles named "<adjective> <noun>" with affordance-consistent nouns."""
    rng = np.random.default_rng(seed)
    affordances = list(AffordanceType)
    out = []
    for i in range(n):
        aff = affordances[int(rng.integers(len(affordances)))]
        noun = NOUNS[aff][int(rng.integers(len(NOUNS[aff])))]
        adj = ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]
        group = GROUPS[int(rng.integers(len(GROUPS)))]
        out.append(TileRecord(f"syn_{i:05d}", f"{adj} {noun}", group, aff.label.lower(), aff))
    return out


def vocabulary_tiles(
    objects: Mapping[str, AffordanceType],
    seed: int = 0,
    *,
    correct_rate: float = 0.7,
    variants: int = 2,
    filler: int = 200,
) -> list[TileRecord]:
    """A tileset seeded with tiles resembling the given object names.

    For each object, ``variants`` tiles reuse its head noun with a random adjective; each keeps the
    object's affordance with probability ``correct_rate`` (so affordance agreement is imperfect, as with
    real asset libraries). ``filler`` unrelated tiles are appended.
    """
    rng = np.random.default_rng(seed)
    affordances = list(AffordanceType)
    out: list[TileRecord] = []
    for name in sorted(objects):
        words = normalize_entity_name(name).split()
        head = words[-1]
        for v in range(variants):
            aff = objects[name]
            if rng.random() >= correct_rate:
                aff = affordances[int(rng.integers(len(affordances)))]
            adj = ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]
            label = " ".join(words) if v == 0 else f"{adj} {head}"
            tid = "voc_" + "_".join(words) + f"_{v}"
            out.append(TileRecord(tid, label, GROUPS[int(rng.integers(len(GROUPS)))], aff.label.lower(), aff))
    for t in synthetic_tiles(filler, seed + 1):
        out.append(TileRecord(t.id.replace("syn_", "fill_"), t.name, t.group_label, t.supercategory, t.affordance))
    return out


def story_vocabulary(bundles: Iterable) -> dict[str, AffordanceType]:
    """Every classified object across the bundles (first affordance seen wins)."""
    vocab: dict[str, AffordanceType] = {}
    for b in bundles:
        for o in b.all_objects():
            if o.affordance is not None:
                vocab.setdefault(normalize_entity_name(o.name), o.affordance)
    return vocab
