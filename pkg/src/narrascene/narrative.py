"""Stories, time frames, predicate triples and entity-name normalization.

A story document is plain JSON::

    {"title": "...", "story": "...",
     "frames": [{"name": "...", "scene_break": false,
                 "triples": [{"subject": "...", "relation": "...", "object": "..."}],
                 "objects": [{"name": "...", "affordance": "terrain", "suggested_terrain": "forest"}]}]}

Parsing keeps raw entity names; :func:`apply_alias_map` canonicalizes them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import DanglingEntity, EmptyAfterNormalization, EmptyFrames, MalformedDocument

ARTICLES = frozenset({"the", "a", "an"})


class AffordanceType(str, Enum):
    TERRAIN = "terrain"
    ENVIRONMENTAL_OBJECT = "environmental_object"
    INTERACTIVE_OBJECT = "interactive_object"
    ITEM_COLLECTIBLE = "item_collectible"
    CHARACTER_CREATURE = "character_creature"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def layer(self) -> int:
        """Compositing depth: terrain 0 up to characters 4."""
        return _ORDER.index(self)

    @classmethod
    def parse(cls, text: str | AffordanceType) -> AffordanceType:
        if isinstance(text, AffordanceType):
            return text
        key = re.sub(r"[^a-z]", "", str(text).lower())
        try:
            return _SYNONYMS[key]
        except KeyError:
            raise ValueError(f"unknown affordance type {text!r}") from None

    @classmethod
    def from_layer(cls, layer: int) -> AffordanceType:
        return _ORDER[layer]


_ORDER = (
    AffordanceType.TERRAIN,
    AffordanceType.ENVIRONMENTAL_OBJECT,
    AffordanceType.INTERACTIVE_OBJECT,
    AffordanceType.ITEM_COLLECTIBLE,
    AffordanceType.CHARACTER_CREATURE,
)
_LABELS = {
    AffordanceType.TERRAIN: "terrain",
    AffordanceType.ENVIRONMENTAL_OBJECT: "environmental object",
    AffordanceType.INTERACTIVE_OBJECT: "interactive object",
    AffordanceType.ITEM_COLLECTIBLE: "item/collectible",
    AffordanceType.CHARACTER_CREATURE: "character/creature",
}
_SYNONYMS = {
    "terrain": AffordanceType.TERRAIN,
    "environmentalobject": AffordanceType.ENVIRONMENTAL_OBJECT,
    "environmental": AffordanceType.ENVIRONMENTAL_OBJECT,
    "environment": AffordanceType.ENVIRONMENTAL_OBJECT,
    "interactiveobject": AffordanceType.INTERACTIVE_OBJECT,
    "interactive": AffordanceType.INTERACTIVE_OBJECT,
    "itemcollectible": AffordanceType.ITEM_COLLECTIBLE,
    "item": AffordanceType.ITEM_COLLECTIBLE,
    "collectible": AffordanceType.ITEM_COLLECTIBLE,
    "charactercreature": AffordanceType.CHARACTER_CREATURE,
    "character": AffordanceType.CHARACTER_CREATURE,
    "creature": AffordanceType.CHARACTER_CREATURE,
}


@dataclass(frozen=True)
class PredicateTriple:
    subject: str
    relation: str
    object: str

    def __post_init__(self):
        for name in ("subject", "relation", "object"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise MalformedDocument(f"triple field {name!r} must be non-empty text, got {value!r}")

    def entities(self) -> tuple[str, str]:
        return self.subject, self.object


@dataclass(frozen=True)
class NarrativeObject:
    name: str
    affordance: AffordanceType | None = None
    suggested_terrain: str | None = None


@dataclass(frozen=True)
class SceneFrame:
    name: str
    triples: tuple[PredicateTriple, ...]
    objects: tuple[NarrativeObject, ...]
    scene_break: bool = False

    def object_named(self, name: str) -> NarrativeObject | None:
        for obj in self.objects:
            if obj.name == name:
                return obj
        return None

    def entity_names(self) -> list[str]:
        return [o.name for o in self.objects]


@dataclass(frozen=True)
class StoryBundle:
    title: str
    story_text: str
    frames: tuple[SceneFrame, ...] = field(default_factory=tuple)

    def all_objects(self) -> Iterable[NarrativeObject]:
        for frame in self.frames:
            yield from frame.objects


def normalize_entity_name(raw: str) -> str:
    """Canonical lookup key: lowercase, separators to spaces, leading articles dropped.

    >>> normalize_entity_name("The Guardian  Dragon")
    'guardian dragon'
    >>> normalize_entity_name("decrepit_library")
    'decrepit library'
    """
    if not isinstance(raw, str) or not raw.strip():
        raise EmptyAfterNormalization(f"entity name is empty: {raw!r}")
    text = raw.lower().replace("’", "'").replace("‘", "'")
    text = re.sub(r"[_\-]", " ", text)
    text = re.sub(r"[^\w\s']", " ", text)
    tokens = [t.strip("'") for t in text.split()]
    tokens = [t for t in tokens if t]
    while tokens and tokens[0] in ARTICLES:
        tokens.pop(0)
    if not tokens:
        raise EmptyAfterNormalization(f"entity name {raw!r} is empty after normalization")
    return " ".join(tokens)


def _safe_key(name: str) -> str | None:
    try:
        return normalize_entity_name(name)
    except EmptyAfterNormalization:
        return None


def _check_linkage(frame_name: str, triples, objects, key=_safe_key) -> list[str]:
    known = {key(o.name) for o in objects}
    missing = []
    for t in triples:
        for ent in t.entities():
            k = key(ent)
            if k is None or k not in known:
                if ent not in missing:
                    missing.append(ent)
    return missing


def _require(doc: Mapping, key: str, kind, where: str):
    if key not in doc:
        raise MalformedDocument(f"{where}: missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise MalformedDocument(f"{where}: field {key!r} has type {type(value).__name__}")
    return value


def _parse_object(raw: Any, where: str) -> NarrativeObject:
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, Mapping):
        raise MalformedDocument(f"{where}: object entry must be a mapping")
    name = _require(raw, "name", str, where)
    if not name.strip():
        raise MalformedDocument(f"{where}: object name is empty")
    aff = raw.get("affordance")
    if aff is not None:
        try:
            aff = AffordanceType.parse(aff)
        except ValueError as exc:
            raise MalformedDocument(f"{where}: {exc}") from None
    terrain = raw.get("suggested_terrain")
    if terrain is not None and not isinstance(terrain, str):
        raise MalformedDocument(f"{where}: suggested_terrain must be text")
    return NarrativeObject(name=name, affordance=aff, suggested_terrain=terrain)


def _parse_frame(raw: Any, index: int, strict: bool) -> SceneFrame:
    where = f"frames[{index}]"
    if not isinstance(raw, Mapping):
        raise MalformedDocument(f"{where}: frame must be a mapping")
    name = _require(raw, "name", str, where)
    scene_break = raw.get("scene_break", False)
    if not isinstance(scene_break, bool):
        raise MalformedDocument(f"{where}: scene_break must be a boolean")
    triples_raw = _require(raw, "triples", list, where)
    if not triples_raw:
        raise EmptyFrames(f"frame {name!r} has no triples")
    triples = []
    for j, t in enumerate(triples_raw):
        if not isinstance(t, Mapping):
            raise MalformedDocument(f"{where}.triples[{j}]: triple must be a mapping")
        triples.append(PredicateTriple(
            subject=_require(t, "subject", str, f"{where}.triples[{j}]").strip(),
            relation=_require(t, "relation", str, f"{where}.triples[{j}]").strip(),
            object=_require(t, "object", str, f"{where}.triples[{j}]").strip(),
        ))
    objects = [_parse_object(o, f"{where}.objects[{j}]") for j, o in enumerate(raw.get("objects", []))]
    missing = _check_linkage(name, triples, objects)
    if missing:
        if strict:
            raise DanglingEntity(name, missing[0])
        objects.extend(NarrativeObject(name=m) for m in missing)
    return SceneFrame(name=name, triples=tuple(triples), objects=tuple(objects), scene_break=scene_break)


def parse_story_bundle(doc: Mapping[str, Any], *, strict: bool = True) -> StoryBundle:
    """Validate a story document. ``strict=False`` auto-creates objects for dangling triple entities."""
    if not isinstance(doc, Mapping):
        raise MalformedDocument("story document must be a mapping")
    title = _require(doc, "title", str, "story")
    story = _require(doc, "story", str, "story")
    frames_raw = _require(doc, "frames", list, "story")
    if not frames_raw:
        raise EmptyFrames("story has no frames")
    frames = tuple(_parse_frame(f, i, strict) for i, f in enumerate(frames_raw))
    names = [f.name for f in frames]
    if len(set(names)) != len(names):
        raise MalformedDocument(f"duplicate frame names in {names}")
    return StoryBundle(title=title, story_text=story, frames=frames)


def story_to_dict(bundle: StoryBundle) -> dict[str, Any]:
    frames = []
    for f in bundle.frames:
        objects = []
        for o in f.objects:
            entry: dict[str, Any] = {"name": o.name}
            if o.affordance is not None:
                entry["affordance"] = o.affordance.value
            if o.suggested_terrain is not None:
                entry["suggested_terrain"] = o.suggested_terrain
            objects.append(entry)
        frames.append({
            "name": f.name,
            "scene_break": f.scene_break,
            "triples": [{"subject": t.subject, "relation": t.relation, "object": t.object} for t in f.triples],
            "objects": objects,
        })
    return {"title": bundle.title, "story": bundle.story_text, "frames": frames}


def load_story(path: str | Path, *, strict: bool = True) -> StoryBundle:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: not valid JSON ({exc})") from None
    return parse_story_bundle(doc, strict=strict)


def dump_story(bundle: StoryBundle, path: str | Path) -> None:
    Path(path).write_text(json.dumps(story_to_dict(bundle), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def apply_alias_map(bundle: StoryBundle, aliases: Mapping[str, str]) -> StoryBundle:
    """Replace every entity name by its normalized key, then one alias lookup (no chaining)."""
    table = {normalize_entity_name(k): v for k, v in aliases.items()}

    def canon(name: str) -> str:
        key = normalize_entity_name(name)
        return table.get(key, key)

    frames = []
    for f in bundle.frames:
        triples = tuple(replace(t, subject=canon(t.subject), object=canon(t.object)) for t in f.triples)
        merged: dict[str, NarrativeObject] = {}
        for o in f.objects:
            key = canon(o.name)
            prev = merged.get(key)
            if prev is None:
                merged[key] = replace(o, name=key)
            else:
                # duplicates after aliasing: keep first, fill its gaps from later entries
                merged[key] = replace(
                    prev,
                    affordance=prev.affordance or o.affordance,
                    suggested_terrain=prev.suggested_terrain if prev.suggested_terrain is not None else o.suggested_terrain,
                )
        objects = tuple(merged.values())
        missing = _check_linkage(f.name, triples, objects, key=lambda n: n)
        if missing:
            raise DanglingEntity(f.name, missing[0])
        frames.append(replace(f, triples=triples, objects=objects))
    return replace(bundle, frames=tuple(frames))
