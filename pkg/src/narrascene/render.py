"""Scene compositing to PNG and the on-disk layer bundle (``frame_<k>.layers``)."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import IoFailure, MalformedDocument, PipelineWarning
from .narrative import AffordanceType
from .placement import OBJECT_LAYERS, SceneGrid
from .terrain import BaseMask, CAParams, PatchRegion

RGB = tuple[int, int, int]

DEFAULT_PALETTE: tuple[RGB, ...] = (
    (230, 25, 75), (60, 120, 216), (255, 225, 25), (145, 30, 180),
    (245, 130, 48), (70, 240, 240), (240, 50, 230), (0, 128, 128),
    (170, 110, 40), (128, 0, 0), (0, 0, 128), (255, 250, 200),
)
PNG_COMPRESS_LEVEL = 6


@dataclass(frozen=True)
class RenderConfig:
    tile_px: int = 32
    object_scale: float = 1.5
    base_walkable_color: RGB = (118, 170, 86)
    base_blocked_color: RGB = (58, 58, 68)
    patch_color: RGB = (181, 146, 96)
    patch_alpha: float = 0.4
    placeholder_palette: tuple[RGB, ...] = DEFAULT_PALETTE
    # terrain label (a patch label, or "walkable"/"blocked") -> sprite tile id; empty means flat colours
    textures: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.tile_px < 8:
            raise ValueError("tile_px must be at least 8")
        if self.object_scale <= 0:
            raise ValueError("object_scale must be positive")
        if not self.placeholder_palette:
            raise ValueError("placeholder palette is empty")

    @property
    def sprite_px(self) -> int:
        return max(1, round(self.tile_px * self.object_scale))


@dataclass
class SpriteTable:
    images: dict[str, Image.Image] = field(default_factory=dict)

    def get(self, tile_id: str | None) -> Image.Image | None:
        return None if tile_id is None else self.images.get(tile_id)

    def __len__(self) -> int:
        return len(self.images)

    @classmethod
    def from_directory(cls, path: str | Path) -> SpriteTable:
        """Sprites named ``<tile_id>.png``."""
        images = {}
        for p in sorted(Path(path).glob("*.png")):
            with Image.open(p) as im:
                images[p.stem] = im.convert("RGBA")
        return cls(images)

    @classmethod
    def from_records(cls, records, root: str | Path = ".") -> SpriteTable:
        images = {}
        for r in records:
            if r.sprite_path:
                p = Path(root) / r.sprite_path
                if p.exists():
                    with Image.open(p) as im:
                        images[r.id] = im.convert("RGBA")
        return cls(images)


def placeholder_color(entity: str, palette: tuple[RGB, ...] = DEFAULT_PALETTE) -> RGB:
    h = int.from_bytes(hashlib.blake2b(entity.encode("utf-8"), digest_size=8).digest(), "little")
    return palette[h % len(palette)]


def _base_pixels(grid: SceneGrid, cfg: RenderConfig) -> np.ndarray:
    walk = np.array(cfg.base_walkable_color, dtype=np.float64)
    cells = np.where(grid.base.walkable[..., None], walk, np.array(cfg.base_blocked_color, dtype=np.float64))
    tinted = np.round((1 - cfg.patch_alpha) * walk + cfg.patch_alpha * np.array(cfg.patch_color, dtype=np.float64))
    for patch in grid.patches:
        for x, y in patch.cells:
            cells[y, x] = tinted
    cells = cells.astype(np.uint8)
    return np.kron(cells, np.ones((cfg.tile_px, cfg.tile_px, 1), dtype=np.uint8))


def _paint_textures(canvas: Image.Image, grid: SceneGrid, sprites: SpriteTable, cfg: RenderConfig) -> None:
    px = cfg.tile_px
    labels = np.where(grid.base.walkable, "walkable", "blocked").astype(object)
    for patch in grid.patches:
        for x, y in patch.cells:
            labels[y, x] = patch.label
    scaled: dict[str, Image.Image | None] = {}
    for label in sorted(set(labels.ravel())):
        tile_id = cfg.textures.get(label)
        sprite = sprites.get(tile_id)
        if sprite is None and tile_id is not None and len(sprites):
            warnings.warn(f"no sprite for terrain texture {tile_id!r} ({label}); using flat colour",
                          PipelineWarning, stacklevel=3)
        scaled[label] = None if sprite is None else sprite.resize((px, px), Image.NEAREST)
    for (y, x), label in np.ndenumerate(labels):
        tex = scaled[label]
        if tex is not None:
            canvas.paste(tex, (x * px, y * px), tex)


def render_scene(grid: SceneGrid, sprites: SpriteTable | None = None, cfg: RenderConfig = RenderConfig()) -> Image.Image:
    """Base mask, patch tint (or terrain textures), then object layers from environment up to characters."""
    sprites = sprites or SpriteTable()
    canvas = Image.fromarray(_base_pixels(grid, cfg), "RGB")
    if cfg.textures:
        _paint_textures(canvas, grid, sprites, cfg)
    size, px = cfg.sprite_px, cfg.tile_px
    for aff in OBJECT_LAYERS:
        matrix = grid.layers[aff]
        ys, xs = np.nonzero(matrix)
        slot_to_entity = {s: n for n, s in grid.slots.items()}
        for y, x in sorted(zip(ys.tolist(), xs.tolist())):
            entity = slot_to_entity[int(matrix[y, x])]
            left = x * px + px // 2 - size // 2
            top = y * px + px // 2 - size // 2
            tile_id = grid.tiles.get(entity)
            sprite = sprites.get(tile_id)
            if sprite is None:
                if len(sprites) and tile_id is not None:
                    warnings.warn(f"no sprite for tile {tile_id!r} ({entity}); drawing placeholder",
                                  PipelineWarning, stacklevel=2)
                canvas.paste(placeholder_color(entity, cfg.placeholder_palette), (left, top, left + size, top + size))
            else:
                img = sprite.resize((size, size), Image.NEAREST)
                canvas.paste(img, (left, top), img)
    return canvas


def object_count(grid: SceneGrid) -> int:
    return int(sum(np.count_nonzero(m) for m in grid.layers.values()))


def save_png(image: Image.Image, path: str | Path, objects: int | None = None) -> None:
    info = PngImagePlugin.PngInfo()
    if objects is not None:
        info.add_text("objects", str(objects))
    try:
        image.save(path, format="PNG", compress_level=PNG_COMPRESS_LEVEL, optimize=False, pnginfo=info)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def layers_to_document(grid: SceneGrid) -> dict[str, Any]:
    layers: dict[str, list[dict[str, Any]]] = {}
    slot_to_entity = {s: n for n, s in grid.slots.items()}
    for aff in OBJECT_LAYERS:
        matrix = grid.layers[aff]
        entries = []
        for y, x in sorted(zip(*(a.tolist() for a in np.nonzero(matrix)))):
            entity = slot_to_entity[int(matrix[y, x])]
            entries.append({
                "entity": entity, "tile_id": grid.tiles.get(entity), "x": x, "y": y,
                "slot": grid.slots[entity], "affordance": grid.affordances[entity].value,
            })
        layers[aff.value] = entries
    params = grid.base.params
    return {
        "width": grid.width,
        "height": grid.height,
        "base": ["".join("1" if v else "0" for v in row) for row in grid.base.walkable],
        "mask_seed": grid.base.seed,
        "ca_params": asdict(params) if params else None,
        "patches": [{"label": p.label, "cells": sorted([x, y] for x, y in p.cells)} for p in grid.patches],
        "layers": layers,
        "object_count": object_count(grid),
    }


def layers_from_document(doc: Mapping[str, Any]) -> SceneGrid:
    try:
        walkable = np.array([[c == "1" for c in row] for row in doc["base"]], dtype=bool)
        if walkable.shape != (doc["height"], doc["width"]):
            raise MalformedDocument("base rows disagree with width/height")
        params = CAParams(**doc["ca_params"]) if doc.get("ca_params") else None
        base = BaseMask(walkable, doc.get("mask_seed", 0), params)
        patches = tuple(PatchRegion(p["label"], frozenset((x, y) for x, y in p["cells"])) for p in doc["patches"])
        grid = SceneGrid(base, patches)
        entries = []
        for layer_name, items in doc["layers"].items():
            layer = AffordanceType(layer_name).layer
            entries.extend((e["slot"], layer, e) for e in items)
        for slot, layer, e in sorted(entries, key=lambda t: t[0]):
            grid.add(e["entity"], AffordanceType(e["affordance"]), e["x"], e["y"], layer=layer,
                     tile_id=e.get("tile_id"), slot=slot)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad layers document: {exc}") from exc
    return grid


def write_layers(grid: SceneGrid, path: str | Path) -> None:
    try:
        Path(path).write_text(json.dumps(layers_to_document(grid), indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_layers(path: str | Path) -> SceneGrid:
    return layers_from_document(json.loads(Path(path).read_text(encoding="utf-8")))


def export_layer_bundle(
    grid: SceneGrid,
    out_dir: str | Path,
    frame_number: int,
    sprites: SpriteTable | None = None,
    cfg: RenderConfig = RenderConfig(),
) -> tuple[Path, Path]:
    """Write ``frame_<k>.layers`` and ``frame_<k>.png`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    layers_path = out / f"frame_{frame_number}.layers"
    png_path = out / f"frame_{frame_number}.png"
    write_layers(grid, layers_path)
    save_png(render_scene(grid, sprites, cfg), png_path, object_count(grid))
    return layers_path, png_path
