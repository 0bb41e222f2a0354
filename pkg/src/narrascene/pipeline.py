"""Pipeline stages. Each stage reads the previous stage's files from a run directory and writes its own.

Run directory layout::

    story.json              normalized story, objects carry affordance + suggested terrain
    relations.json          phrase -> canonical relation mappings applied (review file)
    matches.json            top-k tiles per frame object
    terrain.json            base/patch terrain per frame
    frame_<k>.layers        layer matrices (see render.layers_to_document)
    frame_<k>.placement.json  refinement report
    frame_<k>.kg            single-frame knowledge graph (triple list)
    story.kg, story.dot     merged knowledge graph
    frame_<k>.png           rendering
    report.md, report.csv, metrics.json
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any

from .config import PipelineConfig, derive_seed
from .errors import ConfigError, MissingArtifacts
from .evaluate import FrameResult, StoryMetrics, emit_report, score_story
from .kg import build_scene_kg, merge_kgs, to_dot, write_kg
from .llm import ClassificationResult, LLMGateway, ReplayCassette
from .narrative import StoryBundle, apply_alias_map, dump_story, load_story, normalize_entity_name, parse_story_bundle
from .placement import PlacementReport, apply_spatial_relations, initial_place
from .relations import RelationMapTable, RelationReview, normalize_relation
from .render import SpriteTable, read_layers, render_scene, save_png, object_count, write_layers
from .terrain import TerrainPlan, generate_base_mask, infer_terrain_plan, insert_patch
from .tiles import HashingEmbedder, MatchResult, SentenceTransformerEmbedder, TileIndex, build_index, load_tileset, query

log = logging.getLogger(__name__)


def slugify(title: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", title.lower()).strip("_")
    return slug or "story"


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _read_json(path: Path) -> Any:
    if not path.exists():
        raise MissingArtifacts(f"missing {path.name} in {path.parent}")
    return json.loads(path.read_text(encoding="utf-8"))


def make_gateway(cfg: PipelineConfig) -> LLMGateway:
    cassette = ReplayCassette.load(cfg.cassette) if cfg.cassette else None
    if cfg.llm.mode == "replay" and cassette is None:
        raise ConfigError("replay mode needs --cassette")
    return LLMGateway(cfg.llm.mode, cassette=cassette, endpoint=cfg.llm.endpoint, model=cfg.llm.model,
                      api_key_env=cfg.llm.api_key_env, timeout=cfg.llm.timeout)


def relation_table(cfg: PipelineConfig) -> RelationMapTable:
    table = RelationMapTable.load(cfg.relation_table) if cfg.relation_table else RelationMapTable()
    return table.with_overrides(cfg.relation_overrides) if cfg.relation_overrides else table


def make_provider(cfg: PipelineConfig):
    if cfg.embedder == "hashing":
        return HashingEmbedder(cfg.embedding_dim)
    if cfg.embedder.startswith("sentence-transformers"):
        _, _, model = cfg.embedder.partition(":")
        return SentenceTransformerEmbedder(model or "all-MiniLM-L6-v2")
    raise ConfigError(f"unknown embedder {cfg.embedder!r}")


# -- stage 1: story -> story.json ------------------------------------------------------------------

def classify_story(bundle: StoryBundle, gateway: LLMGateway) -> tuple[StoryBundle, dict[str, ClassificationResult]]:
    """Fill affordance and suggested terrain for every object; one classification per distinct entity."""
    results: dict[str, ClassificationResult] = {}
    for obj in bundle.all_objects():
        key = normalize_entity_name(obj.name)
        if key in results:
            continue
        if obj.affordance is not None:
            results[key] = ClassificationResult(key, obj.affordance, obj.suggested_terrain or "")
        else:
            results[key] = gateway.classify_object(key, bundle.story_text)
    frames = []
    for f in bundle.frames:
        objects = []
        for o in f.objects:
            cls = results[normalize_entity_name(o.name)]
            objects.append(replace(
                o,
                affordance=o.affordance or cls.affordance,
                suggested_terrain=o.suggested_terrain if o.suggested_terrain is not None else cls.suggested_terrain,
            ))
        frames.append(replace(f, objects=tuple(objects)))
    return replace(bundle, frames=tuple(frames)), results


def prepare(cfg: PipelineConfig, *, story_file: Path | None = None, story_text: str | None = None,
            prompt: str | None = None, title: str | None = None) -> Path:
    gateway = make_gateway(cfg)
    if story_file is not None:
        bundle = load_story(story_file)
    else:
        if story_text is None:
            if prompt is None:
                raise ConfigError("need a story file, story text, or prompt")
            story_text = gateway.generate_story(prompt)
        bundle = gateway.extract_frames(story_text, title or "untitled")
    if title:
        bundle = replace(bundle, title=title)
    aliases = _read_json(cfg.aliases) if cfg.aliases else {}
    bundle = apply_alias_map(bundle, aliases)
    bundle, _ = classify_story(bundle, gateway)
    table = relation_table(cfg)
    review = RelationReview()
    for f in bundle.frames:
        for t in f.triples:
            normalize_relation(t.relation, table, gateway, review)
    run = Path(cfg.out) / slugify(bundle.title)
    run.mkdir(parents=True, exist_ok=True)
    dump_story(bundle, run / "story.json")
    _write_json(run / "relations.json", review.to_list())
    return run


def load_run_story(run: Path) -> StoryBundle:
    return parse_story_bundle(_read_json(run / "story.json"))


def run_relation_table(cfg: PipelineConfig, run: Path) -> RelationMapTable:
    """Configured table plus every mapping recorded at prepare time (so later stages need no LLM)."""
    recorded = {e["phrase"]: e["canonical"] for e in _read_json(run / "relations.json")}
    return relation_table(cfg).with_overrides(recorded)


# -- stage 2: matching -----------------------------------------------------------------------------

def load_index(cfg: PipelineConfig) -> tuple[TileIndex, Any]:
    if cfg.tileset is None:
        raise ConfigError("no tileset configured (--tileset)")
    provider = make_provider(cfg)
    return build_index(load_tileset(cfg.tileset, cfg.tileset_embeddings), provider), provider


def match(cfg: PipelineConfig, run: Path, index: TileIndex | None = None, provider=None) -> Path:
    bundle = load_run_story(run)
    if index is None:
        index, provider = load_index(cfg)
    k = min(cfg.top_k, len(index))
    frames = {}
    for f in bundle.frames:
        frames[f.name] = {
            normalize_entity_name(o.name): [m.to_dict() for m in query(index, o, k, cfg.lam, provider)]
            for o in f.objects
        }
    doc = {"provider": index.provider_id, "lambda": cfg.lam, "k": k, "frames": frames}
    _write_json(run / "matches.json", doc)
    return run / "matches.json"


def load_matches(run: Path) -> dict[str, dict[str, list[MatchResult]]]:
    doc = _read_json(run / "matches.json")
    return {f: {e: [MatchResult.from_dict(m) for m in ms] for e, ms in ents.items()} for f, ents in doc["frames"].items()}


def top1(matches: dict[str, list[MatchResult]]) -> dict[str, MatchResult]:
    return {e: ms[0] for e, ms in matches.items() if ms}


# -- stage 3: terrain + placement -------------------------------------------------------------------

def layout(cfg: PipelineConfig, run: Path) -> list[Path]:
    if cfg.seed is None:
        raise ConfigError("a seed is required (--seed)")
    bundle = load_run_story(run)
    matches = load_matches(run)
    table = run_relation_table(cfg, run)
    classifications = {
        normalize_entity_name(o.name): ClassificationResult(normalize_entity_name(o.name), o.affordance,
                                                            o.suggested_terrain or "")
        for o in bundle.all_objects()
    }
    plan = infer_terrain_plan(bundle, classifications, default_base=cfg.terrain.default_base)
    _write_json(run / "terrain.json", plan.to_dict())
    terrain_master = cfg.terrain_seed if cfg.terrain_seed is not None else derive_seed(cfg.seed, "terrain")
    place_master = derive_seed(cfg.seed, "placement")
    params = cfg.terrain.ca_params()
    written = []
    for k, frame in enumerate(bundle.frames, 1):
        mask = generate_base_mask(params, terrain_master + k)
        patches = tuple(
            insert_patch(mask, label, cfg.terrain.patch_fraction, derive_seed(terrain_master, f"patch:{label}") + k)
            for label in plan.patch_labels[k - 1]
        )
        grid = initial_place(frame, top1(matches.get(frame.name, {})), mask, place_master + k, patches)
        grid, report = apply_spatial_relations(grid, frame, table, nearest_search=cfg.nearest_search)
        write_layers(grid, run / f"frame_{k}.layers")
        _write_json(run / f"frame_{k}.placement.json", report.to_dict())
        written.append(run / f"frame_{k}.layers")
    return written


# -- stage 4: knowledge graphs ---------------------------------------------------------------------

def build_kgs(cfg: PipelineConfig, run: Path) -> Path:
    bundle = load_run_story(run)
    matches = load_matches(run)
    table = run_relation_table(cfg, run)
    kgs = []
    for k, frame in enumerate(bundle.frames, 1):
        rels = [normalize_relation(t.relation, table) for t in frame.triples]
        kg = build_scene_kg(frame, top1(matches.get(frame.name, {})), relations=rels)
        write_kg(merge_kgs([kg]), run / f"frame_{k}.kg")
        kgs.append(kg)
    merged = merge_kgs(kgs)
    write_kg(merged, run / "story.kg")
    (run / "story.dot").write_text(to_dot(merged), encoding="utf-8")
    return run / "story.kg"


# -- stage 5: rendering ----------------------------------------------------------------------------

def load_sprites(cfg: PipelineConfig) -> SpriteTable:
    if cfg.sprites is not None:
        return SpriteTable.from_directory(cfg.sprites)
    if cfg.tileset is not None:
        return SpriteTable.from_records(load_tileset(cfg.tileset), Path(cfg.tileset).parent)
    return SpriteTable()


def render(cfg: PipelineConfig, run: Path, sprites: SpriteTable | None = None) -> list[Path]:
    sprites = sprites if sprites is not None else load_sprites(cfg)
    layer_files = sorted(run.glob("frame_*.layers"), key=lambda p: int(p.stem.split("_")[1]))
    if not layer_files:
        raise MissingArtifacts(f"no frame_<k>.layers files in {run}")
    out = []
    for lf in layer_files:
        grid = read_layers(lf)
        png = lf.with_suffix(".png")
        save_png(render_scene(grid, sprites, cfg.render), png, object_count(grid))
        out.append(png)
    return out


# -- stage 6: evaluation ---------------------------------------------------------------------------

def score_run(run: Path) -> StoryMetrics:
    bundle = load_run_story(run)
    matches = load_matches(run)
    frames = []
    for k, frame in enumerate(bundle.frames, 1):
        lf = run / f"frame_{k}.layers"
        if not lf.exists():
            raise MissingArtifacts(f"missing {lf.name} in {run}")
        report = PlacementReport.from_dict(_read_json(run / f"frame_{k}.placement.json"))
        frames.append(FrameResult(frame, top1(matches.get(frame.name, {})), report, read_layers(lf)))
    return score_story(frames, story=bundle.title)


def metrics_to_dict(m: StoryMetrics) -> dict[str, Any]:
    return asdict(m)


def find_runs(path: Path) -> list[Path]:
    if (path / "story.json").exists():
        return [path]
    runs = sorted(p.parent for p in path.glob("*/story.json"))
    if not runs:
        raise MissingArtifacts(f"no run directories (with story.json) under {path}")
    return runs


def evaluate(runs: list[Path], out_dir: Path) -> list[StoryMetrics]:
    if not runs:
        raise MissingArtifacts("nothing to evaluate")
    metrics = [score_run(r) for r in runs]
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_report(metrics, "markdown", out_dir / "report.md")
    emit_report(metrics, "csv", out_dir / "report.csv")
    _write_json(out_dir / "metrics.json", [metrics_to_dict(m) for m in metrics])
    return metrics


def generate(cfg: PipelineConfig, **story_source: Any) -> Path:
    """All stages in order, each going through the run directory on disk."""
    run = prepare(cfg, **story_source)
    match(cfg, run)
    layout(cfg, run)
    build_kgs(cfg, run)
    render(cfg, run)
    evaluate([run], run)
    return run


def plan_for(run: Path) -> TerrainPlan:
    return TerrainPlan.from_dict(_read_json(run / "terrain.json"))
