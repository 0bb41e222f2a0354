"""Regenerate the derived fixture files in src/narrascene/data from the hand-written story JSONs.

Writes tileset.jsonl (vocabulary + filler tiles), elara.txt and elara_cassette.json
(replay records covering story generation, frame extraction and object classification).
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from narrascene.llm import CLASSIFY, PROMPT_1, PROMPT_2, ReplayCassette, fingerprint
from narrascene.narrative import load_story, normalize_entity_name, story_to_dict
from narrascene.synthetic import story_vocabulary, vocabulary_tiles
from narrascene.tiles import write_tileset

DATA = Path(__file__).resolve().parents[1] / "src" / "narrascene" / "data"
ELARA_PROMPT = "Set it in an enchanted forest."


def elara_cassette(data: Path) -> ReplayCassette:
    bundle = load_story(data / "stories" / "elara.json")
    text = bundle.story_text
    cassette = ReplayCassette()
    cassette.add(fingerprint(PROMPT_1.id, PROMPT_1.fill(seed=ELARA_PROMPT)), text)

    # the extraction answer carries frames, triples and object names only; affordances come from classification
    doc = story_to_dict(bundle)
    frames = [{**f, "objects": [{"name": o["name"]} for o in f["objects"]]} for f in doc["frames"]]
    cassette.add(fingerprint(PROMPT_2.id, PROMPT_2.fill(story=text)), json.dumps({"frames": frames}, indent=1))

    seen = set()
    for obj in bundle.all_objects():
        key = normalize_entity_name(obj.name)
        if key in seen:
            continue
        seen.add(key)
        answer = {"affordance": obj.affordance.label, "suggested_terrain": obj.suggested_terrain or ""}
        cassette.add(fingerprint(CLASSIFY.id, CLASSIFY.fill(name=key, context=text)), json.dumps(answer))
    return cassette


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", type=Path, default=DATA)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    bundles = [load_story(p) for p in sorted((args.data / "stories").glob("*.json"))]
    bundles += [load_story(args.data / "teaser.json"), load_story(args.data / "sat_fixture.json")]
    tiles = vocabulary_tiles(story_vocabulary(bundles), seed=args.seed)
    write_tileset(tiles, args.data / "tileset.jsonl")

    elara = load_story(args.data / "stories" / "elara.json")
    (args.data / "elara.txt").write_text(elara.story_text + "\n", encoding="utf-8")
    elara_cassette(args.data).save(args.data / "elara_cassette.json")
    print(f"{len(tiles)} tiles, cassette written to {args.data}")


if __name__ == "__main__":
    main()
