"""Satisfaction before/after refinement over many seeds, with and without nearest-cell search.

    python scripts/refinement_sweep.py --seeds 200
"""

from __future__ import annotations

import argparse
from collections import Counter
from importlib import resources
from pathlib import Path

import numpy as np

from narrascene.narrative import load_story
from narrascene.placement import apply_spatial_relations, initial_place, satisfaction_rate
from narrascene.terrain import CAParams, generate_base_mask

DATA = Path(str(resources.files("narrascene") / "data"))


def sweep(story_path: Path, seeds: int, nearest: bool, params: CAParams):
    bundle = load_story(story_path)
    before, after, full = [], [], 0
    actions: Counter = Counter()
    for seed in range(seeds):
        mask = generate_base_mask(params, seed)
        rates = []
        for k, frame in enumerate(bundle.frames):
            grid = initial_place(frame, {}, mask, seed * 101 + k)
            before.append(satisfaction_rate(grid, frame))
            refined, rep = apply_spatial_relations(grid, frame, nearest_search=nearest)
            rates.append(satisfaction_rate(refined, frame))
            actions.update(r.action for r in rep.records)
        after.extend(rates)
        full += all(r == 1.0 for r in rates)
    return float(np.mean(before)), float(np.mean(after)), full, actions


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--story", type=Path, default=DATA / "teaser.json")
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--grid", type=int, default=20)
    args = ap.parse_args(argv)
    params = CAParams(args.grid, args.grid)
    print(f"story={args.story.name} seeds={args.seeds} grid={args.grid}x{args.grid}")
    print("nearest  sat_before  sat_after  seeds_at_100%  actions")
    for nearest in (False, True):
        b, a, full, actions = sweep(args.story, args.seeds, nearest, params)
        acts = ", ".join(f"{k}={v}" for k, v in sorted(actions.items()))
        print(f"{str(nearest):7}  {b:10.3f}  {a:9.3f}  {full:13d}  {acts}")


if __name__ == "__main__":
    main()
