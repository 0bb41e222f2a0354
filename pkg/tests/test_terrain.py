import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narrascene.errors import DisconnectedMask, GenerationFailed, NoTerrainEvidence, PipelineWarning
from narrascene.llm import ClassificationResult
from narrascene.narrative import AffordanceType, normalize_entity_name, parse_story_bundle
from narrascene.terrain import (
    BaseMask,
    CAParams,
    TerrainPlan,
    ca_smooth,
    generate_base_mask,
    infer_terrain_plan,
    insert_patch,
)

from oracles import flood_fill_components

T, E = AffordanceType.TERRAIN, AffordanceType.ENVIRONMENTAL_OBJECT


def test_default_seed_42_single_component():
    m = generate_base_mask(CAParams(), 42)
    sizes = flood_fill_components(m.walkable)
    assert sizes == [m.walkable_count]
    assert 0.35 <= m.walkable_fraction <= 0.90


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 20))
def test_masks_connected_and_in_range(seed):
    m = generate_base_mask(CAParams(), seed)
    assert len(flood_fill_components(m.walkable)) == 1
    assert 0.35 <= m.walkable_fraction <= 0.90


def test_determinism():
    a, b = generate_base_mask(CAParams(), 9), generate_base_mask(CAParams(), 9)
    assert a == b and a.walkable.tobytes() == b.walkable.tobytes()
    pa, pb = insert_patch(a, "rocky", 0.15, 4), insert_patch(b, "rocky", 0.15, 4)
    assert pa == pb


def test_degenerate_params_fail_after_retries():
    with pytest.raises(GenerationFailed):
        generate_base_mask(CAParams(initial_walkable_prob=0.999999, iterations=0, max_retries=3), 0)


def test_params_validated():
    with pytest.raises(ValueError):
        CAParams(width=4)
    with pytest.raises(ValueError):
        CAParams(initial_walkable_prob=0.0)


def test_mask_type_rejects_disconnected_grid():
    grid = np.zeros((8, 8), dtype=bool)
    grid[0, 0] = grid[5, 5] = True
    with pytest.raises(DisconnectedMask):
        BaseMask(grid, 0, None)


def test_mask_is_read_only(mask20):
    with pytest.raises(ValueError):
        mask20.walkable[0, 0] = True


def test_smoothing_matches_explicit_count():
    rng = np.random.default_rng(1)
    g = rng.random((9, 11)) < 0.5
    out = ca_smooth(g, 1, 5)
    for y in range(9):
        for x in range(11):
            n = sum(g[yy, xx] for yy in range(y - 1, y + 2) for xx in range(x - 1, x + 2)
                    if 0 <= yy < 9 and 0 <= xx < 11)
            assert out[y, x] == (n >= 5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 0.95))
def test_patch_contained_connected_and_sized(seed, frac):
    mask = generate_base_mask(CAParams(), seed % 1000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PipelineWarning)
        p = insert_patch(mask, "rocky", frac, seed)
    assert all(mask.is_walkable(x, y) for x, y in p.cells)
    blob = np.zeros_like(mask.walkable)
    for x, y in p.cells:
        blob[y, x] = True
    assert len(flood_fill_components(blob)) == 1
    assert len(p.cells) == math.ceil(frac * mask.walkable_count)


def test_patch_on_single_cell_mask():
    grid = np.zeros((8, 8), dtype=bool)
    grid[3, 3] = True
    p = insert_patch(BaseMask(grid, 0, None), "sand", 0.5, 0)
    assert p.cells == frozenset({(3, 3)})


def test_patch_fraction_validated(mask20):
    with pytest.raises(ValueError):
        insert_patch(mask20, "x", 1.0, 0)


def _bundle(frames):
    doc = {"title": "t", "story": "s", "frames": []}
    for i, (objs, brk) in enumerate(frames):
        names = [o[0] for o in objs]
        triples = [{"subject": names[0], "relation": "above", "object": names[-1]}]
        doc["frames"].append({"name": f"f{i}", "scene_break": brk, "triples": triples,
                              "objects": [{"name": n} for n in names]})
    bundle = parse_story_bundle(doc)
    cls = {normalize_entity_name(n): ClassificationResult(normalize_entity_name(n), aff, ter)
           for objs, _ in frames for n, aff, ter in objs}
    return bundle, cls


def test_majority_base_terrain():
    bundle, cls = _bundle([
        ([("pine", T, "forest"), ("oak", T, "forest"), ("dune", T, "desert")], False),
        ([("moss", T, "forest"), ("tree", E, "")], False),
    ])
    plan = infer_terrain_plan(bundle, cls)
    assert plan.base_terrain == ("forest", "forest")
    assert plan.group_id == (0, 0)


def test_lexicographic_tie_break():
    bundle, cls = _bundle([([("dune", T, "desert"), ("pine", T, "forest")], False)])
    assert infer_terrain_plan(bundle, cls).base_terrain == ("desert",)


def test_no_terrain_evidence_defaults_to_grass():
    bundle, cls = _bundle([([("tree", E, ""), ("rock", E, "")], False)])
    with pytest.warns(NoTerrainEvidence):
        plan = infer_terrain_plan(bundle, cls)
    assert plan.base_terrain == ("grass",)
    assert plan.warnings


def test_patch_propagates_across_group():
    bundle, cls = _bundle([
        ([("grass field", T, "grass"), ("tree", E, "")], False),
        ([("rocky path", E, "rocky"), ("elara", AffordanceType.CHARACTER_CREATURE, "")], False),
        ([("meadow", T, "grass"), ("rock", E, "")], False),
    ])
    plan = infer_terrain_plan(bundle, cls)
    assert plan.patch_labels == (("rocky",),) * 3
    assert plan.groups() == [[0, 1, 2]]


def test_scene_break_and_terrain_mismatch_split_groups():
    bundle, cls = _bundle([
        ([("pine", T, "forest"), ("tree", E, "")], False),
        ([("dune", T, "desert"), ("rock", E, "")], False),
        ([("sand", T, "desert"), ("cactus", E, "")], True),
        ([("tent", E, ""), ("camel", E, "")], False),
    ])
    plan = infer_terrain_plan(bundle, cls)
    assert plan.group_id == (0, 1, 2, 2)
    assert plan.base_terrain == ("forest", "desert", "desert", "desert")


group_frames = st.lists(
    st.tuples(st.sampled_from(["forest", "desert", "cave", ""]), st.booleans()), min_size=1, max_size=6)


@given(group_frames)
def test_groups_partition_into_contiguous_ranges(spec):
    frames = []
    for i, (ter, brk) in enumerate(spec):
        objs = [(f"thing{i}", T if ter else E, ter), (f"rock{i}", E, "")]
        frames.append((objs, brk))
    bundle, cls = _bundle(frames)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoTerrainEvidence)
        plan = infer_terrain_plan(bundle, cls)
    flat = [i for g in plan.groups() for i in g]
    assert flat == list(range(len(spec)))
    for g in plan.groups():
        assert g == list(range(g[0], g[-1] + 1))
        assert len({plan.base_terrain[i] for i in g}) == 1
        assert len({plan.patch_labels[i] for i in g}) == 1
    assert TerrainPlan.from_dict(plan.to_dict()) == plan
