import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narrascene.errors import DimensionMismatch, DuplicateId, EmptyIndex
from narrascene.narrative import AffordanceType, NarrativeObject
from narrascene.synthetic import synthetic_tiles
from narrascene.tiles import (
    HashingEmbedder,
    TileRecord,
    build_index,
    embed_text,
    load_tileset,
    query,
    query_text,
    rank,
    read_embedding_sidecar,
    write_embedding_sidecar,
    write_tileset,
)

from oracles import brute_force_top1

EMB = HashingEmbedder()
CC = AffordanceType.CHARACTER_CREATURE
ENV = AffordanceType.ENVIRONMENTAL_OBJECT


@pytest.fixture(scope="module")
def big_index():
    return build_index(synthetic_tiles(1000, seed=11), EMB)


@given(st.text(min_size=1, max_size=60).filter(str.strip))
def test_embedding_unit_and_deterministic(text):
    v = embed_text(EMB, text)
    assert v.shape == (384,)
    assert abs(np.linalg.norm(v) - 1.0) <= 1e-6
    assert np.array_equal(v, embed_text(EMB, text))


def test_empty_text_rejected():
    with pytest.raises(ValueError):
        embed_text(EMB, "  ")


def test_tree_vs_trees_cosine_matches_dot_product():
    recs = [TileRecord("t1", "trees", "forest", "plant", ENV)]
    index = build_index(recs, EMB)
    q = embed_text(EMB, "tree")
    t = embed_text(EMB, recs[0].text())
    oracle = sum(float(a) * float(b) for a, b in zip(q, t))
    got = rank(index, q, 1, lam=0.0)[0].cosine
    assert abs(got - oracle) <= 1e-9
    assert got > 0


def test_text_recipes():
    rec = TileRecord("x", "oak tree", "forest", "plant", ENV)
    assert rec.text() == "oak tree. forest. plant. environmental object"
    assert query_text(NarrativeObject("guardian", CC)) == "guardian. character/creature"
    assert query_text(NarrativeObject("guardian")) == "guardian"


def test_big_index_dimension(big_index):
    assert len(big_index) == 1000
    assert big_index.matrix.shape == (1000, 384)


def test_duplicate_id():
    recs = [TileRecord("a", "x", "", "", ENV), TileRecord("a", "y", "", "", ENV)]
    with pytest.raises(DuplicateId):
        build_index(recs, EMB)


def test_precomputed_embeddings(caplog):
    good = embed_text(EMB, "crystal throne")
    idx = build_index([TileRecord("a", "x", "", "", ENV, embedding=good)], EMB)
    assert np.array_equal(idx.matrix[0], good)
    with pytest.raises(DimensionMismatch):
        build_index([TileRecord("a", "x", "", "", ENV, embedding=np.ones(10))], EMB)
    with caplog.at_level(logging.WARNING):
        idx = build_index([TileRecord("a", "x", "", "", ENV, embedding=good * 3)], EMB)
    assert abs(np.linalg.norm(idx.matrix[0]) - 1) < 1e-12
    assert "renormalizing" in caplog.text


def test_self_match_ranks_first(big_index):
    rec = big_index.records[123]
    res = rank(big_index, rec.embedding, 3, lam=0.0)
    assert abs(res[0].cosine - 1.0) < 1e-12
    # exact duplicates of the text share the top score; the smallest id wins
    assert res[0].tile_id <= rec.id


def test_affordance_boost_disambiguates():
    # identical vectors so the raw cosines tie exactly
    q = embed_text(EMB, "guardian")
    recs = [TileRecord("statue", "guardian", "", "", ENV, embedding=q),
            TileRecord("creature", "guardian", "", "", CC, embedding=q)]
    index = build_index(recs, EMB)
    plain = rank(index, q, 2, lam=0.0)
    assert plain[0].cosine == plain[1].cosine and plain[0].tile_id == "creature"  # id tie-break
    boosted = rank(index, q, 2, CC, lam=0.1)
    assert boosted[0].tile_id == "creature" and boosted[0].affordance_matched
    assert abs(boosted[0].boosted_score - (boosted[0].cosine + 0.1)) < 1e-12
    env_first = rank(index, q, 2, ENV, lam=0.1)
    assert env_first[0].tile_id == "statue"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(list(AffordanceType)), st.floats(0, 0.5))
def test_top1_matches_exhaustive_oracle(big_index, seed, aff, lam):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=384)
    q /= np.linalg.norm(q)
    top = rank(big_index, q, 1, aff, lam)[0]
    oracle = brute_force_top1(big_index.matrix, [r.id for r in big_index.records], q,
                              [r.affordance for r in big_index.records], aff, lam)
    assert top.tile_id == oracle


@given(st.integers(0, 1000))
def test_ranking_sorted_with_id_tiebreak(big_index, seed):
    obj = NarrativeObject(synthetic_tiles(1, seed)[0].name, AffordanceType.ITEM_COLLECTIBLE)
    res = query(big_index, obj, 20, 0.1)
    keys = [(-r.boosted_score, r.tile_id) for r in res]
    assert keys == sorted(keys)
    for r in res:
        assert -1 <= r.cosine <= 1
        assert r.boosted_score == pytest.approx(r.cosine + 0.1 * r.affordance_matched)


def test_lambda_zero_is_cosine_order(big_index):
    q = embed_text(EMB, "golden dragon")
    res = rank(big_index, q, 50, CC, lam=0.0)
    assert [r.cosine for r in res] == sorted((r.cosine for r in res), reverse=True)


def test_order_independent_build():
    tiles = synthetic_tiles(200, seed=5)
    a = build_index(tiles, EMB)
    b = build_index(list(reversed(tiles)), EMB)
    obj = NarrativeObject("mossy tree", ENV)
    assert [m.tile_id for m in query(a, obj, 10)] == [m.tile_id for m in query(b, obj, 10)]


def test_query_errors(big_index):
    empty = build_index([], EMB)
    with pytest.raises(EmptyIndex):
        query(empty, NarrativeObject("x"), 1)
    with pytest.raises(ValueError):
        rank(big_index, embed_text(EMB, "x"), 1001)
    with pytest.raises(ValueError):
        rank(big_index, embed_text(EMB, "x"), 1, lam=-1)


def test_tileset_file_and_sidecar_round_trip(tmp_path):
    tiles = synthetic_tiles(30, seed=2)
    write_tileset(tiles, tmp_path / "t.jsonl")
    loaded = load_tileset(tmp_path / "t.jsonl")
    assert [t.to_dict() for t in loaded] == [t.to_dict() for t in tiles]
    index = build_index(loaded, EMB)
    write_embedding_sidecar([r.id for r in index.records], index.matrix, tmp_path / "emb")
    vectors = read_embedding_sidecar(tmp_path / "emb")
    assert set(vectors) == {t.id for t in tiles}
    with_vecs = load_tileset(tmp_path / "t.jsonl", tmp_path / "emb")
    again = build_index(with_vecs, EMB)
    assert np.allclose(again.matrix, index.matrix, atol=1e-6)
