import pytest
from hypothesis import given, strategies as st

from narrascene.errors import NonCanonicalRelation
from narrascene.llm import RELATION, LLMGateway, ReplayCassette, fingerprint
from narrascene.relations import (
    OFFSETS,
    CanonicalRelation,
    Position,
    RelationMapTable,
    RelationReview,
    apply_offset,
    check_predicate,
    normalize_relation,
)

from oracles import EXPECTED_OFFSETS, relation_holds

R = CanonicalRelation
DIRECTIONAL = [R.ABOVE, R.BELOW, R.AT_LEFT_OF, R.AT_RIGHT_OF]
coords = st.integers(-50, 50)


def test_closed_set():
    assert {r.value for r in R} == {"above", "below", "at_left_of", "at_right_of", "on_top_of"}


@pytest.mark.parametrize("rel", list(R))
def test_offsets_match_published_table(rel):
    off = OFFSETS[rel]
    assert (off.dx, off.dy) == EXPECTED_OFFSETS[rel.value]
    assert off.overlap == (rel is R.ON_TOP_OF)
    if rel is not R.ON_TOP_OF:
        assert abs(off.dx) + abs(off.dy) == 3


@pytest.mark.parametrize("anchor, rel, expected", [
    ((10, 10), R.AT_LEFT_OF, (7, 10, False)),
    ((5, 8), R.ABOVE, (5, 5, False)),
    ((4, 4), R.ON_TOP_OF, (4, 4, True)),
])
def test_apply_offset_examples(anchor, rel, expected):
    assert tuple(apply_offset(anchor, rel)) == expected


@pytest.mark.parametrize("a, b, rel, expected", [
    ((7, 10, 1), (10, 10, 1), R.AT_LEFT_OF, True),
    ((4, 4, 2), (4, 4, 2), R.ON_TOP_OF, False),
    ((5, 5, 1), (5, 8, 1), R.ABOVE, True),
])
def test_check_predicate_examples(a, b, rel, expected):
    assert check_predicate(Position(*a), Position(*b), rel) is expected


@given(coords, coords, st.sampled_from(list(R)))
def test_offset_target_satisfies_its_relation(x, y, rel):
    t = apply_offset((x, y), rel)
    layer_a = 3 if t.layer_shift else 1
    assert check_predicate(Position(t.x, t.y, layer_a), Position(x, y, 1), rel)


@given(coords, coords, coords, coords, st.sampled_from(DIRECTIONAL))
def test_antisymmetry(ax, ay, bx, by, rel):
    a, b = Position(ax, ay, 1), Position(bx, by, 1)
    assert not (check_predicate(a, b, rel) and check_predicate(b, a, rel))


@given(coords, coords, coords, coords, st.sampled_from(list(R)))
def test_translation_equivariance(x, y, tx, ty, rel):
    base = apply_offset((x, y), rel)
    moved = apply_offset((x + tx, y + ty), rel)
    assert (moved.x - tx, moved.y - ty, moved.layer_shift) == tuple(base)


@given(coords, coords, st.integers(0, 4), coords, coords, st.integers(0, 4), st.sampled_from(list(R)))
def test_checker_agrees_with_oracle(ax, ay, al, bx, by, bl, rel):
    assert check_predicate(Position(ax, ay, al), Position(bx, by, bl), rel) == relation_holds(
        rel.value, (ax, ay, al), (bx, by, bl))


@pytest.mark.parametrize("phrase, rel", [
    ("contains", R.ON_TOP_OF), ("above", R.ABOVE), ("stands near", R.AT_LEFT_OF),
    ("Sits Atop", R.ON_TOP_OF), ("to the left of", R.AT_LEFT_OF), ("filters through", R.ABOVE),
    ("hide behind", R.AT_RIGHT_OF), ("lead to", R.AT_RIGHT_OF), ("on_top_of", R.ON_TOP_OF),
])
def test_builtin_table(phrase, rel):
    assert normalize_relation(phrase) is rel


def test_miss_without_gateway():
    with pytest.raises(NonCanonicalRelation):
        normalize_relation("orbits")
    with pytest.raises(ValueError):
        normalize_relation("  ")


def test_override_and_review():
    table = RelationMapTable().with_overrides({"stands near": "at_right_of"})
    review = RelationReview()
    assert normalize_relation("stands near", table, review=review) is R.AT_RIGHT_OF
    assert review.to_list() == [{"phrase": "stands near", "canonical": "at_right_of", "source": "table"}]


def test_table_file(tmp_path):
    p = tmp_path / "rel.json"
    p.write_text('{"peers at": "at_left_of"}')
    table = RelationMapTable.load(p)
    assert table.lookup("peers at") is R.AT_LEFT_OF
    assert table.lookup("contains") is R.ON_TOP_OF
    assert RelationMapTable.load(p, include_builtin=False).lookup("contains") is None


def test_gateway_consulted_on_miss_only():
    c = ReplayCassette()
    c.add(fingerprint(RELATION.id, RELATION.fill(phrase="orbits")), "at_right_of\n")
    gw = LLMGateway("replay", cassette=c)
    review = RelationReview()
    assert normalize_relation("orbits", gateway=gw, review=review) is R.AT_RIGHT_OF
    assert normalize_relation("contains", gateway=gw, review=review) is R.ON_TOP_OF
    assert {e["phrase"]: e["source"] for e in review.to_list()} == {"orbits": "llm", "contains": "table"}
