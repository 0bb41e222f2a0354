from hypothesis import given, strategies as st

from narrascene.narrative import AffordanceType
from narrascene.synthetic import NOUNS, story_vocabulary, synthetic_tiles, vocabulary_tiles


@given(st.integers(0, 50), st.integers(0, 10_000))
def test_synthetic_tiles_deterministic_and_consistent(n, seed):
    tiles = synthetic_tiles(n, seed)
    assert [t.to_dict() for t in tiles] == [t.to_dict() for t in synthetic_tiles(n, seed)]
    assert len({t.id for t in tiles}) == n
    for t in tiles:
        assert t.name.split()[-1] in NOUNS[t.affordance]


def test_vocabulary_tiles(elara):
    vocab = story_vocabulary([elara])
    tiles = vocabulary_tiles(vocab, seed=1, filler=10)
    ids = [t.id for t in tiles]
    assert len(ids) == len(set(ids)) == 2 * len(vocab) + 10
    exact = {t.name for t in tiles if t.id.endswith("_0") and t.id.startswith("voc_")}
    assert exact == set(vocab)
    always = vocabulary_tiles(vocab, seed=1, correct_rate=1.0, filler=0)
    assert all(t.affordance == vocab[" ".join(t.id[4:-2].split("_"))] for t in always)
    assert all(isinstance(a, AffordanceType) for a in vocab.values())
