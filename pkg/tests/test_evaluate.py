import pytest
from hypothesis import given, strategies as st

from narrascene.errors import IoFailure, NoMatches
from narrascene.evaluate import (
    FrameResult,
    StoryMetrics,
    aggregate,
    emit_report,
    fmt2,
    fmt_pct,
    read_report_csv,
    score_story,
    table_rows,
)
from narrascene.narrative import AffordanceType
from narrascene.placement import apply_spatial_relations, initial_place, satisfaction_rate
from narrascene.terrain import CAParams, generate_base_mask
from narrascene.tiles import MatchResult

from oracles import PER_STORY_ROWS


def _rows_as_metrics():
    return [StoryMetrics(c, a, d, s / 100, story=f"{i:02d}") for i, (c, a, d, s) in enumerate(PER_STORY_ROWS, 1)]


def _match(tile, aff_ok=True, cos=0.5):
    return MatchResult(tile, cos, cos + 0.1 * aff_ok, aff_ok, AffordanceType.ENVIRONMENTAL_OBJECT)


def _frames(story, tiles, seed=0, aff_ok=True):
    out = []
    for k, frame in enumerate(story.frames):
        mask = generate_base_mask(CAParams(), seed + k)
        matches = {o.name.lower(): _match(tiles(o.name), aff_ok) for o in frame.objects}
        grid, report = apply_spatial_relations(initial_place(frame, matches, mask, seed + k), frame)
        out.append(FrameResult(frame, matches, report, grid))
    return out


@pytest.mark.parametrize("value, text", [(0.415, "0.42"), (0.405, "0.41"), (0.4126, "0.41"), (1.0, "1.00")])
def test_fmt2_half_up(value, text):
    assert fmt2(value) == text


def test_fmt_pct():
    assert fmt_pct(7 / 9) == "78" and fmt_pct(0.725) == "73" and fmt_pct(5 / 9) == "56"


def test_column_means():
    agg = aggregate(_rows_as_metrics())
    assert fmt2(agg.cos_sim.mean) == "0.41" and fmt2(agg.div.mean) == "0.92"
    assert agg.cos_sim.mean == pytest.approx(0.413)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1), st.floats(0, 1))
def test_single_story_has_zero_std(c, a, d, s):
    agg = aggregate([StoryMetrics(c, a, d, s)])
    assert agg.cos_sim == (pytest.approx(c), 0.0)
    assert agg.sat.std == 0.0


@given(st.permutations(range(10)))
def test_order_invariance(perm):
    rows = _rows_as_metrics()
    assert aggregate([rows[i] for i in perm]) == aggregate(rows)


def test_div_one_when_tiles_unique(teaser):
    m = score_story(_frames(teaser, lambda n: f"t_{n}"))
    assert m.div == 1.0 and m.afford == 1.0


def test_div_counts_repeats(teaser):
    m = score_story(_frames(teaser, lambda n: "same"))
    assert m.div == pytest.approx(1 / 5)


def test_afford_rate(teaser):
    assert score_story(_frames(teaser, lambda n: n, aff_ok=False)).afford == 0.0


def test_sat_pooled_and_consistent_with_placement(sat_story):
    frames = _frames(sat_story, lambda n: n)
    m = score_story(frames)
    assert (m.n_satisfied, m.n_predicates) == (7, 9)
    assert fmt_pct(m.sat) == "78"
    pooled = sum(satisfaction_rate(f.grid, f.frame) * len(f.frame.triples) for f in frames) / 9
    assert m.sat == pytest.approx(pooled)


def test_no_matches(teaser):
    frames = [f._replace(matches={}) for f in _frames(teaser, lambda n: n)]
    with pytest.raises(NoMatches):
        score_story(frames)


def test_report_rows_and_csv_round_trip(tmp_path):
    rows = _rows_as_metrics()
    md = emit_report(rows, "markdown", tmp_path / "r.md").read_text()
    table = [line for line in md.splitlines() if line.startswith("| ") and "Story" not in line and "Metric" not in line]
    assert len([line for line in table if not line.startswith("| Cos") and not line.startswith("| Aff")
                and not line.startswith("| Div") and not line.startswith("| Sat")]) == 11
    emit_report(rows, "csv", tmp_path / "r.csv")
    back = read_report_csv(tmp_path / "r.csv")
    assert len(back) == 11 and back[-1]["Story"] == "Overall"
    for r, m in zip(back, rows):
        assert r["CosSim"] == m.cos_sim and r["Div"] == m.div and r["Sat"] == m.sat
    assert table_rows(rows)[0] == ["01", "0.43", "0.45", "0.91", "78"]


def test_report_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report(_rows_as_metrics(), "html", tmp_path / "x")
    with pytest.raises(IoFailure):
        emit_report(_rows_as_metrics(), "csv", tmp_path / "missing" / "r.csv")
