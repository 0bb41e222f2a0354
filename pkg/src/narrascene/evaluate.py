"""Story metrics (CosSim, Afford, Div, Sat), aggregates over stories, and report tables."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .errors import IoFailure, NoMatches
from .narrative import SceneFrame, normalize_entity_name
from .placement import PlacementReport, SceneGrid, triple_outcomes
from .tiles import MatchResult

METRICS = ("cos_sim", "afford", "div", "sat")
COLUMNS = ("Story", "CosSim", "Afford", "Div", "Sat")


@dataclass(frozen=True)
class StoryMetrics:
    cos_sim: float
    afford: float
    div: float | None
    sat: float
    story: str = ""
    n_matched: int = 0
    n_predicates: int = 0
    n_satisfied: int = 0


class MetricSummary(NamedTuple):
    mean: float
    std: float


@dataclass(frozen=True)
class AggregateMetrics:
    cos_sim: MetricSummary
    afford: MetricSummary
    div: MetricSummary | None
    sat: MetricSummary
    n_stories: int


class FrameResult(NamedTuple):
    frame: SceneFrame
    matches: Mapping[str, MatchResult]
    report: PlacementReport
    grid: SceneGrid


def score_story(frames: Sequence[FrameResult], story: str = "") -> StoryMetrics:
    """Pool objects and predicates over every frame of one story."""
    cosines: list[float] = []
    afford_hits: list[bool] = []
    tiles: list[str] = []
    satisfied = total = 0
    for fr in frames:
        for obj in fr.frame.objects:
            m = fr.matches.get(normalize_entity_name(obj.name))
            if m is None:
                continue
            cosines.append(m.cosine)
            afford_hits.append(m.affordance_matched)
            tiles.append(m.tile_id)
        relations = [r.relation for r in fr.report.records]
        outcomes = triple_outcomes(fr.grid, fr.frame, relations)
        satisfied += sum(outcomes)
        total += len(outcomes)
    if not cosines:
        raise NoMatches(f"story {story!r} has no matched objects")
    return StoryMetrics(
        cos_sim=statistics.fmean(cosines),
        afford=sum(afford_hits) / len(afford_hits),
        div=len(set(tiles)) / len(tiles),
        sat=satisfied / total if total else 0.0,
        story=story,
        n_matched=len(cosines),
        n_predicates=total,
        n_satisfied=satisfied,
    )


def _summary(values: Sequence[float]) -> MetricSummary:
    return MetricSummary(statistics.fmean(values), statistics.pstdev(values))


def aggregate(stories: Sequence[StoryMetrics]) -> AggregateMetrics:
    """Mean and population standard deviation per metric, folded in story-name order."""
    if not stories:
        raise ValueError("need at least one story")
    ordered = sorted(stories, key=lambda s: s.story)
    divs = [s.div for s in ordered if s.div is not None]
    return AggregateMetrics(
        cos_sim=_summary([s.cos_sim for s in ordered]),
        afford=_summary([s.afford for s in ordered]),
        div=_summary(divs) if divs else None,
        sat=_summary([s.sat for s in ordered]),
        n_stories=len(ordered),
    )


def round_half_up(value: float, places: int = 2) -> Decimal:
    # str() first so 0.415 rounds as written, not as its binary approximation
    return Decimal(str(value)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def fmt2(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return str(round_half_up(value, 2))


def fmt_pct(value: float) -> str:
    return str(round_half_up(value * 100, 0).to_integral_value(rounding=ROUND_HALF_UP))


def table_rows(stories: Sequence[StoryMetrics], agg: AggregateMetrics | None = None) -> list[list[str]]:
    agg = agg or aggregate(stories)
    rows = [[s.story, fmt2(s.cos_sim), fmt2(s.afford), fmt2(s.div), fmt_pct(s.sat)] for s in stories]
    rows.append(["Overall", fmt2(agg.cos_sim.mean), fmt2(agg.afford.mean),
                 fmt2(agg.div.mean if agg.div else None), fmt_pct(agg.sat.mean)])
    return rows


def aggregate_rows(agg: AggregateMetrics) -> list[list[str]]:
    rows = [["Cosine similarity", fmt2(agg.cos_sim.mean), fmt2(agg.cos_sim.std)],
            ["Affordance match", fmt2(agg.afford.mean), fmt2(agg.afford.std)]]
    if agg.div is not None:
        rows.append(["Diversity", fmt2(agg.div.mean), fmt2(agg.div.std)])
    rows.append(["Satisfaction", fmt2(agg.sat.mean), fmt2(agg.sat.std)])
    return rows


def render_markdown(stories: Sequence[StoryMetrics]) -> str:
    agg = aggregate(stories)
    out = ["| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
    out += ["| " + " | ".join(r) + " |" for r in table_rows(stories, agg)]
    out += ["", f"Aggregate ({agg.n_stories} stories)", "",
            "| Metric | Mean | Std. Dev. |", "|---|---|---|"]
    out += ["| " + " | ".join(r) + " |" for r in aggregate_rows(agg)]
    return "\n".join(out) + "\n"


def render_csv(stories: Sequence[StoryMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    writer.writerows(table_rows(stories))
    return buf.getvalue()


def emit_report(stories: Sequence[StoryMetrics], fmt: str, path: str | Path) -> Path:
    if fmt not in ("markdown", "csv"):
        raise ValueError("format must be 'markdown' or 'csv'")
    text = render_markdown(stories) if fmt == "markdown" else render_csv(stories)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return Path(path)


def read_report_csv(path: str | Path) -> list[dict[str, float | str | None]]:
    """Parse a CSV report back into numbers (Sat as a fraction)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "Story": row["Story"],
                "CosSim": float(row["CosSim"]),
                "Afford": float(row["Afford"]),
                "Div": None if row["Div"] == "-" else float(row["Div"]),
                "Sat": int(row["Sat"]) / 100,
            })
    return rows
