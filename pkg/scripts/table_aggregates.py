"""Recompute the aggregate table from per-story rows given as CSV (Story,CosSim,Afford,Div,Sat%).

    python scripts/table_aggregates.py rows.csv
    python scripts/table_aggregates.py out/batch/report.csv   # ignores the Overall row

Sat percentages are converted back to fractions of --predicates (default 9) before averaging,
since a rounded percentage loses the underlying count.
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from narrascene.evaluate import StoryMetrics, render_markdown


def load_rows(path: Path, predicates: int | None) -> list[StoryMetrics]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["Story"] == "Overall":
                continue
            sat = int(row["Sat"]) / 100
            if predicates:
                sat = round(sat * predicates) / predicates
            div = None if row["Div"] in ("-", "") else float(row["Div"])
            out.append(StoryMetrics(float(row["CosSim"]), float(row["Afford"]), div, sat, story=row["Story"]))
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", type=Path)
    ap.add_argument("--predicates", type=int, default=9, help="predicates per story; 0 keeps Sat as printed")
    args = ap.parse_args(argv)
    print(render_markdown(load_rows(args.csv, args.predicates)), end="")


if __name__ == "__main__":
    main()
