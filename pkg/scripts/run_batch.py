"""Generate every bundled story (all except the Elara replay fixture) and write a batch report.

    python scripts/run_batch.py --out out/batch --seed 7
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from narrascene.cli import main as cli_main

DATA = Path(str(resources.files("narrascene") / "data"))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out/batch"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--tileset", type=Path, default=DATA / "tileset.jsonl")
    ap.add_argument("--lambda", dest="lam", type=float, default=0.1)
    args = ap.parse_args(argv)

    worst = 0
    for story in sorted((DATA / "stories").glob("*.json")):
        if story.stem == "elara":
            continue
        code = cli_main(["generate", "--story", str(story), "--seed", str(args.seed), "--tileset", str(args.tileset),
                         "--lambda", str(args.lam), "--out", str(args.out)])
        if code == 1:
            return 1
        worst = max(worst, code)
    code = cli_main(["evaluate", str(args.out)])
    return max(worst, code)


if __name__ == "__main__":
    sys.exit(main())
