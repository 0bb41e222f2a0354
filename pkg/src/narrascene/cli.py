"""Command-line entry point. Exit status: 0 success, 1 error, 2 finished with warnings."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import pipeline
from .config import PipelineConfig, load_config, with_grid, with_llm_mode
from .errors import ConfigError, NarraSceneError, PipelineWarning

EXIT_OK, EXIT_ERROR, EXIT_WARNINGS = 0, 1, 2

log = logging.getLogger("narrascene")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--terrain-seed", type=int, help="pin the terrain stream independently of --seed")
    p.add_argument("--tileset", type=Path)
    p.add_argument("--sprites", type=Path)
    p.add_argument("--aliases", type=Path)
    p.add_argument("--relation-table", type=Path)
    p.add_argument("--llm-mode", choices=("live", "replay", "fallback"))
    p.add_argument("--cassette", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--grid", metavar="WxH")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def _story_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--story", type=Path, help="story bundle JSON")
    src.add_argument("--story-text", type=Path, help="plain-text story to extract frames from")
    src.add_argument("--prompt", help="seed prompt for story generation")
    p.add_argument("--title")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="narrascene", description="Narrative-to-scene pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run every stage")
    _common(p)
    _story_source(p)

    p = sub.add_parser("prepare", aliases=["extract"], help="parse/extract + classify a story into a run dir")
    _common(p)
    _story_source(p)

    for name, text in (("match", "tile matching"), ("layout", "terrain + placement"),
                       ("kg", "knowledge graphs"), ("render", "PNG rendering")):
        p = sub.add_parser(name, help=f"{text} from a run dir")
        _common(p)
        p.add_argument("run", type=Path)

    p = sub.add_parser("evaluate", help="score one run dir or a directory of runs")
    _common(p)
    p.add_argument("runs", type=Path, nargs="+")
    p.add_argument("--report-dir", type=Path, help="where report.md/csv go (default: the single run, or the batch dir)")
    return parser


def make_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(
        args.config, seed=args.seed, terrain_seed=args.terrain_seed, tileset=args.tileset, sprites=args.sprites,
        aliases=args.aliases, relation_table=args.relation_table, cassette=args.cassette, out=args.out, lam=args.lam,
    )
    cfg = with_grid(with_llm_mode(cfg, args.llm_mode), args.grid)
    if cfg.llm.mode == "replay" and cfg.cassette is None:
        raise ConfigError("--llm-mode replay needs --cassette")
    return cfg


def _source_kwargs(args: argparse.Namespace) -> dict:
    if args.story is not None:
        return {"story_file": args.story, "title": args.title}
    if args.story_text is not None:
        try:
            text = args.story_text.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {args.story_text}: {exc}") from None
        return {"story_text": text, "title": args.title or args.story_text.stem}
    return {"prompt": args.prompt, "title": args.title}


def _run_dir(path: Path) -> Path:
    if not path.is_dir():
        raise ConfigError(f"run directory does not exist: {path}")
    return path


def dispatch(args: argparse.Namespace) -> None:
    cfg = make_config(args)
    cmd = args.command
    if cmd == "generate":
        if cfg.seed is None:
            raise ConfigError("generate requires --seed")
        run = pipeline.generate(cfg, **_source_kwargs(args))
        print(run)
    elif cmd in ("prepare", "extract"):
        print(pipeline.prepare(cfg, **_source_kwargs(args)))
    elif cmd == "match":
        print(pipeline.match(cfg, _run_dir(args.run)))
    elif cmd == "layout":
        for p in pipeline.layout(cfg, _run_dir(args.run)):
            print(p)
    elif cmd == "kg":
        print(pipeline.build_kgs(cfg, _run_dir(args.run)))
    elif cmd == "render":
        for p in pipeline.render(cfg, _run_dir(args.run)):
            print(p)
    elif cmd == "evaluate":
        runs: list[Path] = []
        for r in args.runs:
            runs.extend(pipeline.find_runs(_run_dir(r)))
        out_dir = args.report_dir or (args.runs[0] if len(args.runs) == 1 else cfg.out)
        pipeline.evaluate(runs, out_dir)
        print((out_dir / "report.md").read_text(encoding="utf-8"), end="")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PipelineWarning)
        try:
            dispatch(args)
        except NarraSceneError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
    pipeline_warnings = [w for w in caught if issubclass(w.category, PipelineWarning)]
    for w in pipeline_warnings:
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_WARNINGS if pipeline_warnings else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
