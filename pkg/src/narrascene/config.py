"""Pipeline configuration: TOML file values overridden by command-line flags."""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .render import RenderConfig
from .terrain import CAParams
from .tiles import DEFAULT_DIM, DEFAULT_LAMBDA

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class TerrainConfig:
    width: int = 20
    height: int = 20
    p_init: float = 0.55
    iterations: int = 4
    birth: int = 5
    max_retries: int = 10
    patch_fraction: float = 0.15
    default_base: str = "grass"

    def ca_params(self) -> CAParams:
        return CAParams(self.width, self.height, self.p_init, self.iterations, self.birth, self.max_retries)


@dataclass(frozen=True)
class LLMConfig:
    mode: str = "fallback"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str | None = None
    timeout: float = 60.0


@dataclass(frozen=True)
class PipelineConfig:
    seed: int | None = None
    terrain_seed: int | None = None
    tileset: Path | None = None
    tileset_embeddings: Path | None = None
    sprites: Path | None = None
    aliases: Path | None = None
    relation_table: Path | None = None
    cassette: Path | None = None
    out: Path = Path("out")
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    lam: float = DEFAULT_LAMBDA
    top_k: int = 5
    embedding_dim: int = DEFAULT_DIM
    embedder: str = "hashing"
    nearest_search: bool = True
    relation_overrides: Mapping[str, str] = field(default_factory=dict)

    def check_paths(self) -> None:
        for name in ("tileset", "sprites", "aliases", "relation_table", "cassette"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name} path does not exist: {p}")
        if self.tileset_embeddings is not None and not Path(self.tileset_embeddings).with_suffix(".f32").exists():
            raise ConfigError(f"embedding sidecar missing: {self.tileset_embeddings}")


PATH_KEYS = ("tileset", "tileset_embeddings", "sprites", "aliases", "relation_table", "cassette", "out")


def _section(cls, doc: Mapping[str, Any], where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**{k: tuple(tuple(c) for c in v) if k == "placeholder_palette" else
                      tuple(v) if isinstance(v, list) else v for k, v in doc.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def load_config(path: str | Path | None = None, **overrides: Any) -> PipelineConfig:
    """Read a TOML config; keyword overrides (e.g. from CLI flags) win over file values when not None."""
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            doc = tomllib.loads(path.read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        root = path.parent
        for key, value in doc.get("paths", {}).items():
            if key not in PATH_KEYS:
                raise ConfigError(f"unknown path key {key!r}")
            values[key] = (root / value) if value else None
        if "terrain" in doc:
            values["terrain"] = _section(TerrainConfig, doc["terrain"], "terrain")
        if "llm" in doc:
            values["llm"] = _section(LLMConfig, doc["llm"], "llm")
        if "render" in doc:
            values["render"] = _section(RenderConfig, doc["render"], "render")
        if "relations" in doc:
            values["relation_overrides"] = dict(doc["relations"])
        matching = doc.get("matching", {})
        for src, dst in (("lambda", "lam"), ("top_k", "top_k"), ("dimension", "embedding_dim"), ("embedder", "embedder")):
            if src in matching:
                values[dst] = matching[src]
        for key in ("seed", "terrain_seed", "nearest_search"):
            if key in doc:
                values[key] = doc[key]
    for key, value in overrides.items():
        if value is None:
            continue
        if key in PATH_KEYS:
            value = Path(value)
        values[key] = value
    try:
        cfg = PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.llm.mode not in ("live", "replay", "fallback"):
        raise ConfigError(f"llm.mode must be live, replay or fallback, got {cfg.llm.mode!r}")
    cfg.check_paths()
    return cfg


def with_llm_mode(cfg: PipelineConfig, mode: str | None) -> PipelineConfig:
    return cfg if mode is None else replace(cfg, llm=replace(cfg.llm, mode=mode))


def with_grid(cfg: PipelineConfig, grid: str | None) -> PipelineConfig:
    if grid is None:
        return cfg
    try:
        w, h = (int(v) for v in grid.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid expects WxH, got {grid!r}") from None
    return replace(cfg, terrain=replace(cfg.terrain, width=w, height=h))


def derive_seed(master: int, label: str) -> int:
    """Independent RNG stream per concern: hash of (master seed, label), folded to 31 bits."""
    digest = hashlib.blake2b(f"{master}:{label}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (2**31)
