"""Semantic tile retrieval: text embeddings, an exhaustive cosine index, affordance-boosted ranking."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateId, EmptyIndex, MalformedDocument, ProviderUnavailable
from .narrative import AffordanceType, NarrativeObject

log = logging.getLogger(__name__)

DEFAULT_DIM = 384
DEFAULT_LAMBDA = 0.1
UNIT_TOL = 1e-6


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int

    def encode(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Signed feature hashing over word tokens plus (down-weighted) character trigrams.

    Deterministic across processes: buckets come from blake2b, not Python's salted ``hash``.
    """

    def __init__(self, dimension: int = DEFAULT_DIM, trigram_weight: float = 0.25):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.trigram_weight = trigram_weight
        self.provider_id = f"hashing-v1-d{dimension}-t{trigram_weight:g}"

    def _add(self, vec: np.ndarray, feature: str, weight: float) -> None:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=16).digest()
        bucket = int.from_bytes(digest[:8], "little") % self.dimension
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[bucket] += sign * weight

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        tokens = re.findall(r"[a-z0-9]+", text.lower()) or [text.strip().lower()]
        for tok in tokens:
            self._add(vec, "w:" + tok, 1.0)
            if self.trigram_weight:
                padded = f"#{tok}#"
                for i in range(len(padded) - 2):
                    self._add(vec, "c:" + padded[i : i + 3], self.trigram_weight)
        return vec


class SentenceTransformerEmbedder:
    """Wraps a sentence-transformers model (optional dependency)."""

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ProviderUnavailable("sentence-transformers is not installed") from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:  # model download / load failures
            raise ProviderUnavailable(f"cannot load {model_name}: {exc}") from exc
        self.dimension = int(self._model.get_sentence_embedding_dimension())
        self.provider_id = f"st-{model_name}"

    def encode(self, text: str) -> np.ndarray:
        return np.asarray(self._model.encode(text), dtype=np.float64)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return vec / norm


def embed_text(provider: EmbeddingProvider, text: str) -> np.ndarray:
    if not text or not text.strip():
        raise ValueError("text to embed is empty")
    vec = np.asarray(provider.encode(text), dtype=np.float64)
    if vec.shape != (provider.dimension,):
        raise DimensionMismatch(f"provider returned shape {vec.shape}, expected ({provider.dimension},)")
    return _unit(vec)


@dataclass(frozen=True, eq=False)
class TileRecord:
    id: str
    name: str
    group_label: str
    supercategory: str
    affordance: AffordanceType
    sprite_path: str | None = None
    embedding: np.ndarray | None = None

    def text(self) -> str:
        return ". ".join((self.name, self.group_label, self.supercategory, self.affordance.label))

    def to_dict(self, with_embedding: bool = False) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "id": self.id,
            "name": self.name,
            "group": self.group_label,
            "supercategory": self.supercategory,
            "affordance": self.affordance.value,
        }
        if self.sprite_path is not None:
            doc["sprite_path"] = self.sprite_path
        if with_embedding and self.embedding is not None:
            doc["embedding"] = [float(v) for v in self.embedding]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> TileRecord:
        try:
            emb = doc.get("embedding")
            return cls(
                id=str(doc["id"]),
                name=doc["name"],
                group_label=doc.get("group", ""),
                supercategory=doc.get("supercategory", ""),
                affordance=AffordanceType.parse(doc["affordance"]),
                sprite_path=doc.get("sprite_path"),
                embedding=None if emb is None else np.asarray(emb, dtype=np.float64),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedDocument(f"bad tile record {doc!r}: {exc}") from None


@dataclass(frozen=True)
class MatchResult:
    tile_id: str
    cosine: float
    boosted_score: float
    affordance_matched: bool
    tile_affordance: AffordanceType | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "tile_id": self.tile_id,
            "cosine": round(self.cosine, 12),
            "boosted_score": round(self.boosted_score, 12),
            "affordance_matched": self.affordance_matched,
            "tile_affordance": self.tile_affordance.value if self.tile_affordance else None,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> MatchResult:
        aff = doc.get("tile_affordance")
        return cls(doc["tile_id"], float(doc["cosine"]), float(doc["boosted_score"]),
                   bool(doc["affordance_matched"]), AffordanceType.parse(aff) if aff else None)


@dataclass(frozen=True, eq=False)
class TileIndex:
    records: tuple[TileRecord, ...]
    dimension: int
    provider_id: str
    matrix: np.ndarray = field(repr=False)
    _by_id: dict[str, int] = field(repr=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def get(self, tile_id: str) -> TileRecord:
        return self.records[self._by_id[tile_id]]


def build_index(tiles: Iterable[TileRecord | Mapping[str, Any]], provider: EmbeddingProvider) -> TileIndex:
    dim = provider.dimension
    records: list[TileRecord] = []
    seen: set[str] = set()
    for raw in tiles:
        rec = raw if isinstance(raw, TileRecord) else TileRecord.from_dict(raw)
        if rec.id in seen:
            raise DuplicateId(f"tile id {rec.id!r} appears twice")
        seen.add(rec.id)
        if rec.embedding is None:
            emb = embed_text(provider, rec.text())
        else:
            emb = np.asarray(rec.embedding, dtype=np.float64)
            if emb.shape != (dim,):
                raise DimensionMismatch(f"tile {rec.id!r}: embedding length {emb.size}, index dimension {dim}")
            if abs(float(np.linalg.norm(emb)) - 1.0) > UNIT_TOL:
                log.warning("tile %s: precomputed embedding not unit length, renormalizing", rec.id)
                emb = _unit(emb)
        records.append(TileRecord(rec.id, rec.name, rec.group_label, rec.supercategory, rec.affordance,
                                  rec.sprite_path, emb))
    # canonical order makes the index independent of input order
    records.sort(key=lambda r: r.id)
    matrix = np.stack([r.embedding for r in records]) if records else np.zeros((0, dim))
    return TileIndex(tuple(records), dim, provider.provider_id, matrix, {r.id: i for i, r in enumerate(records)})


def query_text(obj: NarrativeObject) -> str:
    if obj.affordance is not None:
        return f"{obj.name}. {obj.affordance.label}"
    return obj.name


def rank(index: TileIndex, vector: np.ndarray, k: int, affordance: AffordanceType | None = None,
         lam: float = DEFAULT_LAMBDA) -> list[MatchResult]:
    """Top-k by ``cosine + lam * [tile affordance == affordance]``; ties broken by tile id."""
    n = len(index)
    if n == 0:
        raise EmptyIndex("tile index is empty")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if lam < 0:
        raise ValueError("affordance boost must be non-negative")
    cos = np.clip(index.matrix @ vector, -1.0, 1.0)
    matched = np.array([affordance is not None and r.affordance == affordance for r in index.records])
    boosted = cos + lam * matched
    # records are id-sorted, so a stable sort on -boosted keeps id order among ties
    order = np.argsort(-boosted, kind="stable")[:k]
    return [
        MatchResult(index.records[i].id, float(cos[i]), float(boosted[i]), bool(matched[i]), index.records[i].affordance)
        for i in order
    ]


def query(index: TileIndex, obj: NarrativeObject, k: int, lam: float = DEFAULT_LAMBDA,
          provider: EmbeddingProvider | None = None) -> list[MatchResult]:
    if len(index) == 0:
        raise EmptyIndex("tile index is empty")
    provider = provider or provider_for(index)
    return rank(index, embed_text(provider, query_text(obj)), k, obj.affordance, lam)


def provider_for(index: TileIndex) -> EmbeddingProvider:
    """Reconstruct the built-in provider an index was built with."""
    m = re.fullmatch(r"hashing-v1-d(\d+)-t([0-9.e-]+)", index.provider_id)
    if m is None:
        raise ProviderUnavailable(f"pass the provider explicitly for index built with {index.provider_id!r}")
    return HashingEmbedder(int(m.group(1)), float(m.group(2)))


def load_tileset(path: str | Path, sidecar: str | Path | None = None) -> list[TileRecord]:
    """Read a JSON-lines tileset; optionally attach float32 embeddings from a sidecar.

    The sidecar is ``<name>.f32`` (little-endian float32 rows) with ``<name>.json`` listing ``{"ids": [...], "dimension": D}``.
    """
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"{path}:{lineno}: {exc}") from None
        records.append(TileRecord.from_dict(doc))
    if sidecar is not None:
        rows = read_embedding_sidecar(sidecar)
        records = [
            TileRecord(r.id, r.name, r.group_label, r.supercategory, r.affordance, r.sprite_path, rows[r.id])
            if r.id in rows else r
            for r in records
        ]
    return records


def write_tileset(records: Sequence[TileRecord], path: str | Path, with_embedding: bool = False) -> None:
    lines = [json.dumps(r.to_dict(with_embedding), ensure_ascii=False) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_embedding_sidecar(ids: Sequence[str], matrix: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.shape[0] != len(ids):
        raise DimensionMismatch("sidecar ids and rows differ in count")
    path.with_suffix(".f32").write_bytes(matrix.tobytes())
    path.with_suffix(".json").write_text(json.dumps({"ids": list(ids), "dimension": int(matrix.shape[1])}))


def read_embedding_sidecar(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    dim = int(manifest["dimension"])
    data = np.frombuffer(path.with_suffix(".f32").read_bytes(), dtype="<f4")
    if data.size != dim * len(manifest["ids"]):
        raise DimensionMismatch(f"sidecar {path} holds {data.size} floats, expected {dim * len(manifest['ids'])}")
    rows = data.reshape(len(manifest["ids"]), dim).astype(np.float64)
    return dict(zip(manifest["ids"], rows))
