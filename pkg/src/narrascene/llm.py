"""LLM gateway: story generation, frame extraction, object classification, relation normalization.

Three modes:

* ``live``     -- chat-completion style HTTP endpoint (temperature 0)
* ``replay``   -- responses served from a recorded cassette keyed by request fingerprint
* ``fallback`` -- no model; object classification uses a keyword table, everything else is unavailable
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import urllib.error
import urllib.request
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .errors import (
    DanglingEntity,
    EmptyFrames,
    GatewayUnavailable,
    MalformedDocument,
    PipelineWarning,
    ReplayMiss,
    UnparseableResponse,
)
from .narrative import AffordanceType, StoryBundle, parse_story_bundle
from .relations import CanonicalRelation

log = logging.getLogger(__name__)

MODES = ("live", "replay", "fallback")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    template_text: str

    def fill(self, **values: str) -> str:
        return self.template_text.format(**values).strip()


PROMPT_1 = PromptTemplate("prompt_1", "Generate a short adventure story (about 100 words). {seed}")
PROMPT_2 = PromptTemplate(
    "prompt_2",
    "Extract three key time frames and describe each with [Object] [Relation] [Object] triplets.\n"
    "Answer with JSON only: {{\"frames\": [{{\"name\": <short frame title>, \"scene_break\": <true if the "
    "location changes>, \"triples\": [{{\"subject\": ..., \"relation\": ..., \"object\": ...}}], "
    "\"objects\": [{{\"name\": ...}}]}}]}}.\n\n"
    "Story:\n{story}",
)
CLASSIFY = PromptTemplate(
    "classify_object",
    "Classify the narrative object {name!r} from the story below.\n"
    "Affordance type: one of terrain, environmental object, interactive object, item/collectible, "
    "or character/creature.\n"
    "Suggested terrain: a free-text label describing the implied environment (e.g. forest, desert).\n"
    "Answer with JSON only: {{\"affordance\": ..., \"suggested_terrain\": ...}}.\n\n"
    "Story:\n{context}",
)
RELATION = PromptTemplate(
    "normalize_relation",
    "Map the spatial relation phrase {phrase!r} to exactly one of: above, below, at_left_of, "
    "at_right_of, on_top_of. Answer with the single label only.",
)
TEMPLATES = {t.id: t for t in (PROMPT_1, PROMPT_2, CLASSIFY, RELATION)}


def fingerprint(template_id: str, prompt: str) -> str:
    return hashlib.sha256(f"{template_id}\n{prompt}".encode("utf-8")).hexdigest()


class ReplayCassette:
    """Recorded (fingerprint, response) pairs; lookups are by fingerprint, never by call order."""

    def __init__(self, records: list[tuple[str, str]] | None = None):
        self._records: dict[str, str] = {}
        self._lock = threading.Lock()
        for fp, response in records or []:
            self.add(fp, response)

    def __len__(self) -> int:
        return len(self._records)

    def add(self, fp: str, response: str) -> None:
        with self._lock:
            if fp in self._records and self._records[fp] != response:
                raise ValueError(f"conflicting responses recorded for fingerprint {fp}")
            self._records[fp] = response

    def get(self, fp: str) -> str | None:
        with self._lock:
            return self._records.get(fp)

    def records(self) -> list[tuple[str, str]]:
        with self._lock:
            return list(self._records.items())

    @classmethod
    def load(cls, path: str | Path) -> ReplayCassette:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls([(r["fingerprint"], r["response"]) for r in doc["records"]])

    def save(self, path: str | Path) -> None:
        doc = {"records": [{"fingerprint": fp, "response": r} for fp, r in self.records()]}
        Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ClassificationResult:
    object_name: str
    affordance: AffordanceType
    suggested_terrain: str = ""


# Name tokens that make an object a terrain patch candidate.
TERRAIN_KEYWORDS = frozenset({"path", "road", "trail", "floor", "alley", "ground", "dune", "stairs"})

_BASE_TERRAINS = frozenset({
    "forest", "desert", "grass", "grassland", "meadow", "field", "sand", "beach", "sea", "ocean", "water",
    "river", "lake", "snow", "ice", "swamp", "marsh", "jungle", "mountain", "cave", "cavern", "wasteland",
    "ruins", "city", "street", "soil", "canopy", "sky", "abyss", "storm", "sandstorm",
})
_CHARACTERS = frozenset({
    "dragon", "guardian", "creature", "beast", "monster", "leviathan", "goblin", "knight", "wizard",
    "sorcerer", "hacker", "journalist", "captain", "crew", "sailor", "archaeologist", "raider", "gangster",
    "girl", "boy", "man", "woman", "hero", "villager", "society", "figure", "merchant", "shopkeeper",
    "elara", "jake", "kenji", "iris", "alex", "jax", "redbeard", "jack", "cross", "alexander", "amelia",
})
_ITEMS = frozenset({
    "map", "amulet", "key", "coin", "scroll", "potion", "note", "book", "artifact", "treasure", "compass",
    "relic", "gem", "sword", "file", "files", "message", "paper", "papers", "code", "codes", "wish",
    "light", "sunlight", "moonlight", "torchlight", "evidence", "data", "hieroglyph", "prophecy",
})
_INTERACTIVE = frozenset({
    "door", "doors", "chest", "lever", "gate", "entrance", "mainframe", "terminal", "keyboard", "screen",
    "desk", "lock", "elevator", "throne", "trap", "mechanism", "sarcophagus", "trash", "can", "cobblestone",
    "bookshelf", "shelf", "barrel", "streetlight", "lamp", "lantern", "window", "ship", "deck", "vessel",
})


def singular(token: str) -> str:
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def keyword_classify(name: str) -> ClassificationResult:
    """Offline classification from name tokens alone."""
    if not name or not name.strip():
        raise ValueError("object name is empty")
    tokens = name.lower().split()
    keyword_hits = [t for t in tokens if t in TERRAIN_KEYWORDS or singular(t) in TERRAIN_KEYWORDS]
    if keyword_hits:
        rest = [t for t in tokens if t not in keyword_hits]
        label = " ".join(rest) if rest else singular(keyword_hits[0])
        return ClassificationResult(name, AffordanceType.ENVIRONMENTAL_OBJECT, label)
    head = singular(tokens[-1])
    if head in _BASE_TERRAINS or tokens[-1] in _BASE_TERRAINS:
        return ClassificationResult(name, AffordanceType.TERRAIN, head)
    for lexicon, aff in (
        (_CHARACTERS, AffordanceType.CHARACTER_CREATURE),
        (_INTERACTIVE, AffordanceType.INTERACTIVE_OBJECT),
        (_ITEMS, AffordanceType.ITEM_COLLECTIBLE),
    ):
        if head in lexicon or tokens[-1] in lexicon:
            return ClassificationResult(name, aff, "")
    return ClassificationResult(name, AffordanceType.ENVIRONMENTAL_OBJECT, "")


Transport = Callable[[str, Mapping[str, Any], Mapping[str, str], float], Mapping[str, Any]]


def urllib_transport(url: str, payload: Mapping[str, Any], headers: Mapping[str, str], timeout: float):
    req = urllib.request.Request(url, data=json.dumps(payload).encode("utf-8"), headers=dict(headers), method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


def _extract_json(text: str) -> Any:
    text = re.sub(r"```(?:json)?", "", text)
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in response")
    return json.loads(text[start : end + 1])


_FRAME_HEADER = re.compile(r"^\s*(?:#+\s*)?(?:time\s*)?frame\s*(\d+)\s*[:.\-)]?\s*(.*)$", re.IGNORECASE)
_TRIPLE = re.compile(r"\[([^\]]+)\]\s*\[([^\]]+)\]\s*\[([^\]]+)\]")


def _frames_from_brackets(text: str) -> list[dict[str, Any]]:
    frames: list[dict[str, Any]] = []
    for line in text.splitlines():
        header = _FRAME_HEADER.match(line)
        if header and not _TRIPLE.search(line):
            title = header.group(2).strip() or f"frame {header.group(1)}"
            frames.append({"name": title, "scene_break": "scene break" in title.lower(), "triples": []})
            continue
        for subj, rel, obj in _TRIPLE.findall(line):
            if not frames:
                raise ValueError("triple found before any frame header")
            frames[-1]["triples"].append({"subject": subj.strip(), "relation": rel.strip(), "object": obj.strip()})
    return frames


def parse_frames_response(raw: str, story: str, title: str = "untitled") -> StoryBundle:
    """Parse an extraction response (JSON, or ``Frame n:`` headers with ``[A] [R] [B]`` lines)."""
    try:
        try:
            doc = _extract_json(raw)
            frames = doc.get("frames") if isinstance(doc, dict) else None
            if frames is None:
                raise UnparseableResponse("response JSON has no 'frames' block", raw)
            title = doc.get("title", title) if isinstance(doc.get("title"), str) else title
        except ValueError:
            try:
                frames = _frames_from_brackets(raw)
            except ValueError as exc:
                raise UnparseableResponse(str(exc), raw) from None
            if not frames or not any(f["triples"] for f in frames):
                raise UnparseableResponse("response has no triples block", raw) from None
        if not isinstance(frames, list):
            raise UnparseableResponse("'frames' is not a list", raw)
        for f in frames:
            if isinstance(f, dict) and "objects" not in f:
                seen: list[str] = []
                for t in f.get("triples", []):
                    for key in ("subject", "object"):
                        ent = t.get(key) if isinstance(t, dict) else None
                        if isinstance(ent, str) and ent.strip() and ent.strip() not in seen:
                            seen.append(ent.strip())
                f["objects"] = [{"name": n} for n in seen]
        return parse_story_bundle({"title": title, "story": story, "frames": frames}, strict=True)
    except (MalformedDocument, EmptyFrames, DanglingEntity) as exc:
        raise UnparseableResponse(f"extraction response rejected: {exc}", raw) from exc


class LLMGateway:
    def __init__(
        self,
        mode: str = "fallback",
        *,
        cassette: ReplayCassette | None = None,
        endpoint: str | None = None,
        model: str | None = None,
        api_key_env: str | None = None,
        timeout: float = 60.0,
        transport: Transport | None = None,
        allow_fallback: bool = True,
    ):
        if mode not in MODES:
            raise ValueError(f"llm mode must be one of {MODES}, got {mode!r}")
        if mode == "replay" and cassette is None:
            raise ValueError("replay mode needs a cassette")
        self.mode = mode
        self.cassette = cassette
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.transport = transport or urllib_transport
        self.allow_fallback = allow_fallback

    @property
    def can_query(self) -> bool:
        return self.mode in ("live", "replay")

    def complete(self, template: PromptTemplate, prompt: str) -> str:
        fp = fingerprint(template.id, prompt)
        if self.mode == "replay":
            response = self.cassette.get(fp)
            if response is None:
                raise ReplayMiss(fp, template.id)
            return response
        if self.mode == "fallback":
            raise GatewayUnavailable(f"no language model configured for {template.id} (fallback mode)")
        text = self._live(prompt)
        if self.cassette is not None:
            self.cassette.add(fp, text)
        return text

    def _live(self, prompt: str) -> str:
        if not self.endpoint:
            raise GatewayUnavailable("llm.endpoint is not configured")
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            body = self.transport(self.endpoint, payload, headers, self.timeout)
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise GatewayUnavailable(f"endpoint {self.endpoint} unreachable: {exc}") from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise UnparseableResponse("endpoint reply is not a chat completion", json.dumps(body)) from None

    def generate_story(self, seed_prompt: str = "") -> str:
        text = self.complete(PROMPT_1, PROMPT_1.fill(seed=seed_prompt)).strip()
        if not text:
            raise UnparseableResponse("empty story", text)
        return text

    def extract_frames(self, story: str, title: str = "untitled") -> StoryBundle:
        if not story or not story.strip():
            raise ValueError("story text is empty")
        raw = self.complete(PROMPT_2, PROMPT_2.fill(story=story))
        return parse_frames_response(raw, story, title)

    def classify_object(self, name: str, context: str = "") -> ClassificationResult:
        if not name or not name.strip():
            raise ValueError("object name is empty")
        if self.mode == "fallback":
            return keyword_classify(name)
        try:
            raw = self.complete(CLASSIFY, CLASSIFY.fill(name=name, context=context))
        except GatewayUnavailable:
            if not self.allow_fallback:
                raise
            warnings.warn(f"classifier unavailable, keyword fallback used for {name!r}", PipelineWarning, stacklevel=2)
            return keyword_classify(name)
        try:
            doc = _extract_json(raw)
            affordance = AffordanceType.parse(doc["affordance"])
            terrain = doc.get("suggested_terrain") or ""
        except (ValueError, KeyError, TypeError) as exc:
            raise UnparseableResponse(f"classification for {name!r} unreadable: {exc}", raw) from None
        return ClassificationResult(name, affordance, str(terrain).strip())

    def normalize_relation(self, phrase: str) -> CanonicalRelation:
        raw = self.complete(RELATION, RELATION.fill(phrase=phrase))
        first = raw.strip().splitlines()[0] if raw.strip() else ""
        try:
            return CanonicalRelation.parse(first.strip(" .\"'`"))
        except Exception:
            raise UnparseableResponse(f"relation mapping for {phrase!r} unreadable", raw) from None
