"""Per-frame knowledge graphs and the merged timeline graph linked by ``precedes`` edges."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import networkx as nx

from .llm import ClassificationResult
from .narrative import SceneFrame, normalize_entity_name
from .relations import CanonicalRelation
from .tiles import MatchResult

PRECEDES = "precedes"


@dataclass(frozen=True, eq=False)
class SceneKG:
    frame: str
    graph: nx.MultiDiGraph

    @property
    def n_nodes(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def n_edges(self) -> int:
        return self.graph.number_of_edges()


@dataclass(frozen=True, eq=False)
class MergedKG:
    """Frame-scoped copy of every SceneKG plus one anchor node per frame.

    Entity nodes are ``"<k>:<entity>"`` (k = 1-based frame number); anchors are ``"frame:<k>"``.
    ``identity_links`` pairs nodes naming the same entity in consecutive appearances; they are kept
    out of ``graph`` so its edges are exactly the triples plus the precedes chain.
    """

    graph: nx.MultiDiGraph
    frames: tuple[str, ...]
    identity_links: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def anchor(self, k: int) -> str:
        return f"frame:{k}"

    def frame_nodes(self, k: int) -> list[str]:
        return [n for n, d in self.graph.nodes(data=True) if d.get("kind") == "entity" and d["frame_index"] == k]

    def frame_subgraph(self, k: int) -> nx.MultiDiGraph:
        return self.graph.subgraph(self.frame_nodes(k)).copy()

    def precedes_edges(self) -> list[tuple[str, str]]:
        return [(u, v) for u, v, d in self.graph.edges(data=True) if d.get("label") == PRECEDES]

    def __eq__(self, other):
        if not isinstance(other, MergedKG):
            return NotImplemented
        return kg_to_document(self) == kg_to_document(other)


def build_scene_kg(
    frame: SceneFrame,
    matches: Mapping[str, MatchResult | str | None] | None = None,
    classifications: Mapping[str, ClassificationResult] | None = None,
    relations: Sequence[CanonicalRelation] | None = None,
) -> SceneKG:
    matches = matches or {}
    classifications = classifications or {}
    g = nx.MultiDiGraph()
    for obj in frame.objects:
        key = normalize_entity_name(obj.name)
        if key in g:
            continue
        cls = classifications.get(key)
        aff = obj.affordance or (cls.affordance if cls else None)
        m = matches.get(key)
        tile = m if isinstance(m, str) or m is None else m.tile_id
        g.add_node(key, affordance=aff.value if aff else None, tile_id=tile)
    for i, t in enumerate(frame.triples):
        s, o = normalize_entity_name(t.subject), normalize_entity_name(t.object)
        canon = relations[i].value if relations is not None else None
        g.add_edge(s, o, key=i, label=t.relation, relation_raw=t.relation, relation_canonical=canon)
    return SceneKG(frame.name, g)


def merge_kgs(kgs: Sequence[SceneKG]) -> MergedKG:
    if not kgs:
        raise ValueError("need at least one scene graph")
    g = nx.MultiDiGraph()
    last_seen: dict[str, str] = {}
    links = []
    for k, kg in enumerate(kgs, 1):
        anchor = f"frame:{k}"
        g.add_node(anchor, kind="anchor", frame=kg.frame, frame_index=k)
        for node, data in sorted(kg.graph.nodes(data=True)):
            nid = f"{k}:{node}"
            g.add_node(nid, kind="entity", entity=node, frame=kg.frame, frame_index=k, **data)
            if node in last_seen:
                links.append((last_seen[node], nid))
            last_seen[node] = nid
        for u, v, key, data in kg.graph.edges(keys=True, data=True):
            g.add_edge(f"{k}:{u}", f"{k}:{v}", key=key, **data)
        if k > 1:
            g.add_edge(f"frame:{k - 1}", anchor, key=PRECEDES, label=PRECEDES)
    return MergedKG(g, tuple(kg.frame for kg in kgs), tuple(links))


def query_entity_timeline(merged: MergedKG, entity: str) -> list[tuple[str, list[tuple[str, str, str]]]]:
    """Frames (in precedes order) where ``entity`` appears, each with its incident ``(subject, relation, object)`` edges."""
    try:
        key = normalize_entity_name(entity)
    except ValueError:
        return []
    order = ["frame:1"]
    while True:
        nxt = [v for _, v, d in merged.graph.out_edges(order[-1], data=True) if d.get("label") == PRECEDES]
        if not nxt:
            break
        order.append(nxt[0])
    out = []
    for anchor in order:
        k = merged.graph.nodes[anchor]["frame_index"]
        nid = f"{k}:{key}"
        if nid not in merged.graph:
            continue
        g = merged.graph
        # a self-loop is both an in- and an out-edge; dedupe on the edge key
        incident = {(u, v, ek): d for u, v, ek, d in g.in_edges(nid, keys=True, data=True)}
        incident.update({(u, v, ek): d for u, v, ek, d in g.out_edges(nid, keys=True, data=True)})
        edges = [(g.nodes[u]["entity"], d["relation_raw"], g.nodes[v]["entity"])
                 for (u, v, ek), d in sorted(incident.items(), key=lambda kv: kv[0][2])]
        out.append((merged.graph.nodes[anchor]["frame"], edges))
    return out


def kg_to_document(merged: MergedKG) -> dict[str, Any]:
    """Triple-list document, sorted so equal graphs serialize to equal bytes."""
    g = merged.graph
    triples = []
    for u, v, key, d in g.edges(keys=True, data=True):
        if d.get("label") == PRECEDES:
            continue
        k = g.nodes[u]["frame_index"]
        triples.append({
            "frame": merged.frames[k - 1], "index": key,
            "subject": g.nodes[u]["entity"], "relation_raw": d["relation_raw"],
            "relation_canonical": d.get("relation_canonical"), "object": g.nodes[v]["entity"],
        })
    triples.sort(key=lambda t: (merged.frames.index(t["frame"]), t["index"]))
    nodes = [
        {"frame": d["frame"], "entity": d["entity"], "affordance": d.get("affordance"), "tile_id": d.get("tile_id")}
        for _, d in sorted(g.nodes(data=True), key=lambda nd: (nd[1]["frame_index"], nd[1].get("entity", "")))
        if d.get("kind") == "entity"
    ]
    return {
        "frames": list(merged.frames),
        "nodes": nodes,
        "triples": triples,
        "precedes": [[merged.frames[i], merged.frames[i + 1]] for i in range(len(merged.frames) - 1)],
    }


def kg_from_document(doc: Mapping[str, Any]) -> MergedKG:
    frames = list(doc["frames"])
    kgs = []
    for name in frames:
        g = nx.MultiDiGraph()
        for n in doc["nodes"]:
            if n["frame"] == name:
                g.add_node(n["entity"], affordance=n.get("affordance"), tile_id=n.get("tile_id"))
        for t in doc["triples"]:
            if t["frame"] == name:
                g.add_edge(t["subject"], t["object"], key=t["index"], label=t["relation_raw"],
                           relation_raw=t["relation_raw"], relation_canonical=t.get("relation_canonical"))
        kgs.append(SceneKG(name, g))
    return merge_kgs(kgs)


def write_kg(merged: MergedKG, path: str | Path) -> None:
    Path(path).write_text(json.dumps(kg_to_document(merged), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_kg(path: str | Path) -> MergedKG:
    return kg_from_document(json.loads(Path(path).read_text(encoding="utf-8")))


def _dot_id(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(merged: MergedKG) -> str:
    doc = kg_to_document(merged)
    lines = ["digraph story {", "  rankdir=LR;", "  node [shape=box, fontsize=10];"]
    for k, name in enumerate(doc["frames"], 1):
        lines.append(f"  subgraph cluster_{k} {{")
        lines.append(f"    label={_dot_id(name)};")
        anchor = f"frame:{k}"
        lines.append(f"    {_dot_id(anchor)} [shape=ellipse, style=dashed, label={_dot_id(name)}];")
        for n in doc["nodes"]:
            if n["frame"] == name:
                nid = f"{k}:{n['entity']}"
                lines.append(f"    {_dot_id(nid)} [label={_dot_id(n['entity'])}];")
        lines.append("  }")
    index = {name: k for k, name in enumerate(doc["frames"], 1)}
    for t in doc["triples"]:
        k = index[t["frame"]]
        label = t["relation_raw"] + (f" ({t['relation_canonical']})" if t["relation_canonical"] else "")
        src, dst = f"{k}:{t['subject']}", f"{k}:{t['object']}"
        lines.append(f"  {_dot_id(src)} -> {_dot_id(dst)} [label={_dot_id(label)}];")
    for a, b in doc["precedes"]:
        src, dst = f"frame:{index[a]}", f"frame:{index[b]}"
        lines.append(f"  {_dot_id(src)} -> {_dot_id(dst)} [label=\"precedes\", style=bold];")
    lines.append("}")
    return "\n".join(lines) + "\n"
