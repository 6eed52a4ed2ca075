"""Concept-embedded scene graph: one node per proposal holding a category
embedding plus one embedding per attribute family, and directed edges
carrying relation probabilities and their weighted concept embedding."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import UnknownCategoryToken, UnknownShapeToken
from .relations import (
    SIZE_SUPERLATIVES,
    RelationConfig,
    build_relation_matrix,
    category_matrix,
    size_superlative_probability,
)
from .scene import ObjectProposal, Scene
from .vocabulary import CATEGORY, ConceptVocabulary

NAMED_COLORS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 0.5, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
    "brown": (0.545, 0.271, 0.075),
    "gray": (0.5, 0.5, 0.5),
    "yellow": (1.0, 1.0, 0.0),
    "orange": (1.0, 0.647, 0.0),
    "purple": (0.5, 0.0, 0.5),
}

CORNER_FRACTION = 0.2
MIDDLE_FRACTION = 0.2


@dataclass(frozen=True)
class NodeState:
    object_id: str
    embeddings: np.ndarray              # (L+1) x d; row 0 is the category
    property_meta: tuple[dict, ...]     # per family: token -> weight


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    relation_probs: dict[str, float]
    embedding: np.ndarray


@dataclass(frozen=True)
class SceneGraph:
    scene_id: str
    ids: tuple[str, ...]
    families: tuple[str, ...]           # "category" followed by attribute families
    relations: tuple[str, ...]
    node_tensor: np.ndarray             # N x (L+1) x d
    meta: tuple[tuple[dict, ...], ...]
    edge_src: np.ndarray                # E
    edge_dst: np.ndarray                # E
    edge_probs: np.ndarray              # E x T
    edge_emb: np.ndarray                # E x d
    vocab: ConceptVocabulary

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def n_attributes(self) -> int:
        return len(self.families) - 1

    @property
    def nodes(self) -> list[NodeState]:
        return [NodeState(i, self.node_tensor[n], self.meta[n]) for n, i in enumerate(self.ids)]

    @property
    def edges(self) -> list[Edge]:
        out = []
        for e in range(len(self.edge_src)):
            probs = {t: float(p) for t, p in zip(self.relations, self.edge_probs[e]) if p != 0.0}
            out.append(Edge(self.ids[self.edge_src[e]], self.ids[self.edge_dst[e]], probs, self.edge_emb[e]))
        return out


# ---------------------------------------------------------------- node properties

def _weighted(vocab: ConceptVocabulary, weights: dict[str, float]) -> np.ndarray:
    out = np.zeros(vocab.dim)
    for tok, w in weights.items():
        out += w * vocab.embedding(tok)
    return out


def category_embedding(proposal: ObjectProposal, vocab: ConceptVocabulary) -> np.ndarray:
    """Probability-weighted sum of category concept embeddings."""
    cats = vocab.categories
    unknown = [t for t in proposal.category_dist if t not in cats]
    if unknown:
        raise UnknownCategoryToken(unknown[0])
    out = np.zeros(vocab.dim)
    for tok in cats:
        w = proposal.category_dist.get(tok)
        if w:
            out += w * vocab.embedding(tok)
    return out


def nearest_named_color(rgb, names=None) -> str:
    names = sorted(names if names is not None else NAMED_COLORS)
    rgb = np.asarray(rgb, dtype=float)
    dists = [float(np.sum((rgb - np.asarray(NAMED_COLORS[n])) ** 2)) for n in names]
    best = min(dists)
    return min(n for n, d in zip(names, dists) if d == best)


def _color_token(proposal: ObjectProposal, vocab: ConceptVocabulary) -> str | None:
    if "color" not in vocab.attribute_families:
        return None
    names = [t for t in vocab.family_tokens("color") if t in NAMED_COLORS]
    if not names:
        return None
    return nearest_named_color(proposal.mean_rgb, names)


def color_embedding(proposal: ObjectProposal, vocab: ConceptVocabulary) -> np.ndarray:
    """Embedding of the named colour closest (Euclidean RGB) to the proposal's mean colour."""
    tok = _color_token(proposal, vocab)
    return vocab.embedding(tok) if tok else np.zeros(vocab.dim)


def shape_embedding(proposal: ObjectProposal, vocab: ConceptVocabulary) -> np.ndarray:
    if proposal.shape_dist is None:
        return np.zeros(vocab.dim)
    shapes = vocab.family_tokens("shape")
    for tok in proposal.shape_dist:
        if tok not in shapes:
            raise UnknownShapeToken(tok)
    return _weighted(vocab, proposal.shape_dist)


def superlative_weights(scene: Scene, proposal: ObjectProposal, vocab: ConceptVocabulary, family: str,
                        K: int | None = None) -> dict[str, float]:
    out = {}
    for tok in vocab.family_tokens(family):
        if tok in SIZE_SUPERLATIVES:
            out[tok] = size_superlative_probability(scene, proposal.id, tok, K, categories=vocab.categories)
    return out


def superlative_attr_embedding(scene: Scene, proposal: ObjectProposal, vocab: ConceptVocabulary,
                               family: str, K: int | None = None) -> np.ndarray:
    """Superlative tokens of ``family`` weighted by their category-conditional probability."""
    return _weighted(vocab, superlative_weights(scene, proposal, vocab, family, K))


def _is_superlative_family(vocab, family) -> bool:
    return all(t in SIZE_SUPERLATIVES for t in vocab.family_tokens(family))


def room_position(scene: Scene, proposal: ObjectProposal) -> str | None:
    """``corner``/``middle`` relative to the bounding rectangle of all footprints."""
    pts = np.vstack([p.box.footprint_corners() for p in scene.proposals])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    c = np.asarray(proposal.box.center[:2])
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    if np.min(np.linalg.norm(corners - c, axis=1)) <= CORNER_FRACTION * diag:
        return "corner"
    if np.linalg.norm(c - (lo + hi) / 2) <= MIDDLE_FRACTION * diag:
        return "middle"
    return None


def relative_size(scene: Scene, proposal: ObjectProposal) -> str | None:
    """``large``/``small`` against the median volume of objects sharing the top category."""
    cat = proposal.top_category()
    vols = [p.box.volume for p in scene.proposals if p.top_category() == cat]
    med = float(np.median(vols))
    v = proposal.box.volume
    if v > med:
        return "large"
    if v < med:
        return "small"
    return None


def family_weights(scene: Scene, proposal: ObjectProposal, vocab: ConceptVocabulary, family: str,
                   K: int | None = None) -> dict[str, float]:
    """Symbolic evidence for one attribute family as token -> weight (empty if none)."""
    toks = vocab.family_tokens(family)
    if family == "color":
        tok = _color_token(proposal, vocab)
        return {tok: 1.0} if tok else {}
    if family == "shape":
        return dict(proposal.shape_dist) if proposal.shape_dist is not None else {}
    if _is_superlative_family(vocab, family):
        return superlative_weights(scene, proposal, vocab, family, K)
    if family == "position":
        tok = room_position(scene, proposal)
        return {tok: 1.0} if tok in toks else {}
    if family == "relative_size":
        tok = relative_size(scene, proposal)
        return {tok: 1.0} if tok in toks else {}
    # pass-through attribute such as material
    tok = proposal.extra_attrs.get(family)
    return {tok: 1.0} if tok in toks else {}


def node_state(scene: Scene, proposal: ObjectProposal, vocab: ConceptVocabulary, K: int | None = None):
    rows = [category_embedding(proposal, vocab)]
    meta = [{t: proposal.category_dist[t] for t in vocab.categories if t in proposal.category_dist}]
    for fam in vocab.attribute_families:
        if fam == "shape":
            rows.append(shape_embedding(proposal, vocab))
            w = dict(proposal.shape_dist) if proposal.shape_dist else {}
        else:
            w = family_weights(scene, proposal, vocab, fam, K)
            rows.append(_weighted(vocab, w))
        meta.append(w)
    return NodeState(proposal.id, np.array(rows), tuple(meta))


# ---------------------------------------------------------------- assembly

def build_scene_graph(scene: Scene, vocab: ConceptVocabulary, config: RelationConfig | None = None) -> SceneGraph:
    config = config or RelationConfig()
    for t in config.relation_set:
        vocab.embedding(t)
    category_matrix(scene, vocab.categories)  # rejects unknown category tokens early
    nodes = [node_state(scene, p, vocab, config.top_k) for p in scene.proposals]
    rel = build_relation_matrix(scene, config, categories=vocab.categories)
    rel_emb = np.array([vocab.embedding(t) for t in config.relation_set])   # T x d
    src, dst = np.nonzero(rel.values.any(axis=0))
    probs = rel.values[:, src, dst].T if len(src) else np.zeros((0, len(config.relation_set)))
    emb = probs @ rel_emb if len(src) else np.zeros((0, vocab.dim))
    n = len(nodes)
    tensor = np.array([nd.embeddings for nd in nodes]).reshape(n, vocab.n_attributes + 1, vocab.dim)
    for arr in (tensor, probs, emb):
        arr.setflags(write=False)
    return SceneGraph(
        scene_id=scene.id,
        ids=tuple(scene.ids),
        families=(CATEGORY, *vocab.attribute_families),
        relations=tuple(config.relation_set),
        node_tensor=tensor,
        meta=tuple(nd.property_meta for nd in nodes),
        edge_src=src,
        edge_dst=dst,
        edge_probs=probs,
        edge_emb=emb,
        vocab=vocab,
    )


def graph_to_doc(graph: SceneGraph, embeddings: bool = False) -> dict:
    nodes = []
    for n, oid in enumerate(graph.ids):
        node = {
            "id": oid,
            "properties": {f: dict(m) for f, m in zip(graph.families, graph.meta[n])},
        }
        if embeddings:
            node["embeddings"] = graph.node_tensor[n].tolist()
        nodes.append(node)
    edges = []
    for e in graph.edges:
        edge = {"source": e.source, "target": e.target, "relations": e.relation_probs}
        if embeddings:
            edge["embedding"] = e.embedding.tolist()
        edges.append(edge)
    return {
        "scene": graph.scene_id,
        "families": list(graph.families),
        "relations": list(graph.relations),
        "nodes": nodes,
        "edges": edges,
    }


def graph_to_json(graph: SceneGraph, embeddings: bool = False) -> str:
    return json.dumps(graph_to_doc(graph, embeddings), indent=1, sort_keys=True) + "\n"
