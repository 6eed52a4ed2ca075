"""Synthetic indoor scenes with template referring utterances.

Scenes are rooms of axis-aligned furniture (yaw a multiple of a right angle)
with small items optionally resting on supporting furniture. Each scene gets
one utterance of the form ``the <attrs> <target> <relation> the <attrs> <anchor>``
whose gold target is, with the ambiguity guard on, the only object satisfying
target category and relation to the uniquely named anchor.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from shapely.geometry import Polygon

from .errors import NoUnambiguousTriple, PlacementFailed
from .graph import NAMED_COLORS, family_weights
from .parsing import ParsedClues
from .relations import RelationConfig, build_relation_matrix
from .scene import (
    BoundingBox,
    ObjectProposal,
    Scene,
    load_scene_file,
    save_scene,
    with_category_dists,
)
from .vocabulary import CATEGORY, ConceptVocabulary, default_vocabulary

# nominal (dx, dy, dz) in metres
CATEGORY_SIZES = {
    "bag": (0.4, 0.2, 0.35),
    "bed": (2.0, 1.6, 0.6),
    "book": (0.22, 0.15, 0.04),
    "bookshelf": (0.9, 0.35, 1.8),
    "box": (0.4, 0.4, 0.3),
    "cabinet": (0.8, 0.5, 0.9),
    "chair": (0.5, 0.5, 0.9),
    "couch": (2.0, 0.9, 0.8),
    "cup": (0.08, 0.08, 0.1),
    "desk": (1.4, 0.7, 0.75),
    "dresser": (1.2, 0.5, 1.0),
    "lamp": (0.3, 0.3, 0.5),
    "monitor": (0.55, 0.2, 0.4),
    "ottoman": (0.6, 0.6, 0.45),
    "pillow": (0.5, 0.35, 0.15),
    "plant": (0.4, 0.4, 0.8),
    "stool": (0.4, 0.4, 0.6),
    "table": (1.2, 0.8, 0.75),
    "toilet": (0.4, 0.7, 0.8),
    "vase": (0.15, 0.15, 0.3),
}
SUPPORTERS = frozenset({"bed", "bookshelf", "cabinet", "couch", "desk", "dresser", "ottoman", "stool", "table"})
SMALL_ITEMS = frozenset({"bag", "book", "box", "cup", "lamp", "monitor", "pillow", "plant", "vase"})

SURFACE_FORMS = {"farthest": "farthest from", "closest": "closest to"}
TARGET_ATTR_FAMILIES = ("color", "shape", "material")
SIZE_ATTR_FAMILIES = ("size", "height")
ANCHOR_ATTR_FAMILIES = ("color", "material")

MAX_PLACEMENT_ATTEMPTS = 1000
MIN_GAP = 0.05
SIZE_JITTER = 0.2
COLOR_NOISE = 0.02


@dataclass(frozen=True)
class GenConfig:
    n_scenes: int = 100
    min_objects: int = 4
    max_objects: int = 12
    n_categories: int = 20
    guard: bool = True
    attribute_mode: bool = False
    noisy: bool = False
    gt_concentration: float = 5.0
    spread_concentration: float = 0.5
    stack_probability: float = 0.35
    seed: int = 0
    relations: tuple[str, ...] | None = None     # None: every relation in the vocabulary

    def __post_init__(self):
        if self.n_scenes < 0:
            raise ValueError("n_scenes must be non-negative")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("objects range must be non-empty and start at 1 or more")
        if self.n_categories < 1:
            raise ValueError("n_categories must be positive")
        if self.gt_concentration <= 0 or self.spread_concentration <= 0:
            raise ValueError("Dirichlet concentrations must be positive")

    def to_doc(self) -> dict:
        doc = asdict(self)
        if self.relations is not None:
            doc["relations"] = list(self.relations)
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "GenConfig":
        doc = dict(doc)
        if doc.get("relations") is not None:
            doc["relations"] = tuple(doc["relations"])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator options {sorted(unknown)}")
        return cls(**doc)


@dataclass
class Example:
    scene: Scene
    utterance: str
    target_id: str
    clues: ParsedClues

    @property
    def id(self) -> str:
        return self.scene.id


def category_pool(vocab: ConceptVocabulary, config: GenConfig) -> list[str]:
    return sorted(vocab.categories)[: config.n_categories]


def _extents(rng, cat) -> tuple[float, float, float]:
    base = CATEGORY_SIZES.get(cat, (0.5, 0.5, 0.5))
    return tuple(round(float(b * rng.uniform(1 - SIZE_JITTER, 1 + SIZE_JITTER)), 4) for b in base)


def _noisy_dist(rng, gt: str, pool: list[str], config: GenConfig) -> dict[str, float]:
    alpha = np.array([config.gt_concentration if c == gt else config.spread_concentration for c in pool])
    p = rng.dirichlet(alpha)
    return {c: float(v) for c, v in zip(pool, p)}


def _footprint(center, extents, yaw) -> Polygon:
    return BoundingBox(tuple(center), tuple(extents), yaw).footprint


def generate_scene(config: GenConfig, seed, vocab: ConceptVocabulary | None = None, scene_id: str = "scene") -> Scene:
    """Place objects without interpenetration and attach appearance attributes."""
    vocab = vocab or default_vocabulary()
    rng = np.random.default_rng(seed)
    pool = category_pool(vocab, config)
    n = int(rng.integers(config.min_objects, config.max_objects + 1))
    cats = [pool[int(i)] for i in rng.integers(len(pool), size=n)]
    colors = sorted(t for t in vocab.family_tokens("color") if t in NAMED_COLORS) if "color" in vocab.attribute_families else []
    shapes = vocab.family_tokens("shape") if "shape" in vocab.attribute_families else []
    materials = vocab.family_tokens("material") if "material" in vocab.attribute_families else []

    ext = [_extents(rng, c) for c in cats]
    yaws = [float(rng.choice([0.0, math.pi / 2, math.pi, -math.pi / 2])) for _ in cats]
    floor_area = sum(e[0] * e[1] for e in ext)
    side = max(3.0, math.sqrt(floor_area * 3.5))

    # floor objects first (supporters before small items) so stacking has targets
    order = sorted(range(n), key=lambda i: (cats[i] not in SUPPORTERS, i))
    centers: dict[int, tuple[float, float, float]] = {}
    floor: list[Polygon] = []
    tops: dict[int, list[Polygon]] = {}
    for i in order:
        dx, dy, dz = ext[i]
        supporters = [j for j in tops if cats[i] in SMALL_ITEMS]
        placed = False
        if supporters and rng.random() < config.stack_probability:
            j = supporters[int(rng.integers(len(supporters)))]
            sup = _footprint(centers[j], ext[j], yaws[j])
            minx, miny, maxx, maxy = sup.bounds
            for _ in range(MAX_PLACEMENT_ATTEMPTS):
                c = (float(rng.uniform(minx, maxx)), float(rng.uniform(miny, maxy)))
                fp = _footprint((*c, 0.0), ext[i], yaws[i])
                if sup.contains(fp) and all(fp.distance(o) > MIN_GAP for o in tops[j]):
                    centers[i] = (round(c[0], 4), round(c[1], 4), round(centers[j][2] + ext[j][2] / 2 + dz / 2, 4))
                    tops[j].append(fp)
                    placed = True
                    break
        if placed:
            continue
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            c = (float(rng.uniform(0, side)), float(rng.uniform(0, side)))
            fp = _footprint((*c, 0.0), ext[i], yaws[i])
            minx, miny, maxx, maxy = fp.bounds
            if minx < 0 or miny < 0 or maxx > side or maxy > side:
                continue
            if all(fp.distance(o) > MIN_GAP for o in floor):
                centers[i] = (round(c[0], 4), round(c[1], 4), round(dz / 2, 4))
                floor.append(fp)
                if cats[i] in SUPPORTERS:
                    tops[i] = []
                placed = True
                break
        if not placed:
            raise PlacementFailed(f"could not place {cats[i]} after {MAX_PLACEMENT_ATTEMPTS} attempts")

    # ids follow a random permutation so they carry no layout information
    perm = rng.permutation(n)
    proposals = []
    gt = {}
    for k, i in enumerate(perm.tolist()):
        oid = f"obj{k:02d}"
        rgb = np.asarray(NAMED_COLORS[colors[int(rng.integers(len(colors)))]] if colors else (0.5, 0.5, 0.5))
        rgb = np.clip(rgb + rng.normal(0.0, COLOR_NOISE, 3), 0.0, 1.0)
        shape = {shapes[int(rng.integers(len(shapes)))]: 1.0} if shapes else None
        attrs = {"material": materials[int(rng.integers(len(materials)))]} if materials else {}
        dist = _noisy_dist(rng, cats[i], pool, config) if config.noisy else {cats[i]: 1.0}
        box = BoundingBox(centers[i], ext[i], yaws[i])
        proposals.append(ObjectProposal(oid, box, tuple(round(float(x), 4) for x in rgb), dist, shape, attrs))
        gt[oid] = cats[i]
    proposals.sort(key=lambda p: p.id)
    return Scene(scene_id, tuple(proposals), gt)


def gt_view(scene: Scene) -> Scene:
    """The scene with every category distribution replaced by its one-hot truth."""
    return with_category_dists(scene, [{scene.ground_truth[p.id]: 1.0} for p in scene.proposals])


def _relations(vocab: ConceptVocabulary, config: GenConfig) -> tuple[str, ...]:
    rels = tuple(config.relations) if config.relations is not None else tuple(vocab.relations)
    return tuple(r for r in rels if r != "between")


def _attribute_table(scene: Scene, vocab: ConceptVocabulary, families) -> dict[str, dict[str, str]]:
    """Object id -> family -> token the object certainly carries."""
    out = {}
    for p in scene.proposals:
        row = {}
        for fam in families:
            if fam not in vocab.attribute_families:
                continue
            w = family_weights(scene, p, vocab, fam, None)
            sure = sorted(t for t, v in w.items() if v >= 1.0 - 1e-12)
            if sure:
                row[fam] = sure[0]
        out[p.id] = row
    return out


def consistent_targets(scene: Scene, clues: ParsedClues, vocab: ConceptVocabulary,
                       relation_config: RelationConfig | None = None) -> list[str]:
    """Exhaustive scan over the ground-truth scene: every object matching the
    target clues that stands in the clue relation to some object matching the
    anchor clues."""
    g = gt_view(scene)
    gt = scene.ground_truth
    fams = sorted({f for f in (*clues.target, *clues.anchor) if f != CATEGORY})
    attrs = _attribute_table(g, vocab, fams) if fams else {p.id: {} for p in g.proposals}

    def matches(oid, props):
        for fam, tok in props.items():
            have = gt[oid] if fam == CATEGORY else attrs[oid].get(fam)
            if have != tok:
                return False
        return True

    targets = [i for i in g.ids if matches(i, clues.target)]
    if clues.relation is None:
        return targets
    cfg = relation_config or RelationConfig(relation_set=(clues.relation,))
    R = build_relation_matrix(g, cfg, categories=vocab.categories)
    anchors = [i for i in g.ids if matches(i, clues.anchor)]
    return [x for x in targets if any(z != x and R.get(clues.relation, z, x) >= 1.0 for z in anchors)]


def render_utterance(clues: ParsedClues, vocab: ConceptVocabulary) -> str:
    def side(props):
        attrs = [props[f] for f in vocab.attribute_families if f in props]
        return " ".join(["the", *attrs, props[CATEGORY]])

    if clues.relation is None:
        return side(clues.target)
    rel = SURFACE_FORMS.get(clues.relation, clues.relation)
    return f"{side(clues.target)} {rel} {side(clues.anchor)}"


def generate_utterance(scene: Scene, config: GenConfig, seed, vocab: ConceptVocabulary | None = None,
                       relation_config: RelationConfig | None = None):
    """Pick an (anchor, relation, target) triple and render it.

    Returns ``(utterance, target id, ParsedClues)``.
    """
    vocab = vocab or default_vocabulary()
    rng = np.random.default_rng(seed)
    rels = _relations(vocab, config)
    base = relation_config or RelationConfig()
    cfg = RelationConfig(relation_set=rels, kinds=base.kinds, near_factor=base.near_factor,
                         support_gap=base.support_gap, overlap_min=base.overlap_min, top_k=None,
                         reference_diagonal=base.reference_diagonal)
    g = gt_view(scene)
    gt = scene.ground_truth
    R = build_relation_matrix(g, cfg, categories=vocab.categories)
    counts: dict[str, int] = {}
    for c in gt.values():
        counts[c] = counts.get(c, 0) + 1
    ids = g.ids

    by_rel: dict[str, list[tuple[str, str]]] = {}
    for j, rel in enumerate(rels):
        for iz, z in enumerate(ids):
            if config.guard and counts[gt[z]] != 1:
                continue
            for ix, x in enumerate(ids):
                if ix == iz or R.values[j, iz, ix] < 1.0:
                    continue
                if config.guard:
                    rivals = [y for iy, y in enumerate(ids)
                              if gt[y] == gt[x] and iy != iz and R.values[j, iz, iy] >= 1.0]
                    if rivals != [x]:
                        continue
                by_rel.setdefault(rel, []).append((z, x))
    if not by_rel:
        raise NoUnambiguousTriple(f"scene {scene.id} has no usable triple")

    rel = sorted(by_rel)[int(rng.integers(len(by_rel)))]
    triples = by_rel[rel]
    z, x = triples[int(rng.integers(len(triples)))]
    target = {CATEGORY: gt[x]}
    anchor = {CATEGORY: gt[z]}
    if config.attribute_mode:
        fams = [f for f in (*TARGET_ATTR_FAMILIES, *SIZE_ATTR_FAMILIES) if f in vocab.attribute_families]
        table = _attribute_table(g, vocab, fams)
        chosen = {}
        for fam in TARGET_ATTR_FAMILIES:
            if fam in table[x] and rng.random() < 0.5:
                chosen[fam] = table[x][fam]
        for fam in SIZE_ATTR_FAMILIES:
            if fam in table[x] and rng.random() < 0.3:
                chosen[fam] = table[x][fam]
        if not chosen:
            avail = sorted(table[x])
            if avail:
                fam = avail[int(rng.integers(len(avail)))]
                chosen[fam] = table[x][fam]
        target.update(chosen)
        for fam in ANCHOR_ATTR_FAMILIES:
            if fam in table[z] and rng.random() < 0.25:
                anchor[fam] = table[z][fam]
    clues = ParsedClues(target, rel, anchor)
    return render_utterance(clues, vocab), x, clues


def generate_dataset(config: GenConfig, vocab: ConceptVocabulary | None = None, max_retries: int = 20):
    """``config.n_scenes`` examples; scene ``i`` is seeded from ``(seed, i, attempt)``."""
    vocab = vocab or default_vocabulary()
    out = []
    for i in range(config.n_scenes):
        sid = f"scene{i:04d}"
        for attempt in range(max_retries):
            try:
                scene = generate_scene(config, [config.seed, i, attempt], vocab, sid)
                utt, tid, clues = generate_utterance(scene, config, [config.seed, i, attempt, 1], vocab)
            except (PlacementFailed, NoUnambiguousTriple):
                continue
            out.append(Example(scene, utt, tid, clues))
            break
        else:
            raise NoUnambiguousTriple(f"gave up on {sid} after {max_retries} attempts")
    return out


# ---------------------------------------------------------------- dataset files

def write_dataset(examples: list[Example], out_dir, config: GenConfig | None = None):
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    with open(out / "refs.jsonl", "w", encoding="utf-8") as fh:
        for ex in examples:
            save_scene(ex.scene, out / "scenes" / f"{ex.scene.id}.json")
            rec = {"scene_id": ex.scene.id, "utterance": ex.utterance, "target_id": ex.target_id,
                   "clues": ex.clues.to_doc()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if config is not None:
        with open(out / "gen.json", "w", encoding="utf-8") as fh:
            json.dump(config.to_doc(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def load_dataset(path) -> list[Example]:
    root = Path(path)
    scenes: dict[str, Scene] = {}
    out = []
    with open(root / "refs.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            sid = rec["scene_id"]
            if sid not in scenes:
                scenes[sid] = load_scene_file(root / "scenes" / f"{sid}.json")
            out.append(Example(scenes[sid], rec["utterance"], rec["target_id"], ParsedClues.from_doc(rec.get("clues") or {})))
    if not out:
        raise ValueError(f"dataset {root} is empty")
    return out

