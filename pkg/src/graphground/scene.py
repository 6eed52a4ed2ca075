"""Scene data model: object proposals with oriented boxes, colour summaries
and category distributions, plus JSON ingestion."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import jsonschema
import numpy as np
from shapely.geometry import Polygon

from .errors import (
    DistributionInvalid,
    DuplicateProposalId,
    MissingGroundTruth,
    SchemaViolation,
    UnknownId,
)

DIST_TOL = 1e-6

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_dist = {"type": "object", "additionalProperties": {"type": "number"}, "minProperties": 1}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["id", "objects"],
    "properties": {
        "id": {"type": "string"},
        "objects": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "center", "extents", "yaw", "mean_rgb", "category_dist"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "center": _vec3,
                    "extents": {**_vec3, "items": {"type": "number", "exclusiveMinimum": 0}},
                    "yaw": {"type": "number", "minimum": -math.pi, "maximum": math.pi},
                    "mean_rgb": {**_vec3, "items": {"type": "number", "minimum": 0, "maximum": 1}},
                    "category_dist": _dist,
                    "shape_dist": _dist,
                    "attrs": {"type": "object", "additionalProperties": {"type": "string"}},
                    "gt_category": {"type": "string"},
                },
            },
        },
    },
}

_validator = jsonschema.Draft7Validator(SCENE_SCHEMA)


@dataclass(frozen=True)
class BoundingBox:
    center: tuple[float, float, float]
    extents: tuple[float, float, float]
    yaw: float = 0.0

    @property
    def volume(self) -> float:
        dx, dy, dz = self.extents
        return dx * dy * dz

    @property
    def diagonal(self) -> float:
        return math.sqrt(sum(e * e for e in self.extents))

    @property
    def zmin(self) -> float:
        return self.center[2] - self.extents[2] / 2

    @property
    def zmax(self) -> float:
        return self.center[2] + self.extents[2] / 2

    @property
    def height(self) -> float:
        return self.extents[2]

    @property
    def length(self) -> float:
        return max(self.extents[0], self.extents[1])

    @property
    def width(self) -> float:
        return min(self.extents[0], self.extents[1])

    def footprint_corners(self) -> np.ndarray:
        cx, cy, _ = self.center
        hx, hy = self.extents[0] / 2, self.extents[1] / 2
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([cx, cy])

    @cached_property
    def footprint(self) -> Polygon:
        return Polygon(self.footprint_corners())


@dataclass(frozen=True)
class ObjectProposal:
    id: str
    box: BoundingBox
    mean_rgb: tuple[float, float, float]
    category_dist: dict[str, float]
    shape_dist: dict[str, float] | None = None
    extra_attrs: dict[str, str] = field(default_factory=dict)

    def top_category(self) -> str:
        # ties -> first listed
        return max(self.category_dist, key=lambda k: self.category_dist[k])


@dataclass(frozen=True)
class Scene:
    id: str
    proposals: tuple[ObjectProposal, ...]
    ground_truth: dict[str, str] | None = None
    up_axis: str = "+z"

    def __post_init__(self):
        object.__setattr__(self, "_index", {p.id: i for i, p in enumerate(self.proposals)})

    def __len__(self):
        return len(self.proposals)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.proposals]

    def index(self, object_id: str) -> int:
        try:
            return self._index[object_id]
        except KeyError:
            raise UnknownId(object_id) from None

    def get(self, object_id: str) -> ObjectProposal:
        return self.proposals[self.index(object_id)]

    def category_tokens(self) -> list[str]:
        """Sorted union of every token appearing in a category distribution."""
        toks = set()
        for p in self.proposals:
            toks.update(p.category_dist)
        if self.ground_truth:
            toks.update(self.ground_truth.values())
        return sorted(toks)


def _check_dist(dist: dict, object_id: str, what: str) -> dict[str, float]:
    vals = {k: float(v) for k, v in dist.items()}
    if any(v < 0 or not math.isfinite(v) for v in vals.values()):
        raise DistributionInvalid(object_id, f"{what} has negative or non-finite entries")
    total = math.fsum(vals.values())
    if abs(total - 1.0) > DIST_TOL:
        raise DistributionInvalid(object_id, f"{what} sums to {total}")
    if total != 1.0:
        vals = {k: v / total for k, v in vals.items()}
    return vals


def load_scene(document: dict) -> Scene:
    """Validate a scene document and build an immutable :class:`Scene`."""
    errors = sorted(_validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise SchemaViolation(path, err.message)

    proposals, seen, gt = [], set(), {}
    for obj in document["objects"]:
        oid = obj["id"]
        if oid in seen:
            raise DuplicateProposalId(oid)
        seen.add(oid)
        box = BoundingBox(
            tuple(float(x) for x in obj["center"]),
            tuple(float(x) for x in obj["extents"]),
            float(obj["yaw"]),
        )
        shape = obj.get("shape_dist")
        proposals.append(
            ObjectProposal(
                id=oid,
                box=box,
                mean_rgb=tuple(float(x) for x in obj["mean_rgb"]),
                category_dist=_check_dist(obj["category_dist"], oid, "category_dist"),
                shape_dist=_check_dist(shape, oid, "shape_dist") if shape is not None else None,
                extra_attrs=dict(obj.get("attrs") or {}),
            )
        )
        if "gt_category" in obj:
            gt[oid] = obj["gt_category"]
    return Scene(id=document["id"], proposals=tuple(proposals), ground_truth=gt or None)


def scene_to_doc(scene: Scene) -> dict:
    objects = []
    gt = scene.ground_truth or {}
    for p in scene.proposals:
        obj = {
            "id": p.id,
            "center": list(p.box.center),
            "extents": list(p.box.extents),
            "yaw": p.box.yaw,
            "mean_rgb": list(p.mean_rgb),
            "category_dist": dict(p.category_dist),
        }
        if p.shape_dist is not None:
            obj["shape_dist"] = dict(p.shape_dist)
        if p.extra_attrs:
            obj["attrs"] = dict(p.extra_attrs)
        if p.id in gt:
            obj["gt_category"] = gt[p.id]
        objects.append(obj)
    return {"id": scene.id, "objects": objects}


def load_scene_file(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return load_scene(json.load(fh))


def save_scene(scene: Scene, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_doc(scene), fh, indent=1)
        fh.write("\n")


def with_category_dists(scene: Scene, dists: list[dict[str, float]]) -> Scene:
    props = tuple(replace(p, category_dist=d) for p, d in zip(scene.proposals, dists))
    return replace(scene, proposals=props)


def gt_correct_count(proportion: float, n: int) -> int:
    """Number of proposals that keep their true category (round half up)."""
    return int(math.floor(proportion * n + 0.5))


def apply_ground_truth(scene: Scene, proportion: float, seed: int, categories=None) -> Scene:
    """Replace every category distribution with a one-hot.

    A seeded random subset of ``round(proportion * N)`` proposals gets its true
    category; every other proposal gets a uniformly drawn wrong category.
    The permutation and the wrong draws come from one stream, so for a fixed
    seed the correct subsets are nested as ``proportion`` grows.
    """
    if not 0.0 <= proportion <= 1.0:
        raise ValueError("proportion must lie in [0, 1]")
    gt = scene.ground_truth or {}
    missing = [p.id for p in scene.proposals if p.id not in gt]
    if missing:
        raise MissingGroundTruth(f"no ground truth for {missing}")
    pool = sorted(categories) if categories is not None else scene.category_tokens()
    n = len(scene)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    keep = set(perm[: gt_correct_count(proportion, n)].tolist())
    dists = []
    for i, p in enumerate(scene.proposals):
        wrong = [c for c in pool if c != gt[p.id]]
        draw = wrong[int(rng.integers(len(wrong)))] if wrong else gt[p.id]
        tok = gt[p.id] if i in keep else draw
        dists.append({tok: 1.0})
    return with_category_dists(scene, dists)
