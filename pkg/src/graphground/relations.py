"""Pairwise spatial relations between object proposals.

Edge convention: a relation value ``R[token](z, x)`` on the directed pair
anchor ``z`` -> target ``x`` states "x <token> z", e.g. ``on(couch, bag) = 1``
for a bag resting on a couch.  Deterministic relations come from box geometry;
``farthest``/``closest`` and the size superlatives are category-conditional
probabilities computed from the category distributions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TooLarge, UnknownCategoryToken
from .scene import Scene

DEFAULT_RELATIONS = (
    "above", "below", "on", "supporting", "near",
    "in front of", "behind", "next to", "farthest", "closest",
)

# surface token -> geometric rule
DEFAULT_KINDS = {
    "above": "above",
    "below": "below",
    "on": "supported-by",
    "supported-by": "supported-by",
    "supporting": "supporting",
    "near": "near",
    "in front of": "front",
    "front": "front",
    "behind": "behind",
    "next to": "beside",
    "beside": "beside",
    "farthest": "farthest",
    "closest": "closest",
}

GEOMETRIC_KINDS = ("above", "below", "supported-by", "supporting", "near", "front", "behind", "beside")
DISTANCE_SUPERLATIVES = ("farthest", "closest")
SIZE_SUPERLATIVES = ("biggest", "smallest", "tallest", "shortest", "longest", "widest", "narrowest")


@dataclass(frozen=True)
class RelationConfig:
    relation_set: tuple[str, ...] = DEFAULT_RELATIONS
    kinds: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_KINDS))
    near_factor: float = 1.5
    support_gap: float = 0.05
    overlap_min: float = 0.2
    top_k: int | None = 2
    reference_diagonal: float = 1.0

    def __post_init__(self):
        if not self.relation_set:
            raise ValueError("relation_set must not be empty")
        if self.near_factor <= 0:
            raise ValueError("near_factor must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        for tok in self.relation_set:
            if tok not in self.kinds:
                raise ValueError(f"no geometric rule for relation {tok!r}")

    def kind(self, token: str) -> str:
        return self.kinds[token]


# ---------------------------------------------------------------- geometry

def _check_ids(scene: Scene, *ids):
    return [scene.index(i) for i in ids]


def scene_scale(scene: Scene, config: RelationConfig) -> float:
    return float(np.median([p.box.diagonal for p in scene.proposals])) / config.reference_diagonal


def footprint_overlap(a, b) -> float:
    """Footprint intersection area over the smaller footprint area."""
    inter = a.footprint.intersection(b.footprint).area
    return inter / min(a.footprint.area, b.footprint.area)


def center_distance(a, b) -> float:
    return math.dist(a.center, b.center)


def _frame_offsets(anchor, target):
    """(longitudinal, lateral) offset of target's centre in the anchor's yaw frame."""
    dx = target.center[0] - anchor.center[0]
    dy = target.center[1] - anchor.center[1]
    c, s = math.cos(anchor.yaw), math.sin(anchor.yaw)
    return dx * c + dy * s, -dx * s + dy * c


def geometric_kinds(za, xa, config: RelationConfig, scale: float) -> dict[str, int]:
    """Evaluate every deterministic rule for anchor box ``za`` and target box ``xa``."""
    tol = config.support_gap * scale
    overlap = footprint_overlap(za, xa)
    stacked = overlap >= config.overlap_min
    gap_up = xa.zmin - za.zmax
    gap_down = za.zmin - xa.zmax
    above = stacked and gap_up >= -tol and xa.center[2] > za.center[2]
    below = stacked and gap_down >= -tol and xa.center[2] < za.center[2]
    near = center_distance(za, xa) <= config.near_factor * (za.diagonal + xa.diagonal) / 2
    lon, lat = _frame_offsets(za, xa)
    side_by_side = near and not stacked
    return {
        "above": int(above),
        "below": int(below),
        "supported-by": int(above and gap_up <= tol),
        "supporting": int(below and gap_down <= tol),
        "near": int(near),
        "front": int(side_by_side and lon > 0 and abs(lat) < abs(lon)),
        "behind": int(side_by_side and lon < 0 and abs(lat) < abs(lon)),
        "beside": int(side_by_side and abs(lat) >= abs(lon)),
    }


def geometric_relations(scene: Scene, config: RelationConfig, z: str, x: str, scale=None) -> dict[str, int]:
    """Deterministic relations of the pair anchor ``z`` -> target ``x`` keyed by token."""
    iz, ix = _check_ids(scene, z, x)
    if iz == ix:
        raise ValueError("anchor and target must differ")
    if scale is None:
        scale = scene_scale(scene, config)
    kinds = geometric_kinds(scene.proposals[iz].box, scene.proposals[ix].box, config, scale)
    return {t: kinds[config.kind(t)] for t in config.relation_set if config.kind(t) in kinds}


def indicator_closer(scene: Scene, z: str, x: str, y: str, kind: str) -> int:
    """1 iff x is strictly farther (``farther``) / closer (``closer``) to z than y is."""
    iz, ix, iy = _check_ids(scene, z, x, y)
    box = [p.box for p in scene.proposals]
    dx = center_distance(box[iz], box[ix])
    dy = center_distance(box[iz], box[iy])
    if kind in ("farther", "farthest"):
        return int(dx > dy)
    if kind in ("closer", "closest"):
        return int(dx < dy)
    raise ValueError(f"unknown comparison {kind!r}")


# ---------------------------------------------------------------- category-conditional superlatives

def category_matrix(scene: Scene, categories=None):
    """(category tokens, N x C probability matrix)."""
    cats = list(categories) if categories is not None else scene.category_tokens()
    col = {c: j for j, c in enumerate(cats)}
    P = np.zeros((len(scene), len(cats)))
    for i, p in enumerate(scene.proposals):
        for tok, v in p.category_dist.items():
            if tok not in col:
                raise UnknownCategoryToken(tok)
            P[i, col[tok]] = v
    return cats, P


def truncate_top_k(P: np.ndarray, k: int | None) -> np.ndarray:
    """Keep each row's ``k`` largest entries (ties to the lower index); the
    remaining mass is dropped, not renormalized."""
    if k is None or k >= P.shape[1]:
        return P
    order = np.argsort(-P, axis=1, kind="stable")[:, :k]
    out = np.zeros_like(P)
    rows = np.arange(P.shape[0])[:, None]
    out[rows, order] = P[rows, order]
    return out


def superlative_terms(P: np.ndarray, x: int, competitors, wins: np.ndarray) -> np.ndarray:
    """Per-category probability that x is category k and beats every other
    category-k object: ``P_x(k) * prod_y [wins_y P_y(k) + 1 - P_y(k)]``."""
    terms = P[x].copy()
    for y in competitors:
        terms *= wins[y] * P[y] + (1.0 - P[y])
    return terms


def _distance_wins(scene: Scene, iz: int, ix: int, kind: str) -> np.ndarray:
    boxes = [p.box for p in scene.proposals]
    d = np.array([center_distance(boxes[iz], b) for b in boxes])
    if kind == "farthest":
        return (d[ix] > d).astype(float)
    if kind == "closest":
        return (d[ix] < d).astype(float)
    raise ValueError(f"unknown distance superlative {kind!r}")


def _size_values(scene: Scene, kind: str) -> np.ndarray:
    attr = {
        "biggest": "volume", "smallest": "volume",
        "tallest": "height", "shortest": "height",
        "longest": "length",
        "widest": "width", "narrowest": "width",
    }[kind]
    return np.array([getattr(p.box, attr) for p in scene.proposals])


def _size_wins(scene: Scene, ix: int, kind: str) -> np.ndarray:
    v = _size_values(scene, kind)
    if kind in ("smallest", "shortest", "narrowest"):
        return (v[ix] < v).astype(float)
    return (v[ix] > v).astype(float)


def superlative_probability(scene: Scene, z: str, x: str, kind: str, K: int | None = None,
                            categories=None, per_category: bool = False):
    """Probability that ``x`` is the farthest/closest object of its category
    from anchor ``z``, summed over x's top-K categories.

    With ``per_category`` the per-category terms are returned as a dict.
    """
    iz, ix = _check_ids(scene, z, x)
    if iz == ix:
        raise ValueError("anchor and target must differ")
    cats, P = category_matrix(scene, categories)
    P = truncate_top_k(P, K)
    wins = _distance_wins(scene, iz, ix, kind)
    competitors = [i for i in range(len(scene)) if i not in (iz, ix)]
    terms = superlative_terms(P, ix, competitors, wins)
    if per_category:
        return {c: float(t) for c, t in zip(cats, terms)}
    return float(terms.sum())


def size_superlative_probability(scene: Scene, x: str, kind: str, K: int | None = None, categories=None,
                                 per_category: bool = False):
    """Probability that ``x`` is the biggest/smallest/tallest/... object of its category."""
    (ix,) = _check_ids(scene, x)
    cats, P = category_matrix(scene, categories)
    P = truncate_top_k(P, K)
    wins = _size_wins(scene, ix, kind)
    competitors = [i for i in range(len(scene)) if i != ix]
    terms = superlative_terms(P, ix, competitors, wins)
    if per_category:
        return {c: float(t) for c, t in zip(cats, terms)}
    return float(terms.sum())


MAX_ENUMERATION_N = 16


def _power_set_sum(P: np.ndarray, x: int, competitors: list[int], wins: np.ndarray) -> float:
    # sum over Y subset of competitors of prod_{y in Y} wins_y P_y(k) * prod_{y not in Y} (1 - P_y(k))
    m = len(competitors)
    subsets = np.array(list(itertools.product((False, True), repeat=m)), dtype=bool).reshape(2**m, m)
    Pc = P[competitors]                                   # m x C
    inside = (wins[competitors][:, None] * Pc)[None]      # 1 x m x C
    outside = (1.0 - Pc)[None]
    factors = np.where(subsets[:, :, None], inside, outside)
    per_subset = factors.prod(axis=1)                     # 2^m x C
    return float((P[x] * per_subset.sum(axis=0)).sum())


def superlative_probability_enumerated(scene: Scene, z: str, x: str, kind: str, K: int | None = None,
                                       categories=None) -> float:
    """Literal power-set expansion of the farthest/closest probability (oracle)."""
    if len(scene) > MAX_ENUMERATION_N:
        raise TooLarge(f"N={len(scene)} exceeds {MAX_ENUMERATION_N}")
    iz, ix = _check_ids(scene, z, x)
    _, P = category_matrix(scene, categories)
    P = truncate_top_k(P, K)
    wins = _distance_wins(scene, iz, ix, kind)
    competitors = [i for i in range(len(scene)) if i not in (iz, ix)]
    return _power_set_sum(P, ix, competitors, wins)


def size_superlative_probability_enumerated(scene: Scene, x: str, kind: str, K: int | None = None,
                                            categories=None) -> float:
    if len(scene) > MAX_ENUMERATION_N:
        raise TooLarge(f"N={len(scene)} exceeds {MAX_ENUMERATION_N}")
    (ix,) = _check_ids(scene, x)
    _, P = category_matrix(scene, categories)
    P = truncate_top_k(P, K)
    wins = _size_wins(scene, ix, kind)
    competitors = [i for i in range(len(scene)) if i != ix]
    return _power_set_sum(P, ix, competitors, wins)


def superlative_probability_montecarlo(scene: Scene, z: str, x: str, kind: str, samples: int, seed: int,
                                       categories=None):
    """Sampling estimate of the untruncated farthest/closest probability.

    Returns ``(estimate, binomial standard error)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    iz, ix = _check_ids(scene, z, x)
    _, P = category_matrix(scene, categories)
    wins = _distance_wins(scene, iz, ix, kind)
    rng = np.random.default_rng(seed)
    u = rng.random((samples, len(scene)))
    C = P.shape[1]
    draws = np.empty((samples, len(scene)), dtype=np.int64)
    for i in range(len(scene)):
        draws[:, i] = np.minimum(np.searchsorted(np.cumsum(P[i]), u[:, i], side="right"), C - 1)
    ok = np.ones(samples, dtype=bool)
    for y in range(len(scene)):
        if y in (iz, ix) or wins[y]:
            continue
        ok &= draws[:, y] != draws[:, ix]
    est = float(ok.mean())
    return est, math.sqrt(est * (1.0 - est) / samples)


# ---------------------------------------------------------------- full matrix

@dataclass(frozen=True)
class RelationMatrix:
    """``values[j, z, x]`` = probability of relation ``tokens[j]`` on edge z -> x."""

    tokens: tuple[str, ...]
    ids: tuple[str, ...]
    values: np.ndarray

    def get(self, token: str, z: str, x: str) -> float:
        return float(self.values[self.tokens.index(token), self.ids.index(z), self.ids.index(x)])


def build_relation_matrix(scene: Scene, config: RelationConfig, categories=None) -> RelationMatrix:
    n = len(scene)
    T = len(config.relation_set)
    values = np.zeros((T, n, n))
    boxes = [p.box for p in scene.proposals]
    scale = scene_scale(scene, config)
    _, P = category_matrix(scene, categories)
    Pk = truncate_top_k(P, config.top_k)
    kinds = [config.kind(t) for t in config.relation_set]
    sup = [j for j, k in enumerate(kinds) if k in DISTANCE_SUPERLATIVES]
    geo = [j for j, k in enumerate(kinds) if k in GEOMETRIC_KINDS]
    for iz in range(n):
        for ix in range(n):
            if iz == ix:
                continue
            if geo:
                g = geometric_kinds(boxes[iz], boxes[ix], config, scale)
                for j in geo:
                    values[j, iz, ix] = g[kinds[j]]
            competitors = [i for i in range(n) if i not in (iz, ix)]
            for j in sup:
                wins = _distance_wins(scene, iz, ix, kinds[j])
                values[j, iz, ix] = superlative_terms(Pk, ix, competitors, wins).sum()
    values.setflags(write=False)
    return RelationMatrix(tuple(config.relation_set), tuple(scene.ids), values)

