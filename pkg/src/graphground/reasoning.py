"""Recurrent attention transfer over a scene graph.

Property rounds score each node's family-j embedding against the instruction
and merge the result into the running attention; the relation round moves
attention from source to target nodes along edges in proportion to how well
the edge embedding matches the instruction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import DimensionMismatch, EmptyScene, FamilyOutOfRange, UnknownId
from .graph import SceneGraph
from .parsing import (
    ANCHOR_ROLE,
    RELATION_ROLE,
    TARGET_ROLE,
    InstructionProgram,
    ParsedClues,
    program_length,
)
from .vocabulary import CATEGORY, ConceptVocabulary

DEFAULT_BETA = 50.0
ALPHA_TARGET = 0.2
ALPHA_RELATION = 0.2
ALPHA_ANCHOR = 0.2


@dataclass(frozen=True)
class WeightBundle:
    W_s: np.ndarray              # d
    W_prop: np.ndarray           # (L+1) x d x d
    W_r: np.ndarray              # d
    W_e: np.ndarray              # d x d
    sigma: str = "identity"
    beta_merge: float = DEFAULT_BETA
    beta_transfer: float = DEFAULT_BETA

    def __post_init__(self):
        if self.sigma not in ("identity", "relu"):
            raise ValueError(f"unknown nonlinearity {self.sigma!r}")
        if self.beta_merge <= 0 or self.beta_transfer <= 0:
            raise ValueError("temperatures must be positive")
        d = self.W_s.shape[0]
        if self.W_r.shape != (d,) or self.W_e.shape != (d, d) or self.W_prop.shape[1:] != (d, d):
            raise DimensionMismatch("weight shapes disagree")
        for m in (self.W_s, self.W_prop, self.W_r, self.W_e):
            if not np.all(np.isfinite(m)):
                raise ValueError("weights must be finite")

    @property
    def dim(self) -> int:
        return self.W_s.shape[0]

    @classmethod
    def symbolic(cls, dim: int, n_attributes: int, beta: float = DEFAULT_BETA) -> "WeightBundle":
        """All-ones readouts, identity projections, identity nonlinearity."""
        eye = np.eye(dim)
        return cls(np.ones(dim), np.repeat(eye[None], n_attributes + 1, axis=0), np.ones(dim), eye,
                   "identity", beta, beta)

    def activate(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0) if self.sigma == "relu" else x

    def to_doc(self) -> dict:
        return {
            "dim": self.dim,
            "W_s": self.W_s.tolist(),
            "W_prop": self.W_prop.tolist(),
            "W_r": self.W_r.tolist(),
            "W_e": self.W_e.tolist(),
            "sigma": self.sigma,
            "beta_merge": self.beta_merge,
            "beta_transfer": self.beta_transfer,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "WeightBundle":
        w = cls(
            np.asarray(doc["W_s"], dtype=float),
            np.asarray(doc["W_prop"], dtype=float),
            np.asarray(doc["W_r"], dtype=float),
            np.asarray(doc["W_e"], dtype=float),
            doc.get("sigma", "identity"),
            float(doc.get("beta_merge", DEFAULT_BETA)),
            float(doc.get("beta_transfer", DEFAULT_BETA)),
        )
        if "dim" in doc and doc["dim"] != w.dim:
            raise DimensionMismatch(f"declared dim {doc['dim']} but matrices are {w.dim}")
        return w


def load_weights(path) -> WeightBundle:
    with open(path, encoding="utf-8") as fh:
        return WeightBundle.from_doc(json.load(fh))


def save_weights(weights: WeightBundle, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(weights.to_doc(), fh)


@dataclass(frozen=True)
class AttentionDistribution:
    ids: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, object_id: str) -> float:
        try:
            return float(self.values[self.ids.index(object_id)])
        except ValueError:
            raise UnknownId(object_id) from None

    def argmax(self) -> str:
        """Highest-mass id; exact ties go to the smallest id."""
        best = self.values.max()
        return min(i for i, v in zip(self.ids, self.values) if v == best)


@dataclass
class RoundRecord:
    role: str
    family: int | None
    clue: str | None
    attention_in: np.ndarray
    attention_out: np.ndarray
    scores: dict


@dataclass
class ReasoningTrace:
    ids: tuple[str, ...]
    rounds: list[RoundRecord] = field(default_factory=list)
    selected: str | None = None
    score: float | None = None

    @property
    def final(self) -> AttentionDistribution:
        return AttentionDistribution(self.ids, self.rounds[-1].attention_out)

    def to_doc(self) -> dict:
        rounds = []
        for r in self.rounds:
            d = {
                "role": r.role,
                "attention_in": [float(v) for v in r.attention_in],
                "attention_out": [float(v) for v in r.attention_out],
                "scores": r.scores,
            }
            if r.family is not None:
                d["family"] = r.family
            if r.clue is not None:
                d["clue"] = r.clue
            rounds.append(d)
        return {"ids": list(self.ids), "rounds": rounds, "selected": self.selected, "score": self.score}


def init_attention(n: int) -> np.ndarray:
    if n < 1:
        raise EmptyScene("cannot attend over an empty scene")
    return np.full(n, 1.0 / n)


def _check_vector(vec, weights: WeightBundle) -> np.ndarray:
    r = np.asarray(vec, dtype=float)
    if r.shape != (weights.dim,):
        raise DimensionMismatch(f"instruction shape {r.shape}, weights dim {weights.dim}")
    return r


def property_round(graph: SceneGraph, a_prev: np.ndarray, instr, weights: WeightBundle, family: int):
    """One property round: returns ``(merged attention, per-node b)``."""
    if not 0 <= family <= graph.n_attributes or family >= weights.W_prop.shape[0]:
        raise FamilyOutOfRange(f"family {family} outside 0..{graph.n_attributes}")
    r = _check_vector(getattr(instr, "vector", instr), weights)
    states = graph.node_tensor[:, family, :]                    # N x d
    if states.shape[1] != weights.dim:
        raise DimensionMismatch("graph and weights disagree on d")
    inner = weights.activate(r * (states @ weights.W_prop[family].T))
    b = softmax(weights.beta_merge * (inner @ weights.W_s))
    a = softmax(weights.beta_merge * (b + a_prev))
    return a, b


def relation_round(graph: SceneGraph, a_prev: np.ndarray, instr, weights: WeightBundle):
    """Relation round: returns ``(attention, per-edge transferred mass)``."""
    r = _check_vector(getattr(instr, "vector", instr), weights)
    n = graph.n_nodes
    if len(graph.edge_src) == 0:
        return softmax(np.zeros(n)), np.zeros(0)
    if graph.edge_emb.shape[1] != weights.dim:
        raise DimensionMismatch("graph and weights disagree on d")
    transfer = weights.activate(r * (graph.edge_emb @ weights.W_e.T)) @ weights.W_r   # E
    mass = a_prev[graph.edge_src] * transfer
    logits = np.bincount(graph.edge_dst, weights=mass, minlength=n)
    return softmax(weights.beta_transfer * logits), mass


def ground(graph: SceneGraph, program: InstructionProgram, weights: WeightBundle | None = None):
    """Run every instruction round and pick the most attended node.

    Returns ``(selected id, ReasoningTrace)``.
    """
    if weights is None:
        weights = WeightBundle.symbolic(graph.vocab.dim, graph.n_attributes)
    expected = program_length(program.mode, graph.n_attributes)
    if len(program) != expected:
        raise FamilyOutOfRange(f"{program.mode} program has {len(program)} rounds, graph needs {expected}")
    a = init_attention(graph.n_nodes)
    trace = ReasoningTrace(graph.ids)
    for ins in program.instructions:
        if ins.role == RELATION_ROLE:
            out, mass = relation_round(graph, a, ins, weights)
            scores = {
                f"{graph.ids[s]}->{graph.ids[t]}": float(m)
                for s, t, m in zip(graph.edge_src, graph.edge_dst, mass) if m != 0.0
            }
        elif ins.role in (ANCHOR_ROLE, TARGET_ROLE):
            out, b = property_round(graph, a, ins, weights, ins.family)
            scores = {i: float(v) for i, v in zip(graph.ids, b)}
        else:
            raise ValueError(f"unknown instruction role {ins.role!r}")
        trace.rounds.append(RoundRecord(ins.role, ins.family, ins.clue, a, out, scores))
        a = out
    final = trace.final
    trace.selected = final.argmax()
    trace.score = final[trace.selected]
    return trace.selected, trace


# ---------------------------------------------------------------- evaluation losses

def reference_loss(final_attention: AttentionDistribution, gt_id: str) -> float:
    """Negative log attention on the true object; ``inf`` when it is exactly zero."""
    p = final_attention[gt_id]
    return math.inf if p <= 0.0 else 0.0 - math.log(p)


def concept_cross_entropy(vector, vocab: ConceptVocabulary, family: str, gt_token: str,
                          beta: float = DEFAULT_BETA) -> float:
    """Cross-entropy of softmax(beta * similarity to family concepts) against ``gt_token``."""
    toks = vocab.family_tokens(family)
    logits = beta * (vocab.family_matrix(family) @ np.asarray(vector, dtype=float))
    return float(-log_softmax(logits)[toks.index(gt_token)])


def _instruction(program: InstructionProgram, role: str, family: int | None):
    for ins in program.instructions:
        if ins.role == role and ins.family == family:
            return ins
    return None


def combined_loss(final_attention: AttentionDistribution, gt_id: str, program: InstructionProgram,
                  gt_clues: ParsedClues, vocab: ConceptVocabulary, beta: float = DEFAULT_BETA,
                  alphas=(ALPHA_TARGET, ALPHA_ANCHOR, ALPHA_RELATION)):
    """Grounding loss plus weighted target/anchor/relation parsing terms.

    Returns ``(total, breakdown)``; missing clues skip their term and are
    listed under ``breakdown["skipped"]``.
    """
    a_t, a_a, a_r = alphas
    terms = {"ref": reference_loss(final_attention, gt_id)}
    skipped = []
    parts = [
        ("target", TARGET_ROLE, 0, CATEGORY, gt_clues.target.get(CATEGORY), a_t),
        ("anchor", ANCHOR_ROLE, 0, CATEGORY, gt_clues.anchor.get(CATEGORY), a_a),
        ("relation", RELATION_ROLE, None, "relation", gt_clues.relation, a_r),
    ]
    total = terms["ref"]
    weighted = {"ref": terms["ref"]}
    for name, role, fam, vocab_family, gt_tok, alpha in parts:
        ins = _instruction(program, role, fam)
        if gt_tok is None or ins is None:
            skipped.append(name)
            continue
        terms[name] = concept_cross_entropy(ins.vector, vocab, vocab_family, gt_tok, beta)
        weighted[name] = alpha * terms[name]
        total += weighted[name]
    return total, {"terms": terms, "weighted": weighted, "alphas": dict(zip(("target", "anchor", "relation"), alphas)),
                   "skipped": skipped}
