"""End-to-end grounding accuracy and the two ablation sweeps."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

from scipy.stats import spearmanr

from .errors import GroundingError, ModeFamilyMismatch
from .graph import build_scene_graph
from .harness import Example
from .parsing import ATTRIBUTE, RELATION_ONLY, clues_to_instructions, parse_template
from .reasoning import WeightBundle, ground, reference_loss
from .relations import RelationConfig
from .scene import apply_ground_truth
from .vocabulary import ConceptVocabulary

AUTO = "auto"


@dataclass
class EvalReport:
    n_examples: int
    n_correct: int
    per_relation: dict[str, dict]
    mean_loss: float | None
    n_infinite_loss: int
    n_parse_errors: int
    records: list[dict]
    max_norm_error: float = 0.0
    min_attention: float = 1.0
    round_counts: list[int] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_examples if self.n_examples else 0.0

    def to_doc(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "per_relation": self.per_relation,
            "mean_reference_loss": self.mean_loss,
            "n_infinite_loss": self.n_infinite_loss,
            "n_parse_errors": self.n_parse_errors,
            "records": self.records,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=1, sort_keys=True) + "\n"


def _program(clues, vocab, mode):
    if mode == AUTO:
        mode = ATTRIBUTE if clues.has_attributes() else RELATION_ONLY
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModeFamilyMismatch)
        return clues_to_instructions(clues, vocab, mode)


def evaluate(examples: list[Example], vocab: ConceptVocabulary, weights: WeightBundle | None = None,
             relation_config: RelationConfig | None = None, mode: str = AUTO, parser=None) -> EvalReport:
    """Parse, ground and score every example in id order.

    ``parser(utterance, vocab) -> ParsedClues`` defaults to the template
    grammar. A parse failure counts as incorrect and is flagged.
    """
    if not examples:
        raise ValueError("dataset is empty")
    parser = parser or parse_template
    relation_config = relation_config or RelationConfig()
    weights = weights or WeightBundle.symbolic(vocab.dim, vocab.n_attributes)
    graphs = {}
    records = []
    max_err, min_att, rounds = 0.0, 1.0, set()
    for ex in sorted(examples, key=lambda e: (e.id, e.utterance)):
        rec = {"id": ex.id, "scene_id": ex.scene.id, "utterance": ex.utterance, "gt": ex.target_id,
               "relation": ex.clues.relation or "none", "predicted": None, "correct": False,
               "loss": None, "parse_error": None}
        try:
            clues = parser(ex.utterance, vocab)
            program = _program(clues, vocab, mode)
        except GroundingError as exc:
            rec["parse_error"] = f"{type(exc).__name__}: {exc}"
            records.append(rec)
            continue
        key = ex.scene.id
        if key not in graphs or graphs[key][0] is not ex.scene:
            graphs[key] = (ex.scene, build_scene_graph(ex.scene, vocab, relation_config))
        selected, trace = ground(graphs[key][1], program, weights)
        for r in trace.rounds:
            max_err = max(max_err, abs(math.fsum(r.attention_out) - 1.0))
            min_att = min(min_att, float(r.attention_out.min()))
        rounds.add(len(trace.rounds))
        loss = reference_loss(trace.final, ex.target_id)
        rec.update(predicted=selected, correct=selected == ex.target_id,
                   loss=loss if math.isfinite(loss) else None)
        records.append(rec)

    per_rel: dict[str, dict] = {}
    for rec in records:
        d = per_rel.setdefault(rec["relation"], {"n": 0, "correct": 0})
        d["n"] += 1
        d["correct"] += int(rec["correct"])
    for d in per_rel.values():
        d["accuracy"] = d["correct"] / d["n"]
    losses = [r["loss"] for r in records if r["loss"] is not None]
    n_inf = sum(1 for r in records if r["predicted"] is not None and r["loss"] is None)
    return EvalReport(
        n_examples=len(records),
        n_correct=sum(r["correct"] for r in records),
        per_relation=dict(sorted(per_rel.items())),
        mean_loss=math.fsum(losses) / len(losses) if losses else None,
        n_infinite_loss=n_inf,
        n_parse_errors=sum(1 for r in records if r["parse_error"]),
        records=records,
        max_norm_error=max_err,
        min_attention=min_att,
        round_counts=sorted(rounds),
    )


def with_proportion(examples: list[Example], proportion: float, seed: int) -> list[Example]:
    """Examples whose scenes carry one-hot categories, ``proportion`` of them correct.

    Scene ``i`` (in id order) is perturbed with seed ``seed + i``.
    """
    order = sorted({ex.scene.id for ex in examples})
    cache = {}
    out = []
    for ex in examples:
        sid = ex.scene.id
        if sid not in cache:
            cache[sid] = apply_ground_truth(ex.scene, proportion, seed + order.index(sid))
        out.append(replace(ex, scene=cache[sid]))
    return out


def proportion_points(points: int) -> list[float]:
    if points < 2:
        raise ValueError("need at least two points")
    return [round(i / (points - 1), 10) for i in range(points)]


def sweep_gt_proportion(examples, vocab, proportions, seed: int = 0, **kwargs):
    """``[(proportion, accuracy), ...]`` with one evaluation per proportion."""
    return [(p, evaluate(with_proportion(examples, p, seed), vocab, **kwargs).accuracy) for p in proportions]


def curve_trend(curve) -> tuple[float, float]:
    """Spearman rank correlation of accuracy against proportion, and the end-to-end gap."""
    xs = [p for p, _ in curve]
    ys = [a for _, a in curve]
    rho = float(spearmanr(xs, ys).statistic) if len(set(ys)) > 1 else float("nan")
    return rho, ys[-1] - ys[0]


def sweep_top_k(examples, vocab, ks, relation_config: RelationConfig | None = None, **kwargs):
    """``[(K, report), ...]``; ``K=None`` evaluates without truncation."""
    base = relation_config or RelationConfig()
    out = []
    for k in ks:
        out.append((k, evaluate(examples, vocab, relation_config=replace(base, top_k=k), **kwargs)))
    return out


def records_match(a: EvalReport, b: EvalReport) -> bool:
    """Same prediction and correctness for every example."""
    key = lambda r: (r["id"], r["predicted"], r["correct"], r["parse_error"])  # noqa: E731
    return [key(r) for r in a.records] == [key(r) for r in b.records]

