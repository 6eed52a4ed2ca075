"""Utterance parsing: template grammar, soft word-to-concept alignment and
conversion of parsed clues into instruction vectors."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .errors import AmbiguousParse, MissingEmbedding, ModeFamilyMismatch, NoTargetFound
from .vocabulary import ATTR_PREFIX, CATEGORY, RELATION, ConceptVocabulary, nearest_concept

RELATION_ONLY = "relation"
ATTRIBUTE = "attribute"

ANCHOR_ROLE = "anchor-property"
RELATION_ROLE = "relation"
TARGET_ROLE = "target-property"

DETERMINERS = frozenset({"the", "a", "an", "this", "that", "these", "those"})
# never resolved through embeddings
FUNCTION_WORDS = frozenset({
    "find", "select", "choose", "pick", "locate", "look", "at", "is", "are", "it", "its", "which",
    "who", "one", "of", "to", "in", "on", "from", "by", "with", "and", "or", "there", "object",
    "please", "for", "me", "you", "thing", "item", "located", "placed", "standing", "sitting",
})

_PUNCT = re.compile(r"[^\w\s'-]+")


@dataclass
class ParsedClues:
    target: dict[str, str] = field(default_factory=dict)
    relation: str | None = None
    anchor: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list, compare=False)

    def to_doc(self) -> dict:
        return {"target": dict(self.target), "relation": self.relation, "anchor": dict(self.anchor)}

    @classmethod
    def from_doc(cls, doc: dict) -> "ParsedClues":
        return cls(dict(doc.get("target") or {}), doc.get("relation"), dict(doc.get("anchor") or {}))

    def has_attributes(self) -> bool:
        return any(k != CATEGORY for k in (*self.target, *self.anchor))


def tokenize(utterance: str) -> list[str]:
    return _PUNCT.sub(" ", utterance.lower()).split()


@dataclass(frozen=True)
class _Segment:
    kind: str          # class | relation | attr | other
    token: str
    family: str = ""
    words: tuple[str, ...] = ()


def _phrase_table(vocab: ConceptVocabulary):
    table = {}
    for fam, toks in vocab.families.items():
        for t in toks:
            table[tuple(t.split())] = (fam, t)
    for alias, t in vocab.aliases.items():
        if t in vocab:
            table.setdefault(tuple(alias.split()), (vocab.family_of(t), t))
    return table


def _segment_kind(fam: str) -> tuple[str, str]:
    if fam == CATEGORY:
        return "class", CATEGORY
    if fam == RELATION:
        return "relation", ""
    return "attr", fam[len(ATTR_PREFIX):]


def _fallback(vocab, word, threshold, temperature):
    """Resolve an out-of-vocabulary word through its embedding, or None."""
    vec = vocab.word_vector(word)
    if vec is None:
        return None
    aligned = align_words([word], vocab, temperature=temperature)[0]
    concept, _ = nearest_concept(vocab, aligned)
    if float(np.dot(vec, concept.embedding)) < threshold:
        return None
    return concept


def segment(utterance: str, vocab: ConceptVocabulary, fallback_threshold: float = 0.5,
            fallback_temperature: float = 10.0) -> list[_Segment]:
    """Leftmost-longest match of vocabulary tokens and aliases over the words."""
    words = tokenize(utterance)
    table = _phrase_table(vocab)
    longest = max(len(k) for k in table)
    component_words = {w for k in table if len(k) > 1 for w in k}
    out, i = [], 0
    while i < len(words):
        for n in range(min(longest, len(words) - i), 0, -1):
            key = tuple(words[i:i + n])
            if key in table:
                fam, tok = table[key]
                kind, family = _segment_kind(fam)
                out.append(_Segment(kind, tok, family, key))
                i += n
                break
        else:
            w = words[i]
            concept = None
            if w not in DETERMINERS and w not in FUNCTION_WORDS and w not in component_words:
                concept = _fallback(vocab, w, fallback_threshold, fallback_temperature)
            if concept is not None:
                kind, family = _segment_kind(concept.family)
                out.append(_Segment(kind, concept.token, family, (w,)))
            else:
                out.append(_Segment("other", w, "", (w,)))
            i += 1
    return out


def _collect(segments, side: str) -> list[dict]:
    """All property maps consistent with one side of the utterance."""
    classes = [s for s in segments if s.kind == "class"]
    props = {}
    for s in segments:
        if s.kind == "attr":
            if s.family in props and props[s.family] != s.token:
                raise AmbiguousParse([{side: {s.family: props[s.family]}}, {side: {s.family: s.token}}])
            props[s.family] = s.token
    if not classes:
        return [props]
    return [{CATEGORY: c.token, **props} for c in classes]


def parse_template(utterance: str, vocab: ConceptVocabulary, **fallback) -> ParsedClues:
    """Parse ``<det>? <attr>* <target> <relation> <det>? <attr>* <anchor>``.

    Raises :class:`NoTargetFound` when no category is named before the
    relation and :class:`AmbiguousParse` when the words support more than one
    disjoint reading.
    """
    if not utterance or not utterance.strip():
        raise NoTargetFound("empty utterance")
    segs = [s for s in segment(utterance, vocab, **fallback) if s.kind != "other"]
    rel_pos = [i for i, s in enumerate(segs) if s.kind == "relation"]

    if len(rel_pos) > 1:
        candidates = []
        for p in rel_pos:
            left = [s.token for s in segs[:p] if s.kind == "class"]
            right = [s.token for s in segs[p + 1:] if s.kind == "class"]
            candidates.append({"target": left, "relation": segs[p].token, "anchor": right})
        raise AmbiguousParse(candidates)

    if rel_pos:
        p = rel_pos[0]
        left, right, relation = segs[:p], segs[p + 1:], segs[p].token
    else:
        left, right, relation = segs, [], None

    targets = _collect(left, "target")
    if CATEGORY not in targets[0]:
        raise NoTargetFound(f"no target category in {utterance!r}")
    anchors = _collect(right, "anchor") if right else [{}]
    if len(targets) > 1 or len(anchors) > 1:
        raise AmbiguousParse([
            {"target": t, "relation": relation, "anchor": a} for t in targets for a in anchors
        ])
    return ParsedClues(targets[0], relation, anchors[0])


def align_words(utterance, vocab: ConceptVocabulary, alignment_matrix=None, temperature: float = 1.0,
                return_distributions: bool = False):
    """Soft-align each word to the concept vocabulary.

    ``P_i = softmax(temperature * w_i^T W C_hat)`` and ``v_i = sum_c P_i(c) c``,
    where ``C_hat`` is the concept table plus the no-content vector when the
    vocabulary defines one. Unknown words use the no-content vector (or zeros).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    words = tokenize(utterance) if isinstance(utterance, str) else list(utterance)
    C = vocab.embeddings
    if vocab.null_concept is not None:
        C = np.vstack([C, vocab.null_concept])
    W = np.eye(vocab.dim) if alignment_matrix is None else np.asarray(alignment_matrix, dtype=float)
    unknown = vocab.null_concept if vocab.null_concept is not None else np.zeros(vocab.dim)
    rows = []
    for w in words:
        v = vocab.word_vector(w)
        rows.append(unknown if v is None else v)
    Wv = np.array(rows).reshape(len(words), vocab.dim)
    P = softmax(temperature * (Wv @ W @ C.T), axis=1)
    V = P @ C
    return (V, P) if return_distributions else V


# ---------------------------------------------------------------- instructions

@dataclass(frozen=True)
class Instruction:
    vector: np.ndarray
    role: str
    family: int | None = None
    clue: str | None = None


@dataclass(frozen=True)
class InstructionProgram:
    instructions: tuple[Instruction, ...]
    mode: str

    def __len__(self):
        return len(self.instructions)

    def to_doc(self, vectors: bool = True) -> dict:
        out = []
        for ins in self.instructions:
            d = {"role": ins.role}
            if ins.family is not None:
                d["family"] = ins.family
            if ins.clue is not None:
                d["token"] = ins.clue
            if vectors:
                d["vector"] = [float(x) for x in ins.vector]
            out.append(d)
        return {"mode": self.mode, "instructions": out}


def program_from_doc(doc: dict, vocab: ConceptVocabulary) -> InstructionProgram:
    ins = []
    for d in doc["instructions"]:
        if "vector" in d:
            vec = np.asarray(d["vector"], dtype=float)
        elif d.get("token"):
            vec = vocab.embedding(d["token"])
        else:
            vec = np.zeros(vocab.dim)
        ins.append(Instruction(vec, d["role"], d.get("family"), d.get("token")))
    return InstructionProgram(tuple(ins), doc["mode"])


def program_length(mode: str, n_attributes: int) -> int:
    return 3 if mode == RELATION_ONLY else 2 * n_attributes + 3


def validate_clues(clues: ParsedClues, vocab: ConceptVocabulary):
    for side in (clues.target, clues.anchor):
        for fam, tok in side.items():
            key = CATEGORY if fam == CATEGORY else vocab.family_key(fam)
            if tok not in vocab.families[key]:
                raise MissingEmbedding(tok)
    if clues.relation is not None and clues.relation not in vocab.relations:
        raise MissingEmbedding(clues.relation)


def clues_to_instructions(clues: ParsedClues, vocab: ConceptVocabulary, mode: str = RELATION_ONLY):
    """Lay clues out as anchor properties, relation, target properties; absent
    clues become zero vectors."""
    if mode not in (RELATION_ONLY, ATTRIBUTE):
        raise ValueError(f"unknown program mode {mode!r}")
    validate_clues(clues, vocab)
    families = [CATEGORY] if mode == RELATION_ONLY else [CATEGORY, *vocab.attribute_families]
    if mode == RELATION_ONLY and clues.has_attributes():
        dropped = sorted(k for k in (*clues.target, *clues.anchor) if k != CATEGORY)
        warnings.warn(f"attribute clues {dropped} dropped in relation-only mode", ModeFamilyMismatch)
    zero = np.zeros(vocab.dim)

    def side(props, role):
        out = []
        for j, fam in enumerate(families):
            tok = props.get(fam)
            out.append(Instruction(vocab.embedding(tok) if tok else zero, role, j, tok))
        return out

    rel = clues.relation
    ins = side(clues.anchor, ANCHOR_ROLE)
    ins.append(Instruction(vocab.embedding(rel) if rel else zero, RELATION_ROLE, None, rel))
    ins += side(clues.target, TARGET_ROLE)
    return InstructionProgram(tuple(ins), mode)

