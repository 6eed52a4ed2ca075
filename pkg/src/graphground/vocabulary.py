"""Semantic concept vocabulary: categories, attribute families and relations
embedded in a shared vector space."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateEmbedding,
    DimensionMismatch,
    DuplicateToken,
    EmptyFamily,
    EmptyVocabulary,
    MissingEmbedding,
    UnknownFamily,
)

logger = logging.getLogger(__name__)

CATEGORY = "category"
RELATION = "relation"
ATTR_PREFIX = "attr:"

MANIFEST_FILE = "manifest.json"
EMBEDDINGS_FILE = "embeddings.txt"


@dataclass(frozen=True)
class Concept:
    token: str
    family: str
    embedding: np.ndarray


@dataclass(frozen=True)
class ConceptVocabulary:
    """Immutable concept table.

    ``families`` maps family name (``category``, ``relation``, ``attr:<name>``)
    to its ordered tokens; ``embeddings`` rows follow ``tokens``.
    ``word_vectors`` keeps the raw word table the concepts were resolved from,
    for soft word alignment and out-of-vocabulary lookups.
    """

    dim: int
    tokens: tuple[str, ...]
    families: dict[str, tuple[str, ...]]
    embeddings: np.ndarray
    word_vectors: dict[str, np.ndarray] = field(default_factory=dict)
    null_concept: np.ndarray | None = None
    aliases: dict[str, str] = field(default_factory=dict)
    normalize: bool = True
    raw_words: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})
        object.__setattr__(
            self, "_family_of", {t: f for f, toks in self.families.items() for t in toks}
        )

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    @property
    def attribute_families(self) -> list[str]:
        """Attribute family names (without prefix) in configured order."""
        return [f[len(ATTR_PREFIX):] for f in self.families if f.startswith(ATTR_PREFIX)]

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_families)

    @property
    def categories(self) -> tuple[str, ...]:
        return self.families.get(CATEGORY, ())

    @property
    def relations(self) -> tuple[str, ...]:
        return self.families.get(RELATION, ())

    def family_key(self, family: str) -> str:
        if family in self.families:
            return family
        if ATTR_PREFIX + family in self.families:
            return ATTR_PREFIX + family
        raise UnknownFamily(family)

    def family_tokens(self, family: str) -> tuple[str, ...]:
        return self.families[self.family_key(family)]

    def family_of(self, token: str) -> str:
        return self._family_of[token]

    def index(self, token: str) -> int:
        return self._index[token]

    def embedding(self, token: str) -> np.ndarray:
        try:
            return self.embeddings[self._index[token]]
        except KeyError:
            raise MissingEmbedding(token) from None

    def concept(self, token: str) -> Concept:
        return Concept(token, self.family_of(token), self.embedding(token))

    def family_matrix(self, family: str) -> np.ndarray:
        toks = self.family_tokens(family)
        return self.embeddings[[self._index[t] for t in toks]]

    def canonical(self, phrase: str) -> str | None:
        """Resolve a token or alias to a concept token."""
        if phrase in self._index:
            return phrase
        target = self.aliases.get(phrase)
        if target in self._index:
            return target
        return None

    def word_vector(self, word: str) -> np.ndarray | None:
        return self.word_vectors.get(word)

    def phrase_vector(self, phrase: str) -> np.ndarray | None:
        """Mean of the word vectors of ``phrase``; None when any word is unknown."""
        if phrase in self.word_vectors:
            return self.word_vectors[phrase]
        words = phrase.split()
        vecs = [self.raw_words.get(w) for w in words]
        if not words or any(v is None for v in vecs):
            return None
        v = np.mean(vecs, axis=0)
        if self.normalize:
            n = np.linalg.norm(v)
            if n > 0:
                v = v / n
        return v


def _unit(v: np.ndarray, token: str) -> np.ndarray:
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0.0:
        raise DegenerateEmbedding(f"cannot normalize embedding of {token!r}")
    return v / n


def load_vocabulary(manifest: dict, embeddings: dict[str, np.ndarray], normalize: bool | None = None):
    """Build a validated vocabulary from a manifest document and a word table.

    Multi-word concepts that are absent from the table resolve to the mean of
    their word vectors. All tokens without an embedding are reported together.
    """
    if normalize is None:
        normalize = bool(manifest.get("normalize", True))
    families_doc = manifest.get("families") or {}
    if not families_doc:
        raise EmptyVocabulary("manifest declares no families")

    raw = {w: np.asarray(v, dtype=np.float64) for w, v in embeddings.items()}
    dims = {v.shape for v in raw.values()}
    if len(dims) > 1:
        raise DimensionMismatch(f"embedding table mixes shapes {sorted(dims)}")
    dim = next(iter(dims))[0] if dims else manifest.get("dim")
    declared = manifest.get("dim")
    if declared is not None and dim != declared:
        raise DimensionMismatch(f"manifest dim {declared} but vectors have {dim}")
    if dim is None:
        raise EmptyVocabulary("no embeddings and no dimension")

    tokens: list[str] = []
    families: dict[str, tuple[str, ...]] = {}
    seen: set[str] = set()
    for fam, toks in families_doc.items():
        if fam not in (CATEGORY, RELATION) and not fam.startswith(ATTR_PREFIX):
            raise UnknownFamily(fam)
        if not toks:
            raise EmptyFamily(fam)
        for t in toks:
            if not t:
                raise DuplicateToken(t)
            if t in seen:
                raise DuplicateToken(t)
            seen.add(t)
            tokens.append(t)
        families[fam] = tuple(toks)

    words = {w: _unit(v, w) if normalize else v for w, v in raw.items()}
    rows, missing = [], []
    for t in tokens:
        if t in raw:
            v = raw[t]
        else:
            parts = t.split()
            if len(parts) > 1 and all(p in raw for p in parts):
                v = np.mean([raw[p] for p in parts], axis=0)
            else:
                missing.append(t)
                continue
        if not np.all(np.isfinite(v)):
            raise DegenerateEmbedding(f"non-finite embedding for {t!r}")
        rows.append(_unit(v, t) if normalize else v)
    if missing:
        err = MissingEmbedding(missing[0])
        err.tokens = missing
        raise err

    null = manifest.get("null_concept")
    if null is not None:
        null = np.asarray(null, dtype=np.float64)
        if null.shape != (dim,):
            raise DimensionMismatch("null_concept has wrong dimension")

    emb = np.array(rows, dtype=np.float64).reshape(len(tokens), dim)
    emb.setflags(write=False)
    aliases = {a: t for a, t in (manifest.get("aliases") or {}).items()}
    return ConceptVocabulary(
        dim=int(dim),
        tokens=tuple(tokens),
        families=families,
        embeddings=emb,
        word_vectors=words,
        null_concept=null,
        aliases=aliases,
        normalize=normalize,
        raw_words=raw,
    )


def read_embedding_file(path) -> dict[str, np.ndarray]:
    """Read a GloVe-style text table (``token v1 ... vd`` per line)."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or parts == [""]:
                continue
            try:
                table[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DimensionMismatch(f"{path}:{lineno}: {exc}") from None
    return table


def write_embedding_file(path, table: dict[str, np.ndarray]):
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in table.items():
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_vocabulary_dir(path) -> ConceptVocabulary:
    path = Path(path)
    manifest = json.loads((path / MANIFEST_FILE).read_text(encoding="utf-8"))
    return load_vocabulary(manifest, read_embedding_file(path / EMBEDDINGS_FILE))


def manifest_of(vocab: ConceptVocabulary) -> dict:
    doc = {
        "dim": vocab.dim,
        "normalize": vocab.normalize,
        "families": {f: list(t) for f, t in vocab.families.items()},
        "aliases": dict(vocab.aliases),
    }
    if vocab.null_concept is not None:
        doc["null_concept"] = [float(x) for x in vocab.null_concept]
    return doc


def save_vocabulary(vocab: ConceptVocabulary, path):
    """Write ``manifest.json`` and ``embeddings.txt``; the raw (unnormalized)
    word table is stored so that reloading reproduces identical embeddings."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / MANIFEST_FILE).write_text(json.dumps(manifest_of(vocab), indent=2) + "\n", encoding="utf-8")
    write_embedding_file(path / EMBEDDINGS_FILE, vocab.raw_words)


def default_manifest() -> dict:
    text = resources.files("graphground.data").joinpath("default_manifest.json").read_text(encoding="utf-8")
    return json.loads(text)


def one_hot_table(manifest: dict) -> dict[str, np.ndarray]:
    """Orthonormal word table: one basis vector per distinct word of the manifest."""
    words: list[str] = []
    for toks in manifest["families"].values():
        for t in toks:
            for w in t.split():
                if w not in words:
                    words.append(w)
    eye = np.eye(len(words))
    return {w: eye[i] for i, w in enumerate(words)}


def default_vocabulary() -> ConceptVocabulary:
    """The built-in symbolic vocabulary with one-hot word embeddings."""
    manifest = default_manifest()
    table = one_hot_table(manifest)
    manifest["dim"] = len(table)
    return load_vocabulary(manifest, table)


def similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def nearest_concept(vocab: ConceptVocabulary, query, family: str | None = None):
    """Concept with the largest dot-product similarity to ``query``.

    Exact ties go to the lexicographically smallest token.
    """
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (vocab.dim,):
        raise DimensionMismatch(f"query shape {q.shape}, vocabulary dim {vocab.dim}")
    toks = vocab.tokens if family is None else vocab.family_tokens(family)
    if not toks:
        raise EmptyVocabulary("nothing to search")
    mat = vocab.embeddings if family is None else vocab.family_matrix(family)
    scores = mat @ q
    best = scores.max()
    token = min(t for t, s in zip(toks, scores) if s == best)
    return vocab.concept(token), float(best)
