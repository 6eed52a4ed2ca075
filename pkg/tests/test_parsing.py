import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphground.errors import AmbiguousParse, ModeFamilyMismatch, NoTargetFound
from graphground.parsing import (
    ANCHOR_ROLE,
    ATTRIBUTE,
    RELATION_ONLY,
    RELATION_ROLE,
    TARGET_ROLE,
    ParsedClues,
    align_words,
    clues_to_instructions,
    parse_template,
    program_from_doc,
)
from graphground.vocabulary import load_vocabulary


def test_bag_on_couch(vocab):
    c = parse_template("the bag on the couch", vocab)
    assert c == ParsedClues({"category": "bag"}, "on", {"category": "couch"})


def test_black_couch_next_to_table(vocab):
    c = parse_template("Find the black couch next to the table.", vocab)
    assert c.target == {"category": "couch", "color": "black"}
    assert c.relation == "next to"
    assert c.anchor == {"category": "table"}


def test_single_clue(vocab):
    c = parse_template("the lamp", vocab)
    assert c == ParsedClues({"category": "lamp"}, None, {})


def test_aliases_and_surface_forms(vocab):
    assert parse_template("the sofa farthest from the bed", vocab) == ParsedClues({"category": "couch"}, "farthest", {"category": "bed"})
    assert parse_template("the cup closest to the monitor", vocab).relation == "closest"
    assert parse_template("the cup in front of the monitor", vocab).relation == "in front of"


def test_errors(vocab):
    with pytest.raises(NoTargetFound):
        parse_template("", vocab)
    with pytest.raises(NoTargetFound):
        parse_template("on the couch", vocab)
    with pytest.raises(AmbiguousParse) as e:
        parse_template("the bag on the couch near the table", vocab)
    assert len(e.value.candidates) == 2
    with pytest.raises(AmbiguousParse):
        parse_template("the bag lamp on the couch", vocab)


def test_embedding_fallback(mini_vocab):
    assert parse_template("the sofa near the table", mini_vocab).target == {"category": "couch"}


# ---------------------------------------------------------------- soft alignment

def test_align_concentrates(vocab):
    v = align_words(["lamp"], vocab, temperature=200.0)[0]
    assert np.allclose(v, vocab.embedding("lamp"), atol=1e-6)


def test_align_flat_for_unrelated_word():
    table = {"a": np.array([1.0, 0, 0]), "b": np.array([0, 1.0, 0]), "zz": np.array([0, 0, 1.0])}
    v = load_vocabulary({"families": {"category": ["a", "b"]}}, table)
    out, P = align_words(["zz"], v, return_distributions=True)
    assert np.allclose(P, [[0.5, 0.5]])
    assert np.allclose(out[0], 0.5 * (v.embedding("a") + v.embedding("b")))


def test_align_two_concept_softmax():
    table = {"a": np.array([1.0, 0]), "b": np.array([0, 1.0])}
    v = load_vocabulary({"families": {"category": ["a", "b"]}}, table)
    out, P = align_words(["a"], v, temperature=1.0, return_distributions=True)
    e = math.e
    assert P[0] == pytest.approx([e / (e + 1), 1 / (e + 1)], abs=1e-12)
    assert out[0] == pytest.approx(P[0, 0] * v.embedding("a") + P[0, 1] * v.embedding("b"))


def test_align_null_concept():
    table = {"a": np.array([1.0, 0, 0]), "b": np.array([0, 1.0, 0])}
    v = load_vocabulary({"families": {"category": ["a", "b"]}, "null_concept": [0, 0, 1.0]}, table)
    _, P = align_words(["unknownword"], v, return_distributions=True)
    assert P.shape == (1, 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["the", "lamp", "on", "red", "zzz", "next", "bag"]), min_size=1, max_size=6),
       st.floats(0.01, 100))
def test_align_rows_are_distributions(vocab, words, beta):
    _, P = align_words(words, vocab, temperature=beta, return_distributions=True)
    assert np.all(P >= 0)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)


# ---------------------------------------------------------------- instructions

def test_relation_only_program(vocab):
    p = clues_to_instructions(parse_template("the bag on the couch", vocab), vocab, RELATION_ONLY)
    assert len(p) == 3
    assert [i.role for i in p.instructions] == [ANCHOR_ROLE, RELATION_ROLE, TARGET_ROLE]
    for ins, tok in zip(p.instructions, ("couch", "on", "bag")):
        assert np.array_equal(ins.vector, vocab.embedding(tok))


def test_attribute_program_padding(vocab):
    p = clues_to_instructions(parse_template("find the black couch next to the table", vocab), vocab, ATTRIBUTE)
    assert len(p) == 2 * vocab.n_attributes + 3 == 21
    vecs = [i.vector for i in p.instructions]
    assert np.array_equal(vecs[0], vocab.embedding("table"))
    assert all(not v.any() for v in vecs[1:10])
    assert np.array_equal(vecs[10], vocab.embedding("next to"))
    assert np.array_equal(vecs[11], vocab.embedding("couch"))
    assert np.array_equal(vecs[12], vocab.embedding("black"))
    assert all(not v.any() for v in vecs[13:])


def test_degenerate_program(vocab):
    p = clues_to_instructions(parse_template("the lamp", vocab), vocab, RELATION_ONLY)
    assert not p.instructions[0].vector.any() and not p.instructions[1].vector.any()
    assert np.array_equal(p.instructions[2].vector, vocab.embedding("lamp"))


def test_mode_mismatch_warns(vocab):
    clues = parse_template("the black couch next to the table", vocab)
    with pytest.warns(ModeFamilyMismatch):
        p = clues_to_instructions(clues, vocab, RELATION_ONLY)
    assert len(p) == 3


def test_program_doc_round_trip(vocab):
    p = clues_to_instructions(parse_template("the red chair near the desk", vocab), vocab, ATTRIBUTE)
    q = program_from_doc(p.to_doc(), vocab)
    assert q.mode == p.mode
    assert all(np.array_equal(a.vector, b.vector) and a.role == b.role for a, b in zip(p.instructions, q.instructions))
    q2 = program_from_doc(p.to_doc(vectors=False), vocab)
    assert all(np.array_equal(a.vector, b.vector) for a, b in zip(p.instructions, q2.instructions))


def test_programs_injective(vocab):
    cats, rels = vocab.categories[:5], vocab.relations[:4]
    seen = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for t in cats:
            for r in (*rels, None):
                for a in (*cats, None):
                    for color in (None, "red"):
                        target = {"category": t, **({"color": color} if color else {})}
                        clues = ParsedClues(target, r, {"category": a} if a else {})
                        key = np.concatenate([i.vector for i in clues_to_instructions(clues, vocab, ATTRIBUTE).instructions]).tobytes()
                        assert key not in seen
                        seen[key] = clues
