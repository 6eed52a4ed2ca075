import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import softmax

from graphground.errors import DimensionMismatch, EmptyScene, FamilyOutOfRange, UnknownId
from graphground.graph import build_scene_graph
from graphground.parsing import (
    ATTRIBUTE,
    RELATION_ONLY,
    RELATION_ROLE,
    Instruction,
    InstructionProgram,
    ParsedClues,
    clues_to_instructions,
    parse_template,
)
from graphground.reasoning import (
    ALPHA_ANCHOR,
    ALPHA_RELATION,
    ALPHA_TARGET,
    AttentionDistribution,
    WeightBundle,
    combined_loss,
    concept_cross_entropy,
    ground,
    init_attention,
    load_weights,
    property_round,
    reference_loss,
    relation_round,
    save_weights,
)

from conftest import make_scene, obj


@pytest.fixture(scope="module")
def W(vocab):
    return WeightBundle.symbolic(vocab.dim, vocab.n_attributes)


def three_chairs(vocab):
    s = make_scene(obj("a", (0, 0, 0), cats={"chair": 1.0}), obj("b", (5, 0, 0), cats={"table": 1.0}),
                   obj("c", (10, 0, 0), cats={"lamp": 1.0}))
    return build_scene_graph(s, vocab)


def test_init_attention():
    assert init_attention(4).tolist() == [0.25] * 4
    assert init_attention(1).tolist() == [1.0]
    with pytest.raises(EmptyScene):
        init_attention(0)


def test_zero_property_round_is_neutral(vocab, W):
    g = three_chairs(vocab)
    a, b = property_round(g, init_attention(3), np.zeros(vocab.dim), W, 0)
    assert np.allclose(a, 1 / 3) and np.allclose(b, 1 / 3)
    # any input attention still yields a uniform b
    _, b2 = property_round(g, np.array([0.7, 0.2, 0.1]), np.zeros(vocab.dim), W, 3)
    assert np.allclose(b2, 1 / 3)


def test_property_round_picks_chair(vocab, W):
    g = three_chairs(vocab)
    a, b = property_round(g, init_attention(3), vocab.embedding("chair"), W, 0)
    # hand evaluation of softmax(beta * (b + a)) with logits (1, 0, 0)
    b_ref = softmax(50 * np.array([1.0, 0, 0]))
    a_ref = softmax(50 * (b_ref + 1 / 3))
    assert np.allclose(b, b_ref) and np.allclose(a, a_ref)
    assert int(np.argmax(a)) == 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 500))
def test_uniform_stays_uniform_for_any_beta(vocab, beta):
    g = three_chairs(vocab)
    w = WeightBundle.symbolic(vocab.dim, vocab.n_attributes, beta)
    a, _ = property_round(g, init_attention(3), np.zeros(vocab.dim), w, 0)
    assert np.allclose(a, 1 / 3, atol=1e-12)


def test_relation_round_couch_to_bag(vocab, W, couch_bag):
    g = build_scene_graph(couch_bag, vocab)
    ic, ib = g.ids.index("couch1"), g.ids.index("bag1")
    a_prev = np.zeros(2)
    a_prev[ic] = 1.0
    a, mass = relation_round(g, a_prev, vocab.embedding("on"), W)
    assert int(np.argmax(a)) == ib
    logits = np.zeros(2)
    logits[ib] = 1.0
    assert np.allclose(a, softmax(50 * logits))
    edge = [k for k in range(len(g.edge_src)) if g.edge_src[k] == ic and g.edge_dst[k] == ib][0]
    assert mass[edge] == pytest.approx(1.0)


def test_relation_round_neutral_cases(vocab, W, couch_bag):
    g = build_scene_graph(couch_bag, vocab)
    a, _ = relation_round(g, np.array([0.9, 0.1]), np.zeros(vocab.dim), W)
    assert np.allclose(a, 0.5)
    lone = build_scene_graph(make_scene(obj("a", (0, 0, 0)), obj("b", (50, 0, 0))), vocab)
    a, mass = relation_round(lone, np.array([1.0, 0.0]), vocab.embedding("on"), W)
    assert np.allclose(a, 0.5)


def test_errors(vocab, W, couch_bag):
    g = build_scene_graph(couch_bag, vocab)
    with pytest.raises(DimensionMismatch):
        property_round(g, init_attention(2), np.zeros(3), W, 0)
    with pytest.raises(FamilyOutOfRange):
        property_round(g, init_attention(2), np.zeros(vocab.dim), W, 10)
    with pytest.raises(DimensionMismatch):
        relation_round(g, init_attention(2), np.zeros(vocab.dim + 1), W)


@pytest.mark.parametrize("mode,rounds", [(RELATION_ONLY, 3), (ATTRIBUTE, 21)])
def test_ground_bag_on_couch(vocab, W, couch_bag, mode, rounds):
    g = build_scene_graph(couch_bag, vocab)
    prog = clues_to_instructions(parse_template("the bag on the couch", vocab), vocab, mode)
    sel, trace = ground(g, prog, W)
    assert sel == "bag1"
    assert len(trace.rounds) == rounds
    ic, ib = g.ids.index("couch1"), g.ids.index("bag1")
    first = trace.rounds[0].attention_out
    rel = next(r for r in trace.rounds if r.role == RELATION_ROLE)
    assert first[ic] > first[ib]
    assert rel.attention_out[ib] > rel.attention_out[ic]
    for r in trace.rounds:
        assert abs(r.attention_out.sum() - 1) < 1e-9 and r.attention_out.min() >= 0
    doc = json.loads(json.dumps(trace.to_doc()))
    assert doc["selected"] == "bag1" and len(doc["rounds"]) == rounds
    assert {"role", "attention_in", "attention_out", "scores"} <= set(doc["rounds"][0])


def test_zero_program_selects_smallest_id(vocab, W):
    s = make_scene(obj("b", (0, 0, 0)), obj("a", (5, 0, 0)), obj("c", (9, 0, 0)))
    g = build_scene_graph(s, vocab)
    z = np.zeros(vocab.dim)
    prog = InstructionProgram((Instruction(z, "anchor-property", 0), Instruction(z, "relation"),
                               Instruction(z, "target-property", 0)), RELATION_ONLY)
    sel, trace = ground(g, prog, W)
    assert np.allclose(trace.final.values, 1 / 3)
    assert sel == "a"


def test_program_length_checked(vocab, W, couch_bag):
    g = build_scene_graph(couch_bag, vocab)
    prog = clues_to_instructions(parse_template("the bag on the couch", vocab), vocab, RELATION_ONLY)
    bad = InstructionProgram(prog.instructions, ATTRIBUTE)
    with pytest.raises(FamilyOutOfRange):
        ground(g, bad, W)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8), st.floats(0.01, 200), st.floats(0.01, 200))
def test_temperature_argmax_invariance(logits, b1, b2):
    l = np.array(logits)
    assert np.argmax(softmax(b1 * l)) == np.argmax(softmax(b2 * l))


def test_relu_option(vocab, couch_bag):
    g = build_scene_graph(couch_bag, vocab)
    w = WeightBundle.symbolic(vocab.dim, vocab.n_attributes)
    relu = WeightBundle(w.W_s, w.W_prop, w.W_r, w.W_e, "relu")
    r = -vocab.embedding("couch")
    a_id, _ = property_round(g, init_attention(2), r, w, 0)
    a_relu, b_relu = property_round(g, init_attention(2), r, relu, 0)
    assert np.allclose(b_relu, 0.5)
    assert not np.allclose(a_id, 0.5)


def test_weights_json_round_trip(tmp_path, W):
    save_weights(W, tmp_path / "w.json")
    back = load_weights(tmp_path / "w.json")
    assert np.array_equal(back.W_prop, W.W_prop) and back.beta_merge == 50.0 and back.sigma == "identity"
    doc = W.to_doc()
    doc["dim"] = 3
    with pytest.raises(DimensionMismatch):
        WeightBundle.from_doc(doc)
    with pytest.raises(ValueError):
        WeightBundle(W.W_s, W.W_prop, W.W_r, W.W_e, beta_merge=0.0)
    with pytest.raises(ValueError):
        WeightBundle(W.W_s * np.nan, W.W_prop, W.W_r, W.W_e)


# ---------------------------------------------------------------- losses

def test_reference_loss():
    ids = ("a", "b", "c", "d")
    assert reference_loss(AttentionDistribution(ids, init_attention(4)), "b") == pytest.approx(math.log(4), abs=1e-12)
    one = AttentionDistribution(ids, np.array([0, 1.0, 0, 0]))
    assert reference_loss(one, "b") == 0.0
    assert reference_loss(one, "a") == math.inf
    ten = AttentionDistribution(tuple("abcdefghij"), np.array([0.25] + [0.75 / 9] * 9))
    assert reference_loss(ten, "a") == pytest.approx(math.log(4))
    with pytest.raises(UnknownId):
        reference_loss(one, "z")


def test_aux_terms(vocab):
    assert concept_cross_entropy(vocab.embedding("on"), vocab, "relation", "on", beta=50) < 1e-15
    M = len(vocab.relations)
    assert concept_cross_entropy(np.zeros(vocab.dim), vocab, "relation", "near") == pytest.approx(math.log(M), abs=1e-12)


def test_combined_loss_resums(vocab, W, couch_bag):
    g = build_scene_graph(couch_bag, vocab)
    clues = parse_template("the bag on the couch", vocab)
    prog = clues_to_instructions(clues, vocab, ATTRIBUTE)
    _, trace = ground(g, prog, WeightBundle.symbolic(vocab.dim, vocab.n_attributes, beta=2.0))
    wrong = ParsedClues({"category": "lamp"}, "near", {"category": "couch"})
    total, br = combined_loss(trace.final, "bag1", prog, wrong, vocab, beta=3.0)
    t = br["terms"]
    independent = (reference_loss(trace.final, "bag1")
                   + ALPHA_TARGET * concept_cross_entropy(vocab.embedding("bag"), vocab, "category", "lamp", 3.0)
                   + ALPHA_ANCHOR * concept_cross_entropy(vocab.embedding("couch"), vocab, "category", "couch", 3.0)
                   + ALPHA_RELATION * concept_cross_entropy(vocab.embedding("on"), vocab, "relation", "near", 3.0))
    assert abs(total - independent) < 1e-9
    assert abs(total - sum(br["weighted"].values())) < 1e-9
    assert t["target"] > 0 and br["skipped"] == []


def test_combined_loss_skips_missing(vocab, W):
    s = make_scene(obj("a", (0, 0, 0), cats={"lamp": 1.0}))
    g = build_scene_graph(s, vocab)
    clues = parse_template("the lamp", vocab)
    prog = clues_to_instructions(clues, vocab, RELATION_ONLY)
    _, trace = ground(g, prog, W)
    total, br = combined_loss(trace.final, "a", prog, clues, vocab)
    assert sorted(br["skipped"]) == ["anchor", "relation"]
    assert total == pytest.approx(br["terms"]["target"] * 0.2, abs=1e-12)
