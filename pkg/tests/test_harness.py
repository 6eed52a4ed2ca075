import pytest

from graphground import harness
from graphground.errors import NoUnambiguousTriple, PlacementFailed
from graphground.evaluation import (
    evaluate,
    proportion_points,
    records_match,
    sweep_gt_proportion,
    sweep_top_k,
    with_proportion,
)
from graphground.harness import (
    Example,
    GenConfig,
    consistent_targets,
    generate_dataset,
    generate_scene,
    generate_utterance,
    load_dataset,
    write_dataset,
)
from graphground.parsing import ParsedClues, parse_template
from graphground.scene import load_scene, scene_to_doc

from conftest import make_scene, obj


def test_two_objects_structural(vocab):
    s = generate_scene(GenConfig(min_objects=2, max_objects=2), 1, vocab)
    assert len(s) == 2
    assert set(s.ground_truth) == set(s.ids)
    a, b = (p.box for p in s.proposals)
    stacked = a.footprint.intersection(b.footprint).area > 0
    if stacked:
        # resting items touch the supporter's top surface and do not interpenetrate
        lo, hi = sorted((a, b), key=lambda x: x.zmin)
        assert hi.zmin >= lo.zmax - 1e-3
    else:
        assert a.footprint.distance(b.footprint) > 0


def test_scene_deterministic(vocab):
    cfg = GenConfig(noisy=True)
    assert generate_scene(cfg, [3, 4], vocab) == generate_scene(cfg, [3, 4], vocab)


def test_generated_scenes_validate(vocab):
    for i in range(60):
        s = generate_scene(GenConfig(), [0, i], vocab)
        assert 4 <= len(s) <= 12
        assert load_scene(scene_to_doc(s)) == s


def test_noisy_distributions(vocab):
    s = generate_scene(GenConfig(noisy=True), 5, vocab)
    for p in s.proposals:
        assert len(p.category_dist) == 20
        assert sum(p.category_dist.values()) == pytest.approx(1.0)


def test_placement_failure(vocab, monkeypatch):
    monkeypatch.setattr(harness, "MAX_PLACEMENT_ATTEMPTS", 0)
    with pytest.raises(PlacementFailed):
        generate_scene(GenConfig(), 0, vocab)


def test_couch_bag_utterance(vocab, couch_bag):
    utt, tid, clues = generate_utterance(couch_bag, GenConfig(relations=("on",)), 0, vocab)
    assert (utt, tid) == ("the bag on the couch", "bag1")
    assert clues == ParsedClues({"category": "bag"}, "on", {"category": "couch"})


def test_guard_two_bags(vocab):
    couch = obj("couch1", (0, 0, 0.4), (2.0, 0.9, 0.8), {"couch": 1.0}, gt_category="couch")
    bag1 = obj("bag1", (-0.5, 0, 0.975), (0.4, 0.2, 0.35), {"bag": 1.0}, gt_category="bag")
    bag2 = obj("bag2", (0.5, 0, 0.975), (0.4, 0.2, 0.35), {"bag": 1.0}, gt_category="bag")
    s = make_scene(couch, bag1, bag2)
    with pytest.raises(NoUnambiguousTriple):
        generate_utterance(s, GenConfig(relations=("on",)), 0, vocab)
    # a bag anchor is not unique either, so the reverse relation cannot rescue the scene
    with pytest.raises(NoUnambiguousTriple):
        generate_utterance(s, GenConfig(relations=("on", "supporting")), 0, vocab)
    one_bag = make_scene(couch, bag1)
    assert generate_utterance(one_bag, GenConfig(relations=("on",)), 0, vocab)[1] == "bag1"


def test_guard_exhaustive(vocab):
    for ex in generate_dataset(GenConfig(n_scenes=40, seed=9, attribute_mode=True), vocab):
        assert consistent_targets(ex.scene, ex.clues, vocab) == [ex.target_id]
        assert parse_template(ex.utterance, vocab) == ex.clues


def test_no_between(vocab):
    cfg = GenConfig(relations=("between", "near"))
    assert harness._relations(vocab, cfg) == ("near",)


def test_dataset_files_round_trip(vocab, tmp_path):
    cfg = GenConfig(n_scenes=5, seed=2)
    exs = generate_dataset(cfg, vocab)
    write_dataset(exs, tmp_path / "ds", cfg)
    back = load_dataset(tmp_path / "ds")
    assert [(e.scene, e.utterance, e.target_id, e.clues) for e in back] == \
        [(e.scene, e.utterance, e.target_id, e.clues) for e in exs]
    assert GenConfig.from_doc(cfg.to_doc()) == cfg
    with pytest.raises(ValueError):
        GenConfig.from_doc({"n_scene": 3})
    with pytest.raises(ValueError):
        GenConfig(min_objects=5, max_objects=4)


# ---------------------------------------------------------------- evaluation

def test_single_solved_example(vocab, couch_bag):
    ex = Example(couch_bag, "the bag on the couch", "bag1", ParsedClues({"category": "bag"}, "on", {"category": "couch"}))
    rep = evaluate([ex], vocab)
    assert rep.accuracy == 1.0 and rep.n_examples == 1
    assert rep.per_relation == {"on": {"n": 1, "correct": 1, "accuracy": 1.0}}


def test_unparseable_flagged(vocab, couch_bag):
    good = Example(couch_bag, "the bag on the couch", "bag1", ParsedClues())
    bad = Example(couch_bag, "on the couch", "bag1", ParsedClues())
    rep = evaluate([good, bad], vocab)
    assert rep.n_correct == 1 and rep.n_parse_errors == 1 and rep.accuracy == 0.5
    flagged = [r for r in rep.records if r["parse_error"]]
    assert flagged[0]["utterance"] == "on the couch" and not flagged[0]["correct"]


def test_eval_deterministic(vocab):
    exs = generate_dataset(GenConfig(n_scenes=15, seed=4, noisy=True), vocab)
    assert evaluate(exs, vocab).to_json() == evaluate(list(reversed(exs)), vocab).to_json()


def test_proportion_sweep_properties(vocab):
    exs = generate_dataset(GenConfig(n_scenes=30, seed=6, noisy=True), vocab)
    curve = sweep_gt_proportion(exs, vocab, [0.0, 0.5, 1.0], seed=1)
    assert len(curve) == 3 and curve[2][1] >= curve[0][1]
    gt_suite = evaluate(with_proportion(exs, 1.0, 99), vocab).accuracy
    assert curve[2][1] == gt_suite
    assert curve == sweep_gt_proportion(exs, vocab, [0.0, 0.5, 1.0], seed=1)
    assert proportion_points(11)[3] == 0.3


def test_top_k_one_hot_identical(vocab):
    exs = generate_dataset(GenConfig(n_scenes=20, seed=7), vocab)
    rows = sweep_top_k(exs, vocab, [1, 2, 20, None])
    base = rows[-1][1]
    for _, rep in rows:
        assert rep.to_json() == base.to_json()


def test_top_k_full_equals_untruncated(vocab):
    exs = generate_dataset(GenConfig(n_scenes=25, seed=8, noisy=True), vocab)
    rows = dict(sweep_top_k(exs, vocab, [20, None]))
    assert records_match(rows[20], rows[None])
