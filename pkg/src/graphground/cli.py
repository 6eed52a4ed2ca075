"""Command line entry point: ``r2g <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

from .errors import (
    AmbiguousParse,
    GroundingError,
    LlmMalformedResponse,
    LlmTokenUnmappable,
    LlmUnavailable,
    ModeFamilyMismatch,
    NoTargetFound,
)
from .evaluation import (
    AUTO,
    curve_trend,
    evaluate,
    proportion_points,
    sweep_gt_proportion,
    sweep_top_k,
)
from .graph import build_scene_graph, graph_to_json
from .harness import GenConfig, generate_dataset, load_dataset, write_dataset
from .parsing import ATTRIBUTE, RELATION_ONLY, clues_to_instructions, parse_template
from .reasoning import ground, load_weights
from .relations import (
    RelationConfig,
    superlative_probability,
    superlative_probability_enumerated,
    superlative_probability_montecarlo,
)
from .scene import load_scene_file
from .vocabulary import (
    default_manifest,
    default_vocabulary,
    load_vocabulary,
    load_vocabulary_dir,
    read_embedding_file,
    save_vocabulary,
)

PARSE_ERRORS = (NoTargetFound, AmbiguousParse, LlmUnavailable, LlmMalformedResponse, LlmTokenUnmappable)
EXIT_PARSE = 2


def _vocab(args):
    return load_vocabulary_dir(args.vocab) if args.vocab else default_vocabulary()


def _parser_fn(mode: str):
    if mode == "template":
        return parse_template
    from .llm import LlmClient, LlmClientConfig, parse_llm

    client = LlmClient(LlmClientConfig.from_env())
    return lambda utt, vocab: parse_llm(utt, vocab, client)


def _program_mode(clues, mode):
    if mode == AUTO:
        return ATTRIBUTE if clues.has_attributes() else RELATION_ONLY
    return mode


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _png_beside(path) -> Path:
    return Path(path).with_suffix(".png")


# ---------------------------------------------------------------- subcommands

def cmd_make_vocab(args):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8")) if args.manifest else default_manifest()
    if args.embeddings:
        table = read_embedding_file(args.embeddings)
        words = {w for toks in manifest["families"].values() for t in toks for w in t.split()}
        table = {w: v for w, v in table.items() if w in words}
        manifest["dim"] = len(next(iter(table.values())))
        vocab = load_vocabulary(manifest, table)
    else:
        vocab = default_vocabulary()
    save_vocabulary(vocab, args.out)
    print(f"{len(vocab.tokens)} concepts, d={vocab.dim}, L={vocab.n_attributes} -> {args.out}")


def cmd_parse(args):
    vocab = _vocab(args)
    clues = _parser_fn(args.mode)(args.utterance, vocab)
    print(json.dumps(clues.to_doc(), sort_keys=True))
    if args.emit_program:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModeFamilyMismatch)
            prog = clues_to_instructions(clues, vocab, _program_mode(clues, args.program_mode))
        _write_json(args.emit_program, prog.to_doc(vectors=True))


def cmd_graph(args):
    vocab = _vocab(args)
    scene = load_scene_file(args.scene)
    graph = build_scene_graph(scene, vocab, RelationConfig(top_k=args.top_k))
    text = graph_to_json(graph, embeddings=args.embeddings)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_oracle(args):
    scene = load_scene_file(args.scene)
    if args.method == "product":
        print(repr(superlative_probability(scene, args.anchor, args.target, args.kind, args.top_k)))
    elif args.method == "enumerate":
        print(repr(superlative_probability_enumerated(scene, args.anchor, args.target, args.kind, args.top_k)))
    else:
        est, se = superlative_probability_montecarlo(scene, args.anchor, args.target, args.kind, args.samples, args.seed)
        print(f"{est!r} {se!r}")


def cmd_ground(args):
    vocab = _vocab(args)
    scene = load_scene_file(args.scene)
    clues = _parser_fn(args.mode)(args.utterance, vocab)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModeFamilyMismatch)
        program = clues_to_instructions(clues, vocab, _program_mode(clues, args.program_mode))
    weights = load_weights(args.weights) if args.weights else None
    graph = build_scene_graph(scene, vocab, RelationConfig(top_k=args.top_k))
    selected, trace = ground(graph, program, weights)
    print(f"{selected} {trace.score!r}")
    if args.trace:
        _write_json(args.trace, trace.to_doc())
    if args.plot:
        from .plotting import plot_trace

        plot_trace(trace, args.plot)


def cmd_gen(args):
    doc = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.n_scenes is not None:
        doc["n_scenes"] = args.n_scenes
    config = GenConfig.from_doc(doc)
    examples = generate_dataset(config, _vocab(args))
    write_dataset(examples, args.out, config)
    print(f"{len(examples)} examples -> {args.out}")


def _eval_kwargs(args):
    kw = {"mode": args.program_mode, "parser": _parser_fn(args.mode)}
    if getattr(args, "weights", None):
        kw["weights"] = load_weights(args.weights)
    return kw


def cmd_eval(args):
    vocab = _vocab(args)
    examples = load_dataset(args.dataset)
    report = evaluate(examples, vocab, relation_config=RelationConfig(top_k=args.top_k), **_eval_kwargs(args))
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(f"accuracy {report.accuracy:.4f} ({report.n_correct}/{report.n_examples}), "
          f"parse errors {report.n_parse_errors}")
    for rel, d in report.per_relation.items():
        print(f"  {rel:<12} {d['accuracy']:.4f} ({d['correct']}/{d['n']})")


def cmd_sweep_gt(args):
    vocab = _vocab(args)
    examples = load_dataset(args.dataset)
    curve = sweep_gt_proportion(examples, vocab, proportion_points(args.points), seed=args.seed,
                                **_eval_kwargs(args))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["proportion", "accuracy"])
        for p, a in curve:
            w.writerow([repr(p), repr(a)])
    rho, gap = curve_trend(curve)
    _write_json(Path(args.out).with_suffix(".json"),
                {"curve": [{"proportion": p, "accuracy": a} for p, a in curve], "spearman": rho, "gap": gap})
    if not args.no_plot:
        from .plotting import plot_gt_curve

        plot_gt_curve(curve, _png_beside(args.out))
    for p, a in curve:
        print(f"{p:.2f} {a:.4f}")
    print(f"spearman {rho:.4f} gap {gap:.4f}")


def _parse_ks(text: str):
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        out.append(None if part in ("all", "none", "full") else int(part))
    return out


def cmd_sweep_k(args):
    vocab = _vocab(args)
    examples = load_dataset(args.dataset)
    rows = sweep_top_k(examples, vocab, _parse_ks(args.ks), **_eval_kwargs(args))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "accuracy", "n_correct", "n_examples"])
        for k, rep in rows:
            w.writerow(["all" if k is None else k, repr(rep.accuracy), rep.n_correct, rep.n_examples])
    if not args.no_plot:
        from .plotting import plot_top_k

        plot_top_k([(k, rep.accuracy) for k, rep in rows], _png_beside(args.out))
    for k, rep in rows:
        print(f"K={'all' if k is None else k} {rep.accuracy:.4f}")


# ---------------------------------------------------------------- argument parsing

def _top_k(text):
    return None if text.lower() in ("all", "none", "full") else int(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="r2g", description="Scene-graph grounding of referring utterances.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def vocab_arg(p):
        p.add_argument("--vocab", help="vocabulary directory (default: built-in one-hot vocabulary)")

    def parse_args(p):
        p.add_argument("--mode", choices=("template", "llm"), default="template", help="utterance parser")
        p.add_argument("--program-mode", choices=(AUTO, RELATION_ONLY, ATTRIBUTE), default=AUTO,
                       help="instruction layout; auto picks attribute mode when attributes are present")

    p = sub.add_parser("make-vocab", help="write a vocabulary directory")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="concept manifest JSON (default: built-in)")
    p.add_argument("--embeddings", help="GloVe-format word vectors; omit for one-hot words")
    p.set_defaults(func=cmd_make_vocab)

    p = sub.add_parser("parse", help="parse an utterance into clues")
    p.add_argument("--utterance", required=True)
    vocab_arg(p)
    parse_args(p)
    p.add_argument("--emit-program", help="write the instruction program JSON here")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("graph", help="build the scene graph of a scene file")
    p.add_argument("--scene", required=True)
    vocab_arg(p)
    p.add_argument("--out")
    p.add_argument("--embeddings", action="store_true", help="include embedding vectors")
    p.add_argument("--top-k", type=_top_k, default=2)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("oracle", help="farthest/closest probability by product, enumeration or sampling")
    p.add_argument("--scene", required=True)
    p.add_argument("--anchor", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--kind", choices=("farthest", "closest"), required=True)
    p.add_argument("--method", choices=("product", "enumerate", "mc"), default="product")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-k", type=_top_k, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("ground", help="ground one utterance in one scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--utterance", required=True)
    vocab_arg(p)
    parse_args(p)
    p.add_argument("--weights")
    p.add_argument("--trace", help="write the reasoning trace JSON here")
    p.add_argument("--plot", help="write a trace heat map PNG here")
    p.add_argument("--top-k", type=_top_k, default=2)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--config", help="GenConfig JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-scenes", type=int)
    vocab_arg(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="evaluate grounding accuracy on a dataset")
    p.add_argument("--dataset", required=True)
    vocab_arg(p)
    parse_args(p)
    p.add_argument("--weights")
    p.add_argument("--report")
    p.add_argument("--top-k", type=_top_k, default=2)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-gt", help="accuracy against ground-truth category proportion")
    p.add_argument("--dataset", required=True)
    vocab_arg(p)
    parse_args(p)
    p.add_argument("--weights")
    p.add_argument("--points", type=int, default=11)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; JSON and PNG are written beside it")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_sweep_gt)

    p = sub.add_parser("sweep-k", help="accuracy against top-K category truncation")
    p.add_argument("--dataset", required=True)
    vocab_arg(p)
    parse_args(p)
    p.add_argument("--weights")
    p.add_argument("--ks", default="1,2,4,all")
    p.add_argument("--out", required=True, help="CSV path; PNG is written beside it")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_sweep_k)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except PARSE_ERRORS as exc:
        print(f"parse error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GroundingError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
