"""Command-line surface: oracle, train, parse, eval, analyze.

Exit codes: 0 success, 1 user error (bad inputs, bad config, verification
failure, divergence), 2 internal error.  Error reasons are printed as a
single machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig
from .conllu import ConlluError, build_vocab, read_conllu, write_conllu
from .evaluation import EvalError, analyze, deprel_comparison, deprel_table, score
from .model import ModelVariant, ParserModel, VariantError
from .training import DivergenceError, parse_corpus, train
from .transitions import ARC_KINDS, is_terminal, oracle_sequence, replay

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2

USER_ERRORS = (ConfigError, ConlluError, CheckpointError, EvalError, VariantError,
               DivergenceError, FileNotFoundError, IsADirectoryError, ValueError)


class OracleVerificationError(Exception):
    pass


def build_arg_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--variant", help="override the model variant, e.g. sentence,graph")

    parser = argparse.ArgumentParser(prog="arcstack",
                                     description="Transition-based dependency parsing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", parents=[common], help="dump gold transition sequences")
    p.add_argument("treebank", help="CoNLL-U input")
    p.add_argument("--output", help="dump file (default: stdout)")
    p.add_argument("--verify", action="store_true",
                   help="replay every sequence and check it reproduces the gold arcs")

    p = sub.add_parser("train", parents=[common], help="train a parser")
    p.add_argument("--train", dest="train_path", help="training treebank (or data.train)")
    p.add_argument("--dev", dest="dev_path", help="development treebank (or data.dev)")
    p.add_argument("--model", required=True, help="checkpoint output path")
    p.add_argument("--report", help="training report output path")

    p = sub.add_parser("parse", parents=[common], help="parse a treebank with a trained model")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--input", required=True, help="CoNLL-U input")
    p.add_argument("--output", required=True, help="CoNLL-U output")

    p = sub.add_parser("eval", parents=[common], help="print UAS and LAS")
    p.add_argument("gold")
    p.add_argument("predicted")
    p.add_argument("--punctuation", choices=["include", "exclude"])

    p = sub.add_parser("analyze", parents=[common], help="write error-analysis tables")
    p.add_argument("gold")
    p.add_argument("predicted")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--compare", help="second prediction file; adds relative-error-reduction columns")
    p.add_argument("--punctuation", choices=["include", "exclude"])
    return parser


def load_run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if getattr(args, "variant", None):
        cfg.set("model.variant", args.variant)
    if getattr(args, "punctuation", None):
        cfg.set("eval.punctuation", args.punctuation)
    return cfg


def cmd_oracle(args) -> int:
    cfg = load_run_config(args)
    sentences = read_conllu(args.treebank, punct_rule=cfg.punct_rule())
    lines = []
    for sent in sentences:
        actions = oracle_sequence(sent)
        if args.verify:
            final = replay(sent, actions)
            if final.arcs != frozenset(sent.arc_set()) or not is_terminal(final):
                raise OracleVerificationError(
                    f"oracle verification failed for sentence {sent.sent_id}")
        lines.extend(sent.comments)
        for step, action in enumerate(actions):
            label = str(action.label) if action.kind in ARC_KINDS else "_"
            lines.append(f"{step}\t{action.kind.name}\t{label}")
        lines.append("")
    text = "\n".join(lines)
    if lines:
        text += "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    train_path = args.train_path or cfg.get("data.train")
    dev_path = args.dev_path or cfg.get("data.dev")
    if not train_path or not dev_path:
        raise ConfigError("train and dev treebanks are required (--train/--dev or data.train/data.dev)")
    rule = cfg.punct_rule()
    train_set = read_conllu(train_path, punct_rule=rule)
    dev_set = read_conllu(dev_path, punct_rule=rule)
    if not train_set:
        raise ConfigError(f"training treebank {train_path} is empty")
    variant = ModelVariant.from_string(cfg.get("model.variant"))
    vocab = build_vocab(train_set, min_freq=cfg.get("vocab.min_freq"))
    model = ParserModel(variant, vocab, seed=cfg.get("seed"), **cfg.model_kwargs())
    report = train(model, train_set, dev_set, cfg.train_config(), cfg.eval_config(),
                   log=lambda msg: print(msg, file=sys.stderr))
    model.save(args.model, extra_meta={"config_hash": cfg.config_hash()})
    if args.report:
        report.write(args.report)
    print(f"best epoch {report.best_epoch}\tdev LAS {report.best_las:.2f}")
    return EXIT_OK


def cmd_parse(args) -> int:
    cfg = load_run_config(args)
    model = ParserModel.load(args.model)
    if args.variant and ModelVariant.from_string(args.variant) != model.variant:
        raise CheckpointError(
            f"checkpoint variant {model.variant.to_string()!r} does not match requested {args.variant!r}")
    sentences = read_conllu(args.input, punct_rule=cfg.punct_rule())
    predicted = parse_corpus(model, sentences)
    write_conllu(predicted, args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_run_config(args)
    rule = cfg.punct_rule()
    gold = read_conllu(args.gold, punct_rule=rule)
    predicted = read_conllu(args.predicted, punct_rule=rule)
    uas, las = score(gold, predicted, cfg.eval_config())
    print(f"{uas:.2f}\t{las:.2f}")
    return EXIT_OK


def _write_bin_table(path, table):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("bin\tf\tgold\tpredicted\n")
        for b, f, g, p in table.rows():
            handle.write(f"{b}\t{f:.2f}\t{g}\t{p}\n")


def cmd_analyze(args) -> int:
    cfg = load_run_config(args)
    rule = cfg.punct_rule()
    eval_cfg = cfg.eval_config()
    gold = read_conllu(args.gold, punct_rule=rule)
    predicted = read_conllu(args.predicted, punct_rule=rule)
    report = analyze(gold, predicted, eval_cfg)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    _write_bin_table(out / "dependency_length.tsv", report.dependency_length)
    _write_bin_table(out / "root_distance.tsv", report.root_distance)
    with open(out / "sentence_length.tsv", "w", encoding="utf-8") as handle:
        handle.write("bin\tlas\ttokens\n")
        for b, las, count in report.sentence_length:
            handle.write(f"{b}\t{las:.2f}\t{count}\n")
    with open(out / "labels.tsv", "w", encoding="utf-8") as handle:
        handle.write("label\tf\tgold\tpredicted\n")
        for s in report.labels:
            handle.write(f"{s.label}\t{s.f:.2f}\t{s.gold_count}\t{s.pred_count}\n")
    if args.compare:
        other = read_conllu(args.compare, punct_rule=rule)
        rows = deprel_comparison(report.labels, deprel_table(gold, other, eval_cfg))
        with open(out / "comparison.tsv", "w", encoding="utf-8") as handle:
            handle.write("label\treference_f\tother_f\trer\n")
            for label, ref_f, other_f, rer in rows:
                handle.write(f"{label}\t{ref_f:.2f}\t{other_f:.2f}\t{rer:.1f}\n")
    return EXIT_OK


COMMANDS = {
    "oracle": cmd_oracle,
    "train": cmd_train,
    "parse": cmd_parse,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except OracleVerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # anything unexpected is an internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
