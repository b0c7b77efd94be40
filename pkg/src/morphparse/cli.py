"""Command-line entry point: train, parse, evaluate, probe, tag-case, analyze.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 incompatible or unreadable model archive.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis
from .archive import ArchiveError, load_parser, save_parser, save_tagger
from .config import ConfigError, ExperimentConfig, format_config, load_config
from .data import ConlluError, TreeError, build_vocab, read_conllu, write_conllu
from .morph import DegenerateDataError, augment_with_case, run_probe, tagger_train
from .numerics import autodiff as ad
from .parser import AttentionRecord, Parser, apply_trees
from .training import train_parser

DATA_ENV = "MORPHPARSE_DATA"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ARCHIVE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def resolve_path(path: str | None) -> str | None:
    """Relative paths that do not exist are looked up under $MORPHPARSE_DATA."""
    if path is None or path == "-":
        return path
    p = Path(path)
    root = os.environ.get(DATA_ENV)
    if not p.is_absolute() and not p.exists() and root:
        cand = Path(root) / p
        if cand.exists():
            return str(cand)
    return str(p)


def _read(path: str | None, what: str):
    if path is None:
        raise UsageError(f"missing {what} treebank")
    if path == "-":
        from .data import parse_conllu
        return parse_conllu(sys.stdin)
    path = resolve_path(path)
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return read_conllu(path)


def _write_treebank(treebank, path: str | None) -> None:
    if path is None or path == "-":
        write_conllu(treebank, sys.stdout)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            write_conllu(treebank, fh)


# --- experiment configuration -------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    for f in fields(ExperimentConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", default=None, metavar="V")


def _experiment_config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = value
    for f in fields(ExperimentConfig):
        v = getattr(args, f"cfg_{f.name}")
        if v is not None:
            overrides[f.name] = v
    cfg = load_config(args.config, overrides)
    cfg = replace(cfg, **{k: resolve_path(getattr(cfg, k)) for k in ("train", "dev", "test")})
    cfg.validate(require_files=False)
    for k in ("train", "dev", "test"):
        path = getattr(cfg, k)
        if path is not None and not Path(path).is_file():
            raise FileNotFoundError(f"{k} file not found: {path}")
    return cfg


def _prepare_dtype(cfg: ExperimentConfig):
    dtype = np.dtype(cfg.dtype)
    ad.set_default_dtype(dtype)
    return dtype


# --- commands -------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    if cfg.train is None:
        raise ConfigError("train needs a training treebank (train = ...)")
    dtype = _prepare_dtype(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    train = read_conllu(cfg.train)
    dev = read_conllu(cfg.dev) if cfg.dev else None
    tagger = None
    if cfg.augment == "gold-case":
        train = augment_with_case(train)
        dev = augment_with_case(dev) if dev else None
    elif cfg.augment == "predicted-case":
        res = tagger_train(train, dev, epochs=cfg.tagger_epochs, fraction=cfg.tagger_fraction,
                           dropout=cfg.tagger_dropout, seed=cfg.seed, lr=cfg.lr, clip=cfg.clip, patience=cfg.patience)
        tagger = res.model
        train = augment_with_case(train, tagger)
        dev = augment_with_case(dev, tagger) if dev else None
    mcfg = cfg.model_config()
    vocab = build_vocab(train, cfg.max_words, mcfg.inflectional_only)
    parser = Parser(mcfg, vocab, seed=cfg.seed, dtype=dtype)
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as log:
        def emit(line: str) -> None:
            log.write(line + "\n")
            log.flush()
            print(line, file=sys.stderr)

        result = train_parser(parser, train, dev, cfg.train_config(), log=emit)
    meta = {"augment": cfg.augment, "best_epoch": result.best_epoch, "best_dev_las": result.best_dev_las,
            "seed": cfg.seed, "stopped": result.stopped}
    save_parser(parser, out / "model.mpa", meta, tagger)
    print(json.dumps(meta, sort_keys=True))
    return EXIT_OK


def _prepare_input(treebank, augment: str, tagger):
    if augment == "gold-case":
        return augment_with_case(treebank)
    if augment == "predicted-case":
        if tagger is None:
            raise ArchiveError("archive was trained with predicted case but carries no tagger")
        return augment_with_case(treebank, tagger)
    return treebank


def cmd_parse(args) -> int:
    parser, meta, tagger = load_parser(args.model)
    treebank = _read(args.input, "input")
    if not treebank:
        _write_treebank([], args.output)
        return EXIT_OK
    inputs = _prepare_input(treebank, meta.get("augment", "none"), tagger)
    trees = parser.predict(inputs)
    _write_treebank(apply_trees(treebank, trees), args.output)
    if args.attention:
        if not parser.config.attention:
            raise UsageError("--attention needs a model trained with attention")
        with open(args.attention, "w", encoding="utf-8") as fh:
            analysis.write_attention_records([r for t in trees for r in t.attention], fh)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gold, pred = _read(args.gold, "gold"), _read(args.pred, "predicted")
    rep = analysis.score(gold, pred)
    sys.stdout.write(analysis.format_report(rep))
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8") as fh:
            analysis.write_metric_rows(rep.rows(), fh)
    return EXIT_OK


def cmd_probe(args) -> int:
    parser, meta, tagger = load_parser(args.model)
    train = _prepare_input(_read(args.train, "training"), meta.get("augment", "none"), tagger)
    evaluation = _prepare_input(_read(args.eval, "evaluation"), meta.get("augment", "none"), tagger)
    rep = run_probe(parser, train, evaluation, args.feature, args.source, seed=args.seed, epochs=args.epochs)
    line = f"{rep.feature}\t{rep.source}\t{rep.accuracy:.2f}\t{rep.baseline:.2f}\n"
    sys.stdout.write("feature\tsource\taccuracy\tbaseline\n" + line)
    if args.output:
        Path(args.output).write_text("feature\tsource\taccuracy\tbaseline\n" + line, encoding="utf-8")
    return EXIT_OK


def cmd_tag_case(args) -> int:
    cfg = _experiment_config(args)
    if cfg.train is None:
        raise ConfigError("tag-case needs a training treebank")
    _prepare_dtype(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg) + f"case_source = {args.case_source}\n", encoding="utf-8")
    splits = {k: read_conllu(getattr(cfg, k)) for k in ("train", "dev", "test") if getattr(cfg, k)}
    if args.case_source == "gold":
        source = "gold"
    else:
        res = tagger_train(splits["train"], splits.get("dev"), epochs=cfg.tagger_epochs, fraction=cfg.tagger_fraction,
                           dropout=cfg.tagger_dropout, seed=cfg.seed, lr=cfg.lr, clip=cfg.clip, patience=cfg.patience,
                           log=lambda e: print(json.dumps(e, sort_keys=True), file=sys.stderr))
        source = res.model
        save_tagger(res.model, out / "tagger.mpa", {"best_epoch": res.best_epoch, "seed": cfg.seed})
        if "dev" in splits:
            print(f"dev case accuracy\t{res.model.accuracy(splits['dev']):.2f}")
    for name, tb in splits.items():
        _write_treebank(augment_with_case(tb, source), str(out / f"{name}.case.conllu"))
    return EXIT_OK


def read_attention_records(path: str) -> list[AttentionRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("sent_id"):
            raise ConlluError(f"{path}: not an attention record file")
        for line in fh:
            sid, dep, head, gold, pred, case, weights = line.rstrip("\n").split("\t")
            ws = [(k, float(v)) for k, _, v in (w.rpartition(":") for w in weights.split())]
            # records only carry the predicted head, so correctness is judged by the label
            out.append(AttentionRecord(0, sid, int(dep), int(head), gold, pred, int(head), case, ws))
    return out


def cmd_analyze(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "attention":
        if not args.attention:
            raise UsageError("attention mode needs --attention records from 'parse --attention'")
        records = read_attention_records(args.attention)
        if args.gold and args.pred:
            gold, pred = _read(args.gold, "gold"), _read(args.pred, "predicted")
            heads = {(s.sent_id, t.id): t.head for s in gold for t in s.tokens}
            records = [replace(r, gold_head=heads.get((r.sent_id, r.dependent))) for r in records]
        agg = analysis.aggregate_attention(records)
        with open(out / "attention.tsv", "w", encoding="utf-8") as fh:
            analysis.write_attention_summary(agg, fh)
        return EXIT_OK
    gold, pred = _read(args.gold, "gold"), _read(args.pred, "predicted")
    if args.mode == "confusion-diff":
        if not args.pred_b:
            raise UsageError("confusion-diff needs --pred-b")
        cd = analysis.confusion_diff(gold, pred, _read(args.pred_b, "second predicted"))
        rows = cd.labels[:-1]
        for name, m in (("confusion_a", cd.a), ("confusion_b", cd.b), ("confusion_diff", cd.diff)):
            with open(out / f"{name}.tsv", "w", encoding="utf-8") as fh:
                analysis.write_matrix(rows, cd.labels, m, fh)
        return EXIT_OK
    train = _read(args.train, "training")
    partition = {"oov": "oov", "ambiguity": "ambiguity", "per-pos": "pos"}[args.mode]
    vocab = build_vocab(train, args.max_words) if partition == "oov" else None
    rep = analysis.split_eval(gold, pred, analysis.token_groups(gold, train, partition, vocab))
    sys.stdout.write(analysis.format_report(rep, f"{args.mode} breakdown"))
    with open(out / f"{args.mode}.tsv", "w", encoding="utf-8") as fh:
        analysis.write_metric_rows(rep.rows(args.mode), fh)
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------------

def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="morphparse", description="Graph-based dependency parser with morphological analyses.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a parser")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse CoNLL-U with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="CoNLL-U file or - for stdin")
    p.add_argument("--output", help="output file (default stdout)")
    p.add_argument("--attention", help="write attention records here (attention models)")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("evaluate", help="UAS/LAS of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--tsv", help="also write one metric per row here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("probe", help="probe frozen representations for a feature")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True, help="probe training treebank")
    p.add_argument("--eval", required=True, help="held-out treebank")
    p.add_argument("--feature", default="Case", choices=["Case", "Gender", "Number", "All"])
    p.add_argument("--source", default="embedding", choices=["embedding", "encoder"])
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("tag-case", help="write case-augmented treebanks")
    _add_config_flags(p)
    p.add_argument("--case-source", default="tagger", choices=["tagger", "gold"])
    p.set_defaults(func=cmd_tag_case)

    p = sub.add_parser("analyze", help="OOV / ambiguity / per-POS / confusion / attention reports")
    p.add_argument("--mode", required=True, choices=["oov", "ambiguity", "per-pos", "confusion-diff", "attention"])
    p.add_argument("--gold")
    p.add_argument("--pred")
    p.add_argument("--pred-b")
    p.add_argument("--train")
    p.add_argument("--attention")
    p.add_argument("--max-words", type=int, default=20000)
    p.add_argument("--output", default="analysis")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_arg_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ArchiveError as err:
        print(f"archive error: {err}", file=sys.stderr)
        return EXIT_ARCHIVE
    except (ConlluError, TreeError, DegenerateDataError, analysis.AlignmentError, FileNotFoundError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
