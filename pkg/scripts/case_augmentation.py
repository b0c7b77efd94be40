"""Syncretism experiment: plain char-lstm, char-lstm with gold or predicted
case symbols, the oracle encoder and the multitask variant on a generated
corpus where a noun's form never reveals its case."""

import argparse
import time

from morphparse import synthetic
from morphparse.config import ModelConfig, TrainConfig
from morphparse.data import build_vocab
from morphparse.morph import augment_with_case, most_frequent_baseline, tagger_train
from morphparse.parser import Parser
from morphparse.training import train_parser

VARIANTS = ("char-lstm", "gold-case", "predicted-case", "oracle", "mtl")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train", type=int, default=400)
    ap.add_argument("--dev", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--variants", nargs="+", default=["char-lstm", "gold-case", "oracle"], choices=VARIANTS)
    args = ap.parse_args()

    kw = dict(syncretic=True, balanced=True, iobj_p=0.0, nmod_p=0.0, lexicon=synthetic.make_lexicon(5))
    train = synthetic.generate(args.train, seed=11, **kw)
    dev = synthetic.generate(args.dev, seed=12, **kw)
    print(f"most-frequent Case baseline on dev: {most_frequent_baseline(train, dev, 'Case'):.2f}")
    print("variant\tbest_dev_las\tseconds")
    for name in args.variants:
        t0 = time.perf_counter()
        tr, dv = train, dev
        cfg = ModelConfig(encoder="oracle" if name == "oracle" else "char-lstm")
        if name == "gold-case":
            tr, dv, cfg.case_symbols = augment_with_case(train), augment_with_case(dev), True
        elif name == "predicted-case":
            tagger = tagger_train(train, dev, seed=args.seed).model
            tr, dv, cfg.case_symbols = augment_with_case(train, tagger), augment_with_case(dev, tagger), True
        elif name == "mtl":
            cfg.mtl, cfg.lstm_layers = True, 4
        parser = Parser(cfg, build_vocab(tr), seed=args.seed)
        res = train_parser(parser, tr, dv, TrainConfig(epochs=args.epochs, seed=args.seed))
        print(f"{name}\t{res.best_dev_las:.2f}\t{time.perf_counter() - t0:.0f}", flush=True)


if __name__ == "__main__":
    main()
