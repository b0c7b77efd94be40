"""Word vs char-lstm on a small UD treebank (default: the bundled Czech PUD
sample, first 800 sentences for training and the rest for dev)."""

import argparse
import json
import time
from pathlib import Path

from morphparse.config import ENCODER_KINDS, ModelConfig, TrainConfig
from morphparse.data import build_vocab, read_conllu
from morphparse.parser import Parser
from morphparse.training import train_parser

DEFAULT = Path(__file__).resolve().parent.parent / "tests" / "data" / "cs_pud-gold.conllu"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--treebank", default=str(DEFAULT))
    ap.add_argument("--train-size", type=int, default=800)
    ap.add_argument("--limit", type=int, default=1000, help="use at most this many sentences")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--encoders", nargs="+", default=["word", "char-lstm"], choices=ENCODER_KINDS)
    args = ap.parse_args()

    tb = read_conllu(args.treebank)[: args.limit]
    train, dev = tb[: args.train_size], tb[args.train_size :]
    vocab = build_vocab(train)
    print(f"{len(train)} training / {len(dev)} dev sentences")
    results = {}
    for kind in args.encoders:
        t0 = time.perf_counter()
        parser = Parser(ModelConfig(encoder=kind), vocab, seed=args.seed)
        res = train_parser(parser, train, dev, TrainConfig(epochs=args.epochs, seed=args.seed, patience=args.epochs),
                           log=lambda e, k=kind: print(k, e, flush=True))
        results[kind] = res.best_dev_las
        print(f"{kind}: best dev LAS {res.best_dev_las:.2f} ({time.perf_counter() - t0:.0f}s)", flush=True)
    print(json.dumps(results, sort_keys=True))


if __name__ == "__main__":
    main()
