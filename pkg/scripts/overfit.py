"""Train each encoder on a 50-sentence generated treebank until training LAS
reaches the target (or the epoch budget runs out)."""

import argparse
import time

from morphparse import synthetic
from morphparse.config import ENCODER_KINDS, ModelConfig, TrainConfig
from morphparse.data import build_vocab
from morphparse.parser import Parser
from morphparse.training import evaluate, train_parser


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--encoders", nargs="+", default=list(ENCODER_KINDS), choices=ENCODER_KINDS)
    ap.add_argument("--sentences", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--target", type=float, default=99.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    tb = synthetic.generate(args.sentences, seed=3)
    vocab = build_vocab(tb)
    print("encoder\tepochs\ttrain_las\tseconds")
    for kind in args.encoders:
        parser = Parser(ModelConfig(encoder=kind), vocab, seed=args.seed)
        t0 = time.perf_counter()
        res = train_parser(parser, tb, None, TrainConfig(epochs=args.epochs, target_train_las=args.target, seed=args.seed))
        print(f"{kind}\t{res.best_epoch}\t{evaluate(parser, tb).las:.2f}\t{time.perf_counter() - t0:.0f}", flush=True)


if __name__ == "__main__":
    main()
