"""Probe embeddings and encodings of trained parsers for Case, Gender,
Number and the full feature bundle, next to the most-frequent baseline."""

import argparse

from morphparse import synthetic
from morphparse.config import ENCODER_KINDS, ModelConfig, TrainConfig
from morphparse.data import build_vocab, read_conllu
from morphparse.morph import PROBE_FEATURES, PROBE_SOURCES, DegenerateDataError, run_probe
from morphparse.parser import Parser
from morphparse.training import train_parser


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--treebank", help="CoNLL-U file; default is a generated syncretic corpus")
    ap.add_argument("--train-size", type=int, default=400)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--encoders", nargs="+", default=["char-lstm", "oracle"], choices=ENCODER_KINDS)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    if args.treebank:
        tb = read_conllu(args.treebank)
        train, dev = tb[: args.train_size], tb[args.train_size :]
    else:
        kw = dict(syncretic=True, balanced=True, iobj_p=0.0, nmod_p=0.0, lexicon=synthetic.make_lexicon(5))
        train, dev = synthetic.generate(args.train_size, seed=11, **kw), synthetic.generate(100, seed=12, **kw)
    print("encoder\tfeature\tsource\taccuracy\tbaseline")
    for kind in args.encoders:
        parser = Parser(ModelConfig(encoder=kind), build_vocab(train), seed=args.seed)
        train_parser(parser, train, dev, TrainConfig(epochs=args.epochs, seed=args.seed))
        for feature in PROBE_FEATURES:
            for source in PROBE_SOURCES:
                try:
                    rep = run_probe(parser, train, dev, feature, source, seed=args.seed)
                except DegenerateDataError as err:
                    print(f"{kind}\t{feature}\t{source}\tskipped ({err})")
                    continue
                print(f"{kind}\t{feature}\t{source}\t{rep.accuracy:.2f}\t{rep.baseline:.2f}", flush=True)


if __name__ == "__main__":
    main()
