"""Split a UD CoNLL-U file into train/dev files (first N sentences for
training, the rest for dev), optionally capped to a subset size."""

import argparse
from pathlib import Path

from morphparse.data import read_conllu, write_conllu


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("treebank")
    ap.add_argument("--out", default="data")
    ap.add_argument("--limit", type=int, default=1000)
    ap.add_argument("--train-size", type=int, default=800)
    args = ap.parse_args()

    tb = read_conllu(args.treebank)[: args.limit]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", tb[: args.train_size]), ("dev", tb[args.train_size :])):
        with open(out / f"{name}.conllu", "w", encoding="utf-8") as fh:
            write_conllu(part, fh)
        print(f"{name}: {len(part)} sentences -> {out / f'{name}.conllu'}")


if __name__ == "__main__":
    main()
