"""Mini-batch training with Adam, length bucketing and early stopping on dev LAS."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis import score
from .config import TrainConfig
from .data import Sentence
from .numerics import autodiff as ad
from .numerics.optim import AdamState, adam_step
from .parser import Parser, apply_trees


def length_batches(sentences: Sequence[Sentence], batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Indices grouped into batches of similar length, in shuffled order."""
    n = len(sentences)
    lengths = np.array([len(s) for s in sentences])
    order = np.lexsort((rng.permutation(n), lengths))  # by length, random within a length
    batches = [order[k : k + batch_size].tolist() for k in range(0, n, batch_size)]
    return [batches[k] for k in rng.permutation(len(batches))]


def evaluate(parser: Parser, gold: Sequence[Sentence]):
    return score(gold, apply_trees(gold, parser.predict(gold)))


@dataclass
class TrainResult:
    best_epoch: int
    best_dev_las: float | None
    history: list[dict] = field(default_factory=list)
    stopped: str = "max-epochs"


def train_parser(parser: Parser, train: Sequence[Sentence], dev: Sequence[Sentence] | None, cfg: TrainConfig,
                 log: Callable[[str], None] | None = None) -> TrainResult:
    """Train in place. With a dev set the parameters of the best dev-LAS
    epoch are restored at the end."""
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr=cfg.lr, clip=cfg.clip)
    params = parser.parameters()
    batch_size = cfg.batch_size_for(parser.config.encoder)
    result = TrainResult(best_epoch=0, best_dev_las=None)
    best_state = None
    bad_epochs = 0
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        for idx in length_batches(train, batch_size, rng):
            batch = [train[k] for k in idx]
            ad.reset_tape()
            parser.store.zero_grad()
            loss = parser.loss(batch, training=True)
            ad.backward(loss)
            adam_step(state, params)
            total += float(loss.data) * len(batch)
            count += len(batch)
        ad.reset_tape()
        entry = {"epoch": epoch, "loss": round(total / count, 6)}
        if cfg.target_train_las is not None:
            entry["train_las"] = round(evaluate(parser, train).las, 4)
        if dev:
            rep = evaluate(parser, dev)
            entry["dev_uas"] = round(rep.uas, 4)
            entry["dev_las"] = round(rep.las, 4)
            if result.best_dev_las is None or rep.las > result.best_dev_las:
                result.best_dev_las, result.best_epoch = rep.las, epoch
                best_state = parser.store.state()
                bad_epochs = 0
            else:
                bad_epochs += 1
        else:
            result.best_epoch = epoch
        result.history.append(entry)
        if log is not None:
            log(json.dumps(entry, sort_keys=True))
        if cfg.target_train_las is not None and entry["train_las"] >= cfg.target_train_las:
            result.stopped = "target"
            if dev:  # keep the final parameters, which reached the target
                result.best_epoch, best_state = epoch, None
            break
        if dev and bad_epochs >= cfg.patience:
            result.stopped = "early-stop"
            break
    if best_state is not None:
        parser.store.load_state(best_state)
    return result
