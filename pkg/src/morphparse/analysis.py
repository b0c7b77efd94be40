"""Attachment scores, grouped breakdowns, label confusion differences and
attention aggregation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .data import NO_CASE, Sentence, Vocabulary, ambiguity_index, oov_flags

FOCUS_LABELS = ("root", "nsubj", "obj", "iobj", "nmod", "amod", "obl", "case")
OTHER = "other"
ATTENTION_LABELS = ("nsubj", "obj", "iobj")
PARTITIONS = ("oov", "ambiguity", "pos")


class AlignmentError(ValueError):
    pass


@dataclass
class EvalReport:
    tokens: int
    head_correct: int
    label_correct: int
    groups: dict[str, "EvalReport"] = field(default_factory=dict)

    @property
    def uas(self) -> float:
        return 100.0 * self.head_correct / self.tokens if self.tokens else 0.0

    @property
    def las(self) -> float:
        return 100.0 * self.label_correct / self.tokens if self.tokens else 0.0

    def rows(self, scope: str = "all") -> list[tuple[str, str, str, float]]:
        out = [(scope, "all", "UAS", self.uas), (scope, "all", "LAS", self.las), (scope, "all", "tokens", float(self.tokens))]
        for name, g in self.groups.items():
            out += [(scope, name, "UAS", g.uas), (scope, name, "LAS", g.las), (scope, name, "tokens", float(g.tokens))]
        return out


def _check_aligned(gold: Sequence[Sentence], pred: Sequence[Sentence]) -> None:
    if len(gold) != len(pred):
        raise AlignmentError(f"sentence counts differ: gold {len(gold)}, predicted {len(pred)}")
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise AlignmentError(f"sentence {k + 1} ({g.sent_id}): gold has {len(g)} tokens, predicted {len(p)}")
        for tg, tp in zip(g.tokens, p.tokens):
            if tg.form != tp.form:
                raise AlignmentError(f"sentence {k + 1} ({g.sent_id}) token {tg.id}: {tg.form!r} vs {tp.form!r}")


def _token_outcomes(gold, pred):
    for g, p in zip(gold, pred):
        for tg, tp in zip(g.tokens, p.tokens):
            head = tg.head == tp.head
            yield tg, head, head and tg.deprel == tp.deprel


def score(gold: Sequence[Sentence], pred: Sequence[Sentence]) -> EvalReport:
    _check_aligned(gold, pred)
    rep = EvalReport(0, 0, 0)
    for _, head, lab in _token_outcomes(gold, pred):
        rep.tokens += 1
        rep.head_correct += head
        rep.label_correct += lab
    return rep


def token_groups(gold: Sequence[Sentence], train: Sequence[Sentence], partition: str,
                 vocab: Vocabulary | None = None) -> list[list[str | None]]:
    """Group name per gold token (``None`` excludes the token)."""
    if partition == "oov":
        if vocab is None:
            raise ValueError("the OOV partition needs the training vocabulary")
        return [["oov" if f else "in-vocab" for f in flags] for flags in oov_flags(vocab, gold)]
    if partition == "ambiguity":
        index = ambiguity_index(train)
        return [[None if t.form not in index else ("ambiguous" if len(index[t.form]) > 1 else "unambiguous")
                 for t in s.tokens] for s in gold]
    if partition == "pos":
        return [[t.upos for t in s.tokens] for s in gold]
    raise ValueError(f"unknown partition {partition!r}; expected one of {PARTITIONS}")


def split_eval(gold: Sequence[Sentence], pred: Sequence[Sentence], groups: Sequence[Sequence[str | None]]) -> EvalReport:
    """Overall report plus one sub-report per non-empty group."""
    rep = score(gold, pred)
    acc: dict[str, EvalReport] = {}
    flat = [x for row in groups for x in row]
    for name, (_, head, lab) in zip(flat, _token_outcomes(gold, pred)):
        if name is None:
            continue
        g = acc.setdefault(name, EvalReport(0, 0, 0))
        g.tokens += 1
        g.head_correct += head
        g.label_correct += lab
    rep.groups = dict(sorted(acc.items()))
    return rep


@dataclass
class ConfusionDiff:
    labels: list[str]  # rows (gold) and columns (predicted)
    a: np.ndarray
    b: np.ndarray

    @property
    def diff(self) -> np.ndarray:
        return self.b - self.a


def confusion_diff(gold: Sequence[Sentence], pred_a: Sequence[Sentence], pred_b: Sequence[Sentence],
                   labels: Sequence[str] = FOCUS_LABELS) -> ConfusionDiff:
    """Label confusions of two models on tokens whose head both got right.

    Gold rows are restricted to ``labels``; predictions outside it go to an
    ``other`` column so both matrices keep equal row sums."""
    _check_aligned(gold, pred_a)
    _check_aligned(gold, pred_b)
    cols = list(labels) + [OTHER]
    idx = {l: k for k, l in enumerate(cols)}
    A = np.zeros((len(labels), len(cols)), dtype=np.int64)
    B = np.zeros_like(A)
    for g, pa, pb in zip(gold, pred_a, pred_b):
        for tg, ta, tb in zip(g.tokens, pa.tokens, pb.tokens):
            if tg.deprel not in idx or tg.deprel == OTHER or ta.head != tg.head or tb.head != tg.head:
                continue
            r = idx[tg.deprel]
            A[r, idx.get(ta.deprel, idx[OTHER])] += 1
            B[r, idx.get(tb.deprel, idx[OTHER])] += 1
    return ConfusionDiff(cols, A, B)


def aggregate_attention(records: Iterable, labels: Sequence[str] = ATTENTION_LABELS) -> dict[tuple[str, str], dict[str, float]]:
    """Mean attention weight per head-feature key, grouped by the dependent's
    case and its label, over records with correct head and label."""
    sums: dict[tuple[str, str], dict[str, float]] = defaultdict(lambda: defaultdict(float))
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for r in records:
        if r.gold_head != r.head or r.gold_label != r.pred_label or r.pred_label not in labels:
            continue
        key = (r.dependent_case or NO_CASE, r.pred_label)
        counts[key] += 1
        for feat, w in r.weights:
            sums[key][feat] += w
    return {
        key: {feat: total / counts[key] for feat, total in sorted(sums[key].items())}
        for key in sorted(sums)
    }


# --- writers -------------------------------------------------------------------

def write_metric_rows(rows: Iterable[tuple], out: TextIO) -> None:
    """Machine-readable report: one metric per row."""
    out.write("scope\tgroup\tmetric\tvalue\n")
    for scope, group, metric, value in rows:
        out.write(f"{scope}\t{group}\t{metric}\t{value:.4f}\n")


def format_report(rep: EvalReport, title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'group':<16}{'tokens':>8}{'UAS':>8}{'LAS':>8}")
    lines.append(f"{'all':<16}{rep.tokens:>8}{rep.uas:>8.2f}{rep.las:>8.2f}")
    for name, g in rep.groups.items():
        lines.append(f"{name:<16}{g.tokens:>8}{g.uas:>8.2f}{g.las:>8.2f}")
    return "\n".join(lines) + "\n"


def write_matrix(labels_rows: Sequence[str], labels_cols: Sequence[str], m: np.ndarray, out: TextIO) -> None:
    out.write("gold\\pred\t" + "\t".join(labels_cols) + "\n")
    for name, row in zip(labels_rows, m):
        out.write(name + "\t" + "\t".join(str(int(x)) for x in row) + "\n")


def write_attention_records(records: Iterable, out: TextIO) -> None:
    out.write("sent_id\tdependent\thead\tgold_label\tpred_label\tdependent_case\tweights\n")
    for r in records:
        weights = " ".join(f"{k}:{w:.6f}" for k, w in r.weights)
        out.write(f"{r.sent_id or r.sentence}\t{r.dependent}\t{r.head}\t{r.gold_label}\t{r.pred_label}\t{r.dependent_case}\t{weights}\n")


def write_attention_summary(agg: dict, out: TextIO) -> None:
    out.write("case\tlabel\tfeature\tweight\n")
    for (case, label), weights in agg.items():
        for feat, w in weights.items():
            out.write(f"{case}\t{label}\t{feat}\t{w:.6f}\n")
