"""Probing classifiers, the most-frequent-value baseline, the case tagger and
case augmentation of treebanks."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .data import CASE_MISC_KEY, NO_CASE, Sentence, Vocabulary, build_vocab, case_of, format_feats
from .encoders import Embedder, SentenceEncoder
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.layers import MLP, ParamStore
from .numerics.optim import AdamState, adam_step
from .parser import Parser
from .training import length_batches

PROBE_FEATURES = ("Case", "Gender", "Number", "All")
PROBE_SOURCES = ("embedding", "encoder")


class DegenerateDataError(ValueError):
    pass


def feature_value(token, feature: str) -> str | None:
    """Probe target of a token, ``None`` when the token is not annotated.
    ``All`` is the full feature bundle (without the lemma)."""
    if feature == "All":
        return format_feats(token.feats) if token.feats else None
    return token.feat(feature)


# --- probing ---------------------------------------------------------------------

@dataclass
class ProbeDataset:
    X: np.ndarray  # (N, D)
    y: list[str]
    forms: list[str]
    feature: str
    source: str

    def __len__(self) -> int:
        return len(self.y)


def extract_representations(parser: Parser, sentences: Sequence[Sentence], source: str,
                            batch_size: int = 32) -> list[np.ndarray]:
    """Per-sentence (n, D) arrays of embeddings x_i or encodings h_i, ROOT dropped."""
    if source not in PROBE_SOURCES:
        raise ValueError(f"source must be one of {PROBE_SOURCES}")
    out = []
    with ad.no_grad():
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            X, layers = parser.encode(chunk, training=False)
            rep = (X if source == "embedding" else layers[-1]).data
            out.extend(rep[b, 1 : len(s) + 1].copy() for b, s in enumerate(chunk))
    return out


def probe_dataset(parser: Parser, sentences: Sequence[Sentence], feature: str, source: str) -> ProbeDataset:
    if feature not in PROBE_FEATURES:
        raise ValueError(f"feature must be one of {PROBE_FEATURES}")
    reps = extract_representations(parser, sentences, source)
    X, y, forms = [], [], []
    for s, r in zip(sentences, reps):
        for k, tok in enumerate(s.tokens):
            value = feature_value(tok, feature)
            if value is not None:
                X.append(r[k])
                y.append(value)
                forms.append(tok.form)
    width = reps[0].shape[1] if reps else 0
    return ProbeDataset(np.array(X).reshape(len(X), width), y, forms, feature, source)


class ProbeClassifier:
    """One hidden ReLU layer over frozen representations."""

    def __init__(self, n_in: int, classes: Sequence[str], hidden: int = 100, seed: int = 0):
        self.classes = list(classes)
        self.index = {c: k for k, c in enumerate(self.classes)}
        self.store = ParamStore(seed)
        self.net = MLP(self.store, "probe", [n_in, hidden, len(self.classes)])

    def logits(self, X: np.ndarray) -> Tensor:
        return self.net(Tensor(X.astype(self.store.dtype)))

    def predict(self, X: np.ndarray) -> list[str]:
        with ad.no_grad():
            ids = np.argmax(self.logits(X).data, axis=-1)
        return [self.classes[k] for k in ids]

    def accuracy(self, data: ProbeDataset) -> float:
        if len(data) == 0:
            return float("nan")
        pred = self.predict(data.X)
        return 100.0 * sum(p == g for p, g in zip(pred, data.y)) / len(data)


def probe_train(data: ProbeDataset, epochs: int = 30, batch_size: int = 64, lr: float = 0.001,
                hidden: int = 100, seed: int = 0) -> ProbeClassifier:
    if len(data) == 0:
        raise DegenerateDataError("probe dataset is empty")
    classes = sorted(set(data.y))
    if len(classes) < 2:
        raise DegenerateDataError(f"probe needs at least two classes, got {classes}")
    clf = ProbeClassifier(data.X.shape[1], classes, hidden, seed)
    rng = np.random.default_rng(seed)
    y = np.array([clf.index[v] for v in data.y])
    state = AdamState(lr=lr, clip=5.0)
    params = list(clf.store)
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for k in range(0, len(y), batch_size):
            idx = order[k : k + batch_size]
            ad.reset_tape()
            clf.store.zero_grad()
            logp = ad.log_softmax(clf.logits(data.X[idx]), axis=-1)
            loss = ad.mul(ad.mean(logp[np.arange(len(idx)), y[idx]]), -1.0)
            ad.backward(loss)
            adam_step(state, params)
    ad.reset_tape()
    return clf


def most_frequent_baseline(train: Sequence[Sentence], evaluation: Sequence[Sentence], feature: str) -> float:
    """Accuracy of predicting each form's most frequent training value.
    Ties go to the lexicographically smallest value; unseen forms get the
    globally most frequent value."""
    per_form: dict[str, Counter] = defaultdict(Counter)
    overall: Counter = Counter()
    for s in train:
        for t in s.tokens:
            v = feature_value(t, feature)
            if v is not None:
                per_form[t.form][v] += 1
                overall[v] += 1
    if not overall:
        raise DegenerateDataError(f"no training token carries {feature}")

    def best(counter: Counter) -> str:
        return min(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    fallback = best(overall)
    choice = {form: best(c) for form, c in per_form.items()}
    correct = total = 0
    for s in evaluation:
        for t in s.tokens:
            v = feature_value(t, feature)
            if v is None:
                continue
            total += 1
            correct += choice.get(t.form, fallback) == v
    if total == 0:
        raise DegenerateDataError(f"no evaluation token carries {feature}")
    return 100.0 * correct / total


@dataclass
class ProbeReport:
    feature: str
    source: str
    accuracy: float
    baseline: float
    train_items: int
    eval_items: int


def run_probe(parser: Parser, train: Sequence[Sentence], evaluation: Sequence[Sentence], feature: str,
              source: str, seed: int = 0, epochs: int = 30) -> ProbeReport:
    """Probe trained on training tokens and scored on held-out tokens, next to
    the most-frequent baseline on the same splits."""
    tr = probe_dataset(parser, train, feature, source)
    ev = probe_dataset(parser, evaluation, feature, source)
    if len(tr) == 0 or len(ev) == 0:
        raise DegenerateDataError(f"feature {feature} is not annotated in both splits")
    clf = probe_train(tr, epochs=epochs, seed=seed)
    return ProbeReport(feature, source, clf.accuracy(ev), most_frequent_baseline(train, evaluation, feature), len(tr), len(ev))


# --- case tagger -------------------------------------------------------------------

def tagger_config(**overrides) -> ModelConfig:
    return ModelConfig(encoder="char-lstm", **overrides)


class TaggerModel:
    """Sentence bi-LSTM over char-lstm word embeddings with a two-layer ReLU
    classifier over case values (plus NoCase). Owns its parameters."""

    def __init__(self, vocab: Vocabulary, config: ModelConfig | None = None, hidden: int = 100,
                 dropout: float = 0.2, seed: int = 0):
        self.config = config or tagger_config()
        self.config.validate()
        self.vocab = vocab
        self.store = ParamStore(seed)
        self.embedder = Embedder(self.store, self.config, vocab)
        self.encoder = SentenceEncoder(self.store, self.embedder.dim, self.config.lstm_hidden, self.config.lstm_layers)
        self.head = MLP(self.store, "tagger", [self.encoder.dim, hidden, hidden, len(vocab.cases)], dropout)
        self.rng = np.random.default_rng(seed + 104729)

    def logits(self, sentences: Sequence[Sentence], training: bool = False) -> Tensor:
        X = self.embedder(sentences, training, self.rng)
        H = self.encoder(X, [len(s) + 1 for s in sentences])
        return self.head(H, training, self.rng)

    def loss(self, sentences: Sequence[Sentence], training: bool = False) -> Tensor:
        b, i, y = _case_targets(sentences, self.vocab)
        logp = ad.log_softmax(self.logits(sentences, training), axis=-1)
        return ad.mul(ad.mean(logp[b, i, y]), -1.0)

    def predict(self, sentences: Sequence[Sentence], batch_size: int = 32) -> list[list[str]]:
        out = []
        with ad.no_grad():
            for start in range(0, len(sentences), batch_size):
                chunk = sentences[start : start + batch_size]
                ids = np.argmax(self.logits(chunk).data, axis=-1)
                out.extend([[self.vocab.cases.itos[k] for k in ids[b, 1 : len(s) + 1]] for b, s in enumerate(chunk)])
        return out

    def accuracy(self, sentences: Sequence[Sentence]) -> float:
        return case_accuracy(sentences, self.predict(sentences))


def _case_targets(sentences, vocab):
    b, i, y = [], [], []
    for k, s in enumerate(sentences):
        for t in s.tokens:
            b.append(k)
            i.append(t.id)
            y.append(vocab.cases.stoi.get(case_of(t), 0))
    return np.array(b), np.array(i), np.array(y)


def case_accuracy(gold: Sequence[Sentence], predicted: Sequence[Sequence[str]]) -> float:
    """Accuracy over tokens annotated with Case."""
    correct = total = 0
    for s, p in zip(gold, predicted):
        for t, v in zip(s.tokens, p):
            if t.feat("Case") is not None:
                total += 1
                correct += v == t.feat("Case")
    return 100.0 * correct / total if total else float("nan")


@dataclass
class TaggerResult:
    model: TaggerModel
    best_epoch: int
    best_dev_accuracy: float | None
    history: list[dict]


def tagger_train(train: Sequence[Sentence], dev: Sequence[Sentence] | None = None, epochs: int = 20,
                 fraction: float = 0.75, batch_size: int = 32, lr: float = 0.001, clip: float = 5.0,
                 patience: int = 5, dropout: float = 0.2, seed: int = 0, config: ModelConfig | None = None,
                 log=None) -> TaggerResult:
    """Train on the first ``fraction`` of the sentences; early stopping on dev
    case accuracy when a dev set is given."""
    if not any(t.feat("Case") is not None for s in train for t in s.tokens):
        raise DegenerateDataError("no case-annotated tokens in the training data")
    part = list(train[: max(1, int(len(train) * fraction))])
    vocab = build_vocab(part)
    if len(vocab.cases) < 2:
        raise DegenerateDataError("the tagger training portion has no case-annotated tokens")
    model = TaggerModel(vocab, config, dropout=dropout, seed=seed)
    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr, clip=clip)
    params = list(model.store)
    history, best, best_epoch, best_state, bad = [], None, 0, None, 0
    for epoch in range(1, epochs + 1):
        total = 0.0
        for idx in length_batches(part, batch_size, rng):
            batch = [part[k] for k in idx]
            ad.reset_tape()
            model.store.zero_grad()
            loss = model.loss(batch, training=True)
            ad.backward(loss)
            adam_step(state, params)
            total += float(loss.data) * len(batch)
        ad.reset_tape()
        entry = {"epoch": epoch, "loss": round(total / len(part), 6)}
        if dev:
            acc = model.accuracy(dev)
            entry["dev_case_acc"] = round(acc, 4)
            if best is None or acc > best:
                best, best_epoch, best_state, bad = acc, epoch, model.store.state(), 0
            else:
                bad += 1
        else:
            best_epoch = epoch
        history.append(entry)
        if log is not None:
            log(entry)
        if dev and bad >= patience:
            break
    if best_state is not None:
        model.store.load_state(best_state)
    return TaggerResult(model, best_epoch, best, history)


def augment_with_case(treebank: Sequence[Sentence], source: "str | TaggerModel" = "gold") -> list[Sentence]:
    """Copy of ``treebank`` with one case symbol per token in MISC (``AugCase``),
    taken from gold FEATS or from a tagger."""
    if isinstance(source, str):
        if source != "gold":
            raise ValueError("case source must be 'gold' or a TaggerModel")
        values = [[case_of(t) for t in s.tokens] for s in treebank]
    else:
        values = source.predict(treebank)
    return [
        replace(s, tokens=[t.with_misc(CASE_MISC_KEY, v or NO_CASE) for t, v in zip(s.tokens, vs)])
        for s, vs in zip(treebank, values)
    ]
