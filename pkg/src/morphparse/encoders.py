"""Word representations, token embeddings, and the sentence encoder.

Every encoder kind maps a token to a vector of ``word_dim`` width; the
embedding of a token is that vector concatenated with a POS vector, and the
sentence bi-LSTM turns embeddings into contextual encodings.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .data import CASE_MISC_KEY, NO_CASE, NO_FEAT, PAD, ROOT_FORM, Sentence, Token, Vocabulary, extract_trigrams, oracle_sequence
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.layers import BiLSTM, Embedding, Highway, Linear, ParamStore

_MASK = -1e4  # added to invalid max-pool windows; tanh outputs are in [-1, 1]


def case_symbol(token: Token) -> str:
    return token.misc_value(CASE_MISC_KEY) or NO_CASE


class WordEncoder:
    """Computes ``e(w)`` for one of the five encoder kinds."""

    def __init__(self, store: ParamStore, config: ModelConfig, vocab: Vocabulary):
        self.config = config
        self.vocab = vocab
        self.kind = config.encoder
        self.dim = config.word_dim
        c = config
        if self.kind == "word":
            self.words = Embedding(store, "word", len(vocab.words), c.word_dim)
        elif self.kind == "char-cnn":
            self.units = Embedding(store, "cnn.char", len(vocab.chars), c.cnn_char_dim)
            self.filters = [
                Linear(store, f"cnn.conv{w}", w * c.cnn_char_dim, c.cnn_filters_per_width * w) for w in c.cnn_widths
            ]
            width = c.cnn_filters_per_width * sum(c.cnn_widths)
            self.highways = [Highway(store, f"cnn.highway{k}", width) for k in range(c.cnn_highway_layers)]
            self.project = Linear(store, "cnn.proj", width, c.word_dim) if width != c.word_dim else None
        else:
            unit_vocab = self.unit_vocab
            self.units = Embedding(store, f"{self.kind}.unit", len(unit_vocab), c.unit_dim)
            self.composer = BiLSTM(store, f"{self.kind}.bilstm", c.unit_dim, c.subword_hidden, c.subword_layers)

    @property
    def unit_vocab(self):
        return {
            "char-lstm": self.vocab.chars,
            "char-cnn": self.vocab.chars,
            "trigram-lstm": self.vocab.trigrams,
            "oracle": self.vocab.morphemes,
        }[self.kind]

    def units_of(self, token: Token) -> list[str]:
        if self.kind in ("char-lstm", "char-cnn"):
            units = list(token.form)
            if self.config.case_symbols:
                units.append(case_symbol(token))
            return units
        if self.kind == "trigram-lstm":
            return extract_trigrams(token.form)
        if self.kind == "oracle":
            return oracle_sequence(token, self.config.inflectional_only)
        raise ValueError(f"{self.kind} has no unit decomposition")

    def key_of(self, token: Token):
        if self.kind == "word":
            return self.vocab.words[token.form]
        return tuple(self.unit_vocab.lookup(self.units_of(token)))

    def _compose(self, keys: list, training: bool, rng) -> Tensor:
        """Representations for distinct keys, (U, word_dim)."""
        if self.kind == "word":
            return self.words(np.asarray(keys, dtype=np.int64))
        if any(len(k) == 0 for k in keys):
            raise RuntimeError("empty unit sequence")
        if self.kind == "char-cnn":
            return self._cnn(keys)
        lengths = np.array([len(k) for k in keys])
        ids = np.zeros((lengths.max(), len(keys)), dtype=np.int64)  # time-major, PAD = 0
        for b, k in enumerate(keys):
            ids[: len(k), b] = k
        return self.composer.final_states(self.units(ids), lengths)

    def _cnn(self, keys: list) -> Tensor:
        c = self.config
        max_w = max(c.cnn_widths)
        eff = np.array([max(len(k), max_w) for k in keys])
        L = eff.max()
        ids = np.zeros((len(keys), L), dtype=np.int64)
        for b, k in enumerate(keys):
            ids[b, : len(k)] = k
        # the pad symbol embeds to the zero vector
        emb = ad.mul(self.units(ids), (ids != 0)[..., None].astype(self.units.table.dtype))
        pooled = []
        for w, conv in zip(c.cnn_widths, self.filters):
            feat = ad.tanh(conv(ad.unfold(emb, w)))  # (N, L-w+1, F)
            starts = np.arange(L - w + 1)
            invalid = starts[None, :] + w > eff[:, None]
            mask = np.where(invalid, _MASK, 0.0).astype(feat.dtype)[..., None]
            pooled.append(ad.tmax(ad.add(feat, mask), axis=1))
        y = ad.concat(pooled, axis=-1)
        for hw in self.highways:
            y = hw(y)
        return self.project(y) if self.project is not None else y

    def represent(self, tokens: Sequence[Token], training: bool = False, rng=None) -> Tensor:
        """(N, word_dim) for a flat list of tokens; duplicates are composed once."""
        keys, index = [], {}
        rows = []
        for tok in tokens:
            k = self.key_of(tok)
            if k not in index:
                index[k] = len(keys)
                keys.append(k)
            rows.append(index[k])
        reps = self._compose(keys, training, rng)
        return ad.take_rows(reps, np.asarray(rows, dtype=np.int64))

    def represent_word(self, token: Token) -> Tensor:
        return self.represent([token])[0]


class Embedder:
    """``x_i = [e(w_i); p_i]`` for padded batches, ROOT at position 0."""

    def __init__(self, store: ParamStore, config: ModelConfig, vocab: Vocabulary):
        self.config = config
        self.vocab = vocab
        self.word = WordEncoder(store, config, vocab)
        self.root_word = store.add("root.word", (1, config.word_dim), "normal")
        self.pos = Embedding(store, "pos", len(vocab.upos), config.pos_dim)
        self.dim = config.word_dim + config.pos_dim

    def __call__(self, sentences: Sequence[Sentence], training: bool = False, rng=None) -> Tensor:
        """(B, T, word_dim + pos_dim) with T = longest sentence + 1; padding rows are zero."""
        B = len(sentences)
        T = max(len(s) for s in sentences) + 1
        flat = [tok for s in sentences for tok in s.tokens]
        reps = self.word.represent(flat, training, rng) if flat else None
        dtype = self.root_word.dtype
        parts = [self.root_word, Tensor(np.zeros((1, self.config.word_dim), dtype=dtype))]
        if reps is not None:
            parts.append(reps)
        table = ad.concat(parts, axis=0)
        idx = np.ones((B, T), dtype=np.int64)
        pos_ids = np.full((B, T), self.vocab.upos.stoi[PAD], dtype=np.int64)
        idx[:, 0] = 0
        pos_ids[:, 0] = self.vocab.upos.stoi[ROOT_FORM]
        k = 2
        for b, s in enumerate(sentences):
            n = len(s)
            idx[b, 1 : n + 1] = np.arange(k, k + n)
            pos_ids[b, 1 : n + 1] = self.vocab.upos.lookup(t.upos for t in s.tokens)
            k += n
        x = ad.concat([ad.take_rows(table, idx), self.pos(pos_ids)], axis=-1)
        return ad.dropout(x, self.config.dropout_embed, training, rng)


def embed(token: Token, pos: str, embedder: Embedder) -> Tensor:
    """Embedding of a single token given its POS tag."""
    sent = Sentence([replace(token, id=1, upos=pos)])
    return embedder([sent])[0, 1]


class SentenceEncoder:
    """Stacked bi-LSTM over token embeddings; ``h_i = [h_f_i; h_b_i]``."""

    def __init__(self, store: ParamStore, n_in: int, hidden: int, layers: int):
        self.net = BiLSTM(store, "sent", n_in, hidden, layers)
        self.dim = 2 * hidden

    def __call__(self, X: Tensor, lengths: Sequence[int], return_all: bool = False):
        """``X`` is batch-major (B, T, D); ``lengths`` count ROOT. Returns
        batch-major encodings, or one tensor per layer with ``return_all``."""
        Xt = ad.transpose(X, (1, 0, 2))
        outs = self.net.run(Xt, np.asarray(lengths), return_all=True)
        outs = [ad.transpose(o, (1, 0, 2)) for o in outs]
        return outs if return_all else outs[-1]


def feature_units(token: Token | None, inflectional_only: bool = False) -> list[str]:
    """Attention units of a candidate head: its morphemes, or NoFeat for ROOT."""
    if token is None:
        return [NO_FEAT]
    return oracle_sequence(token, inflectional_only)


def feature_key(unit: str, position: int) -> str:
    """Aggregation key of an attention unit: ``Lemma`` or the feature name."""
    if unit == NO_FEAT:
        return NO_FEAT
    if position == 0:
        return "Lemma"
    return unit.partition("=")[0]
