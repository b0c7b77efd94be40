"""Graph-based dependency parser: head selection, labelling, CLE decoding,
the gated morphological-attention variant, and the multitask case head."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .data import NO_FEAT, PAD, Sentence, Vocabulary, case_of
from .decode import decode_cle
from .encoders import Embedder, SentenceEncoder, feature_key, feature_units
from .numerics import autodiff as ad
from .numerics.autodiff import Parameter, Tensor
from .numerics.layers import MLP, Embedding, ParamStore

_MASK = -1e9


@dataclass
class AttentionRecord:
    sentence: int
    sent_id: str | None
    dependent: int
    head: int
    gold_label: str | None
    pred_label: str
    gold_head: int | None
    dependent_case: str
    weights: list[tuple[str, float]]  # (feature key, weight) over the head's units


@dataclass
class ParseTree:
    heads: list[int]  # per token 1..n
    labels: list[str]
    attention: list[AttentionRecord] = field(default_factory=list)


# --- functional forms of the scoring equations -------------------------------

def association(h_i: Tensor, h_j: Tensor, U: Tensor, W: Tensor, v: Tensor) -> Tensor:
    """``v . tanh(U h_i + W h_j)`` (broadcasts over leading axes)."""
    pre = ad.tanh(ad.add(ad.affine(h_i, U), ad.affine(h_j, W)))
    return ad.tsum(ad.mul(pre, v), axis=-1)


def label_scores(h_i: Tensor, h_j: Tensor, U: Tensor, W: Tensor, V: Tensor) -> Tensor:
    """``V tanh(U h_i + W h_j)``: one score per label."""
    return ad.affine(ad.tanh(ad.add(ad.affine(h_i, U), ad.affine(h_j, W))), V)


def head_distribution(scores: Tensor, i: int) -> Tensor:
    """Softmax over candidate heads ``j != i`` of row ``i`` of an (n+1, n+1)
    score matrix; the excluded entry gets probability 0."""
    n1 = scores.shape[-1]
    mask = np.zeros(n1, dtype=scores.dtype)
    mask[i] = _MASK
    return ad.softmax(ad.add(scores[i], mask), axis=-1)


def attend_morph(h_i: Tensor, feats_j: Tensor, V: Tensor) -> tuple[Tensor, Tensor]:
    """Attention of dependent encoding ``h_i`` over the (K, D) feature
    embeddings of a candidate head. Returns ``(m_j, k)``."""
    k = ad.softmax(ad.einsum("kd,d->k", feats_j, ad.affine(h_i, V)), axis=-1)
    m = ad.einsum("k,kd->d", k, feats_j)
    return m, k


def gate_combine(h_j: Tensor, m_j: Tensor, W1: Tensor, W2: Tensor) -> Tensor:
    """``g * h_j + (1 - g) * m_j`` with ``g = sigmoid(W1 h_j + W2 m_j)``."""
    if h_j.shape[-1] != m_j.shape[-1]:
        raise ad.DimensionError(f"gate_combine: widths differ ({h_j.shape} vs {m_j.shape})")
    g = ad.sigmoid(ad.add(ad.affine(h_j, W1), ad.affine(m_j, W2)))
    return ad.add(ad.mul(g, h_j), ad.mul(ad.sub(1.0, g), m_j))


# --- batching ----------------------------------------------------------------

@dataclass
class Batch:
    sentences: Sequence[Sentence]
    lengths: np.ndarray  # tokens + ROOT
    heads: np.ndarray  # (B, T) gold heads, 0 on padding
    labels: np.ndarray  # (B, T) gold label ids, 0 on padding
    cases: np.ndarray  # (B, T) case class ids
    dep_b: np.ndarray  # flat indices of real dependents
    dep_i: np.ndarray
    head_mask: np.ndarray  # (B, T, T) additive mask

    @property
    def n_tokens(self) -> int:
        return len(self.dep_b)


def make_batch(sentences: Sequence[Sentence], vocab: Vocabulary, dtype, with_gold: bool = True) -> Batch:
    B = len(sentences)
    lengths = np.array([len(s) + 1 for s in sentences])
    T = int(lengths.max())
    heads = np.zeros((B, T), dtype=np.int64)
    labels = np.zeros((B, T), dtype=np.int64)
    cases = np.zeros((B, T), dtype=np.int64)
    dep_b, dep_i = [], []
    for b, s in enumerate(sentences):
        n = len(s)
        dep_b.extend([b] * n)
        dep_i.extend(range(1, n + 1))
        if with_gold:
            heads[b, 1 : n + 1] = [t.head for t in s.tokens]
            labels[b, 1 : n + 1] = [vocab.labels.stoi.get(t.deprel, 0) for t in s.tokens]
        cases[b, 1 : n + 1] = [vocab.cases.stoi.get(case_of(t), 0) for t in s.tokens]
    j = np.arange(T)
    valid = (j[None, None, :] < lengths[:, None, None]) & (j[None, :, None] != j[None, None, :])
    head_mask = np.where(valid, 0.0, _MASK).astype(dtype)
    return Batch(sentences, lengths, heads, labels, cases, np.array(dep_b), np.array(dep_i), head_mask)


class Parser:
    def __init__(self, config: ModelConfig, vocab: Vocabulary, seed: int = 0, dtype=None):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.seed = seed
        self.store = ParamStore(seed, dtype)
        s = self.store
        self.embedder = Embedder(s, config, vocab)
        self.encoder = SentenceEncoder(s, self.embedder.dim, config.lstm_hidden, config.lstm_layers)
        H, m = self.encoder.dim, config.mlp_hidden
        self.U_a = s.add("head.U", (m, H))
        self.W_a = s.add("head.W", (m, H))
        self.v_a = s.add("head.v", (m,))
        self.U_l = s.add("label.U", (m, H))
        self.W_l = s.add("label.W", (m, H))
        self.V_l = s.add("label.V", (len(vocab.labels), m))
        if config.attention:
            self.feat_emb = Embedding(s, "attn.feat", len(vocab.morphemes), H)
            self.V_attn = s.add("attn.V", (H, H))
            self.W_1 = s.add("attn.W1", (H, H))
            self.W_2 = s.add("attn.W2", (H, H))
        if config.mtl:
            self.case_mlp = MLP(s, "mtl.case", [H, config.case_hidden, len(vocab.cases)])
        self.rng = np.random.default_rng(seed + 7919)
        self.force_gate: float | None = None  # gate ablation: fixed g instead of the learned gate

    @property
    def dtype(self):
        return self.store.dtype

    def parameters(self) -> list[Parameter]:
        return list(self.store)

    # --- forward pieces ------------------------------------------------------
    def encode(self, sentences: Sequence[Sentence], training: bool = False):
        """Returns (embeddings x, per-layer encodings)."""
        X = self.embedder(sentences, training, self.rng)
        lengths = [len(s) + 1 for s in sentences]
        return X, self.encoder(X, lengths, return_all=True)

    def head_scores(self, H: Tensor, Z: Tensor | None = None) -> Tensor:
        """(B, T, T) association scores ``a[b, i, j]`` for dependent i, head j."""
        B, T, _ = H.shape
        m = self.config.mlp_hidden
        dep = ad.reshape(ad.affine(H, self.U_a), (B, T, 1, m))
        if Z is None:
            hd = ad.reshape(ad.affine(H, self.W_a), (B, 1, T, m))
        else:
            hd = ad.affine(Z, self.W_a)
        return ad.einsum("bijm,m->bij", ad.tanh(ad.add(dep, hd)), self.v_a)

    def label_logits(self, H: Tensor, G: Tensor) -> Tensor:
        """(B, T, |L|) label scores for dependents ``H`` with head vectors ``G``."""
        return label_scores(H, G, self.U_l, self.W_l, self.V_l)

    def feature_ids(self, sentences: Sequence[Sentence]) -> tuple[np.ndarray, np.ndarray, list[list[list[str]]]]:
        units = [[feature_units(None)] + [feature_units(t, self.config.inflectional_only) for t in s.tokens] for s in sentences]
        B = len(sentences)
        T = max(len(u) for u in units)
        K = max(len(x) for u in units for x in u)
        ids = np.full((B, T, K), self.vocab.morphemes.stoi[PAD], dtype=np.int64)
        mask = np.full((B, T, K), _MASK, dtype=self.dtype)
        ids[:, :, 0] = self.vocab.morphemes.stoi[NO_FEAT]
        mask[:, :, 0] = 0.0
        for b, u in enumerate(units):
            for j, x in enumerate(u):
                ids[b, j, : len(x)] = self.vocab.morphemes.lookup(x)
                mask[b, j, : len(x)] = 0.0
        return ids, mask, units

    def attend(self, H: Tensor, sentences: Sequence[Sentence]) -> tuple[Tensor, Tensor, list]:
        """Gated morphological attention for every (dependent i, head j) pair.

        Returns ``Z`` (B, T, T, D) with ``Z[b, i, j] = z_j`` as seen from i,
        the attention weights (B, T, T, K), and the head units."""
        B, T, D = H.shape
        ids, kmask, units = self.feature_ids(sentences)
        F = self.feat_emb(ids)  # (B, T, K, D)
        VH = ad.affine(H, self.V_attn)
        logits = ad.add(ad.einsum("bjkd,bid->bijk", F, VH), kmask[:, None, :, :])
        A = ad.softmax(logits, axis=-1)
        M = ad.einsum("bijk,bjkd->bijd", A, F)
        Hj = ad.reshape(H, (B, 1, T, D))
        if self.force_gate is None:
            g = ad.sigmoid(ad.add(ad.affine(Hj, self.W_1), ad.affine(M, self.W_2)))
        else:
            g = Tensor(np.full(M.shape, self.force_gate, dtype=M.dtype))
        Z = ad.add(ad.mul(g, Hj), ad.mul(ad.sub(1.0, g), M))
        return Z, A, units

    def case_logits(self, layers: list[Tensor], training: bool = False) -> Tensor:
        """MTL case scores from the output of the lower encoder block."""
        return self.case_mlp(layers[self.config.mtl_case_layer - 1], training, self.rng)

    def mtl_forward(self, sentences: Sequence[Sentence], training: bool = False) -> tuple[Tensor, Tensor]:
        """(case logits from the lower block, head scores from the top layer)."""
        if not self.config.mtl:
            raise RuntimeError("mtl_forward needs an MTL parser")
        _, layers = self.encode(sentences, training)
        return self.case_logits(layers, training), self.head_scores(layers[-1])

    # --- losses --------------------------------------------------------------
    def _score_gold(self, batch: Batch, H: Tensor, training: bool):
        B = len(batch.sentences)
        bidx = np.arange(B)[:, None]
        if self.config.attention:
            Z, _, _ = self.attend(H, batch.sentences)
            S = self.head_scores(H, Z)
            T = H.shape[1]
            G = Z[bidx, np.arange(T)[None, :], batch.heads]
        else:
            S = self.head_scores(H)
            G = H[bidx, batch.heads]
        return S, G

    def token_losses(self, sentences: Sequence[Sentence], training: bool = False) -> dict[str, Tensor]:
        """Per-token negative log-likelihoods (flat over real dependents)."""
        batch = make_batch(sentences, self.vocab, self.dtype)
        _, layers = self.encode(sentences, training)
        H = ad.dropout(layers[-1], self.config.dropout_head, training, self.rng)
        S, G = self._score_gold(batch, H, training)
        logp_head = ad.log_softmax(ad.add(S, batch.head_mask), axis=-1)
        head_nll = ad.mul(logp_head[batch.dep_b, batch.dep_i, batch.heads[batch.dep_b, batch.dep_i]], -1.0)
        logp_lab = ad.log_softmax(self.label_logits(H, G), axis=-1)
        label_nll = ad.mul(logp_lab[batch.dep_b, batch.dep_i, batch.labels[batch.dep_b, batch.dep_i]], -1.0)
        out = {"head": head_nll, "label": label_nll, "batch": batch}
        if self.config.mtl:
            logp_case = ad.log_softmax(self.case_logits(layers, training), axis=-1)
            out["case"] = ad.mul(logp_case[batch.dep_b, batch.dep_i, batch.cases[batch.dep_b, batch.dep_i]], -1.0)
        return out

    def sentence_losses(self, sentences: Sequence[Sentence], training: bool = False, include_case: bool = True) -> Tensor:
        """Summed head + label (+ case for MTL) loss per sentence, shape (B,)."""
        parts = self.token_losses(sentences, training)
        batch: Batch = parts["batch"]
        per_token = ad.add(parts["head"], parts["label"])
        if "case" in parts and include_case:
            per_token = ad.add(per_token, parts["case"])
        seg = np.zeros((len(sentences), batch.n_tokens), dtype=self.dtype)
        seg[batch.dep_b, np.arange(batch.n_tokens)] = 1.0
        return ad.einsum("bn,n->b", Tensor(seg), per_token)

    def loss(self, sentences: Sequence[Sentence], training: bool = False) -> Tensor:
        """Mean per-sentence loss over a batch."""
        return ad.mean(self.sentence_losses(sentences, training))

    def case_loss(self, sentences: Sequence[Sentence], training: bool = False) -> Tensor:
        if not self.config.mtl:
            raise RuntimeError("case loss needs an MTL parser")
        return ad.tsum(self.token_losses(sentences, training)["case"])

    # --- inference -----------------------------------------------------------
    def predict(self, sentences: Sequence[Sentence], batch_size: int = 32) -> list[ParseTree]:
        out: list[ParseTree] = []
        with ad.no_grad():
            for start in range(0, len(sentences), batch_size):
                chunk = sentences[start : start + batch_size]
                out.extend(self._predict_chunk(chunk, start))
        return out

    def _predict_chunk(self, sentences: Sequence[Sentence], offset: int) -> list[ParseTree]:
        batch = make_batch(sentences, self.vocab, self.dtype, with_gold=False)
        _, layers = self.encode(sentences, training=False)
        H = layers[-1]
        A = units = None
        if self.config.attention:
            Z, A, units = self.attend(H, sentences)
            S = self.head_scores(H, Z).data
        else:
            S = self.head_scores(H).data
        B, T = len(sentences), H.shape[1]
        pred_heads = np.zeros((B, T), dtype=np.int64)
        for b, s in enumerate(sentences):
            n = len(s)
            pred_heads[b, : n + 1] = decode_cle(S[b, : n + 1, : n + 1], self.config.single_root)
        bidx = np.arange(B)[:, None]
        if self.config.attention:
            G = Z[bidx, np.arange(T)[None, :], pred_heads]
        else:
            G = H[bidx, pred_heads]
        label_ids = np.argmax(self.label_logits(H, G).data, axis=-1)
        trees = []
        for b, s in enumerate(sentences):
            n = len(s)
            heads = [int(h) for h in pred_heads[b, 1 : n + 1]]
            labels = [self.vocab.labels.itos[k] for k in label_ids[b, 1 : n + 1]]
            tree = ParseTree(heads, labels)
            if A is not None:
                for i, (h, lab) in enumerate(zip(heads, labels), start=1):
                    head_units = units[b][h]
                    w = A.data[b, i, h, : len(head_units)]
                    tok = s.tokens[i - 1]
                    tree.attention.append(
                        AttentionRecord(
                            sentence=offset + b, sent_id=s.sent_id, dependent=i, head=h,
                            gold_label=tok.deprel, pred_label=lab, gold_head=tok.head,
                            dependent_case=tok.feat("Case") or "NoCase",
                            weights=[(feature_key(u, k), float(x)) for k, (u, x) in enumerate(zip(head_units, w))],
                        )
                    )
            trees.append(tree)
        return trees

    def predict_case(self, sentences: Sequence[Sentence], batch_size: int = 32) -> list[list[str]]:
        """MTL case predictions, one value (or NoCase) per token."""
        out = []
        with ad.no_grad():
            for start in range(0, len(sentences), batch_size):
                chunk = sentences[start : start + batch_size]
                _, layers = self.encode(chunk)
                ids = np.argmax(self.case_logits(layers).data, axis=-1)
                out.extend([[self.vocab.cases.itos[k] for k in ids[b, 1 : len(s) + 1]] for b, s in enumerate(chunk)])
        return out


def apply_trees(sentences: Sequence[Sentence], trees: Sequence[ParseTree]) -> list[Sentence]:
    """Copies of ``sentences`` with heads and labels replaced by predictions."""
    return [s.with_tree(t.heads, t.labels) for s, t in zip(sentences, trees)]
