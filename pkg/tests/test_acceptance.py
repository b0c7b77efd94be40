"""Acceptance criteria. Each test prints one ``PASS``/``FAIL`` line with the
measured quantity, then asserts the criterion at its stated tolerance."""

import math
import time

import numpy as np
import pytest

from morphparse import synthetic
from morphparse.analysis import confusion_diff, score, split_eval, token_groups
from morphparse.archive import load_parser, save_parser
from morphparse.config import ENCODER_KINDS, ModelConfig, TrainConfig
from morphparse.data import Sentence, Token, build_vocab, read_conllu
from morphparse.decode import brute_force_max, decode_cle, tree_score
from morphparse.encoders import Embedder, SentenceEncoder, WordEncoder
from morphparse.morph import augment_with_case, most_frequent_baseline, run_probe
from morphparse.numerics import autodiff as ad
from morphparse.numerics.autodiff import Parameter, Tensor
from morphparse.numerics.gradcheck import check_gradients
from morphparse.numerics.layers import BiLSTM, Linear, ParamStore, lstm_params, lstm_step
from morphparse.parser import Parser, apply_trees, attend_morph, gate_combine, head_distribution, label_scores
from morphparse.training import evaluate, train_parser

from .conftest import DATA, tiny_config


@pytest.fixture
def verdict(capsys):
    def report(name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return report


def rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# --- 1. decoder ------------------------------------------------------------------------

def test_decoder_matches_exhaustive_search(verdict):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    mismatches = checked = 0
    for n in range(2, 6):
        for _ in range(200):
            s = rng.normal(0, 5, (n + 1, n + 1))
            heads = decode_cle(s)
            checked += 1
            mismatches += tree_score(s, heads) != brute_force_max(s)[0]
    elapsed = time.perf_counter() - t0
    verdict("decoder oracle equivalence", mismatches == 0 and elapsed < 60,
            f"{checked} matrices, {mismatches} mismatches, {elapsed:.1f}s (limit 60s)")


# --- 2. gradients ----------------------------------------------------------------------

THREE = Sentence([
    Token(1, "tam", "ta", "DET", "_", (("Gender", "Masc"),), 2, "det"),
    Token(2, "kolo", "kol", "NOUN", "_", (("Case", "Nom"), ("Number", "Sing")), 3, "nsubj"),
    Token(3, "pala", "pal", "VERB", "_", (), 0, "root"),
])


def gradient_suite(vocab) -> dict[str, float]:
    rng = np.random.default_rng(1)
    errs = {}

    store = ParamStore(seed=1)
    lin = Linear(store, "aff", 3, 4)
    x = rand(rng, 2, 3)
    w = rng.standard_normal((2, 4))
    errs["affine"] = max(check_gradients(lambda: ad.tsum(ad.mul(lin(x), w)), [x, *store]).values())

    store = ParamStore(seed=2)
    p = lstm_params(store, "cell", 3, 4)
    x, h0, c0 = rand(rng, 2, 3), rand(rng, 2, 4), rand(rng, 2, 4)

    def step():
        h, c = lstm_step(x, h0, c0, p)
        return ad.tsum(ad.mul(h, c))
    errs["lstm step"] = max(check_gradients(step, [x, h0, c0, *store]).values())

    store = ParamStore(seed=3)
    net = BiLSTM(store, "bi", 3, 2, layers=2)
    X = rand(rng, 4, 2, 3)
    w = rng.standard_normal((4, 2, 4)) * (np.arange(4)[:, None] < np.array([4, 2]))[..., None]
    errs["bi-lstm"] = max(check_gradients(lambda: ad.tsum(ad.mul(net.run(X, [4, 2]), w)), [X, *store]).values())

    store = ParamStore(seed=4)
    enc = WordEncoder(store, tiny_config(encoder="char-cnn"), vocab)
    w = rng.standard_normal((3, 6))
    errs["char-cnn stack"] = max(check_gradients(lambda: ad.tsum(ad.mul(enc.represent(THREE.tokens), w)), list(store)).values())

    z = rand(rng, 6)
    errs["softmax-ce"] = check_gradients(lambda: ad.softmax_cross_entropy(z, 2), [z])[0]

    h, F, V = rand(rng, 4), rand(rng, 3, 4), Parameter("V", rng.standard_normal((4, 4)))
    wm = rng.standard_normal(4)
    errs["attention"] = max(check_gradients(lambda: ad.tsum(ad.mul(attend_morph(h, F, V)[0], wm)), [h, F, V]).values())

    hj, m = rand(rng, 4), rand(rng, 4)
    W1, W2 = Parameter("W1", rng.standard_normal((4, 4))), Parameter("W2", rng.standard_normal((4, 4)))
    errs["gate"] = max(check_gradients(lambda: ad.tsum(ad.mul(gate_combine(hj, m, W1, W2), wm)), [hj, m, W1, W2]).values())

    for name, kw in (("full loss (word)", dict(encoder="word")), ("full loss (oracle + attention)", dict(encoder="oracle", attention=True))):
        parser = Parser(tiny_config(**kw), vocab, seed=2)
        wanted = [q for q in parser.store if not q.name.startswith(("word", "oracle.unit", "attn.feat"))]
        errs[name] = max(check_gradients(lambda: parser.loss([THREE]), wanted).values())
    return errs


def test_gradient_suite(verdict, toy_vocab):
    t0 = time.perf_counter()
    with ad.default_dtype(np.float64):
        ad.reset_tape()
        errs = gradient_suite(toy_vocab)
        ad.reset_tape()
    elapsed = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    verdict("gradient suite", errs[worst] < 1e-4 and elapsed < 120,
            f"max rel err {errs[worst]:.2e} ({worst}) < 1e-4, {elapsed:.1f}s (limit 120s); {detail}")


# --- 3. normalization ------------------------------------------------------------------

def test_normalization_suite(verdict):
    rng = np.random.default_rng(2)
    worst_sum = 0.0
    gate_ok = between_ok = True
    with ad.default_dtype(np.float64), ad.no_grad():
        for _ in range(200):
            n = int(rng.integers(1, 8))
            s = Tensor(rng.normal(0, 5, (n + 1, n + 1)))
            for i in range(1, n + 1):
                worst_sum = max(worst_sum, abs(head_distribution(s, i).data.sum() - 1))
            U, W, V = (Parameter(k, rng.normal(0, 3, sh)) for k, sh in (("U", (5, 4)), ("W", (5, 4)), ("V", (7, 5))))
            p = ad.softmax(label_scores(Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4)), U, W, V)).data
            worst_sum = max(worst_sum, abs(p.sum() - 1))
            K = int(rng.integers(1, 6))
            _, k = attend_morph(Tensor(rng.normal(size=4)), Tensor(rng.normal(size=(K, 4))), Parameter("Va", rng.normal(0, 3, (4, 4))))
            worst_sum = max(worst_sum, abs(k.data.sum() - 1))
            h, m = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))
            W1, W2 = Parameter("W1", rng.normal(0, 3, (4, 4))), Parameter("W2", rng.normal(0, 3, (4, 4)))
            g = ad.sigmoid(ad.add(ad.affine(h, W1), ad.affine(m, W2))).data
            z = gate_combine(h, m, W1, W2).data
            gate_ok &= bool(np.all((g > 0) & (g < 1)))
            between_ok &= bool(np.all(z >= np.minimum(h.data, m.data) - 1e-12) and np.all(z <= np.maximum(h.data, m.data) + 1e-12))
    verdict("normalization suite", worst_sum < 1e-6 and gate_ok and between_ok,
            f"max |sum - 1| = {worst_sum:.1e} (< 1e-6), gate in (0,1): {gate_ok}, z between h and m: {between_ok}")


# --- 4. overfitting -------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("kind", ENCODER_KINDS)
def test_overfit_small_treebank(verdict, kind):
    tb = synthetic.generate(50, seed=3)
    parser = Parser(ModelConfig(encoder=kind), build_vocab(tb), seed=1)
    t0 = time.perf_counter()
    res = train_parser(parser, tb, None, TrainConfig(epochs=200, target_train_las=99.0, seed=1))
    elapsed = time.perf_counter() - t0
    las = evaluate(parser, tb).las
    verdict(f"overfit {kind}", las >= 99.0 and elapsed < 600,
            f"train LAS {las:.2f} (>= 99) after {res.best_epoch} epochs, {elapsed:.0f}s (limit 600s)")


# --- 5. uniform loss ------------------------------------------------------------------

def test_uniform_loss_closed_form(verdict, toy, toy_vocab):
    worst = 0.0
    with ad.default_dtype(np.float64):
        for kind in ENCODER_KINDS:
            parser = Parser(ModelConfig(encoder=kind), toy_vocab, seed=0)
            parser.v_a.data[...] = 0.0
            parser.V_l.data[...] = 0.0
            losses = parser.sentence_losses(toy).data
            L = len(toy_vocab.labels)
            for s, loss in zip(toy, losses):
                n = len(s)
                worst = max(worst, abs(loss - n * (math.log(n) + math.log(L))))
            ad.reset_tape()
    verdict("uniform-loss closed form", worst < 1e-6, f"max deviation {worst:.1e} (< 1e-6) over {len(toy)} sentences x 5 encoders")


# --- 6 and 7. probing and case augmentation ---------------------------------------------

SYNC = dict(syncretic=True, balanced=True, iobj_p=0.0, nmod_p=0.0)


@pytest.fixture(scope="module")
def syncretic_runs():
    lex = synthetic.make_lexicon(5)
    train = synthetic.generate(400, seed=11, lexicon=lex, **SYNC)
    dev = synthetic.generate(100, seed=12, lexicon=lex, **SYNC)
    runs, t0 = {}, time.perf_counter()
    for name, enc, aug in (("char-lstm", "char-lstm", False), ("char-lstm + gold case", "char-lstm", True), ("oracle", "oracle", False)):
        tr, dv = (augment_with_case(train), augment_with_case(dev)) if aug else (train, dev)
        parser = Parser(ModelConfig(encoder=enc, case_symbols=aug), build_vocab(tr), seed=1)
        res = train_parser(parser, tr, dv, TrainConfig(epochs=8, seed=1))
        runs[name] = (parser, res.best_dev_las)
    return train, dev, runs, time.perf_counter() - t0


@pytest.mark.slow
def test_probe_information_preservation(verdict, syncretic_runs):
    train, dev, runs, _ = syncretic_runs
    rep = run_probe(runs["oracle"][0], train, dev, "Case", "embedding")
    base = most_frequent_baseline(train, dev, "Case")
    verdict("probe information preservation", rep.accuracy >= 99.0 and base <= 55.0,
            f"oracle-embedding Case probe {rep.accuracy:.2f} (>= 99), most-frequent baseline {base:.2f} (<= 55)")


@pytest.mark.slow
def test_case_augmentation_effect(verdict, syncretic_runs):
    _, _, runs, elapsed = syncretic_runs
    plain, gold, oracle = (runs[k][1] for k in ("char-lstm", "char-lstm + gold case", "oracle"))
    ok = gold - plain >= 10.0 and abs(oracle - gold) <= 1.0 and elapsed < 900
    verdict("case augmentation effect", ok,
            f"char-lstm {plain:.2f}, + gold case {gold:.2f} (gain {gold - plain:.2f} >= 10), "
            f"oracle {oracle:.2f} (gap {abs(oracle - gold):.2f} <= 1), {elapsed:.0f}s (limit 900s)")


# --- 8. UD trend ---------------------------------------------------------------------

@pytest.mark.slow
def test_ud_trend(verdict):
    tb = read_conllu(DATA / "cs_pud-gold.conllu")
    train, dev = tb[:800], tb[800:]
    vocab = build_vocab(train)
    las = {}
    for kind in ("word", "char-lstm"):
        parser = Parser(ModelConfig(encoder=kind), vocab, seed=1)
        las[kind] = train_parser(parser, train, dev, TrainConfig(epochs=10, seed=1, patience=10)).best_dev_las
    verdict("UD trend (Czech PUD, 800/200, 10 epochs)", las["char-lstm"] >= las["word"] - 0.5,
            f"char-lstm dev LAS {las['char-lstm']:.2f} >= word {las['word']:.2f} - 0.5")


# --- 9. determinism ---------------------------------------------------------------------

def test_determinism(verdict, tmp_path):
    tb = synthetic.generate(30, seed=5)
    train, dev = tb[:24], tb[24:]
    vocab = build_vocab(train)
    logs, blobs, parsers = [], [], []
    for k in range(2):
        parser = Parser(tiny_config(encoder="char-lstm"), vocab, seed=7)
        log = []
        train_parser(parser, train, dev, TrainConfig(epochs=3, seed=7), log=log.append)
        save_parser(parser, tmp_path / f"m{k}.mpa", {"seed": 7})
        logs.append("\n".join(log))
        blobs.append((tmp_path / f"m{k}.mpa").read_bytes())
        parsers.append(parser)
    loaded, _, _ = load_parser(tmp_path / "m0.mpa")
    before = [(t.heads, t.labels) for t in parsers[0].predict(dev)]
    after = [(t.heads, t.labels) for t in loaded.predict(dev)]
    verdict("determinism", logs[0] == logs[1] and blobs[0] == blobs[1] and before == after,
            f"logs identical: {logs[0] == logs[1]}, archives identical: {blobs[0] == blobs[1]}, "
            f"round-trip predictions identical: {before == after}")


# --- 10. analysis conservation ---------------------------------------------------------

def test_analysis_conservation(verdict, toy_vocab):
    gold = synthetic.generate(40, seed=8)
    train = synthetic.generate(40, seed=9)
    parser = Parser(tiny_config(), build_vocab(train), seed=3)
    pred = apply_trees(gold, parser.predict(gold))
    worst = 0.0
    overall = score(gold, pred).las
    for partition in ("oov", "ambiguity", "pos"):
        groups = token_groups(gold, train, partition, build_vocab(train))
        rep = split_eval(gold, pred, groups)
        counted = sum(g.tokens for g in rep.groups.values())
        if partition != "ambiguity":
            worst = max(worst, abs(sum(g.las * g.tokens for g in rep.groups.values()) / counted - overall))
        else:  # unseen forms are excluded, so compare with the score over the counted tokens
            kept = sum(g.label_correct for g in rep.groups.values()) / counted * 100.0
            worst = max(worst, abs(sum(g.las * g.tokens for g in rep.groups.values()) / counted - kept))
    cd = confusion_diff(gold, pred, pred)
    verdict("analysis conservation", worst < 1e-9 and not cd.diff.any(),
            f"max recombination error {worst:.1e} (< 1e-9), self confusion-diff all zero: {not cd.diff.any()}")


# --- 11. multitask gradient isolation ----------------------------------------------------

def test_mtl_gradient_isolation(verdict, toy, toy_vocab):
    with ad.default_dtype(np.float64):
        ad.reset_tape()
        parser = Parser(tiny_config(mtl=True, lstm_layers=4), toy_vocab, seed=3)
        parser.store.zero_grad()
        ad.backward(parser.case_loss(toy))
        grads = {q.name: (np.zeros_like(q.data) if q.grad is None else q.grad) for q in parser.store}
        ad.reset_tape()
    low = {k: max(float(np.abs(g).max()) for n, g in grads.items() if n.startswith(f"sent.l{k}.")) for k in (0, 1)}
    leaked = [n for n, g in grads.items() if n.startswith(("sent.l2.", "sent.l3.", "head.", "label.")) and np.any(g != 0)]
    verdict("MTL gradient isolation", all(v > 0 for v in low.values()) and not leaked,
            f"max |grad| layer 1 {low[0]:.1e}, layer 2 {low[1]:.1e} (nonzero); nonzero above layer 2: {leaked or 'none'}")
