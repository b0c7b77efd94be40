"""Small generated treebanks with controllable case marking.

The generated language has free argument order, so the grammatical function
of a noun is signalled only by its case. With ``syncretic=True`` nominative
and accusative share one suffix and verbs do not agree, which makes the
subject/object distinction unrecoverable from the surface string.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Sentence, Token, Treebank

CONSONANTS = "ptkmnlrsvd"
VOWELS = "aeiou"

CASE_SUFFIX = {"Nom": "o", "Acc": "em", "Dat": "ul", "Gen": "ik"}
SYNCRETIC_SUFFIX = {"Nom": "o", "Acc": "o", "Dat": "ul", "Gen": "ik"}
NUMBER_SUFFIX = {"Sing": "", "Plur": "s"}
ROLE_LABEL = {"Nom": "nsubj", "Acc": "obj", "Dat": "iobj"}


@dataclass
class Lexicon:
    nouns: list[tuple[str, str]]  # (lemma, gender)
    adjectives: list[str]
    verbs: list[str]
    determiners: dict[str, str]  # gender -> form


def _make_lemmas(rng: np.random.Generator, n: int, syllables: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        word = "".join(rng.choice(list(CONSONANTS)) + rng.choice(list(VOWELS)) for _ in range(syllables))
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


def make_lexicon(seed: int = 0, n_nouns: int = 24, n_adjectives: int = 8, n_verbs: int = 8) -> Lexicon:
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    nouns = [(lemma, "Masc" if k % 2 == 0 else "Fem") for k, lemma in enumerate(_make_lemmas(rng, n_nouns, 2, taken))]
    return Lexicon(
        nouns=nouns,
        adjectives=_make_lemmas(rng, n_adjectives, 3, taken),
        verbs=_make_lemmas(rng, n_verbs, 2, taken),
        determiners={"Masc": "ta", "Fem": "te"},
    )


def _noun_phrase(rng, lex: Lexicon, case: str, number: str, suffixes, head, label: str, noun=None,
                 adj_p: float = 0.4, det_p: float = 0.5) -> list[dict]:
    lemma, gender = noun if noun is not None else lex.nouns[rng.integers(len(lex.nouns))]
    ending = suffixes[case] + NUMBER_SUFFIX[number]
    feats = (("Case", case), ("Gender", gender), ("Number", number))
    main = dict(form=lemma + ending, lemma=lemma, upos="NOUN", feats=feats, label=label, head=head)
    words = []
    if rng.random() < det_p:
        det = lex.determiners[gender]
        words.append(dict(form=det, lemma=det, upos="DET", feats=(("Gender", gender), ("PronType", "Art")),
                          label="det", head=main))
    if rng.random() < adj_p:
        adj = lex.adjectives[rng.integers(len(lex.adjectives))]
        words.append(dict(form=adj + ending, lemma=adj, upos="ADJ", feats=feats, label="amod", head=main))
    words.append(main)
    return words


def _realise(phrases: list[list[dict]], order: list[int], verb: dict) -> Sentence:
    units: list[dict] = []
    for k in order:
        units.extend(phrases[k])
    units.append(dict(form=".", lemma=".", upos="PUNCT", feats=(), label="punct", head=verb))
    pos = {id(u): i for i, u in enumerate(units, start=1)}
    tokens = [
        Token(i, u["form"], u["lemma"], u["upos"], "_", tuple(u["feats"]),
              0 if u["head"] is None else pos[id(u["head"])], u["label"])
        for i, u in enumerate(units, start=1)
    ]
    return Sentence(tokens)


def generate(n_sentences: int, seed: int = 0, syncretic: bool = False, balanced: bool = False,
             lexicon: Lexicon | None = None, iobj_p: float = 0.3, nmod_p: float = 0.3) -> Treebank:
    """Generate ``n_sentences`` annotated sentences.

    With ``balanced`` sentences come in pairs that differ only in which of
    the two core nouns is the subject; under ``syncretic`` the two members of
    a pair are the same string, so each noun form is seen equally often as
    Nom and Acc.
    """
    rng = np.random.default_rng(seed)
    lex = lexicon or make_lexicon(seed)
    suffixes = SYNCRETIC_SUFFIX if syncretic else CASE_SUFFIX
    out: Treebank = []
    while len(out) < n_sentences:
        verb_lemma = lex.verbs[rng.integers(len(lex.verbs))]
        nouns = [lex.nouns[rng.integers(len(lex.nouns))] for _ in range(2)]
        numbers = [("Sing", "Plur")[rng.integers(2)] for _ in range(2)]
        with_iobj = rng.random() < iobj_p
        with_nmod = rng.random() < nmod_p
        state = rng.bit_generator.state
        for subj in ([0, 1] if balanced else [0]):
            if len(out) >= n_sentences:
                break
            # both members of a pair replay the same optional-word draws
            rng.bit_generator.state = state
            order = [int(k) for k in rng.permutation(3 + int(with_iobj))]
            agree = "" if syncretic else NUMBER_SUFFIX[numbers[subj]]
            verb = dict(form=verb_lemma + "a" + agree, lemma=verb_lemma, upos="VERB",
                        feats=() if syncretic else (("Number", numbers[subj]), ("Person", "3")),
                        label="root", head=None)
            phrases = [[verb]]
            for idx in (0, 1):
                case = "Nom" if idx == subj else "Acc"
                phrases.append(_noun_phrase(rng, lex, case, numbers[idx], suffixes, verb, ROLE_LABEL[case], noun=nouns[idx]))
            if with_iobj:
                phrases.append(_noun_phrase(rng, lex, "Dat", "Sing", suffixes, verb, "iobj"))
            if with_nmod:
                host = phrases[1 + int(rng.integers(2))]
                host.extend(_noun_phrase(rng, lex, "Gen", "Sing", suffixes, host[-1], "nmod", adj_p=0.0, det_p=0.0))
            out.append(_realise(phrases, order, verb))
    for k, sent in enumerate(out):
        sent.comments = [f"# sent_id = synth-{seed}-{k}"]
    return out
