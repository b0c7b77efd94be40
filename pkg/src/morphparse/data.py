"""CoNLL-U ingestion, preprocessing, vocabularies, and derived token indices."""

from __future__ import annotations

import io
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

ROOT_FORM = "<ROOT>"
UNK = "<UNK>"
PAD = "<PAD>"
NO_CASE = "NoCase"
NO_FEAT = "NoFeat"
CASE_MISC_KEY = "AugCase"

# UD universal inflectional features (nominal and verbal); lexical features
# such as PronType, NumType, Poss, Reflex are excluded when restricting.
INFLECTIONAL_FEATURES = frozenset(
    {
        "Gender", "Animacy", "NounClass", "Number", "Case", "Definite", "Degree",
        "VerbForm", "Mood", "Tense", "Aspect", "Voice", "Evident", "Polarity",
        "Person", "Polite", "Clusivity",
    }
)


class ConlluError(ValueError):
    """Malformed CoNLL-U input."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if line_no is not None else message)


class TreeError(ValueError):
    """Gold annotation does not form a rooted tree."""


Feats = tuple[tuple[str, str], ...]


def parse_feats(text: str) -> Feats:
    if text in ("_", ""):
        return ()
    out = []
    for item in text.split("|"):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"bad feature {item!r}")
        out.append((key, value))
    return tuple(out)


def format_feats(feats: Feats) -> str:
    return "|".join(f"{k}={v}" for k, v in feats) if feats else "_"


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: Feats = ()
    head: int | None = None
    deprel: str | None = None
    deps: str = "_"
    misc: tuple[str, ...] = ()

    def feat(self, key: str) -> str | None:
        for k, v in self.feats:
            if k == key:
                return v
        return None

    def misc_value(self, key: str) -> str | None:
        for item in self.misc:
            k, sep, v = item.partition("=")
            if sep and k == key:
                return v
        return None

    def with_misc(self, key: str, value: str) -> "Token":
        items = [m for m in self.misc if m.partition("=")[0] != key]
        items.append(f"{key}={value}")
        return replace(self, misc=tuple(items))


@dataclass
class Sentence:
    tokens: list[Token]
    comments: list[str] = field(default_factory=list)
    # multiword ranges and empty nodes, kept verbatim with the number of
    # syntactic words preceding them so output can reproduce line order
    extra_lines: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list[int | None]:
        return [t.head for t in self.tokens]

    @property
    def labels(self) -> list[str | None]:
        return [t.deprel for t in self.tokens]

    @property
    def sent_id(self) -> str | None:
        for c in self.comments:
            body = c.lstrip("#").strip()
            if body.startswith("sent_id"):
                return body.partition("=")[2].strip()
        return None

    def with_tree(self, heads: Sequence[int], labels: Sequence[str]) -> "Sentence":
        toks = [replace(t, head=int(h), deprel=l) for t, h, l in zip(self.tokens, heads, labels)]
        return Sentence(toks, list(self.comments), list(self.extra_lines))


Treebank = list[Sentence]


def check_tree(heads: Sequence[int]) -> None:
    """Raise TreeError unless ``heads`` (1-based positions, 0 = ROOT) form a tree."""
    n = len(heads)
    for i, h in enumerate(heads, start=1):
        if not 0 <= h <= n:
            raise TreeError(f"token {i} has head {h} outside 0..{n}")
        if h == i:
            raise TreeError(f"token {i} is its own head")
    state = [0] * (n + 1)  # 0 unseen, 1 on stack, 2 reaches root
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if state[node] == 1:
            raise TreeError(f"cycle through token {node}")
        for p in path:
            state[p] = 2


def _parse_token(cols: list[str], line_no: int) -> Token:
    try:
        tid = int(cols[0])
    except ValueError:
        raise ConlluError(f"bad token id {cols[0]!r}", line_no) from None
    head: int | None
    if cols[6] == "_":
        head = None
    else:
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluError(f"bad head {cols[6]!r}", line_no) from None
    deprel = None if cols[7] == "_" else cols[7].split(":", 1)[0]
    try:
        feats = parse_feats(cols[5])
    except ValueError as err:
        raise ConlluError(str(err), line_no) from None
    misc = () if cols[9] == "_" else tuple(cols[9].split("|"))
    return Token(tid, cols[1], cols[2], cols[3], cols[4], feats, head, deprel, cols[8], misc)


def _finish(tokens: list[Token], comments, extra, first_line: int) -> Sentence:
    sent = Sentence(tokens, comments, extra)
    for k, t in enumerate(tokens, start=1):
        if t.id != k:
            raise ConlluError(f"token ids not consecutive (expected {k}, got {t.id})", first_line)
    heads = sent.heads
    if all(h is not None for h in heads):
        try:
            check_tree(heads)  # type: ignore[arg-type]
        except TreeError as err:
            name = sent.sent_id or f"starting at line {first_line}"
            raise TreeError(f"sentence {name}: {err}") from None
    elif any(h is not None for h in heads):
        raise ConlluError("sentence mixes annotated and missing heads", first_line)
    return sent


def parse_conllu(stream: IO[str] | str | Iterable[str]) -> Treebank:
    """Read CoNLL-U. Range lines and empty nodes are set aside, comments kept,
    and dependency labels truncated at the first ':'."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    treebank: Treebank = []
    tokens: list[Token] = []
    comments: list[str] = []
    extra: list[tuple[int, str]] = []
    first = 1
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if tokens:
                treebank.append(_finish(tokens, comments, extra, first))
            elif comments or extra:
                raise ConlluError("sentence without syntactic words", line_no)
            tokens, comments, extra = [], [], []
            first = line_no + 1
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"expected 10 tab-separated columns, got {len(cols)}", line_no)
        if "-" in cols[0] or "." in cols[0]:
            extra.append((len(tokens), line))
            continue
        tokens.append(_parse_token(cols, line_no))
    if tokens:
        treebank.append(_finish(tokens, comments, extra, first))
    return treebank


def read_conllu(path: str | Path) -> Treebank:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f)


def format_token(t: Token) -> str:
    cols = [
        str(t.id), t.form, t.lemma, t.upos, t.xpos, format_feats(t.feats),
        "_" if t.head is None else str(t.head),
        "_" if t.deprel is None else t.deprel,
        t.deps, "|".join(t.misc) if t.misc else "_",
    ]
    return "\t".join(cols)


def format_sentence(sent: Sentence) -> str:
    lines = list(sent.comments)
    pending = list(sent.extra_lines)
    for k, tok in enumerate(sent.tokens):
        while pending and pending[0][0] == k:
            lines.append(pending.pop(0)[1])
        lines.append(format_token(tok))
    lines.extend(line for _, line in pending)
    return "\n".join(lines) + "\n"


def write_conllu(treebank: Iterable[Sentence], stream: IO[str]) -> None:
    for sent in treebank:
        stream.write(format_sentence(sent))
        stream.write("\n")


def to_conllu(treebank: Iterable[Sentence]) -> str:
    buf = io.StringIO()
    write_conllu(treebank, buf)
    return buf.getvalue()


# --- derived units -----------------------------------------------------------

def extract_trigrams(form: str) -> list[str]:
    """Boundary-padded character trigrams: 'cat' -> ['^ca', 'cat', 'at$']."""
    padded = f"^{form}$"
    return [padded[k : k + 3] for k in range(max(1, len(padded) - 2))]


def restrict_feats(feats: Feats, inflectional_only: bool) -> Feats:
    if not inflectional_only:
        return feats
    return tuple((k, v) for k, v in feats if k in INFLECTIONAL_FEATURES)


def oracle_sequence(token: Token, inflectional_only: bool = False) -> list[str]:
    """Lemma followed by ``Key=Value`` feature symbols in FEATS order."""
    lemma = token.lemma if token.lemma not in ("_", "") else token.form
    return [lemma] + [f"{k}={v}" for k, v in restrict_feats(token.feats, inflectional_only)]


@dataclass(frozen=True)
class MorphAnalysis:
    lemma: str
    features: Feats


def analysis_of(token: Token, inflectional_only: bool = False) -> MorphAnalysis:
    lemma = token.lemma if token.lemma not in ("_", "") else token.form
    return MorphAnalysis(lemma, restrict_feats(token.feats, inflectional_only))


def ambiguity_index(train: Iterable[Sentence]) -> dict[str, frozenset[MorphAnalysis]]:
    """Map each training form to the distinct analyses it was seen with."""
    seen: dict[str, set[MorphAnalysis]] = {}
    for sent in train:
        for tok in sent.tokens:
            seen.setdefault(tok.form, set()).add(analysis_of(tok))
    return {form: frozenset(a) for form, a in seen.items()}


def case_of(token: Token) -> str:
    return token.feat("Case") or NO_CASE


# --- vocabularies ------------------------------------------------------------

class Vocab:
    """Dense string-to-id map. ``specials`` occupy the first ids."""

    def __init__(self, items: Iterable[str], specials: Sequence[str] = (), unk: str | None = None):
        self.itos: list[str] = []
        self.stoi: dict[str, int] = {}
        for s in list(specials) + list(items):
            if s not in self.stoi:
                self.stoi[s] = len(self.itos)
                self.itos.append(s)
        self.unk = unk
        if unk is not None and unk not in self.stoi:
            raise ValueError(f"unk symbol {unk!r} not in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, s: str) -> bool:
        return s in self.stoi

    def __getitem__(self, s: str) -> int:
        idx = self.stoi.get(s)
        if idx is None:
            if self.unk is None:
                raise KeyError(s)
            return self.stoi[self.unk]
        return idx

    def lookup(self, items: Iterable[str]) -> list[int]:
        return [self[s] for s in items]

    def to_json(self) -> dict:
        return {"itos": self.itos, "unk": self.unk}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        return cls(obj["itos"], unk=obj["unk"])


@dataclass
class Vocabulary:
    words: Vocab
    chars: Vocab
    trigrams: Vocab
    morphemes: Vocab
    upos: Vocab
    feats: Vocab
    labels: Vocab
    cases: Vocab

    def to_json(self) -> dict:
        return {name: getattr(self, name).to_json() for name in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(**{name: Vocab.from_json(obj[name]) for name in cls.__dataclass_fields__})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(train: Sequence[Sentence], max_words: int = 20000, inflectional_only: bool = False) -> Vocabulary:
    if not train:
        raise ValueError("cannot build a vocabulary from an empty treebank")
    word_counts: Counter[str] = Counter()
    chars, trigrams, morphemes, upos, feats, labels, cases = (set() for _ in range(7))
    for sent in train:
        for tok in sent.tokens:
            word_counts[tok.form] += 1
            chars.update(tok.form)
            trigrams.update(extract_trigrams(tok.form))
            morphemes.update(oracle_sequence(tok, inflectional_only))
            upos.add(tok.upos)
            feats.update(f"{k}={v}" for k, v in tok.feats)
            if tok.deprel is not None:
                labels.add(tok.deprel)
            if tok.feat("Case") is not None:
                cases.add(tok.feat("Case"))
    ranked = sorted(word_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_words]
    # case values double as atomic symbols appended to character sequences
    case_symbols = sorted(cases) + [NO_CASE]
    return Vocabulary(
        words=Vocab([w for w, _ in ranked], specials=[UNK], unk=UNK),
        chars=Vocab(sorted(chars) + [c for c in case_symbols if c not in chars], specials=[PAD, UNK], unk=UNK),
        trigrams=Vocab(sorted(trigrams), specials=[PAD, UNK], unk=UNK),
        morphemes=Vocab(sorted(morphemes), specials=[PAD, UNK, NO_FEAT], unk=UNK),
        upos=Vocab(sorted(upos), specials=[PAD, UNK, ROOT_FORM], unk=UNK),
        feats=Vocab(sorted(feats), specials=[UNK], unk=UNK),
        labels=Vocab(sorted(labels)),
        cases=Vocab(sorted(cases), specials=[NO_CASE]),
    )


def oov_flags(vocab: Vocabulary, treebank: Iterable[Sentence]) -> list[list[bool]]:
    """Per token: True iff the form is not a retained training word."""
    return [[tok.form not in vocab.words.stoi for tok in sent.tokens] for sent in treebank]
