"""Parallel corpora, vocabularies, feature files and config files."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CorpusError
from .models import BOS, EOS, PAD, UNK, SentenceTriple

RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
assert RESERVED.index("<pad>") == PAD and RESERVED.index("<s>") == BOS
assert RESERVED.index("</s>") == EOS and RESERVED.index("<unk>") == UNK

FEATURE_MAGIC = b"TMFT"
FEATURE_VERSION = 1
FEATURE_HEADER = struct.Struct("<4sIIII")  # magic, version, frames, dim, dtype
DTYPE_FLOAT32 = 1


class Vocabulary:
    def __init__(self, symbols=()):
        self.itos = list(RESERVED)
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        for s in symbols:
            self.add(s)

    def add(self, symbol):
        if symbol not in self.stoi:
            self.stoi[symbol] = len(self.itos)
            self.itos.append(symbol)
        return self.stoi[symbol]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, symbol):
        return symbol in self.stoi

    def encode(self, tokens, eos=True):
        ids = [self.stoi.get(t, UNK) for t in tokens]
        return ids + [EOS] if eos else ids

    def decode(self, ids):
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out

    def symbols(self):
        return self.itos[len(RESERVED):]

    @classmethod
    def from_symbols(cls, symbols):
        return cls(symbols)


def build_vocab(sequences) -> Vocabulary:
    """Vocabulary over all symbols of a (training) corpus side, in first-seen order."""
    vocab = Vocabulary()
    for seq in sequences:
        for s in seq:
            vocab.add(s)
    return vocab


@dataclass
class Utterance:
    uid: str
    source: object  # token list, or feature-file path for speech
    target1: list
    target2: Optional[list] = None


@dataclass
class Corpus:
    split: str
    kind: str
    utterances: list = field(default_factory=list)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def side(self, name):
        return [getattr(u, name) for u in self.utterances]


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n").rstrip("\r") for line in f]


def tokenize(line):
    return line.split(" ") if line.strip() else []


def load_parallel(source, target1, target2=None, kind="text", split="train", ids=None) -> Corpus:
    """Line-aligned parallel files; speech sources list one feature file per line."""
    if kind not in ("text", "speech"):
        raise CorpusError(f"corpus kind must be text or speech, got {kind!r}")
    paths = [p for p in (source, target1, target2, ids) if p]
    sides = [_read_lines(p) for p in paths]
    counts = [len(s) for s in sides]
    if len(set(counts)) > 1:
        detail = ", ".join(f"{p}: {n} lines" for p, n in zip(paths, counts))
        raise CorpusError(f"parallel files have different line counts ({detail})")
    src_lines, t1_lines = sides[0], sides[1]
    t2_lines = sides[2] if target2 else None
    id_lines = sides[-1] if ids else [f"{split}-{i:05d}" for i in range(len(src_lines))]
    if len(set(id_lines)) != len(id_lines):
        raise CorpusError(f"utterance ids are not unique in split {split!r}")
    base = os.path.dirname(os.path.abspath(source))
    corpus = Corpus(split, kind)
    for k, (uid, src, t1) in enumerate(zip(id_lines, src_lines, t1_lines)):
        if kind == "speech":
            s = src.strip()
            s = s if os.path.isabs(s) else os.path.join(base, s)
        else:
            s = tokenize(src)
        corpus.utterances.append(
            Utterance(uid, s, tokenize(t1), tokenize(t2_lines[k]) if t2_lines is not None else None))
    return corpus


def write_features(path, frames):
    frames = np.asarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise CorpusError(f"features must be a (frames, dim) matrix, got shape {frames.shape}")
    with open(path, "wb") as f:
        f.write(FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, frames.shape[0],
                                    frames.shape[1], DTYPE_FLOAT32))
        f.write(frames.tobytes())


def read_features(path, dim=None) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < FEATURE_HEADER.size:
        raise CorpusError(f"{path}: truncated header at byte offset {len(data)}")
    magic, version, n, d, dtype = FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise CorpusError(f"{path}: bad magic {magic!r} at byte offset 0")
    if version != FEATURE_VERSION:
        raise CorpusError(f"{path}: unsupported version {version} at byte offset 4")
    if dtype != DTYPE_FLOAT32:
        raise CorpusError(f"{path}: unsupported dtype code {dtype} at byte offset 16")
    if dim is not None and d != dim:
        raise CorpusError(f"{path}: feature dim {d} at byte offset 12, expected {dim}")
    payload = len(data) - FEATURE_HEADER.size
    if payload != n * d * 4:
        raise CorpusError(f"{path}: payload of {payload} bytes at byte offset {FEATURE_HEADER.size} "
                          f"disagrees with header ({n} x {d} float32 = {n * d * 4} bytes)")
    return np.frombuffer(data, dtype="<f4", offset=FEATURE_HEADER.size).reshape(n, d).astype(np.float64)


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CorpusError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip().replace("_", "-")] = v.strip()
    return out


@dataclass
class FoldSplit:
    source: str
    target1: str
    target2: Optional[str] = None


def read_folds(path) -> dict:
    """Fold manifest: ``fold<TAB>split<TAB>source<TAB>target1[<TAB>target2]``.

    Relative paths resolve against the manifest's directory.  Returns
    ``{fold: {split: FoldSplit}}`` in file order.
    """
    base = os.path.dirname(os.path.abspath(path))
    folds: dict = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) not in (4, 5):
            raise CorpusError(f"{path}:{lineno}: expected 4 or 5 tab-separated columns")
        fold, split, *files = cols
        files = [f if os.path.isabs(f) else os.path.join(base, f) for f in files]
        folds.setdefault(fold, {})[split] = FoldSplit(*files)
    for fold, splits in folds.items():
        missing = {"train", "dev", "test"} - set(splits)
        if missing:
            raise CorpusError(f"{path}: fold {fold} lacks splits {sorted(missing)}")
    return folds


@dataclass
class Vocabs:
    src: Optional[Vocabulary]
    trg1: Vocabulary
    trg2: Optional[Vocabulary] = None

    def to_dict(self):
        d = {"trg1": self.trg1.symbols()}
        if self.src is not None:
            d["src"] = self.src.symbols()
        if self.trg2 is not None:
            d["trg2"] = self.trg2.symbols()
        return d

    @classmethod
    def from_dict(cls, d):
        get = lambda k: Vocabulary(d[k]) if k in d else None  # noqa: E731
        return cls(get("src"), get("trg1"), get("trg2"))


def build_vocabs(train: Corpus, reconstruction=False) -> Vocabs:
    src = build_vocab(train.side("source")) if train.kind == "text" else None
    trg1 = build_vocab(train.side("target1"))
    trg2 = None
    if reconstruction:
        trg2 = src
    elif train.utterances and train.utterances[0].target2 is not None:
        trg2 = build_vocab(train.side("target2"))
    return Vocabs(src, trg1, trg2)


def to_triples(corpus: Corpus, vocabs: Vocabs, reconstruction=False, feature_dim=None):
    triples = []
    for u in corpus:
        if corpus.kind == "text":
            x = vocabs.src.encode(u.source)
        else:
            x = read_features(u.source, feature_dim)
        y2 = None
        if reconstruction:
            y2 = list(x)
        elif u.target2 is not None and vocabs.trg2 is not None:
            y2 = vocabs.trg2.encode(u.target2)
        triples.append(SentenceTriple(x, vocabs.trg1.encode(u.target1), y2, u.uid))
    return triples
