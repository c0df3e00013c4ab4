"""Deterministic toy transduction task with known alignments and word boundaries.

Each utterance is a sequence of lexicon words spelled over a small source
alphabet and written without spaces.  Its first target is a letter-by-letter
cipher of the source (a "transcription"); its second target is one token
per word (a "translation").  Gold segmentations come for free.
"""

from __future__ import annotations

import os
import string
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Example:
    source: tuple
    transcription: tuple
    translation: tuple
    words: tuple  # source words, each a tuple of symbols

    @property
    def cuts(self):
        out, pos = [], 0
        for w in self.words[:-1]:
            pos += len(w)
            out.append(pos)
        return tuple(out)


class SyntheticTask:
    def __init__(self, alphabet_size=10, lexicon_size=12, word_len=(2, 4), max_len=12,
                 max_words=4, seed=0):
        if alphabet_size > 26:
            raise ValueError("alphabet size is limited to 26")
        rng = np.random.default_rng(seed)
        self.alphabet = tuple(string.ascii_lowercase[:alphabet_size])
        upper = list(string.ascii_uppercase[:alphabet_size])
        rng.shuffle(upper)
        self.cipher = dict(zip(self.alphabet, upper))
        lexicon = set()
        while len(lexicon) < lexicon_size:
            n = int(rng.integers(word_len[0], word_len[1] + 1))
            lexicon.add(tuple(str(c) for c in rng.choice(self.alphabet, size=n)))
        self.lexicon = sorted(lexicon)
        self.gloss = {w: f"w{k:02d}" for k, w in enumerate(self.lexicon)}
        self.max_len = max_len
        self.max_words = max_words

    def sample(self, rng) -> Example:
        while True:
            n = int(rng.integers(1, self.max_words + 1))
            words = tuple(self.lexicon[i] for i in rng.integers(0, len(self.lexicon), size=n))
            src = tuple(s for w in words for s in w)
            if len(src) <= self.max_len:
                break
        return Example(src, tuple(self.cipher[s] for s in src),
                       tuple(self.gloss[w] for w in words), words)

    def splits(self, n_train=1000, n_dev=100, n_test=100, seed=0):
        rng = np.random.default_rng(seed)
        return {
            "train": [self.sample(rng) for _ in range(n_train)],
            "dev": [self.sample(rng) for _ in range(n_dev)],
            "test": [self.sample(rng) for _ in range(n_test)],
        }


def write_corpus(outdir, splits):
    """Write ``<split>.src/.tr1/.tr2/.seg`` files (space-separated symbols)."""
    os.makedirs(outdir, exist_ok=True)
    for name, examples in splits.items():
        files = {
            "src": [" ".join(e.source) for e in examples],
            "tr1": [" ".join(e.transcription) for e in examples],
            "tr2": [" ".join(e.translation) for e in examples],
            "seg": [" | ".join(" ".join(w) for w in e.words) for e in examples],
        }
        for ext, lines in files.items():
            with open(os.path.join(outdir, f"{name}.{ext}"), "w", encoding="utf-8") as f:
                f.write("\n".join(lines) + "\n")
