"""Word discovery: project target-word alignments onto unsegmented symbols."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as tn
from .errors import ConfigError, ShapeError

DIRECTIONS = ("base", "reverse")


@dataclass(frozen=True)
class Segmentation:
    """Symbols plus cut positions; cut ``k`` splits before ``symbols[k]``."""

    symbols: tuple
    cuts: tuple = ()

    def __post_init__(self):
        cuts = tuple(int(c) for c in self.cuts)
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cut positions must be strictly increasing: {cuts}")
        if cuts and (cuts[0] < 1 or cuts[-1] > len(self.symbols) - 1):
            raise ValueError(f"cut positions {cuts} outside 1..{len(self.symbols) - 1}")
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "cuts", cuts)

    def segments(self):
        bounds = (0,) + self.cuts + (len(self.symbols),)
        return [self.symbols[a:b] for a, b in zip(bounds, bounds[1:])]

    def words(self):
        return ["".join(map(str, seg)) for seg in self.segments()]

    def format(self):
        return " | ".join(" ".join(map(str, seg)) for seg in self.segments())

    @classmethod
    def parse(cls, line: str):
        symbols, cuts = [], []
        for tok in line.split():
            if tok == "|":
                if symbols and (not cuts or cuts[-1] != len(symbols)):
                    cuts.append(len(symbols))
            else:
                symbols.append(tok)
        cuts = [c for c in cuts if c < len(symbols)]
        return cls(tuple(symbols), tuple(cuts))

    @classmethod
    def from_words(cls, words):
        symbols, cuts = [], []
        for w in words:
            if symbols:
                cuts.append(len(symbols))
            symbols.extend(w)
        return cls(tuple(symbols), tuple(cuts))


@dataclass
class SoftAlignment:
    """Rows are source symbols, columns target words."""

    matrix: np.ndarray
    source: tuple
    target: tuple

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (len(self.source), len(self.target)):
            raise ShapeError(f"alignment {self.matrix.shape} vs {len(self.source)} symbols "
                             f"and {len(self.target)} words")


def combine_matrices(A1, A12):
    """``A1 + A12^T``."""
    A1, A12 = np.asarray(A1, dtype=np.float64), np.asarray(A12, dtype=np.float64)
    if A12.T.shape != A1.shape:
        raise ShapeError(f"cannot combine A1 {A1.shape} with transposed A12 {A12.T.shape}")
    return A1 + A12.T


def post_smooth(A):
    """Average each entry with its left and right neighbours in the row.

    Edge cells average the two values that exist.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] == 0:
        raise ShapeError(f"post_smooth needs at least one column, got {A.shape}")
    n = A.shape[1]
    if n == 1:
        return A.copy()
    padded = np.pad(A, ((0, 0), (1, 1)))
    total = padded[:, :-2] + padded[:, 1:-1] + padded[:, 2:]
    count = np.full(n, 3.0)
    count[0] = count[-1] = 2.0
    return total / count


def project_boundaries(A, symbols=None) -> Segmentation:
    """Assign each source symbol (row) to its argmax word and cut where it changes.

    Ties go to the lower word index.
    """
    A = A.matrix if isinstance(A, SoftAlignment) else np.asarray(A, dtype=np.float64)
    if symbols is None:
        symbols = tuple(range(A.shape[0]))
    if A.ndim != 2 or A.shape[0] != len(symbols):
        raise ShapeError(f"alignment {A.shape} does not cover {len(symbols)} symbols")
    if A.shape[1] == 0:
        return Segmentation(tuple(symbols))
    owner = np.argmax(A, axis=1)
    cuts = tuple(int(k) for k in np.nonzero(owner[1:] != owner[:-1])[0] + 1)
    return Segmentation(tuple(symbols), cuts)


@dataclass
class DiscoveryOptions:
    direction: str = "base"
    combine: bool = False
    smooth: bool = True
    temperature: Optional[float] = None
    include_eos: bool = False

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")


def alignment_matrix(A1, A12=None, opts: DiscoveryOptions = DiscoveryOptions()):
    """Symbols-by-words alignment from decoder-major attention matrices.

    ``A1`` is (decoder steps, source positions) including the EOS row and
    column that the models produce; those are trimmed here.
    """
    A = combine_matrices(A1, A12) if A12 is not None else np.asarray(A1, dtype=np.float64)
    if opts.direction == "base":
        # rows: target words (+EOS), cols: source symbols (+EOS)
        A = A[:, :-1] if opts.include_eos else A[:-1, :-1]
    else:
        # rows: source symbols (+EOS), cols: target words (+EOS)
        A = A[:-1, :] if opts.include_eos else A[:-1, :-1]
    if opts.smooth:
        A = post_smooth(A)
    return A.T if opts.direction == "base" else A


def discover(model, triples, symbols, opts: DiscoveryOptions):
    """Segment ``symbols[i]`` using the attention of ``model`` on ``triples[i]``.

    For the base direction the symbols are the model source; for reverse
    they are the first target.  Attention is extracted under teacher
    forcing.
    """
    if opts.combine and not (model.kind == "cascade" and model.config.arch.reconstruction):
        raise ConfigError("combining A1 with A12 needs a reconstruction model")
    if model.kind not in ("single", "cascade"):
        raise ConfigError(f"word discovery uses single-task or reconstruction models, not {model.kind}")
    out = []
    with tn.no_tape():
        for triple, syms in zip(triples, symbols):
            r = model.forward(triple, temperature=opts.temperature)
            A12 = r.A12.value if opts.combine else None
            A = alignment_matrix(r.A1.value, A12, opts)
            out.append(project_boundaries(A, tuple(syms)))
    return out


def random_segmentation(symbols, n_cuts, rng) -> Segmentation:
    positions = np.arange(1, len(symbols))
    n_cuts = min(n_cuts, len(positions))
    cuts = np.sort(rng.choice(positions, size=n_cuts, replace=False)) if n_cuts else ()
    return Segmentation(tuple(symbols), tuple(int(c) for c in cuts))
