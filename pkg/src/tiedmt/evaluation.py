"""CER, corpus BLEU and word-discovery precision/recall/F."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import ContractError


def edit_distance(a, b) -> int:
    """Levenshtein distance with unit costs."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def cer(hyp, ref) -> float:
    """Character error rate in percent: edits / len(ref) * 100."""
    if len(ref) == 0:
        raise ContractError("CER needs a non-empty reference")
    return 100.0 * edit_distance(hyp, ref) / len(ref)


def corpus_cer(hyps, refs) -> float:
    if len(hyps) != len(refs):
        raise ContractError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    total = sum(len(r) for r in refs)
    if total == 0:
        raise ContractError("CER needs non-empty references")
    return 100.0 * sum(edit_distance(h, r) for h, r in zip(hyps, refs)) / total


def _ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def corpus_bleu(hyps, refs, max_order=4) -> float:
    """Unsmoothed corpus BLEU (0-100) over token sequences, one reference each."""
    if len(hyps) != len(refs):
        raise ContractError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not refs:
        raise ContractError("BLEU of an empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        h, r = list(h), list(r)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    if ref_len == 0:
        raise ContractError("BLEU needs non-empty references")
    if min(matches) == 0:
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_order
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec)


def char_bleu(hyps, refs, max_order=4, keep_spaces=True, space=" ") -> float:
    """Corpus BLEU over characters.

    Items may be strings or symbol lists; ``space`` is the symbol that
    stands for a word break and is dropped when ``keep_spaces`` is false.
    """
    def chars(s):
        seq = list(s)
        if keep_spaces:
            return seq
        return [c for c in seq if c != space and not c.isspace()]

    return corpus_bleu([chars(h) for h in hyps], [chars(r) for r in refs], max_order)


def word_bleu(hyps, refs, max_order=4, space=" ") -> float:
    def words(s):
        if isinstance(s, str):
            return s.split()
        out, cur = [], []
        for c in s:
            if c == space:
                if cur:
                    out.append("".join(cur))
                cur = []
            else:
                cur.append(c)
        if cur:
            out.append("".join(cur))
        return out

    return corpus_bleu([words(h) for h in hyps], [words(r) for r in refs], max_order)


def sequence_accuracy(hyps, refs) -> float:
    if len(hyps) != len(refs) or not refs:
        raise ContractError("sequence accuracy needs equally long, non-empty lists")
    return 100.0 * sum(list(h) == list(r) for h, r in zip(hyps, refs)) / len(refs)


def symbol_accuracy(hyps, refs) -> float:
    """100 minus the corpus-level error rate, floored at 0."""
    return max(0.0, 100.0 - corpus_cer(hyps, refs))


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f: float

    @classmethod
    def from_pr(cls, p, r):
        return cls(p, r, f_score(p, r))

    @classmethod
    def from_counts(cls, correct, n_hyp, n_gold):
        p = 100.0 * correct / n_hyp if n_hyp else 0.0
        r = 100.0 * correct / n_gold if n_gold else 0.0
        return cls.from_pr(p, r)

    def __str__(self):
        return f"P={self.precision:.2f} R={self.recall:.2f} F={self.f:.2f}"


def f_score(p, r):
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def _spans(seg):
    out, start = [], 0
    for c in list(seg.cuts) + [len(seg.symbols)]:
        out.append((start, c))
        start = c
    return out


def word_discovery_prf(hyps, golds):
    """Token-level (exact span) and type-level PRF of segmentations."""
    if len(hyps) != len(golds):
        raise ContractError(f"{len(hyps)} hypothesis vs {len(golds)} gold segmentations")
    correct = n_hyp = n_gold = 0
    hyp_types, gold_types = set(), set()
    for h, g in zip(hyps, golds):
        if tuple(h.symbols) != tuple(g.symbols):
            raise ContractError(f"segmentations cover different symbols: {h.symbols} vs {g.symbols}")
        hs, gs = _spans(h), _spans(g)
        correct += len(set(hs) & set(gs))
        n_hyp += len(hs)
        n_gold += len(gs)
        hyp_types.update(h.words())
        gold_types.update(g.words())
    tokens = PRF.from_counts(correct, n_hyp, n_gold)
    types = PRF.from_counts(len(hyp_types & gold_types), len(hyp_types), len(gold_types))
    return tokens, types


def boundary_prf(hyps, golds):
    """PRF over cut positions only (utterance edges excluded)."""
    correct = n_hyp = n_gold = 0
    for h, g in zip(hyps, golds):
        correct += len(set(h.cuts) & set(g.cuts))
        n_hyp += len(h.cuts)
        n_gold += len(g.cuts)
    return PRF.from_counts(correct, n_hyp, n_gold)
