"""Beam search with GNMT length normalisation and two-phase joint decoding.

A *stepper* is any callable ``step(state, token) -> (logprobs, new_state,
trace)``; ``logprobs`` is a 1-D array over the output vocabulary and
``trace`` is stored per emitted token on the hypothesis (models put the
decoder output state and attention rows there).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import ConfigError, ContractError
from .models import BOS, EOS, PAD

MODES = ("joint", "first-1best")


@dataclass
class BeamConfig:
    beam: int = 4
    alpha: float = 0.8
    max_len: Optional[int] = None
    mode: str = "joint"
    lam: float = 0.5
    raw_joint: bool = False

    def __post_init__(self):
        if self.beam < 1:
            raise ConfigError(f"beam must be >= 1, got {self.beam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"length-norm weight must lie in [0, 1], got {self.alpha}")
        if self.max_len is not None and self.max_len < 1:
            raise ConfigError("max output length must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"decode mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class Hypothesis:
    tokens: tuple
    logp: float
    score: float
    complete: bool
    finished_at: int
    trace: list = field(default_factory=list, repr=False)
    state: Any = field(default=None, repr=False)
    parent: Optional["Hypothesis"] = field(default=None, repr=False)

    def output(self):
        """Tokens without the closing EOS."""
        return self.tokens[:-1] if self.complete else self.tokens

    def attention(self, k=0):
        """Attention rows of memory ``k`` stacked into a matrix."""
        return np.stack([t[1][k] for t in self.trace])

    def states(self):
        return np.stack([t[0] for t in self.trace])


def length_penalty(length: int, alpha: float) -> float:
    if length < 1:
        raise ContractError(f"length must be >= 1, got {length}")
    return ((5.0 + length) / 6.0) ** alpha


def _sort_key(h):
    return (-h.score, h.finished_at, h.tokens)


def beam_search(step, init_state, cfg: BeamConfig, max_len: Optional[int] = None,
                bos: int = BOS, eos: int = EOS, banned=(PAD, BOS)):
    """k-best complete hypotheses, best first.

    Candidates are ranked by raw log-probability while the beam is
    extended; finished hypotheses are ranked by ``logp / length_penalty``.
    The search stops once ``beam`` hypotheses have finished or the length
    limit is reached.  If nothing finished, the best incomplete
    hypotheses are returned with ``complete=False``.
    """
    max_len = max_len or cfg.max_len
    if not max_len or max_len < 1:
        raise ContractError("beam search needs a positive maximum length")
    banned = set(banned)
    live = [Hypothesis((), 0.0, 0.0, False, 0, [], init_state)]
    finished = []
    for t in range(1, max_len + 1):
        cands = []
        expansions = []
        for hi, h in enumerate(live):
            logp, new_state, trace = step(h.state, h.tokens[-1] if h.tokens else bos)
            expansions.append((new_state, trace))
            for tok in range(len(logp)):
                lp = logp[tok]
                if tok in banned or not np.isfinite(lp):
                    continue
                cands.append((h.logp + float(lp), hi, tok))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        live_next = []
        for total, hi, tok in cands[:cfg.beam]:
            parent = live[hi]
            new_state, trace = expansions[hi]
            tokens = parent.tokens + (tok,)
            h = Hypothesis(tokens, total, total / length_penalty(len(tokens), cfg.alpha),
                           tok == eos, t, parent.trace + [trace], new_state)
            (finished if h.complete else live_next).append(h)
        live = live_next
        if len(finished) >= cfg.beam or not live:
            break
    if finished:
        return sorted(finished, key=_sort_key)[:cfg.beam]
    warnings.warn(f"no hypothesis reached EOS within {max_len} steps", RuntimeWarning)
    return sorted(live, key=_sort_key)[:cfg.beam]


def greedy_decode(step, init_state, max_len, bos=BOS, eos=EOS, banned=(PAD, BOS)):
    return beam_search(step, init_state, BeamConfig(beam=1, alpha=0.0), max_len, bos, eos, banned)[0]


@dataclass
class JointResult:
    y1: Hypothesis
    y2: Hypothesis
    score: float
    explored: list  # (phase-1 index, phase-2 index, joint score)


def joint_score(h1: Hypothesis, h2: Hypothesis, cfg: BeamConfig) -> float:
    if cfg.raw_joint:
        return cfg.lam * h1.logp + (1.0 - cfg.lam) * h2.logp
    return cfg.lam * h1.score + (1.0 - cfg.lam) * h2.score


def two_phase_decode(model, x, cfg: BeamConfig, max_len1=None, max_len2=None) -> JointResult:
    """Decode the first task, then the second once per first-task candidate.

    ``model`` provides ``first_pass(x) -> ((step, state), ctx)`` and
    ``second_pass(ctx, hyp1) -> (step, state)``.  In ``first-1best`` mode
    only the top phase-1 candidate is continued.
    """
    (step1, init1), ctx = model.first_pass(x)
    firsts = beam_search(step1, init1, cfg, max_len1)
    if cfg.mode == "first-1best":
        firsts = firsts[:1]
    best = None
    explored = []
    for i, h1 in enumerate(firsts):
        step2, init2 = model.second_pass(ctx, h1)
        for j, h2 in enumerate(beam_search(step2, init2, cfg, max_len2)):
            s = joint_score(h1, h2, cfg)
            explored.append((i, j, s))
            if best is None or s > best.score:
                h2.parent = h1
                best = JointResult(h1, h2, s, explored)
    return best


def default_max_len(source_len: int, source_kind: str = "text") -> int:
    if source_kind == "speech":
        return max(1, source_len // 2)
    return max(1, 3 * source_len)


def decode_single(model, x, cfg: BeamConfig, max_len=None) -> Hypothesis:
    (step, init), _ = model.first_pass(x)
    return beam_search(step, init, cfg, max_len)[0]
