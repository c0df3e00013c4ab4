import itertools
import warnings

import numpy as np
import pytest

from tiedmt import tensor as tn
from tiedmt.decoding import (BeamConfig, Hypothesis, beam_search, decode_single, default_max_len,
                             greedy_decode, joint_score, length_penalty, two_phase_decode)
from tiedmt.errors import ConfigError, ContractError
from tiedmt.models import EOS, SentenceTriple

from conftest import toy_model

NEG = -np.inf


# -- oracles ----------------------------------------------------------------

def complete_sequences(symbols, max_len, eos=EOS):
    """Every token sequence ending in EOS with total length <= max_len."""
    for n in range(max_len):
        for body in itertools.product(symbols, repeat=n):
            yield tuple(body) + (eos,)


def normalized(logp, length, alpha):
    return logp / ((5.0 + length) / 6.0) ** alpha


class TableStepper:
    """Prefix-conditioned log-probabilities drawn from a seeded table."""

    def __init__(self, vocab_size, allowed, seed):
        self.vocab_size, self.allowed, self.seed = vocab_size, list(allowed), seed

    def logprobs(self, prefix):
        h = abs(hash((self.seed,) + tuple(prefix))) % (2**32)
        z = np.random.default_rng(h).normal(scale=1.5, size=len(self.allowed))
        out = np.full(self.vocab_size, NEG)
        out[self.allowed] = z - np.log(np.exp(z).sum())
        return out

    def step(self, prefix, token):
        # the state is the emitted prefix; BOS starts it empty
        prefix = prefix if token == 1 else prefix + (token,)
        return self.logprobs(prefix), prefix, None

    def sequence_logp(self, seq):
        return sum(self.logprobs(seq[:k])[t] for k, t in enumerate(seq))


# -- length penalty ---------------------------------------------------------

def test_length_penalty_examples():
    for a in (0.0, 0.3, 0.8, 1.0):
        assert length_penalty(1, a) == 1.0
    assert length_penalty(7, 1.0) == 2.0
    assert all(length_penalty(n, 0.0) == 1.0 for n in range(1, 30))
    with pytest.raises(ContractError):
        length_penalty(0, 0.8)


def test_beam_config_validation():
    with pytest.raises(ConfigError):
        BeamConfig(beam=0)
    with pytest.raises(ConfigError):
        BeamConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        BeamConfig(mode="best")


# -- beam search vs exhaustive enumeration ----------------------------------

@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("alpha", [0.0, 0.8, 1.0])
def test_wide_beam_equals_exhaustive_enumeration(seed, alpha):
    allowed = [EOS, 3, 4]  # vocab of 3 including EOS
    st = TableStepper(5, allowed, seed)
    hyps = beam_search(st.step, (), BeamConfig(beam=27, alpha=alpha), max_len=3, bos=1)
    ranked = sorted(complete_sequences([3, 4], 3),
                    key=lambda s: -normalized(st.sequence_logp(s), len(s), alpha))
    assert [h.tokens for h in hyps] == ranked
    for h in hyps:
        assert h.complete and h.tokens[-1] == EOS
        assert h.logp == pytest.approx(st.sequence_logp(h.tokens), abs=1e-12)
        assert h.score == pytest.approx(normalized(h.logp, len(h.tokens), alpha), abs=1e-12)


def test_wide_beam_on_a_real_model_equals_exhaustive_enumeration():
    # trg vocab 5 = PAD, BOS, EOS, UNK, one symbol; PAD and BOS are never emitted
    m = toy_model("single", vocab=5, seed=3)
    x = [4, 4, EOS]
    cfg = BeamConfig(beam=27, alpha=0.8)
    hyps = decode_single(m, x, cfg, max_len=3)
    with tn.no_tape():
        scored = [(normalized(m.forward(SentenceTriple(x, list(y))).logp1.item(), len(y), 0.8), y)
                  for y in complete_sequences([3, 4], 3)]
    best = max(scored)[1]
    assert hyps.tokens == best
    (step, init), _ = m.first_pass(x)
    all_hyps = beam_search(step, init, cfg, 3)
    assert [h.tokens for h in all_hyps] == [y for _, y in sorted(scored, key=lambda p: -p[0])]


def test_beam_one_equals_greedy_argmax():
    for seed in range(5):
        st = TableStepper(6, [EOS, 3, 4, 5], seed)
        prefix, tokens = (), []
        for _ in range(6):
            tok = int(np.argmax(st.logprobs(prefix)))
            tokens.append(tok)
            prefix += (tok,)
            if tok == EOS:
                break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            g = greedy_decode(st.step, (), 6, bos=1)
            b = beam_search(st.step, (), BeamConfig(beam=1), 6, bos=1)[0]
        assert g.tokens == b.tokens == tuple(tokens)


def test_alpha_zero_score_is_raw_logp():
    st = TableStepper(5, [EOS, 3, 4], 0)
    for h in beam_search(st.step, (), BeamConfig(beam=5, alpha=0.0), 4, bos=1):
        assert h.score == h.logp


def test_ties_prefer_earlier_completion_then_token_order():
    # uniform distribution: every length-1 and length-2 hypothesis ties in raw log-probability
    def step(state, tok):
        lp = np.full(5, NEG)
        lp[[EOS, 3, 4]] = np.log(1 / 3)
        return lp, state, None

    hyps = beam_search(step, None, BeamConfig(beam=3, alpha=0.0), 3, bos=1)
    assert [h.tokens for h in hyps][0] == (EOS,)
    same = [h for h in hyps if len(h.tokens) == 2]
    assert [h.tokens for h in same] == sorted(h.tokens for h in same)


def test_incomplete_hypotheses_are_returned_with_warning():
    def step(state, tok):
        lp = np.full(4, NEG)
        lp[3] = 0.0  # EOS impossible
        return lp, state, None

    with pytest.warns(RuntimeWarning):
        hyps = beam_search(step, None, BeamConfig(beam=2), 4, bos=1)
    assert not hyps[0].complete and hyps[0].tokens == (3, 3, 3, 3)
    with pytest.raises(ContractError):
        beam_search(step, None, BeamConfig(), None)


def test_default_max_len():
    assert default_max_len(5, "text") == 15
    assert default_max_len(100, "speech") == 50


def test_decoding_is_deterministic():
    m = toy_model("triangle", vocab=7, seed=5)
    cfg = BeamConfig(beam=3)
    a = two_phase_decode(m, [4, 5, 6, EOS], cfg, 5, 5)
    b = two_phase_decode(m, [4, 5, 6, EOS], cfg, 5, 5)
    assert (a.y1.tokens, a.y2.tokens, a.score) == (b.y1.tokens, b.y2.tokens, b.score)


# -- two-phase decoding -----------------------------------------------------

A, B = 3, 4


class HandModel:
    """Two decoders with hand-set probabilities over {a, b} plus EOS.

    The first decoder prefers "a", but every second-task output given "a"
    is unlikely, while "b" is followed by a confident second output.
    """

    first = {(): {A: 0.55, B: 0.35, EOS: 0.10},
             (A,): {EOS: 0.9, A: 0.05, B: 0.05},
             (B,): {EOS: 0.9, A: 0.05, B: 0.05}}
    second = {(A,): {A: 0.3, B: 0.3, EOS: 0.4}, (B,): {B: 0.95, A: 0.03, EOS: 0.02}}

    def _table(self, table, prefix):
        probs = table.get(prefix, {EOS: 0.5, A: 0.25, B: 0.25})
        lp = np.full(5, NEG)
        for t, p in probs.items():
            lp[t] = np.log(p)
        return lp

    def _stepper(self, table_for):
        def step(prefix, token):
            prefix = prefix if token == 1 else prefix + (token,)
            return table_for(prefix), prefix, None
        return step

    def first_pass(self, x):
        return (self._stepper(lambda p: self._table(self.first, p)), ()), None

    def second_pass(self, ctx, hyp1):
        key = hyp1.output()
        tail = {(): {EOS: 0.9, A: 0.05, B: 0.05}}
        table_for = lambda p: self._table(self.second, key) if not p else self._table(tail, ())  # noqa: E731
        return self._stepper(table_for), ()

    def seq_logp(self, which, seq, y1=None):
        total, prefix = 0.0, ()
        for t in seq:
            if which == 1:
                lp = self._table(self.first, prefix)
            elif not prefix:
                lp = self._table(self.second, y1)
            else:
                lp = self._table({(): {EOS: 0.9, A: 0.05, B: 0.05}}, ())
            total += lp[t]
            prefix += (t,)
        return total


def brute_force_joint(model, cfg, max_len):
    best = None
    for y1 in complete_sequences([A, B], max_len):
        for y2 in complete_sequences([A, B], max_len):
            s1 = normalized(model.seq_logp(1, y1), len(y1), cfg.alpha)
            s2 = normalized(model.seq_logp(2, y2, y1[:-1]), len(y2), cfg.alpha)
            s = cfg.lam * s1 + (1 - cfg.lam) * s2
            if best is None or s > best[0]:
                best = (s, y1, y2)
    return best


def test_two_phase_finds_joint_optimum_that_first_best_misses():
    model = HandModel()
    cfg = BeamConfig(beam=4, alpha=0.8)
    score, y1, y2 = brute_force_joint(model, cfg, 3)
    assert y1 == (B, EOS)  # the joint optimum does not use the first decoder's 1-best
    joint = two_phase_decode(model, None, cfg, 3, 3)
    assert (joint.y1.tokens, joint.y2.tokens) == (y1, y2)
    assert joint.score == pytest.approx(score, abs=1e-12)
    first = two_phase_decode(model, None, BeamConfig(beam=4, alpha=0.8, mode="first-1best"), 3, 3)
    assert first.y1.tokens == (A, EOS)
    assert first.score < joint.score - 1e-6


def test_k1_equals_first_best_mode():
    model = HandModel()
    a = two_phase_decode(model, None, BeamConfig(beam=1), 3, 3)
    b = two_phase_decode(model, None, BeamConfig(beam=1, mode="first-1best"), 3, 3)
    assert (a.y1.tokens, a.y2.tokens, a.score) == (b.y1.tokens, b.y2.tokens, b.score)


def test_returned_pair_maximises_explored_scores():
    model = HandModel()
    r = two_phase_decode(model, None, BeamConfig(beam=4), 3, 3)
    assert len(r.explored) > 4
    assert r.score == max(s for _, _, s in r.explored)
    assert r.y2.parent is r.y1


def test_raw_joint_score_option():
    h1 = Hypothesis((A, EOS), -2.0, -1.5, True, 2)
    h2 = Hypothesis((B, EOS), -4.0, -3.0, True, 2)
    assert joint_score(h1, h2, BeamConfig(lam=0.5)) == -2.25
    assert joint_score(h1, h2, BeamConfig(lam=0.5, raw_joint=True)) == -3.0


@pytest.mark.parametrize("kind", ["triangle", "cascade", "multitask"])
def test_wide_two_phase_on_real_model_equals_brute_force(kind):
    m = toy_model(kind, vocab=5, seed=11)
    x = [4, EOS]
    cfg = BeamConfig(beam=27, alpha=0.8)
    r = two_phase_decode(m, x, cfg, 2, 2)
    best = None
    with tn.no_tape():
        for y1 in complete_sequences([3, 4], 2):
            for y2 in complete_sequences([3, 4], 2):
                f = m.forward(SentenceTriple(x, list(y1), list(y2)))
                s = 0.5 * normalized(f.logp1.item(), len(y1), 0.8) + 0.5 * normalized(f.logp2.item(), len(y2), 0.8)
                if best is None or s > best[0]:
                    best = (s, y1, y2)
    assert (r.y1.tokens, r.y2.tokens) == best[1:]
    assert r.score == pytest.approx(best[0], abs=1e-10)


def test_hypothesis_attention_trace_matches_forced_pass():
    m = toy_model("triangle", vocab=6, seed=89)  # a seed whose hypotheses finish with length > 1
    x = [4, 5, EOS]
    r = two_phase_decode(m, x, BeamConfig(beam=2), 6, 6)
    assert r.y1.complete and r.y2.complete and len(r.y1.tokens) > 2
    with tn.no_tape():
        f = m.forward(SentenceTriple(x, list(r.y1.tokens), list(r.y2.tokens)))
    assert np.allclose(r.y1.attention(0), f.A1.value, rtol=0, atol=1e-12)
    assert np.allclose(r.y2.attention(0), f.A12.value, rtol=0, atol=1e-12)
    assert np.allclose(r.y2.attention(1), f.A2.value, rtol=0, atol=1e-12)
    assert np.allclose(r.y1.states(), f.S1.value, rtol=0, atol=1e-12)
