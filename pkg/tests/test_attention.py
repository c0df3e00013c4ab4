import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiedmt import attention as att
from tiedmt import tensor as tn
from tiedmt.errors import ContractError, ShapeError
from tiedmt.nn import ParamStore

from conftest import max_grad_error


def layer(seed=0, q=3, k=4, a=5, T=1.0):
    return att.AttentionLayer(ParamStore(np.random.default_rng(seed)), "att", q, k, a, T)


def test_single_key():
    lay = layer()
    key = np.array([[0.3, -1.0, 2.0, 0.5]])
    ctx, row = att.attend(lay, np.ones(3), key)
    assert np.array_equal(row.value, [1.0])
    assert np.allclose(ctx.value, key[0], rtol=0, atol=0)


def test_identical_keys_give_that_key():
    lay = layer()
    keys = np.tile([0.1, 0.2, -0.3, 0.4], (5, 1))
    for q in np.random.default_rng(0).normal(size=(4, 3)):
        ctx, row = att.attend(lay, q, keys)
        assert np.allclose(ctx.value, keys[0], rtol=0, atol=1e-15)


def test_attend_matches_dense_recomputation():
    lay = layer(3)
    rng = np.random.default_rng(1)
    q, keys = rng.normal(size=3), rng.normal(size=(6, 4))
    ctx, row = att.attend(lay, q, keys)
    v = lay.v.value[0]
    scores = np.array([v @ np.tanh(lay.wq.value @ q + keys[n] @ lay.wk.value) for n in range(6)])
    alpha = np.exp(scores) / np.exp(scores).sum()
    assert np.allclose(row.value, alpha, rtol=0, atol=1e-15)
    assert np.allclose(ctx.value, alpha @ keys, rtol=0, atol=1e-15)


def test_attend_errors():
    lay = layer()
    with pytest.raises(ContractError):
        att.attend(lay, np.ones(3), np.zeros((0, 4)))
    with pytest.raises(ShapeError):
        att.attend(lay, np.ones(2), np.zeros((2, 4)))
    with pytest.raises(ContractError):
        layer(T=0.0)


def test_attend_gradient_through_query_and_keys():
    s = ParamStore(np.random.default_rng(2))
    lay = att.AttentionLayer(s, "att", 3, 4, 5)
    rng = np.random.default_rng(3)
    q, keys = tn.parameter(rng.uniform(-2, 2, 3)), tn.parameter(rng.uniform(-2, 2, (5, 4)))
    w = rng.normal(size=4)
    f = lambda: tn.sum_all(tn.mul(att.attend(lay, q, keys)[0], w))  # noqa: E731
    assert max_grad_error(f, [q, keys] + list(s)) < 1e-6


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000), st.floats(0.2, 5.0), st.floats(1.1, 20.0))
def test_higher_temperature_softens(n, seed, T, factor):
    lay = layer(seed % 7)
    rng = np.random.default_rng(seed)
    keys, q = rng.normal(size=(n, 4)), rng.normal(size=3)
    kp = lay.project_keys(keys)
    lo = lay.weights(kp, q, T).value
    hi = lay.weights(kp, q, T * factor).value
    if np.ptp(np.log(lo)) > 1e-9:  # non-constant scores
        assert hi.max() < lo.max()


def test_rows_are_stochastic():
    lay = layer()
    rng = np.random.default_rng(4)
    rows = [att.attend(lay, rng.normal(size=3), rng.normal(size=(7, 4)))[1].value for _ in range(10)]
    assert att.is_row_stochastic(np.stack(rows))


def test_attention_mass_examples():
    A = np.array([[0.7, 0.3], [0.4, 0.6]])
    assert att.attention_mass_in_spans(A, [((0, 2), (0, 2))]) == pytest.approx(1.0, abs=1e-15)
    assert att.attention_mass_in_spans(A, []) == 0.0
    assert att.attention_mass_in_spans(A, [((1, 2), (1, 2))]) == pytest.approx(0.6 / 2, abs=1e-15)
    # overlapping spans count once
    assert att.attention_mass_in_spans(A, [((0, 1), (0, 2)), ((0, 1), (0, 1))]) == pytest.approx(0.5)
    with pytest.raises(ContractError):
        att.attention_mass_in_spans(A, [((0, 3), (0, 1))])


def test_attention_text_round_trip(tmp_path):
    A = np.random.default_rng(5).dirichlet(np.ones(4), size=3)
    text = att.format_attention(A)
    assert text.splitlines()[0] == "3 4"
    path = tmp_path / "a.txt"
    att.write_attention(path, A)
    assert np.array_equal(att.read_attention(path), A)
    with pytest.raises(ShapeError):
        att.parse_attention("2 2\n0.5 0.5\n")
