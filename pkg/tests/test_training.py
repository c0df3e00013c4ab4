import math

import numpy as np
import pytest

from tiedmt import tensor as tn
from tiedmt.errors import ConfigError, NumericError
from tiedmt.models import EOS, ScoreConfig, SentenceTriple
from tiedmt.training import (AdamState, TrainConfig, adam_update, clip_by_global_norm, dev_loss,
                             objective_value, train)

from conftest import toy_model, toy_triple


def test_adam_first_step_by_hand():
    p = tn.parameter(np.array([1.0, -2.0]))
    g = np.array([0.5, -0.1])
    state = AdamState.for_params([p])
    adam_update([p], [g], state, lr=0.1, clip=None)
    # bias-corrected m/sqrt(v) equals sign(g) on the first step
    expected = np.array([1.0, -2.0]) - 0.1 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p.value, expected, rtol=0, atol=1e-12)
    adam_update([p], [g], state, lr=0.1, clip=None)
    m = 0.9 * 0.1 * g + 0.1 * g
    v = 0.999 * 0.001 * g * g + 0.001 * g * g
    step2 = 0.1 * (m / (1 - 0.9 ** 2)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    assert np.allclose(p.value, expected - step2, rtol=0, atol=1e-12)


def test_zero_gradient_leaves_parameters():
    p = tn.parameter(np.array([[0.3, 0.4]]))
    state = AdamState.for_params([p])
    adam_update([p], [None], state, lr=0.01)
    assert np.array_equal(p.value, [[0.3, 0.4]])


def test_clip_by_global_norm():
    grads = [np.array([30.0, 40.0])]
    clipped, norm = clip_by_global_norm(grads, 5.0)
    assert norm == pytest.approx(50.0)
    assert np.linalg.norm(clipped[0]) == pytest.approx(5.0)
    same, _ = clip_by_global_norm([np.array([1.0, 1.0])], 5.0)
    assert np.array_equal(same[0], [1.0, 1.0])
    with pytest.raises(NumericError):
        clip_by_global_norm([np.array([np.nan])], 5.0)


def test_adam_shape_mismatch():
    p = tn.parameter(np.zeros(3))
    with pytest.raises(ValueError):
        adam_update([p], [np.zeros(2)], AdamState.for_params([p]), 0.1)


def test_config_errors():
    for bad in (dict(lr=0.0), dict(dropout=1.0), dict(epochs=0), dict(select="wer")):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_one_update_per_utterance_and_determinism():
    data = [toy_triple(), SentenceTriple([5, 4, EOS], [4, EOS])]
    finals = []
    for _ in range(2):
        m = toy_model(seed=3)
        res = train(m, data, data, ScoreConfig(), TrainConfig(lr=0.01, epochs=1, dropout=0.2, seed=9))
        assert res.updates == 2
        finals.append(m.store.state_dict())
    for k in finals[0]:
        assert np.array_equal(finals[0][k], finals[1][k])


def test_dev_loss_is_dropout_free():
    m = toy_model(seed=4)
    data = [toy_triple()]
    a = dev_loss(m, data, ScoreConfig())
    b = dev_loss(m, data, ScoreConfig())
    assert a == b
    assert a == pytest.approx(-objective_value(m, data[0], ScoreConfig()))


def copy_data(n=12, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        x = [int(v) for v in rng.integers(4, 6, size=int(rng.integers(1, 4)))]
        out.append(SentenceTriple(x + [EOS], x + [EOS]))
    return out


def test_copy_task_loss_decreases_and_best_is_kept():
    m = toy_model(seed=0, hidden=8)
    data = copy_data()
    res = train(m, data, data[:4], ScoreConfig(), TrainConfig(lr=0.02, epochs=8, dropout=0.0))
    train_losses = [r.train for r in res.history]
    assert train_losses[-1] < 0.5 * train_losses[0]
    assert res.best_dev == min(r.dev for r in res.history)
    # the model ends up holding the best-dev parameters
    assert dev_loss(m, data[:4], ScoreConfig()) == pytest.approx(res.best_dev, rel=1e-12)


def test_outdir_gets_log_and_checkpoints(tmp_path):
    m = toy_model(seed=1)
    train(m, [toy_triple()], [toy_triple()], ScoreConfig(),
          TrainConfig(lr=0.01, epochs=2, dropout=0.0, save_every=1), outdir=tmp_path)
    log_lines = (tmp_path / "train.log").read_text().splitlines()
    assert len(log_lines) == 2 and log_lines[0].startswith("1\t")
    assert (tmp_path / "best.ckpt").exists() and (tmp_path / "epoch2.ckpt").exists()


def test_custom_dev_metric_drives_selection():
    m = toy_model(seed=2)
    values = iter([3.0, 1.0, 2.0])
    res = train(m, [toy_triple()], [], ScoreConfig(), TrainConfig(lr=0.01, epochs=3, dropout=0.0),
                dev_metric=lambda model: next(values))
    assert res.best_epoch == 2 and res.best_dev == 1.0


def test_non_finite_loss_names_the_utterance():
    m = toy_model(seed=5)
    for p in m.params:
        p.value[...] = np.nan
    bad = SentenceTriple([4, EOS], [5, EOS], uid="utt-17")
    with pytest.raises(NumericError, match="utt-17"):
        train(m, [bad], [], ScoreConfig(), TrainConfig(epochs=1, dropout=0.0))


def test_empty_training_set():
    with pytest.raises(ConfigError):
        train(toy_model(), [], [], ScoreConfig(), TrainConfig(epochs=1))


def test_regularizer_must_fit_architecture():
    with pytest.raises(ConfigError):
        train(toy_model(), [toy_triple()], [], ScoreConfig(trans=0.2), TrainConfig(epochs=1))
    assert math.isnan(dev_loss(toy_model(), [], ScoreConfig()))
