"""Per-utterance Adam training with dev-set model selection."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as tn
from .errors import ConfigError, NumericError
from .models import ScoreConfig, TiedModel, check_regularizers, save_checkpoint

log = logging.getLogger(__name__)

SELECTION = ("loss", "cer", "bleu")


@dataclass
class TrainConfig:
    lr: float = 0.0002
    dropout: float = 0.2
    epochs: int = 500
    seed: int = 1
    clip: float = 5.0
    select: str = "loss"
    save_every: int = 1
    beam: int = 4

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.select not in SELECTION:
            raise ConfigError(f"selection metric must be one of {SELECTION}")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros_like(p.value) for p in params], [np.zeros_like(p.value) for p in params])


def clip_by_global_norm(grads, threshold):
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient")
    if threshold and norm > threshold:
        c = threshold / norm
        grads = [g * c for g in grads]
    return grads, norm


def adam_update(params, grads, state: AdamState, lr: float, clip: Optional[float] = 5.0):
    """One bias-corrected Adam step, after clipping the global gradient norm."""
    if len(params) != len(grads) or len(grads) != len(state.m):
        raise ValueError("parameter, gradient and moment lists differ in length")
    grads = [np.zeros_like(p.value) if g is None else g for p, g in zip(params, grads)]
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    grads, norm = clip_by_global_norm(grads, clip)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return norm


@dataclass
class EpochRecord:
    epoch: int
    train: float
    dev: float
    seconds: float

    def line(self):
        return f"{self.epoch}\t{self.train:.6f}\t{self.dev:.6f}\t{self.seconds:.2f}"


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev: float = float("inf")
    best_state: dict = field(default_factory=dict)
    updates: int = 0


def objective_value(model, triple, score, dropout=0.0, rng=None, training=False):
    with tn.no_tape():
        return float(model.objective(triple, score, dropout, rng, training).value)


def dev_loss(model, triples, score):
    """Mean negative objective with dropout off."""
    if not triples:
        return float("nan")
    return -sum(objective_value(model, t, score) for t in triples) / len(triples)


def train(model: TiedModel, train_set, dev_set, score: ScoreConfig, cfg: TrainConfig,
          outdir=None, vocabs=None, dev_metric: Optional[Callable] = None,
          on_epoch: Optional[Callable] = None) -> TrainResult:
    """Train ``model`` in place and leave it holding the best dev parameters.

    ``dev_metric(model) -> float`` (lower is better) replaces the dev loss
    as selection criterion when given; the logged dev column is always
    the selection value.
    """
    check_regularizers(model.config.arch, score)
    if not train_set:
        raise ConfigError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    params = model.params
    adam = AdamState.for_params(params)
    result = TrainResult()
    logf = None
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        logf = open(os.path.join(outdir, "train.log"), "w", encoding="utf-8")
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(train_set))
            total = 0.0
            for idx in order:
                triple = train_set[idx]
                with tn.Tape():
                    obj = model.objective(triple, score, cfg.dropout, rng, training=True)
                    loss = tn.neg(obj)
                val = float(loss.value)
                if not np.isfinite(val):
                    raise NumericError(f"non-finite loss at training utterance {idx} "
                                       f"({triple.uid or 'no id'}), epoch {epoch}")
                tn.backward(loss)
                try:
                    adam_update(params, [p.grad for p in params], adam, cfg.lr, cfg.clip)
                except NumericError as e:
                    raise NumericError(f"{e} at training utterance {idx} ({triple.uid or 'no id'})") from None
                model.store.zero_grad()
                result.updates += 1
                total += val
            dev = dev_metric(model) if dev_metric else dev_loss(model, dev_set, score)
            rec = EpochRecord(epoch, total / len(train_set), dev, time.perf_counter() - t0)
            result.history.append(rec)
            log.info("epoch %s", rec.line())
            if logf:
                logf.write(rec.line() + "\n")
                logf.flush()
            if dev < result.best_dev or not result.best_state:
                result.best_dev, result.best_epoch = dev, epoch
                result.best_state = model.store.state_dict()
                if outdir:
                    save_checkpoint(os.path.join(outdir, "best.ckpt"), model, score, vocabs,
                                    {"epoch": epoch, "dev": dev})
            if outdir and cfg.save_every and epoch % cfg.save_every == 0:
                save_checkpoint(os.path.join(outdir, f"epoch{epoch}.ckpt"), model, score, vocabs,
                                {"epoch": epoch, "dev": dev})
            if on_epoch:
                on_epoch(rec, model)
    finally:
        if logf:
            logf.close()
    model.store.load_state_dict(result.best_state)
    return result
