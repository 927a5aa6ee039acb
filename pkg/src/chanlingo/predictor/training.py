"""Minibatch training loops, held-out evaluation and fine-tuning."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError, TrainingDivergedError
from ..neural.layers import softmax_xent
from ..neural.optim import Adam, annealed_lr
from .data import WindowedDataset
from .models import NlgModel, Seq2SeqModel, load_checkpoint

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 64


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    steps: int = 0
    final_learning_rate: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else math.nan


def _rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def train(model, dataset: WindowedDataset, epochs: int, optimizer: Adam | None = None, *,
          batch_size: int = DEFAULT_BATCH_SIZE, seed: int = 0, teacher_forcing: bool = True,
          max_steps: int | None = None, anneal: bool = True, base_lr: float | None = None) -> TrainReport:
    """Shuffled minibatch Adam training.

    ``epochs`` passes over the data, or exactly ``max_steps`` updates when that
    is given (cycling through extra epochs as needed). With ``anneal`` the
    learning rate follows :func:`annealed_lr` from ``base_lr`` (default: the
    optimizer's current rate).
    """
    model.check_vocabulary(dataset.vocabulary_hash)
    if epochs < 0 or batch_size < 1:
        raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
    optimizer = optimizer if optimizer is not None else Adam()
    base_lr = optimizer.learning_rate if base_lr is None else base_lr
    report = TrainReport(final_learning_rate=optimizer.learning_rate)
    n = len(dataset)
    if n == 0 or (epochs == 0 and not max_steps):
        return report
    steps_per_epoch = math.ceil(n / batch_size)
    total = max_steps if max_steps is not None else epochs * steps_per_epoch
    rng = _rng(seed)
    is_nmt = isinstance(model, Seq2SeqModel)
    step = 0
    epoch = 0
    while step < total:
        order = rng.permutation(n)
        running = 0.0
        count = 0
        for start in range(0, n, batch_size):
            if step >= total:
                break
            if anneal:
                optimizer.learning_rate = annealed_lr(base_lr, step / steps_per_epoch)
            idx = order[start:start + batch_size]
            if is_nmt:
                loss, grads = model.loss_and_grads(dataset.inputs[idx], dataset.targets[idx], teacher_forcing)
            else:
                loss, grads = model.loss_and_grads(dataset.inputs[idx], dataset.targets[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epoch}, step {step}, lr {optimizer.learning_rate:g}"
                )
            optimizer.step(model.params, grads)
            running += loss * len(idx)
            count += len(idx)
            step += 1
        report.epoch_losses.append(running / max(count, 1))
        log.info("epoch %d: mean loss %.5f (lr %.3g, %d steps)", epoch, report.epoch_losses[-1],
                 optimizer.learning_rate, step)
        epoch += 1
    report.steps = step
    report.final_learning_rate = optimizer.learning_rate
    return report


def train_nlg(model: NlgModel, dataset, epochs, optimizer=None, **kwargs) -> TrainReport:
    if not isinstance(model, NlgModel):
        raise InvalidArgumentError("train_nlg needs an NlgModel")
    return train(model, dataset, epochs, optimizer, **kwargs)


def train_nmt(model: Seq2SeqModel, dataset, epochs, optimizer=None, teacher_forcing=True, **kwargs) -> TrainReport:
    if not isinstance(model, Seq2SeqModel):
        raise InvalidArgumentError("train_nmt needs a Seq2SeqModel")
    return train(model, dataset, epochs, optimizer, teacher_forcing=teacher_forcing, **kwargs)


def evaluate_loss(model, dataset: WindowedDataset, batch_size: int = 512) -> float:
    """Teacher-forced mean cross-entropy over the N future tokens of every window.

    Comparable between NLG and NMT models: both are scored only on the future.
    """
    model.check_vocabulary(dataset.vocabulary_hash)
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        x = dataset.inputs[start:start + batch_size]
        y = dataset.targets[start:start + batch_size]
        logits = model.target_logits(x, y)
        total += softmax_xent(logits, y.T)[0] * y.size
    return total / max(dataset.targets.size, 1)


def token_accuracy(model, dataset: WindowedDataset, batch_size: int = 512) -> float:
    """Fraction of future tokens reproduced exactly by greedy decoding."""
    hits = 0
    for start in range(0, len(dataset), batch_size):
        pred = model.predict(dataset.inputs[start:start + batch_size], dataset.N)
        hits += int(np.sum(pred == dataset.targets[start:start + batch_size]))
    return hits / max(dataset.targets.size, 1)


def fine_tune(checkpoint, dataset: WindowedDataset, epochs: int, optimizer: Adam | None = None, **kwargs):
    """Continue training every parameter of a trained model on new data.

    ``checkpoint`` is a path or an in-memory model (which is copied, not
    mutated). Returns (model, report).
    """
    if isinstance(checkpoint, (NlgModel, Seq2SeqModel)):
        model = checkpoint.copy()
    else:
        model, saved_opt, _ = load_checkpoint(checkpoint)
        optimizer = optimizer or saved_opt
    model.check_vocabulary(dataset.vocabulary_hash)
    report = train(model, dataset, epochs, optimizer, **kwargs)
    return model, report
