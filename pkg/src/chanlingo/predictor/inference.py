"""Greedy M:N prediction in token space and in channel-coefficient space."""

from __future__ import annotations

import numpy as np

from ..channel_synth import ChannelSeries
from ..errors import InvalidArgumentError
from ..vcc import TokenSeries, Vocabulary, _grid_index, decode
from .data import PredictionTask


def predict(model, input_ids, n_future: int):
    """Greedy decoding of ``n_future`` tokens; deterministic and prefix-stable."""
    if n_future < 0:
        raise InvalidArgumentError("n_future must be >= 0")
    return model.predict(input_ids, n_future)


def history_ids(histories: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Token IDs of the changes in each history row ([B, M+1] complex -> [B, M])."""
    d = np.diff(np.asarray(histories, dtype=np.complex128), axis=1)
    step = vocab.quant_step
    return vocab.ids_from_grid(_grid_index(d.real, step), _grid_index(d.imag, step))


def predict_block(model, vocab: Vocabulary, histories: np.ndarray, n_future: int, batch_size: int = 1024):
    """Batched coefficient prediction.

    Each row of ``histories`` holds M+1 consecutive samples. Returns
    (predicted samples [B, n_future], predicted ids [B, n_future]).
    """
    model.check_vocabulary(vocab.hash)
    histories = np.atleast_2d(histories)
    ids = history_ids(histories, vocab)
    pred = np.zeros((histories.shape[0], n_future), dtype=np.int64)
    for start in range(0, histories.shape[0], batch_size):
        pred[start:start + batch_size] = model.predict(ids[start:start + batch_size], n_future)
    samples = histories[:, -1:] + np.cumsum(vocab.changes_of(pred), axis=1)
    return samples, pred


def predict_series(model, vocab: Vocabulary, history: ChannelSeries, task: PredictionTask) -> ChannelSeries:
    """Predict the N samples following ``history`` from its last M changes."""
    model.check_vocabulary(vocab.hash)
    if len(history) < task.M + 1:
        raise InvalidArgumentError(f"history has {len(history)} samples, need M+1 = {task.M + 1}")
    window = history.samples[-(task.M + 1):]
    ids = history_ids(window[None], vocab)[0]
    pred = model.predict(ids, task.N)
    tokens = TokenSeries(pred, window[-1], vocab.hash, history.sample_interval_s)
    return decode(tokens, vocab, label=f"{history.label}+pred")


def decimate(series: ChannelSeries, S: int) -> ChannelSeries:
    """Keep every S-th sample, aligned so the last sample is retained."""
    kept = series.samples[::-1][::S][::-1]
    return ChannelSeries(kept, series.sample_interval_s * S, series.label)


def interpolate(anchor: complex, coarse: np.ndarray, S: int) -> np.ndarray:
    """Linear interpolation of coarse samples at offsets S, 2S, ... after ``anchor`` back
    to unit spacing; returns len(coarse) * S samples at offsets 1 .. len(coarse)*S."""
    coarse = np.asarray(coarse, dtype=np.complex128)
    knots_t = np.arange(coarse.size + 1) * S
    knots = np.concatenate([[anchor], coarse])
    t = np.arange(1, coarse.size * S + 1)
    return np.interp(t, knots_t, knots.real) + 1j * np.interp(t, knots_t, knots.imag)


def transfer_predict(model, vocab: Vocabulary, history: ChannelSeries, task: PredictionTask) -> ChannelSeries:
    """Predict a slower channel with a model trained at a coarser time scale.

    The history is decimated by ``task.S``, an M:N prediction runs on the
    coarse timeline (covering M*S : N*S original samples) and the N coarse
    predictions are interpolated back to the original interval.
    """
    S = task.S
    if S == 1:
        return predict_series(model, vocab, history, task)
    needed = task.M * S + 1
    if len(history) < needed:
        raise InvalidArgumentError(
            f"history has {len(history)} samples; S={S}, M={task.M} needs {needed} (M+1 after decimation)"
        )
    coarse_hist = decimate(ChannelSeries(history.samples[-needed:], history.sample_interval_s, history.label), S)
    coarse_pred = predict_series(model, vocab, coarse_hist, PredictionTask(task.M, task.N))
    fine = interpolate(history.samples[-1], coarse_pred.samples, S)
    return ChannelSeries(fine, history.sample_interval_s, f"{history.label}+pred")
