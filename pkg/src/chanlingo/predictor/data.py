"""Prediction tasks and sliding-window datasets over token sequences."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError, VocabularyMismatchError
from ..vcc import TokenSeries, Vocabulary


@dataclass(frozen=True)
class PredictionTask:
    """An M:N prediction: M past changes in, N future changes out.

    ``stride`` is the window slide used when building datasets; ``S`` the
    temporal decimation factor used for transfer to slower channels.
    """

    M: int
    N: int
    stride: int = 1
    S: int = 1

    def __post_init__(self):
        for name in ("M", "N", "stride", "S"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgumentError(f"{name} must be an integer >= 1, got {value!r}")

    @property
    def window(self) -> int:
        return self.M + self.N


def window_count(length: int, M: int, N: int, stride: int) -> int:
    if length < M + N:
        return 0
    return (length - (M + N)) // stride + 1


@dataclass
class WindowedDataset:
    """Aligned arrays of (history ids [K, M], future ids [K, N], anchor [K])."""

    inputs: np.ndarray
    targets: np.ndarray
    anchors: np.ndarray
    vocabulary_hash: int

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def M(self) -> int:
        return self.inputs.shape[1]

    @property
    def N(self) -> int:
        return self.targets.shape[1]

    def subset(self, index) -> WindowedDataset:
        return WindowedDataset(self.inputs[index], self.targets[index], self.anchors[index], self.vocabulary_hash)

    @classmethod
    def empty(cls, M, N, vocabulary_hash):
        return cls(np.zeros((0, M), np.int64), np.zeros((0, N), np.int64), np.zeros(0, np.complex128),
                   vocabulary_hash)

    @classmethod
    def concatenate(cls, parts) -> WindowedDataset:
        parts = list(parts)
        if not parts:
            raise InvalidArgumentError("nothing to concatenate")
        hashes = {p.vocabulary_hash for p in parts}
        if len(hashes) != 1:
            raise VocabularyMismatchError("datasets were tokenized with different vocabularies")
        return cls(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.anchors for p in parts]),
            parts[0].vocabulary_hash,
        )


def make_dataset(tokens, task: PredictionTask, vocab: Vocabulary | None = None) -> WindowedDataset:
    """Slide an (M + N)-token window over one or more token series.

    Window ``i`` starts at token ``i * stride``. With ``vocab`` given, each
    example's anchor is the coefficient reconstructed just before its first
    target change (tokens should be encoded with ``anchor="first"``); without
    it anchors are NaN.
    """
    if isinstance(tokens, TokenSeries):
        tokens = [tokens]
    parts = []
    for ts in tokens:
        if vocab is not None and ts.vocabulary_hash != vocab.hash:
            raise VocabularyMismatchError("token series and vocabulary disagree")
        count = window_count(len(ts), task.M, task.N, task.stride)
        if count == 0:
            warnings.warn(
                f"token series of length {len(ts)} is shorter than M+N={task.window}; no windows",
                stacklevel=2,
            )
            parts.append(WindowedDataset.empty(task.M, task.N, ts.vocabulary_hash))
            continue
        starts = np.arange(count) * task.stride
        idx = starts[:, None] + np.arange(task.window)[None, :]
        win = ts.ids[idx]
        if vocab is not None:
            recon = ts.anchor + np.concatenate([[0.0], np.cumsum(vocab.changes_of(ts.ids))])
            anchors = recon[starts + task.M]
        else:
            anchors = np.full(count, np.nan + 0j)
        parts.append(WindowedDataset(win[:, :task.M].copy(), win[:, task.M:].copy(), anchors, ts.vocabulary_hash))
    return WindowedDataset.concatenate(parts)
