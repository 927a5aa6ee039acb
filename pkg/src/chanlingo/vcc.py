"""Channel changes, their quantization, and the Vocabulary of Channel Changes.

A channel change (CC) is the first difference of consecutive coefficients.
Quantized CCs live on a square grid of pitch ``quant_step``; internally they are
kept as integer grid coordinates ``(k_re, k_im)`` so dictionary lookups never
depend on float rounding. IDs are 1..X in descending frequency; ID 0 is ``unk``.

Vocabulary file (VCCF)::

    # vccf v1 step=0.01 X=3 L=1
    1 0.02 -0.02 538211
    2 -0.02 0.02 536925
    3 -0.02 -0.02 535761
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .channel_synth import ChannelSeries
from .errors import (
    CorruptTokenError,
    InvalidArgumentError,
    ParseError,
    VocabularyMismatchError,
)

log = logging.getLogger(__name__)

UNK_ID = 0
DEFAULT_QUANT_STEP = 0.01
DEFAULT_MAX_SIZE = 2000
DEFAULT_MIN_FREQUENCY = 11
VCCF_VERSION = "v1"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class ChangeSeries:
    """First differences of a channel series; ``quant_step`` is None when raw."""

    changes: np.ndarray
    quant_step: float | None = None
    source_interval_s: float = 1.0

    def __post_init__(self):
        changes = np.asarray(self.changes, dtype=np.complex128).reshape(-1)
        changes.setflags(write=False)
        object.__setattr__(self, "changes", changes)

    def __len__(self) -> int:
        return self.changes.size

    @property
    def is_quantized(self) -> bool:
        return self.quant_step is not None


def normalize_power(series: ChannelSeries) -> tuple[ChannelSeries, float]:
    """Scale a series to unit mean power. Returns the scaled series and the RMS factor."""
    rms = math.sqrt(series.mean_power)
    if rms == 0.0:
        raise InvalidArgumentError("cannot normalize an all-zero series")
    return series.with_samples(series.samples / rms), rms


def compute_changes(series: ChannelSeries) -> ChangeSeries:
    if len(series) < 2:
        raise InvalidArgumentError("need at least 2 samples to form a channel change")
    return ChangeSeries(np.diff(series.samples), None, series.sample_interval_s)


def _grid_index(values: np.ndarray, step: float) -> np.ndarray:
    """Nearest grid index, ties rounded away from zero."""
    scaled = np.asarray(values, dtype=np.float64) / step
    return (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int64)


def quantize(changes: ChangeSeries, quant_step: float) -> ChangeSeries:
    if not (math.isfinite(quant_step) and quant_step > 0):
        raise InvalidArgumentError(f"quant_step must be > 0, got {quant_step!r}")
    z = changes.changes
    q = _grid_index(z.real, quant_step) * quant_step + 1j * (_grid_index(z.imag, quant_step) * quant_step)
    return ChangeSeries(q, float(quant_step), changes.source_interval_s)


def _step_decimals(step: float) -> int:
    for d in range(16):
        if round(step, d) == step:
            return d
    return 17


@dataclass(frozen=True)
class VocabEntry:
    id: int
    k_re: int
    k_im: int
    frequency: int


class Vocabulary:
    """Immutable bijection between quantized channel changes and integer IDs."""

    def __init__(self, quant_step: float, entries, oov_count: int = 0):
        self.quant_step = float(quant_step)
        if not (math.isfinite(self.quant_step) and self.quant_step > 0):
            raise InvalidArgumentError("quant_step must be > 0")
        self.entries: tuple[VocabEntry, ...] = tuple(entries)
        self.oov_count = int(oov_count)
        self._to_id: dict[tuple[int, int], int] = {}
        for expected_id, e in enumerate(self.entries, start=1):
            if e.id != expected_id:
                raise InvalidArgumentError(f"IDs must be dense from 1; found {e.id} at position {expected_id}")
            if e.frequency < 1:
                raise InvalidArgumentError(f"ID {e.id} has frequency {e.frequency} < 1")
            if expected_id > 1 and e.frequency > self.entries[expected_id - 2].frequency:
                raise InvalidArgumentError(f"frequency increases at ID {e.id}")
            key = (e.k_re, e.k_im)
            if key in self._to_id:
                raise InvalidArgumentError(f"duplicate CC at IDs {self._to_id[key]} and {e.id}")
            self._to_id[key] = e.id
        grid = np.zeros((len(self.entries) + 1, 2), dtype=np.int64)
        for e in self.entries:
            grid[e.id] = (e.k_re, e.k_im)
        self._grid = grid
        self._table = None
        self._values = (grid[:, 0] * self.quant_step + 1j * (grid[:, 1] * self.quant_step)).astype(np.complex128)
        self._values[UNK_ID] = 0.0  # unk decodes to the zero change
        self._values.setflags(write=False)
        self.hash = fnv1a_64(self._canonical().encode("utf-8"))

    # X, the number of non-unk entries
    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def unk_id(self) -> int:
        return UNK_ID

    @property
    def num_ids(self) -> int:
        """Number of token IDs including unk (X + 1); the model's vocabulary width."""
        return len(self.entries) + 1

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self.quant_step == other.quant_step
            and self.entries == other.entries
            and self.oov_count == other.oov_count
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Vocabulary(step={self.quant_step}, X={self.size}, L={self.oov_count}, hash={self.hash:016x})"

    def _canonical(self) -> str:
        head = f"step={self.quant_step!r}\n"
        return head + "".join(f"{e.id} {e.k_re} {e.k_im} {e.frequency}\n" for e in self.entries)

    def cc(self, token_id: int) -> complex:
        if not 0 <= token_id <= self.size:
            raise CorruptTokenError(f"token id {token_id} outside [0, {self.size}]")
        return complex(self._values[token_id])

    def id_of(self, cc: complex) -> int:
        """ID of a CC value (snapped to the grid); unk if absent."""
        k = (int(_grid_index(cc.real, self.quant_step)), int(_grid_index(cc.imag, self.quant_step)))
        return self._to_id.get(k, UNK_ID)

    def ids_from_grid(self, k_re: np.ndarray, k_im: np.ndarray) -> np.ndarray:
        k_re = np.asarray(k_re, dtype=np.int64)
        k_im = np.asarray(k_im, dtype=np.int64)
        out = np.full(k_re.shape, UNK_ID, dtype=np.int64)
        if not self.entries:
            return out
        lo = self._grid[1:].min(axis=0)
        hi = self._grid[1:].max(axis=0)
        if self._table is None:
            table = np.full(hi - lo + 1, UNK_ID, dtype=np.int64)
            table[self._grid[1:, 0] - lo[0], self._grid[1:, 1] - lo[1]] = np.arange(1, self.num_ids)
            self._table = table
        inside = (k_re >= lo[0]) & (k_re <= hi[0]) & (k_im >= lo[1]) & (k_im <= hi[1])
        out[inside] = self._table[k_re[inside] - lo[0], k_im[inside] - lo[1]]
        return out

    def changes_of(self, ids) -> np.ndarray:
        """Vectorized id -> CC lookup. unk maps to 0."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() > self.size):
            bad = ids[(ids < 0) | (ids > self.size)][0]
            raise CorruptTokenError(f"token id {int(bad)} outside [0, {self.size}]")
        return self._values[ids]

    def format_cc(self, token_id: int) -> str:
        """Table-style rendering such as ``'+0.02-0.02i'``."""
        z = self.cc(token_id)
        d = _step_decimals(self.quant_step)
        return f"{z.real:+.{d}f}{z.imag:+.{d}f}i"


def build_vocabulary(
    changes: ChangeSeries,
    max_size: int = DEFAULT_MAX_SIZE,
    min_frequency: int = DEFAULT_MIN_FREQUENCY,
) -> Vocabulary:
    """Rank distinct quantized CCs by frequency and keep the top ones.

    Ties are broken by ascending (real, imag). CCs cut by ``min_frequency`` or
    ``max_size`` are counted in the vocabulary's ``oov_count``.
    """
    if not changes.is_quantized:
        raise InvalidArgumentError("build_vocabulary needs quantized changes; call quantize() first")
    if len(changes) == 0:
        raise InvalidArgumentError("cannot build a vocabulary from zero changes")
    if max_size < 1 or min_frequency < 1:
        raise InvalidArgumentError("max_size and min_frequency must be >= 1")
    step = changes.quant_step
    k_re = _grid_index(changes.changes.real, step)
    k_im = _grid_index(changes.changes.imag, step)
    counts = Counter(zip(k_re.tolist(), k_im.tolist()))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    kept = [kv for kv in ranked if kv[1] >= min_frequency][:max_size]
    entries = [VocabEntry(i, k[0], k[1], n) for i, (k, n) in enumerate(kept, start=1)]
    return Vocabulary(step, entries, oov_count=len(ranked) - len(kept))


def build_vocabulary_from_series(
    series_list,
    quant_step: float = DEFAULT_QUANT_STEP,
    max_size: int = DEFAULT_MAX_SIZE,
    min_frequency: int = DEFAULT_MIN_FREQUENCY,
) -> Vocabulary:
    """Pool the quantized changes of several series into one vocabulary."""
    pooled = np.concatenate([quantize(compute_changes(s), quant_step).changes for s in series_list])
    return build_vocabulary(ChangeSeries(pooled, quant_step), max_size, min_frequency)


@dataclass(frozen=True)
class TokenSeries:
    """Integer token IDs plus the known coefficient their reconstruction starts from."""

    ids: np.ndarray
    anchor: complex
    vocabulary_hash: int
    sample_interval_s: float = 1.0

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "anchor", complex(self.anchor))

    def __len__(self) -> int:
        return self.ids.size


def encode_changes(changes: ChangeSeries, vocab: Vocabulary) -> np.ndarray:
    """Map changes to IDs; raw changes are quantized with the vocabulary's step."""
    if changes.is_quantized and not math.isclose(changes.quant_step, vocab.quant_step, rel_tol=1e-12):
        raise InvalidArgumentError(
            f"changes quantized with step {changes.quant_step} but vocabulary uses {vocab.quant_step}"
        )
    z = changes.changes
    return vocab.ids_from_grid(_grid_index(z.real, vocab.quant_step), _grid_index(z.imag, vocab.quant_step))


def encode(series: ChannelSeries, vocab: Vocabulary, anchor: str = "last") -> TokenSeries:
    """Tokenize the changes of ``series``.

    ``anchor="last"`` (history windows) sets the anchor to the final sample, from
    which future changes are accumulated. ``anchor="first"`` sets it to the
    first sample, so :func:`decode` reconstructs ``series.samples[1:]``.
    """
    ids = encode_changes(compute_changes(series), vocab)
    if anchor == "last":
        a = series.samples[-1]
    elif anchor == "first":
        a = series.samples[0]
    else:
        raise InvalidArgumentError(f"anchor must be 'last' or 'first', got {anchor!r}")
    return TokenSeries(ids, a, vocab.hash, series.sample_interval_s)


def decode(tokens: TokenSeries, vocab: Vocabulary, label: str = "") -> ChannelSeries:
    """Accumulate the tokens' changes onto the anchor: out[y] = anchor + sum(cc[0..y])."""
    if tokens.vocabulary_hash != vocab.hash:
        raise VocabularyMismatchError(
            f"tokens made with vocabulary {tokens.vocabulary_hash:016x}, decoding with {vocab.hash:016x}"
        )
    n_unk = int(np.count_nonzero(tokens.ids == UNK_ID))
    if n_unk:
        log.debug("decode: %d of %d tokens are unk (zero change)", n_unk, len(tokens))
    samples = tokens.anchor + np.cumsum(vocab.changes_of(tokens.ids))
    return ChannelSeries(samples, tokens.sample_interval_s, label)


def unk_rate(ids) -> float:
    ids = np.asarray(ids)
    return float(np.mean(ids == UNK_ID)) if ids.size else 0.0


# -- VCCF text format ------------------------------------------------------------


def format_vocabulary(vocab: Vocabulary) -> str:
    d = _step_decimals(vocab.quant_step)
    lines = [f"# vccf {VCCF_VERSION} step={vocab.quant_step!r} X={vocab.size} L={vocab.oov_count}"]
    for e in vocab.entries:
        re_, im_ = e.k_re * vocab.quant_step, e.k_im * vocab.quant_step
        lines.append(f"{e.id} {re_:.{d}f} {im_:.{d}f} {e.frequency}")
    return "\n".join(lines) + "\n"


def save_vocabulary(vocab: Vocabulary, path) -> None:
    atomic_write_text(path, format_vocabulary(vocab))


def parse_vocabulary(text: str, path=None) -> Vocabulary:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file, expected '# vccf v1' header", 1, path)
    head = lines[0].split()
    if head[:3] != ["#", "vccf", VCCF_VERSION]:
        raise ParseError(f"bad header {lines[0]!r}", 1, path)
    fields = {}
    for item in head[3:]:
        key, sep, value = item.partition("=")
        if not sep or key not in ("step", "X", "L"):
            raise ParseError(f"unknown header field {item!r}", 1, path)
        fields[key] = value
    try:
        step = float(fields["step"])
        declared_x = int(fields["X"])
        oov = int(fields.get("L", "0"))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad or missing header field ({exc})", 1, path) from None
    if not (math.isfinite(step) and step > 0):
        raise ParseError(f"step must be > 0, got {step}", 1, path)

    entries = []
    seen: dict[tuple[int, int], int] = {}
    prev_freq = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected '<id> <real> <imag> <frequency>', got {line!r}", lineno, path)
        try:
            tid, re_, im_, freq = int(parts[0]), float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError:
            raise ParseError(f"malformed entry {line!r}", lineno, path) from None
        if tid != len(entries) + 1:
            raise ParseError(f"expected ID {len(entries) + 1}, got {tid}", lineno, path)
        k_re, k_im = int(round(re_ / step)), int(round(im_ / step))
        if abs(k_re * step - re_) > 1e-9 or abs(k_im * step - im_) > 1e-9:
            raise ParseError(f"CC {re_}{im_:+}i is not on the step-{step} grid", lineno, path)
        if (k_re, k_im) in seen:
            raise ParseError(f"duplicate CC (already ID {seen[(k_re, k_im)]})", lineno, path)
        if freq < 1:
            raise ParseError(f"frequency must be >= 1, got {freq}", lineno, path)
        if prev_freq is not None and freq > prev_freq:
            raise ParseError("frequencies must be non-increasing by ID", lineno, path)
        seen[(k_re, k_im)] = tid
        prev_freq = freq
        entries.append(VocabEntry(tid, k_re, k_im, freq))
    if declared_x != len(entries):
        raise ParseError(f"header says X={declared_x} but file lists {len(entries)} entries", 1, path)
    return Vocabulary(step, entries, oov)


def load_vocabulary(path) -> Vocabulary:
    return parse_vocabulary(Path(path).read_text(encoding="utf-8"), path=path)
