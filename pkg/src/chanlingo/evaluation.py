"""Prediction quality: NMSE, spliced test sequences, a zero-order-hold baseline,
the prediction-diversity combiner, and tabular reports."""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .channel_synth import ChannelSeries
from .errors import InvalidArgumentError, UndefinedNMSEError
from .predictor.data import PredictionTask
from .predictor.inference import predict_block
from .vcc import UNK_ID


def nmse(truth, predicted, normalize: str = "predicted") -> float:
    """Sum |h - h_hat|^2 over sum |h_hat|^2.

    The denominator is the *predicted* sequence's power by default;
    ``normalize="truth"`` uses the true sequence instead.
    """
    h = np.asarray(getattr(truth, "samples", truth), dtype=np.complex128)
    p = np.asarray(getattr(predicted, "samples", predicted), dtype=np.complex128)
    if h.shape != p.shape or h.size < 1:
        raise InvalidArgumentError(f"nmse needs equal non-empty lengths, got {h.shape} and {p.shape}")
    if normalize == "predicted":
        ref = p
    elif normalize == "truth":
        ref = h
    else:
        raise InvalidArgumentError(f"normalize must be 'predicted' or 'truth', got {normalize!r}")
    denom = float(np.sum(np.abs(ref) ** 2))
    if denom == 0.0:
        raise UndefinedNMSEError(f"{normalize} sequence has zero power")
    return float(np.sum(np.abs(h - p) ** 2)) / denom


@dataclass
class SplicedResult:
    """A copy of the truth whose N-blocks were replaced by predictions."""

    predicted: ChannelSeries
    truth: ChannelSeries
    segments: list
    unk_count: int = 0
    token_count: int = 0

    @property
    def evaluable(self) -> slice:
        if not self.segments:
            return slice(0, 0)
        return slice(self.segments[0][0], self.segments[-1][0] + self.segments[-1][1])

    def nmse(self, normalize: str = "predicted") -> float:
        """NMSE over the replaced region only; the copied-through prefix is excluded."""
        sl = self.evaluable
        return nmse(self.truth.samples[sl], self.predicted.samples[sl], normalize)

    @property
    def unk_rate(self) -> float:
        return self.unk_count / self.token_count if self.token_count else 0.0


def block_starts(length: int, task: PredictionTask) -> np.ndarray:
    first = task.M + 1
    if length < first + task.N:
        return np.zeros(0, dtype=np.int64)
    count = (length - first) // task.N
    return first + np.arange(count) * task.N


def splice(truth: ChannelSeries, model, vocab, task: PredictionTask, accumulate: bool = False) -> SplicedResult:
    """Replace every N-block after the first M+1 samples with an M:N prediction.

    By default each block is predicted from the *true* preceding M+1 samples.
    With ``accumulate`` the history is taken from the spliced sequence itself,
    so errors carry over from block to block.

    ``model`` may also be a plain callable ``f(histories [B, M+1], N) -> [B, N]``
    (``vocab`` is then ignored), which is how baselines plug in.
    """
    n = len(truth)
    if n < task.M + 1 + task.N:
        raise InvalidArgumentError(f"truth has {n} samples, need at least M+1+N = {task.M + 1 + task.N}")
    starts = block_starts(n, task)
    M1, N = task.M + 1, task.N
    out = truth.samples.copy()
    unk = tokens = 0

    def run(histories):
        nonlocal unk, tokens
        if callable(model) and not hasattr(model, "predict"):
            return np.asarray(model(histories, N), dtype=np.complex128)
        samples, ids = predict_block(model, vocab, histories, N)
        unk += int(np.count_nonzero(ids == UNK_ID))
        tokens += ids.size
        return samples

    if accumulate:
        for s in starts:
            out[s:s + N] = run(out[s - M1:s][None])[0]
    else:
        hist = np.stack([truth.samples[s - M1:s] for s in starts])
        pred = run(hist)
        for s, row in zip(starts, pred):
            out[s:s + N] = row
    segments = [(int(s), N) for s in starts]
    return SplicedResult(truth.with_samples(out, label=f"{truth.label}+spliced"), truth, segments, unk, tokens)


def zoh_predictor(histories, n_future):
    return np.repeat(np.asarray(histories)[:, -1:], n_future, axis=1)


def zoh_baseline(truth: ChannelSeries, task: PredictionTask) -> SplicedResult:
    """Each N-block filled with the last true sample before it."""
    return splice(truth, zoh_predictor, None, task)


@dataclass
class DiversitySet:
    candidates: list
    selector_trace: np.ndarray | None = None

    def __post_init__(self):
        if not self.candidates:
            raise InvalidArgumentError("prediction diversity needs at least one candidate")
        lengths = {len(c) for c in self.candidates}
        if len(lengths) != 1:
            raise InvalidArgumentError(f"candidates have unequal lengths {sorted(lengths)}")


def prediction_diversity(candidates) -> ChannelSeries:
    """Per position, keep the candidate value with the largest magnitude.

    Accepts a :class:`DiversitySet` (its ``selector_trace`` is filled in) or a
    plain list of series. Ties go to the lowest candidate index.
    """
    dset = candidates if isinstance(candidates, DiversitySet) else DiversitySet(list(candidates))
    stack = np.stack([np.asarray(getattr(c, "samples", c), dtype=np.complex128) for c in dset.candidates])
    winners = np.argmax(np.abs(stack), axis=0)
    dset.selector_trace = winners
    combined = stack[winners, np.arange(stack.shape[1])]
    first = dset.candidates[0]
    if isinstance(first, ChannelSeries):
        return first.with_samples(combined, label="pd")
    return ChannelSeries(combined, 1.0, "pd")


# -- reports ---------------------------------------------------------------------


@dataclass
class RunResult:
    label: str
    nmse: float
    unk_rate: float = 0.0
    segments: int = 0
    pd_winners: Counter = field(default_factory=Counter)
    spliced: SplicedResult | None = None

    @classmethod
    def from_spliced(cls, label: str, result: SplicedResult, normalize: str = "predicted") -> RunResult:
        return cls(label, result.nmse(normalize), result.unk_rate, len(result.segments), Counter(), result)


REPORT_COLUMNS = ("label", "nmse", "unk_rate", "segments", "pd_winners")


def _winners_field(counter) -> str:
    return ";".join(f"{k}:{counter[k]}" for k in sorted(counter)) or "-"


def report_tsv(results) -> str:
    buf = io.StringIO()
    buf.write("\t".join(REPORT_COLUMNS) + "\n")
    for r in results:
        buf.write(f"{r.label}\t{r.nmse!r}\t{r.unk_rate!r}\t{r.segments}\t{_winners_field(r.pd_winners)}\n")
    return buf.getvalue()


def report_text(results) -> str:
    lines = [f"{'label':<24} {'NMSE':>12} {'NMSE dB':>9} {'unk':>7} {'blocks':>7}  PD winners"]
    for r in results:
        db = 10 * np.log10(r.nmse) if r.nmse > 0 else float("-inf")
        lines.append(
            f"{r.label:<24} {r.nmse:>12.6g} {db:>9.2f} {r.unk_rate:>7.2%} {r.segments:>7d}  {_winners_field(r.pd_winners)}"
        )
    return "\n".join(lines) + "\n"


def parse_report_tsv(text: str) -> list[dict]:
    rows = text.splitlines()
    if not rows or tuple(rows[0].split("\t")) != REPORT_COLUMNS:
        raise InvalidArgumentError("not a chanlingo report")
    out = []
    for row in rows[1:]:
        parts = row.split("\t")
        out.append({"label": parts[0], "nmse": float(parts[1]), "unk_rate": float(parts[2]),
                    "segments": int(parts[3]), "pd_winners": parts[4]})
    return out


def report(results) -> tuple[str, str]:
    """Human-readable text and TSV renderings of a list of :class:`RunResult`."""
    results = list(results)
    return report_text(results), report_tsv(results)
