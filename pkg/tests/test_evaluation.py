import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chanlingo.channel_synth import ChannelSeries
from chanlingo.errors import InvalidArgumentError, UndefinedNMSEError
from chanlingo.evaluation import (
    DiversitySet,
    RunResult,
    block_starts,
    nmse,
    parse_report_tsv,
    prediction_diversity,
    report,
    splice,
    zoh_baseline,
)
from chanlingo.predictor import ModelConfig, PredictionTask, build_model
from chanlingo.vcc import ChangeSeries, build_vocabulary

RNG = np.random.default_rng(11)


def cseries(values):
    return ChannelSeries(np.asarray(values, dtype=complex), 1e-3)


def test_nmse_examples():
    h = RNG.normal(size=50) + 1j * RNG.normal(size=50)
    assert nmse(h, h) == 0.0
    assert nmse(h, 2 * h) == pytest.approx(0.25)
    assert nmse(h, 2 * h, normalize="truth") == pytest.approx(1.0)
    with pytest.raises(UndefinedNMSEError):
        nmse(h, np.zeros(50))
    with pytest.raises(InvalidArgumentError):
        nmse(h, h[:-1])


@settings(max_examples=50)
@given(st.floats(0, 2 * np.pi), st.integers(1, 40))
def test_nmse_phase_invariance(theta, n):
    rng = np.random.default_rng(n)
    h = rng.normal(size=n) + 1j * rng.normal(size=n)
    p = h + 0.1 * (rng.normal(size=n) + 1j * rng.normal(size=n))
    rot = np.exp(1j * theta)
    assert nmse(h * rot, p * rot) == pytest.approx(nmse(h, p), rel=1e-9)


def test_block_layout():
    task = PredictionTask(5, 4)
    np.testing.assert_array_equal(block_starts(30, task), [6, 10, 14, 18, 22, 26])
    assert block_starts(9, task).size == 0


def test_splice_bookkeeping():
    h = cseries(RNG.normal(size=41) + 1j * RNG.normal(size=41))
    task = PredictionTask(5, 4)

    def marker(histories, n):
        return np.full((histories.shape[0], n), 99.0)

    out = splice(h, marker, None, task)
    starts = [s for s, _ in out.segments]
    assert starts == [6, 10, 14, 18, 22, 26, 30, 34]
    replaced = np.zeros(41, bool)
    for s, n in out.segments:
        assert not replaced[s:s + n].any()
        replaced[s:s + n] = True
    assert replaced[6:38].all() and not replaced[:6].any() and not replaced[38:].any()
    np.testing.assert_array_equal(out.predicted.samples[~replaced], h.samples[~replaced])
    assert np.all(out.predicted.samples[replaced] == 99)
    assert out.evaluable == slice(6, 38)
    assert len(out.predicted) == len(h)


def test_splice_uses_true_history_unless_accumulating():
    h = cseries(np.arange(30) * (1 + 1j))
    task = PredictionTask(3, 5)
    seen = []

    def spy(histories, n):
        seen.extend(histories.tolist())
        return np.zeros((histories.shape[0], n)) + 1000

    splice(h, spy, None, task)
    assert seen[1] == h.samples[5:9].tolist()
    seen.clear()
    splice(h, spy, None, task, accumulate=True)
    assert seen[1][-1] == 1000


def test_oracle_and_hold_predictors():
    h = cseries(np.exp(1j * np.linspace(0, 3, 60)))
    task = PredictionTask(5, 4)

    def oracle(histories, n):
        idx = [np.flatnonzero(h.samples == row[-1])[0] for row in histories]
        return np.stack([h.samples[i + 1:i + 1 + n] for i in idx])

    assert splice(h, oracle, None, task).nmse() == 0.0
    assert zoh_baseline(cseries(np.full(40, 0.3 - 0.7j)), task).nmse() == 0.0


def test_zoh_closed_form_for_single_exponential():
    t = np.arange(2001) * 1e-3
    h = cseries(np.exp(2j * np.pi * 10.0 * t))
    result = zoh_baseline(h, PredictionTask(5, 10))
    expected = np.mean(4 * np.sin(0.01 * np.pi * np.arange(1, 11)) ** 2)
    assert expected == pytest.approx(0.148735, abs=1e-6)
    assert result.nmse() == pytest.approx(expected, rel=1e-9)


def test_splice_with_model_counts_unk():
    cc = np.array([0.01, -0.01, 0.01j])
    vocab = build_vocabulary(ChangeSeries(np.repeat(cc, 3), 0.01), min_frequency=1)
    model = build_model(ModelConfig("nmt", vocab.num_ids, 4, 8, 1, "gru", False, False), vocab.hash)
    model.params["out.W"][:] = 0
    model.params["out.b"][:] = 0
    model.params["out.b"][0] = 5.0
    h = cseries(np.cumsum(RNG.choice(cc, 40)) + 1)
    out = splice(h, model, vocab, PredictionTask(4, 5))
    assert out.unk_rate == 1.0
    assert out.token_count == 5 * len(out.segments)


def test_prediction_diversity_examples():
    a = cseries([1, 3j])
    assert prediction_diversity([a]) == a.with_samples(a.samples, label="pd")
    b = cseries([2, -2])
    dset = DiversitySet([a, b])
    out = prediction_diversity(dset)
    np.testing.assert_array_equal(np.abs(out.samples), [2, 3])
    np.testing.assert_array_equal(dset.selector_trace, [1, 0])
    tie = DiversitySet([cseries([1j]), cseries([-1])])
    prediction_diversity(tie)
    assert tie.selector_trace.tolist() == [0]
    with pytest.raises(InvalidArgumentError):
        DiversitySet([])
    with pytest.raises(InvalidArgumentError):
        DiversitySet([a, cseries([1])])


def test_report_round_trip():
    h = cseries(np.exp(1j * np.linspace(0, 9, 80)))
    task = PredictionTask(4, 4)
    rows = [RunResult.from_spliced("zoh", zoh_baseline(h, task)), RunResult("other", 0.5, 0.25, 3)]
    text, tsv = report(rows)
    parsed = parse_report_tsv(tsv)
    assert [r["label"] for r in parsed] == ["zoh", "other"]
    assert parsed[0]["nmse"] == rows[0].nmse
    assert parsed[1]["unk_rate"] == 0.25
    assert "zoh" in text and "other" in text
    assert len(tsv.splitlines()) == 3
