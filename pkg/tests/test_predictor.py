import numpy as np
import pytest
from conftest import periodic_windows

from chanlingo.channel_synth import ChannelSeries
from chanlingo.errors import (
    InvalidArgumentError,
    InvalidStateError,
    TrainingDivergedError,
    VocabularyMismatchError,
)
from chanlingo.neural.optim import Adam
from chanlingo.predictor import (
    ModelConfig,
    PredictionTask,
    WindowedDataset,
    build_model,
    decimate,
    evaluate_loss,
    fine_tune,
    interpolate,
    make_dataset,
    predict,
    predict_series,
    save_checkpoint,
    token_accuracy,
    train,
    train_nlg,
    train_nmt,
    transfer_predict,
    window_count,
)
from chanlingo.vcc import ChangeSeries, TokenSeries, build_vocabulary, decode, encode

NMT = ModelConfig("nmt", 9, 8, 16, 1, "gru", True, True)


def grid_vocab():
    # every change on a 5 x 5 grid around zero is in vocabulary
    cc = np.array([complex(a, b) for a in range(-2, 3) for b in range(-2, 3)]) * 0.01
    return build_vocabulary(ChangeSeries(np.repeat(cc, 2), 0.01), min_frequency=1)


def test_task_validation():
    with pytest.raises(InvalidArgumentError):
        PredictionTask(0, 3)
    with pytest.raises(InvalidArgumentError):
        PredictionTask(3, 3, stride=0)


def test_window_counts():
    assert window_count(100, 30, 10, 1) == 61
    assert window_count(40, 30, 10, 1) == 1
    assert window_count(39, 30, 10, 1) == 0
    assert window_count(100, 30, 10, 5) == 13
    tokens = TokenSeries(np.arange(100) % 5, 0, 1)
    ds = make_dataset(tokens, PredictionTask(30, 10))
    assert len(ds) == 61
    np.testing.assert_array_equal(ds.inputs[3], tokens.ids[3:33])
    np.testing.assert_array_equal(ds.targets[3], tokens.ids[33:43])
    assert len(make_dataset(tokens, PredictionTask(30, 10, stride=5))) == 13


def test_short_input_gives_empty_dataset_with_warning():
    with pytest.warns(UserWarning):
        ds = make_dataset(TokenSeries([1, 2], 0, 1), PredictionTask(3, 2))
    assert len(ds) == 0


def test_window_anchors_are_reconstructed_coefficients():
    vocab = grid_vocab()
    rng = np.random.default_rng(1)
    steps = (rng.integers(-2, 3, 60) + 1j * rng.integers(-2, 3, 60)) * 0.01
    s = ChannelSeries(0.3 + np.concatenate([[0], np.cumsum(steps)]), 1e-3)
    ds = make_dataset(encode(s, vocab, anchor="first"), PredictionTask(6, 4, stride=3), vocab)
    for i in range(len(ds)):
        # the coefficient just before the first target change
        assert ds.anchors[i] == pytest.approx(s.samples[i * 3 + 6], abs=1e-12)


def test_encode_history_shapes_and_halves():
    model = build_model(NMT, 1, seed=0, dtype=np.float64)
    states, state0 = model.encode_history([3])
    assert states.shape == (1, 32)
    assert state0[0].shape == (1, 16)
    x = model.params["embedding"][[3]][:, None, :]
    fwd, _, _ = model.enc_f.forward(model.params, x)
    np.testing.assert_allclose(states[:, :16], fwd[:, 0, :])
    states, _ = model.encode_history(np.arange(1, 6))
    assert states.shape == (5, 32)


def test_zero_weight_encoder_states_are_zero():
    model = build_model(NMT, 1, seed=0, dtype=np.float64)
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    states, _ = model.encode_history([1, 2, 3])
    assert np.all(states == 0)


def test_attend_examples():
    model = build_model(ModelConfig("nmt", 9, 4, 2, 1, "gru", False, True), 1, dtype=np.float64)
    _, w = model.attend(np.array([0.3, -0.2]), np.array([[0.5, 0.1]]))
    assert w.tolist() == [1.0]
    _, w = model.attend(np.array([0.3, -0.2]), np.tile([0.5, 0.1], (4, 1)))
    np.testing.assert_allclose(w, 0.25)
    model.params["attn.W"] = np.eye(2)
    ctx, w = model.attend(np.array([1.0, 0.0]), np.array([[2.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_allclose(w, [np.e ** 2 / (np.e ** 2 + 1), 1 / (np.e ** 2 + 1)])
    assert w[0] == pytest.approx(0.8808, abs=1e-4)
    np.testing.assert_allclose(ctx, [2 * w[0], 0.0])
    plain = build_model(ModelConfig("nmt", 9, 4, 2, 1, "gru", False, False), 1)
    with pytest.raises(InvalidStateError):
        plain.attend(np.zeros(2), np.zeros((3, 2)))


@pytest.mark.parametrize("cfg", [NMT, ModelConfig("nlg", 9, 8, 16, 2, "lstm", False, False)])
def test_future_targets_do_not_leak_into_earlier_logits(cfg):
    model = build_model(cfg, 1, seed=2, dtype=np.float64)
    rng = np.random.default_rng(0)
    x = rng.integers(0, 9, (2, 6))
    y = rng.integers(0, 9, (2, 4))
    base = model.target_logits(x, y)
    for n in range(4):
        y2 = y.copy()
        y2[:, n:] = (y2[:, n:] + 1) % 9
        np.testing.assert_array_equal(model.target_logits(x, y2)[: n + 1], base[: n + 1])


def test_epochs_zero_leaves_parameters_unchanged():
    ds = periodic_windows(50, 6, 3)
    for cfg in (NMT, ModelConfig("nlg", 9, 8, 16, 1, "gru", False, False)):
        model = build_model(cfg, 7, seed=0)
        before = {k: v.copy() for k, v in model.params.items()}
        rep = train(model, ds, 0)
        assert rep.steps == 0
        for k in before:
            np.testing.assert_array_equal(model.params[k], before[k])


def test_single_token_language_is_learned():
    ds = WindowedDataset(np.full((64, 5), 4), np.full((64, 3), 4), np.zeros(64, complex), 7)
    model = build_model(ModelConfig("nlg", 9, 8, 16, 1, "gru", False, False), 7, seed=0)
    train_nlg(model, ds, 30, Adam(1e-2), batch_size=16, anneal=False)
    assert evaluate_loss(model, ds) < 0.01


def test_copy_task_generalizes():
    rng = np.random.default_rng(0)
    M, N = 6, 3

    def windows(count):
        x = rng.integers(1, 9, (count, M))
        return WindowedDataset(x, x[:, -N:].copy(), np.zeros(count, complex), 7)

    model = build_model(ModelConfig("nmt", 9, 16, 32, 1, "gru", True, True), 7, seed=0)
    train_nmt(model, windows(500), 40, batch_size=25, anneal=False)
    assert token_accuracy(model, windows(300)) > 0.95


def test_overfit_single_pair_and_recall():
    x = np.array([[4, 1, 7, 2, 2]])
    y = np.array([[5, 3, 8]])
    ds = WindowedDataset(x, y, np.zeros(1, complex), 7)
    model = build_model(NMT, 7, seed=0)
    train_nmt(model, ds, 150, Adam(3e-3), anneal=False)
    np.testing.assert_array_equal(predict(model, x[0], 3), y[0])


def test_greedy_decoding_is_deterministic_and_prefix_stable():
    model = build_model(NMT, 7, seed=5)
    x = np.array([1, 2, 3, 4, 5, 6])
    ten = predict(model, x, 10)
    np.testing.assert_array_equal(ten, predict(model, x, 10))
    for n in (0, 1, 4):
        np.testing.assert_array_equal(predict(model, x, n), ten[:n])
    assert predict(model, x, 0).shape == (0,)
    nlg = build_model(ModelConfig("nlg", 9, 8, 16, 2, "gru", False, False), 7, seed=5)
    np.testing.assert_array_equal(predict(nlg, x, 1), predict(nlg, x, 10)[:1])


def test_teacher_forcing_off_trains():
    ds = periodic_windows(64, 6, 3)
    model = build_model(NMT, 7, seed=0)
    rep = train_nmt(model, ds, 2, teacher_forcing=False)
    assert rep.steps == 2 and np.isfinite(rep.final_loss)


def test_divergence_is_reported():
    ds = periodic_windows(8, 6, 3)
    model = build_model(NMT, 7, seed=0)
    model.params["out.b"][:] = np.nan
    with pytest.raises(TrainingDivergedError):
        train(model, ds, 1)


def test_vocabulary_hash_is_checked():
    model = build_model(NMT, 7, seed=0)
    with pytest.raises(VocabularyMismatchError):
        train(model, periodic_windows(8, 6, 3, vocabulary_hash=8), 1)


def unk_model(vocab):
    model = build_model(ModelConfig("nmt", vocab.num_ids, 4, 8, 1, "gru", False, False), vocab.hash)
    model.params["out.W"][:] = 0
    model.params["out.b"][:] = 0
    model.params["out.b"][0] = 10.0
    return model


def test_all_unk_prediction_continues_constant():
    vocab = grid_vocab()
    history = ChannelSeries(np.full(12, 0.4 - 0.3j), 1e-3)
    out = predict_series(unk_model(vocab), vocab, history, PredictionTask(5, 4))
    np.testing.assert_array_equal(out.samples, np.full(4, 0.4 - 0.3j))


def test_predict_series_decodes_from_last_sample():
    vocab = grid_vocab()
    model = build_model(ModelConfig("nmt", vocab.num_ids, 4, 8, 1, "gru", True, True), vocab.hash, seed=3)
    rng = np.random.default_rng(0)
    h = ChannelSeries(np.cumsum(rng.integers(-2, 3, 20) * 0.01) + 0j, 1e-3)
    task = PredictionTask(6, 5)
    out = predict_series(model, vocab, h, task)
    ids = encode(ChannelSeries(h.samples[-7:], 1e-3), vocab)
    expected = decode(TokenSeries(predict(model, ids.ids, 5), h.samples[-1], vocab.hash), vocab)
    np.testing.assert_array_equal(out.samples, expected.samples)
    with pytest.raises(InvalidArgumentError):
        predict_series(model, vocab, ChannelSeries(h.samples[:6], 1e-3), task)


def test_interpolation_and_decimation():
    np.testing.assert_allclose(interpolate(1 + 1j, np.array([3 + 1j]), 2), [2 + 1j, 3 + 1j])
    np.testing.assert_allclose(interpolate(0, np.array([2.0, 2.0]), 2), [1.0, 2.0, 2.0, 2.0])
    s = ChannelSeries(np.arange(10) + 0j, 1e-3)
    d = decimate(s, 3)
    np.testing.assert_array_equal(d.samples, [0, 3, 6, 9])
    assert d.sample_interval_s == pytest.approx(3e-3)


def test_transfer_predict_coverage():
    vocab = grid_vocab()
    model = build_model(ModelConfig("nmt", vocab.num_ids, 4, 8, 1, "gru", True, True), vocab.hash, seed=3)
    rng = np.random.default_rng(4)
    h = ChannelSeries(np.cumsum(rng.integers(-2, 3, 600) * 0.01) + 0.1j, 1e-4)
    one = PredictionTask(14, 14)
    np.testing.assert_array_equal(transfer_predict(model, vocab, h, one).samples,
                                  predict_series(model, vocab, h, one).samples)
    out = transfer_predict(model, vocab, h, PredictionTask(14, 14, S=30))
    assert len(out) == 14 * 30
    assert out.sample_interval_s == h.sample_interval_s
    with pytest.raises(InvalidArgumentError):
        transfer_predict(model, vocab, ChannelSeries(h.samples[:420], 1e-4), PredictionTask(14, 14, S=30))


def test_fine_tune(tmp_path):
    ds = periodic_windows(64, 6, 3)
    model = build_model(NMT, 7, seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    same, rep = fine_tune(path, ds, 0)
    assert rep.steps == 0
    for k in model.params:
        np.testing.assert_array_equal(same.params[k], model.params[k])
    tuned, rep = fine_tune(model, ds, 1)
    assert rep.steps == 1
    assert not np.array_equal(tuned.params["out.W"], model.params["out.W"])
    with pytest.raises(VocabularyMismatchError):
        fine_tune(path, periodic_windows(8, 6, 3, vocabulary_hash=9), 1)


def test_fixed_step_budget():
    ds = periodic_windows(100, 6, 3)
    rep = train(build_model(NMT, 7), ds, 1, max_steps=7, batch_size=32)
    assert rep.steps == 7
