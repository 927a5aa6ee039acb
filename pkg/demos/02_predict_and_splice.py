#!/usr/bin/env python3
# %% [markdown]
# # Predicting 10 ms ahead
#
# Train a small encoder-decoder on the token stream, then splice its 30:10
# predictions into a held-out sequence and compare against repeating the last
# sample. This is a reduced run (about a minute on one core); the acceptance suite trains
# the full 2e5-sample configuration.

# %%
import numpy as np

from chanlingo import FadingConfig, generate_tap
from chanlingo.evaluation import (
    RunResult,
    prediction_diversity,
    report,
    splice,
    zoh_baseline,
)
from chanlingo.neural.optim import Adam
from chanlingo.predictor import (
    ModelConfig,
    PredictionTask,
    build_model,
    make_dataset,
    train,
)
from chanlingo.predictor.inference import history_ids
from chanlingo.vcc import build_vocabulary_from_series, encode, normalize_power

speed = 10.0 * 299_792_458.0 / 3.45e9  # 10 Hz Doppler


def channel(n, seed):
    return normalize_power(generate_tap(FadingConfig(speed_mps=speed, duration_samples=n, rng_seed=seed), 0))[0]


train_h, test_h = channel(60_000, 1), channel(5_000, 2)
vocab = build_vocabulary_from_series([train_h], 0.01, max_size=256, min_frequency=11)
task = PredictionTask(M=30, N=10, stride=2)
data = make_dataset(encode(train_h, vocab, anchor="first"), task, vocab)
print(f"{len(data)} training windows, X = {vocab.size}")

# %%
model = build_model(ModelConfig("nmt", vocab.num_ids, emb=32, hidden=48), vocab.hash, seed=0)
rep = train(model, data, epochs=2, optimizer=Adam(2e-3), batch_size=128)
print("epoch losses:", [round(x, 3) for x in rep.epoch_losses])

# %%
task = PredictionTask(30, 10)
ours = splice(test_h, model, vocab, task)
hold = zoh_baseline(test_h, task)
text, _ = report([RunResult.from_spliced("nmt 30:10", ours), RunResult.from_spliced("zero-order hold", hold)])
print(text)

# %% [markdown]
# Where does the decoder look? For each predicted step, the history change
# with the largest attention weight.

# %%
ids = history_ids(test_h.samples[1000:1031][None], vocab)[0]
_, weights = model.predict(ids, 10, return_attention=True)
for n, row in enumerate(weights, start=1):
    print(f"step {n:>2}: peak at history change {row.argmax() + 1:>2} of 30 (weight {row.max():.2f})")

# %% [markdown]
# Prediction diversity keeps, per sample, the largest-magnitude candidate. Two
# models trained from different seeds give two candidates.

# %%
other = build_model(ModelConfig("nmt", vocab.num_ids, emb=32, hidden=48), vocab.hash, seed=1)
train(other, data, epochs=2, optimizer=Adam(2e-3), batch_size=128, seed=1)
second = splice(test_h, other, vocab, task)
sl = ours.evaluable
combined = prediction_diversity([ours.predicted.samples[sl], second.predicted.samples[sl]])
print(f"first model won {np.mean(np.abs(ours.predicted.samples[sl]) >= np.abs(second.predicted.samples[sl])):.0%} of samples")
print(f"combined magnitude >= each candidate everywhere: {np.all(np.abs(combined.samples) >= np.abs(second.predicted.samples[sl]))}")
