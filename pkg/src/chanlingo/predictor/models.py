"""Token-sequence models: a single recurrent language model (NLG) and an
encoder-decoder with optional bidirectional encoder and attention (NMT).

Both models own a flat ``params`` dict of numpy arrays, so optimizers,
checkpoints and gradient checks treat them uniformly.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import (
    CheckpointMismatchError,
    InvalidArgumentError,
    InvalidStateError,
    VocabularyMismatchError,
)
from ..neural import checkpoint as ckpt
from ..neural.layers import (
    RecurrentStack,
    attention_backward,
    attention_forward,
    embed,
    embed_backward,
    linear_backward,
    softmax_xent,
)
from ..neural.optim import Adam, OptimizerState
from ..vcc import format_vocabulary, parse_vocabulary

ARRANGEMENTS = ("nlg", "nmt")
DECODER_SEEDS = ("zero", "last")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``num_ids`` counts every token ID including unk (vocabulary size X + 1).
    ``bidirectional``, ``attention`` and ``decoder_seed`` only apply to NMT.
    """

    arrangement: str = "nmt"
    num_ids: int = 257
    emb: int = 32
    hidden: int = 64
    layers: int = 2
    cell: str = "gru"
    bidirectional: bool = True
    attention: bool = True
    decoder_seed: str = "zero"

    def __post_init__(self):
        if self.arrangement not in ARRANGEMENTS:
            raise InvalidArgumentError(f"arrangement must be one of {ARRANGEMENTS}")
        if self.decoder_seed not in DECODER_SEEDS:
            raise InvalidArgumentError(f"decoder_seed must be one of {DECODER_SEEDS}")
        if min(self.num_ids, self.emb, self.hidden, self.layers) < 1:
            raise InvalidArgumentError("num_ids, emb, hidden and layers must be >= 1")
        if self.arrangement == "nlg" and (self.bidirectional or self.attention):
            raise InvalidArgumentError("bidirectional and attention apply to the encoder-decoder only")


def _check_ids(ids, num_ids, what="input"):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= num_ids):
        raise InvalidArgumentError(f"{what} token id outside [0, {num_ids - 1}]")
    return ids


class _SequenceModel:
    config: ModelConfig

    def __init__(self, config: ModelConfig, vocabulary_hash: int, params: dict):
        self.config = config
        self.vocabulary_hash = int(vocabulary_hash)
        self.params = params

    @property
    def dtype(self):
        return self.params["embedding"].dtype

    def astype(self, dtype):
        """Copy of the model with every parameter cast to ``dtype``."""
        clone = copy.copy(self)
        clone.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return clone

    def copy(self):
        return self.astype(self.dtype)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def check_vocabulary(self, vocabulary_hash: int) -> None:
        if int(vocabulary_hash) != self.vocabulary_hash:
            raise VocabularyMismatchError(
                f"model trained with vocabulary {self.vocabulary_hash:016x}, got {int(vocabulary_hash):016x}"
            )

    def _init_output(self, rng, dtype, width):
        bound = 1.0 / np.sqrt(width)
        V = self.config.num_ids
        self.params["out.W"] = rng.uniform(-bound, bound, (width, V)).astype(dtype)
        self.params["out.b"] = np.zeros(V, dtype=dtype)


class NlgModel(_SequenceModel):
    """One recurrent stack reading the concatenated history and future tokens."""

    def __init__(self, config: ModelConfig, vocabulary_hash: int, params: dict | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if config.arrangement != "nlg":
            raise InvalidArgumentError("NlgModel needs arrangement='nlg'")
        self.config = config
        self.stack = RecurrentStack("rnn", config.cell, config.layers, config.emb, config.hidden)
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = {"embedding": rng.uniform(-0.1, 0.1, (config.num_ids, config.emb)).astype(dtype)}
            params.update(self.stack.init_params(rng, dtype))
            super().__init__(config, vocabulary_hash, params)
            self._init_output(rng, dtype, config.hidden)
        else:
            super().__init__(config, vocabulary_hash, params)

    def _forward(self, seq):
        p = self.params
        x = embed(p["embedding"], seq.T)
        out, _, cache = self.stack.forward(p, x)
        logits = out @ p["out.W"] + p["out.b"]
        return logits, (seq, out, cache)

    def _backward(self, cache, d_logits):
        p = self.params
        seq, out, stack_cache = cache
        grads = {}
        d_out = linear_backward(grads, "out.W", "out.b", out, p["out.W"], d_logits)
        d_x, _ = self.stack.backward(p, grads, stack_cache, d_out)
        embed_backward(grads, "embedding", seq.T, d_x, self.config.num_ids)
        return grads

    def step_logits(self, seq):
        """Logits [T, B, V] after each position of ``seq`` [B, T]; position t sees seq[:, :t+1] only."""
        seq = _check_ids(np.atleast_2d(seq), self.config.num_ids)
        return self._forward(seq)[0]

    def loss_and_grads(self, inputs, targets):
        """Mean next-token cross-entropy over the whole concatenated window."""
        seq = _check_ids(np.concatenate([np.atleast_2d(inputs), np.atleast_2d(targets)], axis=1),
                         self.config.num_ids)
        logits, cache = self._forward(seq[:, :-1])
        loss, d_logits = softmax_xent(logits, seq[:, 1:].T)
        return loss, self._backward(cache, d_logits)

    def loss(self, inputs, targets) -> float:
        seq = np.concatenate([np.atleast_2d(inputs), np.atleast_2d(targets)], axis=1)
        logits, _ = self._forward(_check_ids(seq, self.config.num_ids)[:, :-1])
        return softmax_xent(logits, seq[:, 1:].T)[0]

    def target_logits(self, inputs, targets):
        """Teacher-forced logits [N, B, V] for the N future positions only."""
        inputs, targets = np.atleast_2d(inputs), np.atleast_2d(targets)
        M = inputs.shape[1]
        seq = np.concatenate([inputs, targets], axis=1)[:, :-1]
        logits, _ = self._forward(_check_ids(seq, self.config.num_ids))
        return logits[M - 1:]

    def predict(self, inputs, n_future: int):
        """Greedy continuation: ids [B, n_future] (or [n_future] for a 1-D input)."""
        inputs = np.asarray(inputs, dtype=np.int64)
        single = inputs.ndim == 1
        inputs = _check_ids(np.atleast_2d(inputs), self.config.num_ids)
        B = inputs.shape[0]
        out_ids = np.zeros((B, n_future), dtype=np.int64)
        if n_future > 0:
            p = self.params
            out, state, _ = self.stack.forward(p, embed(p["embedding"], inputs.T))
            top = out[-1]
            for n in range(n_future):
                logits = top @ p["out.W"] + p["out.b"]
                nxt = np.argmax(logits, axis=-1)
                out_ids[:, n] = nxt
                if n + 1 < n_future:
                    top, state = self.stack.step(p, embed(p["embedding"], nxt), state)
        return out_ids[0] if single else out_ids


class Seq2SeqModel(_SequenceModel):
    """Encoder-decoder over one shared vocabulary and embedding table."""

    def __init__(self, config: ModelConfig, vocabulary_hash: int, params: dict | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if config.arrangement != "nmt":
            raise InvalidArgumentError("Seq2SeqModel needs arrangement='nmt'")
        c = config
        self.config = config
        self.enc_f = RecurrentStack("enc_f", c.cell, c.layers, c.emb, c.hidden)
        self.enc_b = RecurrentStack("enc_b", c.cell, c.layers, c.emb, c.hidden) if c.bidirectional else None
        self.dec = RecurrentStack("dec", c.cell, c.layers, c.emb, c.hidden)
        self.state_names = ("h",) if c.cell == "gru" else ("h", "c")
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = {"embedding": rng.uniform(-0.1, 0.1, (c.num_ids, c.emb)).astype(dtype)}
            params.update(self.enc_f.init_params(rng, dtype))
            if self.enc_b is not None:
                params.update(self.enc_b.init_params(rng, dtype))
            params.update(self.dec.init_params(rng, dtype))
            D = self.encoder_width
            bound_d = 1.0 / np.sqrt(D)
            for k in self.state_names:
                params[f"bridge.{k}.W"] = rng.uniform(-bound_d, bound_d, (c.layers, D, c.hidden)).astype(dtype)
                params[f"bridge.{k}.b"] = np.zeros((c.layers, c.hidden), dtype=dtype)
            if c.attention:
                bound_h = 1.0 / np.sqrt(c.hidden)
                params["attn.W"] = rng.uniform(-bound_h, bound_h, (c.hidden, D)).astype(dtype)
                bound_c = 1.0 / np.sqrt(D + c.hidden)
                params["attn.Wc"] = rng.uniform(-bound_c, bound_c, (D + c.hidden, c.hidden)).astype(dtype)
                params["attn.bc"] = np.zeros(c.hidden, dtype=dtype)
            super().__init__(config, vocabulary_hash, params)
            self._init_output(rng, dtype, c.hidden)
        else:
            super().__init__(config, vocabulary_hash, params)

    @property
    def encoder_width(self) -> int:
        return self.config.hidden * (2 if self.config.bidirectional else 1)

    # -- encoder -------------------------------------------------------------

    def _encode(self, inputs):
        p = self.params
        x = embed(p["embedding"], inputs.T)
        out_f, fin_f, cache_f = self.enc_f.forward(p, x)
        if self.enc_b is not None:
            out_b_rev, fin_b, cache_b = self.enc_b.forward(p, x[::-1])
            keys_tm = np.concatenate([out_f, out_b_rev[::-1]], axis=-1)
            finals = tuple(np.concatenate([a, b], axis=-1) for a, b in zip(fin_f, fin_b))
        else:
            cache_b = None
            keys_tm = out_f
            finals = fin_f
        state0 = tuple(
            np.matmul(f, p[f"bridge.{k}.W"]) + p[f"bridge.{k}.b"][:, None, :]
            for k, f in zip(self.state_names, finals)
        )
        return keys_tm, state0, (inputs, cache_f, cache_b, finals)

    def encode_history(self, input_ids):
        """Per-step encoder states and the bridged decoder initial state.

        For a 1-D ``input_ids`` of length M returns states ``[M, hidden * dirs]``
        and a state tuple of ``[layers, hidden]`` arrays; batched input keeps the
        batch axis (``[M, B, D]`` and ``[layers, B, hidden]``).
        """
        ids = np.asarray(input_ids, dtype=np.int64)
        single = ids.ndim == 1
        ids = _check_ids(np.atleast_2d(ids), self.config.num_ids)
        keys_tm, state0, _ = self._encode(ids)
        if single:
            return keys_tm[:, 0, :], tuple(s[:, 0, :] for s in state0)
        return keys_tm, state0

    def attend(self, decoder_state, encoder_states):
        """Attention of one decoder top state over encoder states.

        ``decoder_state`` is ``[hidden]`` (or ``[B, hidden]``) and
        ``encoder_states`` ``[M, D]`` (or ``[M, B, D]``). Returns (context, weights).
        """
        if not self.config.attention:
            raise InvalidStateError("attend() called on a model without attention")
        s = np.asarray(decoder_state)
        e = np.asarray(encoder_states)
        single = s.ndim == 1
        if single:
            s, e = s[None], e[:, None, :]
        ctx, w, _ = attention_forward(self.params["attn.W"], s[None], e.transpose(1, 0, 2))
        if single:
            return ctx[0, 0], w[0, 0]
        return ctx[0], w[0]

    # -- decoder -------------------------------------------------------------

    def seed_tokens(self, inputs):
        if self.config.decoder_seed == "last":
            return inputs[:, -1]
        return np.zeros(inputs.shape[0], dtype=np.int64)

    def _head(self, s, keys):
        """Output logits from decoder states s [N, B, H] and keys [B, M, D]."""
        p = self.params
        if self.config.attention:
            ctx, w, att_cache = attention_forward(p["attn.W"], s, keys)
            comb = np.concatenate([ctx, s], axis=-1)
            top = np.tanh(comb @ p["attn.Wc"] + p["attn.bc"])
        else:
            w = att_cache = comb = None
            top = s
        logits = top @ p["out.W"] + p["out.b"]
        return logits, w, (s, top, comb, att_cache)

    def _forward(self, inputs, dec_in):
        p = self.params
        keys_tm, state0, enc_cache = self._encode(inputs)
        keys = keys_tm.transpose(1, 0, 2)
        s, _, dec_cache = self.dec.forward(p, embed(p["embedding"], dec_in.T), state0)
        logits, weights, head_cache = self._head(s, keys)
        return logits, weights, (enc_cache, dec_in, dec_cache, head_cache)

    def _backward(self, cache, d_logits):
        p = self.params
        c = self.config
        H = c.hidden
        (inputs, cache_f, cache_b, finals), dec_in, dec_cache, (_, top, comb, att_cache) = cache
        grads = {}
        d_top = linear_backward(grads, "out.W", "out.b", top, p["out.W"], d_logits)
        M = inputs.shape[1]
        d_keys_tm = np.zeros((M, inputs.shape[0], self.encoder_width), dtype=d_top.dtype)
        if c.attention:
            d_pre = d_top * (1.0 - top * top)
            d_comb = linear_backward(grads, "attn.Wc", "attn.bc", comb, p["attn.Wc"], d_pre)
            D = self.encoder_width
            d_ctx, d_s = d_comb[..., :D], d_comb[..., D:]
            d_s_att, d_keys = attention_backward(grads, "attn.W", p["attn.W"], att_cache, d_ctx)
            d_s = d_s + d_s_att
            d_keys_tm += d_keys.transpose(1, 0, 2)
        else:
            d_s = d_top
        d_dec_x, d_state0 = self.dec.backward(p, grads, dec_cache, d_s)
        embed_backward(grads, "embedding", dec_in.T, d_dec_x, c.num_ids)

        d_finals = []
        for k, f, ds in zip(self.state_names, finals, d_state0):
            W = p[f"bridge.{k}.W"]
            grads[f"bridge.{k}.W"] = np.matmul(f.transpose(0, 2, 1), ds)
            grads[f"bridge.{k}.b"] = ds.sum(axis=1)
            d_finals.append(np.matmul(ds, W.transpose(0, 2, 1)))
        d_fin_f = tuple(d[..., :H] for d in d_finals)
        d_x, _ = self.enc_f.backward(p, grads, cache_f, d_keys_tm[..., :H], d_fin_f)
        if self.enc_b is not None:
            d_fin_b = tuple(d[..., H:] for d in d_finals)
            d_x_rev, _ = self.enc_b.backward(p, grads, cache_b, d_keys_tm[::-1, :, H:], d_fin_b)
            d_x = d_x + d_x_rev[::-1]
        embed_backward(grads, "embedding", inputs.T, d_x, c.num_ids)
        return grads

    def decoder_inputs(self, inputs, targets, teacher_forcing=True):
        """Decoder input tokens [B, N]: the seed token, then either the previous
        ground-truth target or the model's own previous greedy prediction."""
        seed = self.seed_tokens(inputs)[:, None]
        if teacher_forcing:
            return np.concatenate([seed, targets[:, :-1]], axis=1)
        pred = self.predict(inputs, targets.shape[1])
        return np.concatenate([seed, pred[:, :-1]], axis=1)

    def loss_and_grads(self, inputs, targets, teacher_forcing=True):
        """Mean cross-entropy over the N target positions, with gradients."""
        inputs = _check_ids(np.atleast_2d(inputs), self.config.num_ids)
        targets = _check_ids(np.atleast_2d(targets), self.config.num_ids, "target")
        dec_in = self.decoder_inputs(inputs, targets, teacher_forcing)
        logits, _, cache = self._forward(inputs, dec_in)
        loss, d_logits = softmax_xent(logits, targets.T)
        return loss, self._backward(cache, d_logits)

    def loss(self, inputs, targets, teacher_forcing=True) -> float:
        inputs = _check_ids(np.atleast_2d(inputs), self.config.num_ids)
        targets = _check_ids(np.atleast_2d(targets), self.config.num_ids, "target")
        dec_in = self.decoder_inputs(inputs, targets, teacher_forcing)
        logits, _, _ = self._forward(inputs, dec_in)
        return softmax_xent(logits, targets.T)[0]

    def target_logits(self, inputs, targets):
        inputs = _check_ids(np.atleast_2d(inputs), self.config.num_ids)
        targets = _check_ids(np.atleast_2d(targets), self.config.num_ids, "target")
        return self._forward(inputs, self.decoder_inputs(inputs, targets))[0]

    def predict(self, inputs, n_future: int, return_attention=False):
        """Greedy decoding; each predicted token is fed back as the next input.

        Returns ids [B, n_future] (or [n_future] for 1-D input) and, when
        ``return_attention`` is set, attention weights [B, n_future, M].
        """
        inputs = np.asarray(inputs, dtype=np.int64)
        single = inputs.ndim == 1
        inputs = _check_ids(np.atleast_2d(inputs), self.config.num_ids)
        B, M = inputs.shape
        p = self.params
        out_ids = np.zeros((B, n_future), dtype=np.int64)
        weights = np.zeros((B, n_future, M), dtype=np.float64)
        if n_future > 0:
            keys_tm, state, _ = self._encode(inputs)
            keys = keys_tm.transpose(1, 0, 2)
            prev = self.seed_tokens(inputs)
            for n in range(n_future):
                s, state = self.dec.step(p, embed(p["embedding"], prev), state)
                logits, w, _ = self._head(s[None], keys)
                prev = np.argmax(logits[0], axis=-1)
                out_ids[:, n] = prev
                if w is not None:
                    weights[:, n, :] = w[0]
        if single:
            out_ids, weights = out_ids[0], weights[0]
        if return_attention:
            if not self.config.attention:
                raise InvalidStateError("model has no attention to export")
            return out_ids, weights
        return out_ids


def build_model(config: ModelConfig, vocabulary_hash: int, seed: int = 0, dtype=np.float32):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    cls = NlgModel if config.arrangement == "nlg" else Seq2SeqModel
    return cls(config, vocabulary_hash, rng=rng, dtype=dtype)


# -- checkpoints -------------------------------------------------------------------

_BOOL = {"true": True, "false": False}


def model_metadata(model) -> dict:
    c = model.config
    return {
        "arrangement": c.arrangement,
        "cell_kind": c.cell,
        "layers": c.layers,
        "hidden": c.hidden,
        "e": c.emb,
        "X": c.num_ids - 1,
        "bidirectional": str(c.bidirectional).lower(),
        "attention": str(c.attention).lower(),
        "decoder_seed": c.decoder_seed,
        "vocabulary_hash": f"{model.vocabulary_hash:016x}",
    }


def save_checkpoint(model, path, optimizer: Adam | None = None, vocab=None) -> None:
    """Write model (and optionally Adam state and the vocabulary) to a CKPT v1 file."""
    meta = model_metadata(model)
    tensors = {f"param/{k}": v for k, v in model.params.items()}
    if optimizer is not None:
        st = optimizer.state
        meta.update({
            "adam.step_count": st.step_count,
            "adam.learning_rate": repr(float(st.learning_rate)),
            "adam.beta1": repr(float(st.betas[0])),
            "adam.beta2": repr(float(st.betas[1])),
            "adam.epsilon": repr(float(st.epsilon)),
            "adam.clip_norm": repr(float(st.clip_norm)),
        })
        for k in st.m:
            tensors[f"adam.m/{k}"] = st.m[k]
            tensors[f"adam.v/{k}"] = st.v[k]
    if vocab is not None:
        if vocab.hash != model.vocabulary_hash:
            raise VocabularyMismatchError("vocabulary passed to save_checkpoint is not the model's")
        meta["vocabulary"] = format_vocabulary(vocab).rstrip("\n").replace("\n", "|")
    ckpt.write_checkpoint(path, meta, tensors)


def load_checkpoint(path, expected_vocabulary_hash: int | None = None):
    """Read a CKPT file. Returns (model, optimizer or None, vocabulary or None)."""
    meta, tensors = ckpt.read_checkpoint(path)
    try:
        config = ModelConfig(
            arrangement=meta["arrangement"],
            num_ids=int(meta["X"]) + 1,
            emb=int(meta["e"]),
            hidden=int(meta["hidden"]),
            layers=int(meta["layers"]),
            cell=meta["cell_kind"],
            bidirectional=_BOOL[meta["bidirectional"]],
            attention=_BOOL[meta["attention"]],
            decoder_seed=meta["decoder_seed"],
        )
        vhash = int(meta["vocabulary_hash"], 16)
    except KeyError as exc:
        raise CheckpointMismatchError(str(exc.args[0]), "present", "missing") from None
    if expected_vocabulary_hash is not None and vhash != int(expected_vocabulary_hash):
        raise VocabularyMismatchError(
            f"checkpoint vocabulary_hash {vhash:016x} != expected {int(expected_vocabulary_hash):016x}"
        )
    params = {k[len("param/"):]: v.copy() for k, v in tensors.items() if k.startswith("param/")}
    cls = NlgModel if config.arrangement == "nlg" else Seq2SeqModel
    model = cls(config, vhash, params=params)
    reference = build_model(config, vhash, seed=0)
    for name, ref in reference.params.items():
        got = params.get(name)
        if got is None:
            raise CheckpointMismatchError(f"tensor {name}", "present", "missing")
        if got.shape != ref.shape:
            raise CheckpointMismatchError(f"tensor {name} shape", ref.shape, got.shape)
    optimizer = None
    if "adam.step_count" in meta:
        st = OptimizerState(
            learning_rate=float(meta["adam.learning_rate"]),
            betas=(float(meta["adam.beta1"]), float(meta["adam.beta2"])),
            epsilon=float(meta["adam.epsilon"]),
            clip_norm=float(meta["adam.clip_norm"]),
            step_count=int(meta["adam.step_count"]),
            m={k[len("adam.m/"):]: v.copy() for k, v in tensors.items() if k.startswith("adam.m/")},
            v={k[len("adam.v/"):]: v.copy() for k, v in tensors.items() if k.startswith("adam.v/")},
        )
        optimizer = Adam(state=st)
    vocab = None
    if "vocabulary" in meta:
        vocab = parse_vocabulary(meta["vocabulary"].replace("|", "\n"), path=path)
        if vocab.hash != vhash:
            raise CheckpointMismatchError("vocabulary", f"{vhash:016x}", f"{vocab.hash:016x}")
    return model, optimizer, vocab


def config_dict(config: ModelConfig) -> dict:
    return asdict(config)
