"""Dense layers with explicit backward passes.

Every forward function returns its output plus a cache; the matching backward
takes the cache and the upstream gradient and accumulates parameter gradients
into a ``grads`` dict keyed like ``params``. Arrays are time-major
(``[T, B, features]``) and the computation follows the parameter dtype, so the
same code runs in float32 for training and float64 for gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

CELL_KINDS = ("gru", "lstm")


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _acc(grads, name, value):
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value.copy()


# -- embedding -----------------------------------------------------------------


def embed(weights: np.ndarray, ids) -> np.ndarray:
    """Row-gather ``weights[ids]``; ids may have any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weights.shape[0]):
        raise InvalidArgumentError(f"token id outside [0, {weights.shape[0] - 1}]")
    return weights[ids]


def embed_backward(grads, name, ids, d_out, num_rows) -> None:
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    d_out = d_out.reshape(ids.size, -1)
    g = np.zeros((num_rows, d_out.shape[1]), dtype=d_out.dtype)
    np.add.at(g, ids, d_out)
    _acc(grads, name, g)


# -- affine map / loss ---------------------------------------------------------


def linear(x, w, b):
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise InvalidArgumentError(f"linear: input width {x.shape[-1]} vs weights {w.shape}, bias {b.shape}")
    return x @ w + b


def linear_backward(grads, w_name, b_name, x, w, d_out):
    x2 = x.reshape(-1, x.shape[-1])
    d2 = d_out.reshape(-1, d_out.shape[-1])
    _acc(grads, w_name, x2.T @ d2)
    _acc(grads, b_name, d2.sum(axis=0))
    return d_out @ w.T


def project_logits(hidden, out_w, out_b):
    """Vocabulary logits (no softmax) from hidden states."""
    return linear(hidden, out_w, out_b)


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_xent(logits, targets):
    """Mean cross-entropy over all target positions.

    ``logits`` is ``[..., V]`` and ``targets`` the matching integer array (a
    scalar target works for a single logit vector). Returns the loss as a
    Python float (accumulated in float64) and the gradient w.r.t. logits.
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise InvalidArgumentError(f"targets shape {targets.shape} vs logits {logits.shape}")
    v = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise InvalidArgumentError(f"target id outside [0, {v - 1}]")
    flat = logits.reshape(-1, v)
    t = targets.reshape(-1)
    z = flat - flat.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    rows = np.arange(t.size)
    loss = float(-np.sum(logp[rows, t], dtype=np.float64) / max(t.size, 1))
    grad = np.exp(logp)
    grad[rows, t] -= 1.0
    grad /= max(t.size, 1)
    return loss, grad.reshape(logits.shape)


# -- recurrent stack -----------------------------------------------------------


@dataclass(frozen=True)
class RecurrentStack:
    """Stacked unidirectional GRU or LSTM layers sharing one parameter prefix.

    Parameters per layer ``l``: ``{prefix}.l{l}.W`` [in, G*H], ``.U`` [H, G*H] and
    ``.b`` [G*H], gate order ``z, r, n`` (GRU) or ``i, f, g, o`` (LSTM).
    State is a tuple of ``[layers, B, H]`` arrays: ``(h,)`` or ``(h, c)``.
    """

    prefix: str
    cell: str
    num_layers: int
    input_size: int
    hidden_size: int

    def __post_init__(self):
        if self.cell not in CELL_KINDS:
            raise InvalidArgumentError(f"cell must be one of {CELL_KINDS}, got {self.cell!r}")
        if self.num_layers < 1 or self.hidden_size < 1 or self.input_size < 1:
            raise InvalidArgumentError("layers, hidden_size and input_size must be >= 1")

    @property
    def gates(self) -> int:
        return 3 if self.cell == "gru" else 4

    @property
    def state_size(self) -> int:
        return 1 if self.cell == "gru" else 2

    def names(self, layer):
        p = f"{self.prefix}.l{layer}"
        return f"{p}.W", f"{p}.U", f"{p}.b"

    def layer_input_size(self, layer):
        return self.input_size if layer == 0 else self.hidden_size

    def init_params(self, rng: np.random.Generator, dtype=np.float32, forget_bias=1.0) -> dict:
        H, G = self.hidden_size, self.gates
        bound = 1.0 / np.sqrt(H)
        params = {}
        for layer in range(self.num_layers):
            w, u, b = self.names(layer)
            params[w] = rng.uniform(-bound, bound, (self.layer_input_size(layer), G * H)).astype(dtype)
            params[u] = rng.uniform(-bound, bound, (H, G * H)).astype(dtype)
            bias = np.zeros(G * H, dtype=dtype)
            if self.cell == "lstm":
                bias[H:2 * H] = forget_bias
            params[b] = bias
        return params

    def zero_state(self, batch, dtype=np.float32):
        shape = (self.num_layers, batch, self.hidden_size)
        return tuple(np.zeros(shape, dtype=dtype) for _ in range(self.state_size))

    def _check(self, params, xs, state):
        w = params[self.names(0)[0]]
        if xs.ndim != 3 or xs.shape[2] != w.shape[0]:
            raise InvalidArgumentError(
                f"{self.prefix}: expected input [T, B, {w.shape[0]}], got {list(xs.shape)}"
            )
        if state is not None:
            if len(state) != self.state_size or any(
                s.shape != (self.num_layers, xs.shape[1], self.hidden_size) for s in state
            ):
                raise InvalidArgumentError(f"{self.prefix}: state shape mismatch")

    def forward(self, params, xs, state=None):
        """Run the stack over ``xs`` [T, B, in]. Returns (outputs [T, B, H], final_state, cache)."""
        self._check(params, xs, state)
        B = xs.shape[1]
        if state is None:
            state = self.zero_state(B, params[self.names(0)[0]].dtype)
        layer_caches = []
        finals = [[] for _ in range(self.state_size)]
        inp = xs
        for layer in range(self.num_layers):
            init = tuple(s[layer] for s in state)
            if self.cell == "gru":
                out, fin, cache = _gru_layer_forward(params, self.names(layer), inp, init)
            else:
                out, fin, cache = _lstm_layer_forward(params, self.names(layer), inp, init)
            layer_caches.append(cache)
            for k in range(self.state_size):
                finals[k].append(fin[k])
            inp = out
        final_state = tuple(np.stack(f) for f in finals)
        return inp, final_state, layer_caches

    def backward(self, params, grads, cache, d_outputs, d_final_state=None):
        """Backpropagate through time. Returns (d_xs, d_initial_state)."""
        d_init = [[None] * self.num_layers for _ in range(self.state_size)]
        d = d_outputs
        for layer in reversed(range(self.num_layers)):
            d_fin = None if d_final_state is None else tuple(s[layer] for s in d_final_state)
            if self.cell == "gru":
                d, d_state = _gru_layer_backward(params, grads, self.names(layer), cache[layer], d, d_fin)
            else:
                d, d_state = _lstm_layer_backward(params, grads, self.names(layer), cache[layer], d, d_fin)
            for k in range(self.state_size):
                d_init[k][layer] = d_state[k]
        return d, tuple(np.stack(s) for s in d_init)

    def step(self, params, x, state):
        """One time step through every layer; ``x`` is [B, in]. Returns (top output, new_state)."""
        out, new_state, _ = self.forward(params, x[None], state)
        return out[0], new_state


def cell_forward(stack: RecurrentStack, params, x, state=None):
    """Single-step convenience wrapper over :meth:`RecurrentStack.step`.

    Accepts an unbatched input vector ``[in]`` and unbatched state ``[layers, H]``.
    """
    x = np.asarray(x)
    unbatched = x.ndim == 1
    if unbatched:
        x = x[None]
        if state is not None:
            state = tuple(s[:, None, :] for s in state)
    out, new_state = stack.step(params, x, state)
    if unbatched:
        return out[0], tuple(s[:, 0, :] for s in new_state)
    return out, new_state


def _gru_layer_forward(params, names, xs, init):
    wn, un, bn = names
    W, U, b = params[wn], params[un], params[bn]
    T = xs.shape[0]
    H = U.shape[0]
    (h,) = init
    ax = xs @ W + b
    U_zr, U_n = U[:, :2 * H], U[:, 2 * H:]
    hs = np.empty((T,) + h.shape, dtype=ax.dtype)
    steps = []
    for t in range(T):
        a_zr = ax[t, :, :2 * H] + h @ U_zr
        zr = sigmoid(a_zr)
        z, r = zr[:, :H], zr[:, H:]
        rh = r * h
        n = np.tanh(ax[t, :, 2 * H:] + rh @ U_n)
        h_new = (1.0 - z) * n + z * h
        steps.append((h, z, r, rh, n))
        hs[t] = h_new
        h = h_new
    return hs, (h,), (xs, steps)


def _gru_layer_backward(params, grads, names, cache, d_hs, d_fin):
    wn, un, bn = names
    W, U = params[wn], params[un]
    xs, steps = cache
    T = xs.shape[0]
    H = U.shape[0]
    U_zr, U_n = U[:, :2 * H], U[:, 2 * H:]
    d_ax = np.empty(xs.shape[:2] + (3 * H,), dtype=d_hs.dtype)
    dU_zr = np.zeros_like(U_zr)
    dU_n = np.zeros_like(U_n)
    dh = np.zeros_like(d_hs[0]) if d_fin is None else d_fin[0].copy()
    for t in reversed(range(T)):
        h, z, r, rh, n = steps[t]
        dh = dh + d_hs[t]
        dn = dh * (1.0 - z)
        dz = dh * (h - n)
        dh_prev = dh * z
        dan = dn * (1.0 - n * n)
        dU_n += rh.T @ dan
        drh = dan @ U_n.T
        dh_prev += drh * r
        dr = drh * h
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        da_zr = np.concatenate([daz, dar], axis=1)
        dU_zr += h.T @ da_zr
        dh_prev += da_zr @ U_zr.T
        d_ax[t, :, :2 * H] = da_zr
        d_ax[t, :, 2 * H:] = dan
        dh = dh_prev
    _acc(grads, un, np.concatenate([dU_zr, dU_n], axis=1))
    return _input_grads(grads, wn, bn, W, xs, d_ax), (dh,)


def _lstm_layer_forward(params, names, xs, init):
    wn, un, bn = names
    W, U, b = params[wn], params[un], params[bn]
    T = xs.shape[0]
    H = U.shape[0]
    h, c = init
    ax = xs @ W + b
    hs = np.empty((T,) + h.shape, dtype=ax.dtype)
    steps = []
    for t in range(T):
        a = ax[t] + h @ U
        i = sigmoid(a[:, :H])
        f = sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = sigmoid(a[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((h, c, i, f, g, o, tc))
        hs[t] = h_new
        h, c = h_new, c_new
    return hs, (h, c), (xs, steps)


def _lstm_layer_backward(params, grads, names, cache, d_hs, d_fin):
    wn, un, bn = names
    W, U = params[wn], params[un]
    xs, steps = cache
    T = xs.shape[0]
    H = U.shape[0]
    d_ax = np.empty(xs.shape[:2] + (4 * H,), dtype=d_hs.dtype)
    dU = np.zeros_like(U)
    if d_fin is None:
        dh = np.zeros_like(d_hs[0])
        dc = np.zeros_like(d_hs[0])
    else:
        dh, dc = d_fin[0].copy(), d_fin[1].copy()
    for t in reversed(range(T)):
        h, c, i, f, g, o, tc = steps[t]
        dh = dh + d_hs[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        da = d_ax[t]
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H:2 * H] = dc * c * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        da[:, 3 * H:] = do * o * (1.0 - o)
        dU += h.T @ da
        dh = da @ U.T
        dc = dc * f
    _acc(grads, un, dU)
    return _input_grads(grads, wn, bn, W, xs, d_ax), (dh, dc)


def _input_grads(grads, wn, bn, W, xs, d_ax):
    x2 = xs.reshape(-1, xs.shape[-1])
    a2 = d_ax.reshape(-1, d_ax.shape[-1])
    _acc(grads, wn, x2.T @ a2)
    _acc(grads, bn, a2.sum(axis=0))
    return d_ax @ W.T


# -- attention -----------------------------------------------------------------


def attention_forward(w_score, queries, keys):
    """Bilinear ("general") attention.

    ``queries`` [N, B, H] are decoder states, ``keys`` [B, M, D] encoder states,
    ``w_score`` [H, D]. Scores are ``q W k``; weights are a softmax over M.
    Returns (context [N, B, D], weights [N, B, M], cache).
    """
    q = queries @ w_score
    # batch-major matmuls ([B, N, *]) go through BLAS; einsum would not
    qb = q.transpose(1, 0, 2)
    weights_b = softmax(qb @ keys.transpose(0, 2, 1), axis=-1)
    context = (weights_b @ keys).transpose(1, 0, 2)
    return context, weights_b.transpose(1, 0, 2), (queries, keys, qb, weights_b)


def attention_backward(grads, name, w_score, cache, d_context):
    """Returns (d_queries, d_keys)."""
    queries, keys, qb, weights_b = cache
    dcb = d_context.transpose(1, 0, 2)
    d_w = dcb @ keys.transpose(0, 2, 1)
    d_keys = weights_b.transpose(0, 2, 1) @ dcb
    d_scores = weights_b * (d_w - np.sum(d_w * weights_b, axis=-1, keepdims=True))
    d_q = (d_scores @ keys).transpose(1, 0, 2)
    d_keys += d_scores.transpose(0, 2, 1) @ qb
    q2 = queries.reshape(-1, queries.shape[-1])
    _acc(grads, name, q2.T @ d_q.reshape(-1, d_q.shape[-1]))
    return d_q @ w_score.T, d_keys
