"""Layer implementations: forward, backprop, and relevance propagation.

Everything runs in float64 on single samples (no batch axis); sequences
are (length, channels) arrays. Each layer returns a cache from
``forward`` that ``backward`` and ``lrp`` consume, so a traced forward
pass contains every pre-activation needed to redistribute relevance.

The relevance rule for a weighted connection is

    R_{i<-j} = (z_i w_ij + (eps sign(z_j) + delta b_j) / N)
               / (z_j + eps sign(z_j)) * R_j

with N the number of lower-layer neurons feeding z_j. With delta = 1
the per-layer sum is conserved exactly because the numerators add up
to the denominator.
"""

from __future__ import annotations

import numpy as np


class BuildError(ValueError):
    """Adjacent layers have incompatible shapes."""


class NumericError(FloatingPointError):
    """A forward pass produced a non-finite activation."""


TOKENS = "tokens"  # marker for integer token-id input shapes


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


_ACTIVATIONS = {
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(np.float64)),
    "tanh": (lambda z: np.tanh(z), lambda z, a: 1.0 - a * a),
}


def _activation(name):
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise BuildError(f"unknown activation {name!r}") from None


def _safe_divide(num, den):
    """Elementwise num/den with 0 where the denominator is exactly 0."""
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def lrp_linear(z_in, w, b, z_out, r_out, fan_in, epsilon, delta):
    """Redistribute ``r_out`` over the inputs of one weighted sum.

    ``z_in``: (I,) lower activations; ``w``: (I, J); ``b``: (J,);
    ``z_out``: (J,) pre-activation sums; ``fan_in``: the N of the rule.
    Returns the (I,) relevance received by each input.
    """
    sign = np.where(z_out >= 0, 1.0, -1.0)
    denom = z_out + epsilon * sign
    share = (epsilon * sign + delta * b) / fan_in
    numer = z_in[:, None] * w + share[None, :]
    return numer @ _safe_divide(r_out, denom)


class Layer:
    """Base layer: parameter-free identity."""

    name = "layer"
    weights: dict[str, np.ndarray] = {}

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, rng=None, train=False):
        return x, None

    def backward(self, dy, cache):
        return dy, {}

    def lrp(self, r, cache, epsilon, delta):
        return r

    def weight_matrices(self):
        return []

    def _require_float(self, in_shape):
        if in_shape and in_shape[0] == TOKENS:
            raise BuildError(
                f"{self.name} cannot consume raw token ids; "
                "an Embedding layer must come first"
            )


class EmbeddingLayer(Layer):
    """Token ids to trainable vectors; the pad row (index 0) stays zero."""

    def __init__(self, num_embeddings, dim, rng, table=None, name="embedding"):
        self.name = name
        self.num_embeddings = num_embeddings
        self.dim = dim
        if table is not None:
            E = np.asarray(table, dtype=np.float64).copy()
            if E.shape != (num_embeddings, dim):
                raise BuildError(
                    f"{name}: table shape {E.shape} != ({num_embeddings}, {dim})"
                )
        else:
            E = rng.uniform(-0.05, 0.05, size=(num_embeddings, dim))
        E[0] = 0.0  # pad
        self.weights = {"E": E}

    def out_shape(self, in_shape):
        if not in_shape or in_shape[0] != TOKENS:
            raise BuildError(f"{self.name} expects token ids, got shape {in_shape}")
        return (in_shape[1], self.dim)

    def forward(self, x, rng=None, train=False):
        ids = np.asarray(x, dtype=np.int64)
        return self.weights["E"][ids], ids

    def backward(self, dy, cache):
        ids = cache
        dE = np.zeros_like(self.weights["E"])
        real = ids != 0  # pad row is frozen
        np.add.at(dE, ids[real], dy[real])
        return None, {"E": dE}

    def lrp(self, r, cache, epsilon, delta):
        return r


class DenseLayer(Layer):
    def __init__(self, in_dim, units, activation, rng, name="dense"):
        self.name = name
        self.in_dim = in_dim
        self.units = units
        self.activation = activation
        self._act, self._dact = _activation(activation)
        limit = np.sqrt(6.0 / (in_dim + units))
        self.weights = {
            "W": rng.uniform(-limit, limit, size=(units, in_dim)),
            "b": np.zeros(units),
        }

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        if len(in_shape) != 1:
            raise BuildError(
                f"{self.name} expects a flat vector, got shape {in_shape} "
                "(insert a Flatten layer)"
            )
        if in_shape[0] != self.in_dim:
            raise BuildError(
                f"{self.name} expects {self.in_dim} inputs, got {in_shape[0]}"
            )
        return (self.units,)

    def forward(self, x, rng=None, train=False):
        z = self.weights["W"] @ x + self.weights["b"]
        return self._act(z), (x, z)

    def backward(self, dy, cache):
        x, z = cache
        dz = dy * self._dact(z, self._act(z))
        return (
            self.weights["W"].T @ dz,
            {"W": np.outer(dz, x), "b": dz},
        )

    def lrp(self, r, cache, epsilon, delta):
        x, z = cache
        return lrp_linear(
            x, self.weights["W"].T, self.weights["b"], z, r,
            fan_in=self.in_dim, epsilon=epsilon, delta=delta,
        )

    def weight_matrices(self):
        return [self.weights["W"]]


class Conv1DLayer(Layer):
    """1-D convolution with same padding (stride 1)."""

    def __init__(self, in_channels, filters, kernel, activation, rng, name="conv"):
        if kernel < 1:
            raise BuildError(f"{name}: kernel width must be >= 1")
        self.name = name
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.activation = activation
        self._act, self._dact = _activation(activation)
        self.pad_left = (kernel - 1) // 2
        self.pad_right = kernel - 1 - self.pad_left
        limit = np.sqrt(6.0 / (kernel * in_channels + kernel * filters))
        self.weights = {
            "W": rng.uniform(-limit, limit, size=(kernel, in_channels, filters)),
            "b": np.zeros(filters),
        }

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        if len(in_shape) != 2 or in_shape[1] != self.in_channels:
            raise BuildError(
                f"{self.name} expects (length, {self.in_channels}) input, "
                f"got shape {in_shape}"
            )
        return (in_shape[0], self.filters)

    def _windows(self, x):
        L = x.shape[0]
        xp = np.zeros((L + self.kernel - 1, self.in_channels))
        xp[self.pad_left : self.pad_left + L] = x
        win = np.lib.stride_tricks.sliding_window_view(
            xp, (self.kernel, self.in_channels)
        )[:, 0]  # (L, kernel, C)
        return xp, win.reshape(L, self.kernel * self.in_channels)

    def forward(self, x, rng=None, train=False):
        _, win = self._windows(x)
        W2 = self.weights["W"].reshape(-1, self.filters)
        z = win @ W2 + self.weights["b"]
        return self._act(z), (x, win, z)

    def backward(self, dy, cache):
        x, win, z = cache
        L = x.shape[0]
        dz = dy * self._dact(z, self._act(z))
        W2 = self.weights["W"].reshape(-1, self.filters)
        dW = (win.T @ dz).reshape(self.weights["W"].shape)
        db = dz.sum(axis=0)
        dwin = dz @ W2.T  # (L, kernel * C)
        dxp = np.zeros((L + self.kernel - 1, self.in_channels))
        for t in range(L):
            dxp[t : t + self.kernel] += dwin[t].reshape(self.kernel, self.in_channels)
        return dxp[self.pad_left : self.pad_left + L], {"W": dW, "b": db}

    def lrp(self, r, cache, epsilon, delta):
        """Dense rule per receptive field; N counts only in-range inputs."""
        x, win, z = cache
        L = x.shape[0]
        W2 = self.weights["W"].reshape(-1, self.filters)
        b = self.weights["b"]
        r_in = np.zeros_like(x)
        for t in range(L):
            start = t - self.pad_left
            in_range = np.array(
                [0 <= start + k < L for k in range(self.kernel)], dtype=bool
            )
            slot_mask = np.repeat(in_range, self.in_channels).astype(np.float64)
            fan_in = float(slot_mask.sum())
            if fan_in == 0:
                continue
            sign = np.where(z[t] >= 0, 1.0, -1.0)
            denom = z[t] + epsilon * sign
            share = (epsilon * sign + delta * b) / fan_in
            numer = win[t][:, None] * W2 + slot_mask[:, None] * share[None, :]
            contrib = (numer @ _safe_divide(r[t], denom)).reshape(
                self.kernel, self.in_channels
            )
            for k in range(self.kernel):
                if in_range[k]:
                    r_in[start + k] += contrib[k]
        return r_in

    def weight_matrices(self):
        return [self.weights["W"].reshape(-1, self.filters)]


class MaxPool1DLayer(Layer):
    """Non-overlapping max pooling along the sequence axis."""

    def __init__(self, pool, name="maxpool"):
        if pool < 1:
            raise BuildError(f"{name}: pool size must be >= 1")
        self.name = name
        self.pool = pool

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        if len(in_shape) != 2:
            raise BuildError(f"{self.name} expects (length, channels), got {in_shape}")
        out_len = in_shape[0] // self.pool
        if out_len < 1:
            raise BuildError(
                f"{self.name}: pool size {self.pool} exceeds sequence length "
                f"{in_shape[0]}"
            )
        return (out_len, in_shape[1])

    def forward(self, x, rng=None, train=False):
        L, C = x.shape
        out_len = L // self.pool
        blocks = x[: out_len * self.pool].reshape(out_len, self.pool, C)
        arg = blocks.argmax(axis=1)  # (out_len, C), first max wins
        y = np.take_along_axis(blocks, arg[:, None, :], axis=1)[:, 0, :]
        return y, (x.shape, arg)

    def _scatter(self, values, cache):
        (L, C), arg = cache
        out = np.zeros((L, C))
        out_len = arg.shape[0]
        rows = (np.arange(out_len)[:, None] * self.pool + arg).ravel()
        cols = np.tile(np.arange(C), out_len)
        np.add.at(out, (rows, cols), values.ravel())
        return out

    def backward(self, dy, cache):
        return self._scatter(dy, cache), {}

    def lrp(self, r, cache, epsilon, delta):
        # winner takes all: the argmax input receives the full relevance
        return self._scatter(r, cache)


def _lstm_forward(x, W, U, b, d):
    L = x.shape[0]
    pre = np.empty((L, 4 * d))
    gates = np.empty((L, 4 * d))
    c = np.empty((L, d))
    h = np.empty((L, d))
    h_prev = np.zeros(d)
    c_prev = np.zeros(d)
    for t in range(L):
        p = W @ x[t] + U @ h_prev + b
        pre[t] = p
        i = _sigmoid(p[:d])
        f = _sigmoid(p[d : 2 * d])
        g = np.tanh(p[2 * d : 3 * d])
        o = _sigmoid(p[3 * d :])
        gates[t, :d] = i
        gates[t, d : 2 * d] = f
        gates[t, 2 * d : 3 * d] = g
        gates[t, 3 * d :] = o
        c[t] = f * c_prev + i * g
        h[t] = o * np.tanh(c[t])
        h_prev = h[t]
        c_prev = c[t]
    return h, c, pre, gates


def _lstm_backward(dh_seq, x, W, U, h, c, gates, d):
    L, e = x.shape
    dx = np.zeros_like(x)
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * d)
    dh_next = np.zeros(d)
    dc_next = np.zeros(d)
    for t in reversed(range(L)):
        dh = dh_seq[t] + dh_next
        i = gates[t, :d]
        f = gates[t, d : 2 * d]
        g = gates[t, 2 * d : 3 * d]
        o = gates[t, 3 * d :]
        tanh_c = np.tanh(c[t])
        c_prev = c[t - 1] if t > 0 else np.zeros(d)
        h_prev = h[t - 1] if t > 0 else np.zeros(d)
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dpre = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        dW += np.outer(dpre, x[t])
        dU += np.outer(dpre, h_prev)
        db += dpre
        dh_next = U.T @ dpre
        dx[t] = W.T @ dpre
    return dx, dW, dU, db


def _lstm_lrp(r_seq, x, W, U, b, h, c, pre, gates, d, epsilon, delta):
    """Signal-takes-all relevance flow: gates are constants, relevance
    moves through the cell state and the signal input g."""
    L, e = x.shape
    r_x = np.zeros_like(x)
    Wg = W[2 * d : 3 * d]
    Ug = U[2 * d : 3 * d]
    bg = b[2 * d : 3 * d]
    r_h = np.zeros(d)
    r_c = np.zeros(d)
    for t in reversed(range(L)):
        r_h = r_h + r_seq[t]
        # h_t = o * tanh(c_t): gate constant, tanh transparent
        r_c = r_c + r_h
        i = gates[t, :d]
        f = gates[t, d : 2 * d]
        g = gates[t, 2 * d : 3 * d]
        c_prev = c[t - 1] if t > 0 else np.zeros(d)
        h_prev = h[t - 1] if t > 0 else np.zeros(d)
        # split c_t = f*c_prev + i*g: two inbound signals per unit (N = 2)
        sign_c = np.where(c[t] >= 0, 1.0, -1.0)
        denom = c[t] + epsilon * sign_c
        eps_share = epsilon * sign_c / 2.0
        ratio = _safe_divide(r_c, denom)
        r_c_prev = (f * c_prev + eps_share) * ratio
        r_g = (i * g + eps_share) * ratio
        # g = tanh(Wg x_t + Ug h_prev + bg): redistribute over x and h
        z_out = pre[t, 2 * d : 3 * d]
        r_x[t] = lrp_linear(
            x[t], Wg.T, bg, z_out, r_g, fan_in=e + d, epsilon=epsilon, delta=delta
        )
        r_h = lrp_linear(
            h_prev, Ug.T, bg, z_out, r_g, fan_in=e + d, epsilon=epsilon, delta=delta
        )
        r_c = r_c_prev
    return r_x


def _init_lstm_weights(in_dim, units, rng):
    limit_w = np.sqrt(6.0 / (in_dim + 4 * units))
    limit_u = np.sqrt(6.0 / (units + 4 * units))
    W = rng.uniform(-limit_w, limit_w, size=(4 * units, in_dim))
    U = rng.uniform(-limit_u, limit_u, size=(4 * units, units))
    b = np.zeros(4 * units)
    b[units : 2 * units] = 1.0  # forget-gate bias
    return W, U, b


class LSTMLayer(Layer):
    def __init__(self, in_dim, units, return_sequences, rng, name="lstm"):
        self.name = name
        self.in_dim = in_dim
        self.units = units
        self.return_sequences = return_sequences
        W, U, b = _init_lstm_weights(in_dim, units, rng)
        self.weights = {"W": W, "U": U, "b": b}

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        if len(in_shape) != 2 or in_shape[1] != self.in_dim:
            raise BuildError(
                f"{self.name} expects (length, {self.in_dim}) input, got {in_shape}"
            )
        return (in_shape[0], self.units) if self.return_sequences else (self.units,)

    def forward(self, x, rng=None, train=False):
        h, c, pre, gates = _lstm_forward(
            x, self.weights["W"], self.weights["U"], self.weights["b"], self.units
        )
        y = h if self.return_sequences else h[-1]
        return y, (x, h, c, pre, gates)

    def _expand(self, dy, L):
        if self.return_sequences:
            return dy
        full = np.zeros((L, self.units))
        full[-1] = dy
        return full

    def backward(self, dy, cache):
        x, h, c, pre, gates = cache
        dh_seq = self._expand(dy, x.shape[0])
        dx, dW, dU, db = _lstm_backward(
            dh_seq, x, self.weights["W"], self.weights["U"], h, c, gates, self.units
        )
        return dx, {"W": dW, "U": dU, "b": db}

    def lrp(self, r, cache, epsilon, delta):
        x, h, c, pre, gates = cache
        r_seq = self._expand(r, x.shape[0])
        return _lstm_lrp(
            r_seq, x, self.weights["W"], self.weights["U"], self.weights["b"],
            h, c, pre, gates, self.units, epsilon, delta,
        )

    def weight_matrices(self):
        return [self.weights["W"], self.weights["U"]]


class BiLSTMLayer(Layer):
    """Forward and backward LSTM passes with concatenated outputs."""

    def __init__(self, in_dim, units, return_sequences, rng, name="bilstm"):
        self.name = name
        self.in_dim = in_dim
        self.units = units
        self.return_sequences = return_sequences
        Wf, Uf, bf = _init_lstm_weights(in_dim, units, rng)
        Wb, Ub, bb = _init_lstm_weights(in_dim, units, rng)
        self.weights = {"Wf": Wf, "Uf": Uf, "bf": bf, "Wb": Wb, "Ub": Ub, "bb": bb}

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        if len(in_shape) != 2 or in_shape[1] != self.in_dim:
            raise BuildError(
                f"{self.name} expects (length, {self.in_dim}) input, got {in_shape}"
            )
        width = 2 * self.units
        return (in_shape[0], width) if self.return_sequences else (width,)

    def forward(self, x, rng=None, train=False):
        w = self.weights
        hf, cf, pref, gatesf = _lstm_forward(x, w["Wf"], w["Uf"], w["bf"], self.units)
        xr = x[::-1].copy()
        hb, cb, preb, gatesb = _lstm_forward(xr, w["Wb"], w["Ub"], w["bb"], self.units)
        if self.return_sequences:
            y = np.concatenate([hf, hb[::-1]], axis=1)
        else:
            y = np.concatenate([hf[-1], hb[-1]])
        return y, (x, xr, (hf, cf, pref, gatesf), (hb, cb, preb, gatesb))

    def _split(self, dy, L):
        """Return per-timestep (L, units) signals for each direction, in
        each direction's own time order."""
        d = self.units
        if self.return_sequences:
            return dy[:, :d], dy[::-1, d:]
        f = np.zeros((L, d))
        b = np.zeros((L, d))
        f[-1] = dy[:d]
        b[-1] = dy[d:]
        return f, b

    def backward(self, dy, cache):
        x, xr, fwd, bwd = cache
        w = self.weights
        L = x.shape[0]
        dyf, dyb = self._split(dy, L)
        hf, cf, pref, gatesf = fwd
        hb, cb, preb, gatesb = bwd
        dxf, dWf, dUf, dbf = _lstm_backward(dyf, x, w["Wf"], w["Uf"], hf, cf, gatesf, self.units)
        dxb, dWb, dUb, dbb = _lstm_backward(dyb, xr, w["Wb"], w["Ub"], hb, cb, gatesb, self.units)
        dx = dxf + dxb[::-1]
        return dx, {"Wf": dWf, "Uf": dUf, "bf": dbf, "Wb": dWb, "Ub": dUb, "bb": dbb}

    def lrp(self, r, cache, epsilon, delta):
        x, xr, fwd, bwd = cache
        w = self.weights
        L = x.shape[0]
        rf, rb = self._split(r, L)
        hf, cf, pref, gatesf = fwd
        hb, cb, preb, gatesb = bwd
        rxf = _lstm_lrp(rf, x, w["Wf"], w["Uf"], w["bf"], hf, cf, pref, gatesf,
                        self.units, epsilon, delta)
        rxb = _lstm_lrp(rb, xr, w["Wb"], w["Ub"], w["bb"], hb, cb, preb, gatesb,
                        self.units, epsilon, delta)
        return rxf + rxb[::-1]

    def weight_matrices(self):
        w = self.weights
        return [w["Wf"], w["Uf"], w["Wb"], w["Ub"]]


class DropoutLayer(Layer):
    def __init__(self, rate, name="dropout"):
        if not 0.0 <= rate < 1.0:
            raise BuildError(f"{name}: rate must be in [0, 1), got {rate}")
        self.name = name
        self.rate = rate

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        return in_shape

    def forward(self, x, rng=None, train=False):
        if not train or self.rate == 0.0:
            return x, None
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, cache):
        if cache is None:
            return dy, {}
        return dy * cache, {}


class GaussianNoiseLayer(Layer):
    def __init__(self, std, name="noise"):
        if std < 0:
            raise BuildError(f"{name}: std must be >= 0, got {std}")
        self.name = name
        self.std = std

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        return in_shape

    def forward(self, x, rng=None, train=False):
        if not train or self.std == 0.0:
            return x, None
        return x + rng.normal(0.0, self.std, size=x.shape), None


class FlattenLayer(Layer):
    def __init__(self, name="flatten"):
        self.name = name

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        n = 1
        for s in in_shape:
            n *= s
        return (n,)

    def forward(self, x, rng=None, train=False):
        return x.reshape(-1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}

    def lrp(self, r, cache, epsilon, delta):
        return r.reshape(cache)


class SoftmaxLayer(Layer):
    def __init__(self, num_classes, name="softmax"):
        self.name = name
        self.num_classes = num_classes

    def out_shape(self, in_shape):
        self._require_float(in_shape)
        if in_shape != (self.num_classes,):
            raise BuildError(
                f"{self.name} expects ({self.num_classes},) logits, got {in_shape}"
            )
        return in_shape

    def forward(self, x, rng=None, train=False):
        shifted = x - x.max()
        e = np.exp(shifted)
        p = e / e.sum()
        return p, (x, p)

    def backward(self, dy, cache):
        _, p = cache
        return p * (dy - float(dy @ p)), {}
