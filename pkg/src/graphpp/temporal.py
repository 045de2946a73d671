"""Scalar feedforward bases for the temporal parts of the influence kernel.

Each basis function is a tiny fully connected network (1 -> 32 -> 32 -> 1 by
default) with softplus activations on the hidden layers and a linear output.
The decay bases are additionally cached on a uniform grid together with their
running integrals, so that training never evaluates them at arbitrary lags.
"""

from __future__ import annotations

import numpy as np


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def inv_softplus(y):
    # inverse of log(1 + e^x); y must be positive
    return float(np.log(np.expm1(y)))


class ScalarNet:
    """Small scalar->scalar MLP with analytic parameter gradients.

    ``input_scale`` is a fixed (non-trainable) rescaling of the input applied
    before the first layer; it keeps the net well conditioned on horizons much
    longer than O(1) without changing the parameter layout.

    Initialization: hidden and output layers use uniform(+-1/sqrt(fan_in));
    the first layer instead draws slopes uniform(+-first_spread) with biases
    placing each softplus bend uniformly inside the scaled input range [0, 1].
    With the narrow standard init the first-layer features are near-affine
    over the whole domain and gradient descent takes thousands of epochs to
    grow any curvature; spreading the bends fixes that without changing the
    architecture.
    """

    def __init__(self, hidden=(32, 32), rng=None, input_scale=1.0,
                 first_spread=8.0):
        if rng is None:
            rng = np.random.default_rng(0)
        widths = [1, *hidden, 1]
        self.widths = tuple(widths)
        self.input_scale = float(input_scale)
        self.weights = []
        self.biases = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if i == 0 and first_spread > 0:
                w = rng.uniform(-first_spread, first_spread, size=(fan_in, fan_out))
                b = -(w[0] * rng.uniform(0.0, 1.0, size=fan_out))
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.weights.append(w)
            self.biases.append(b)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} params, got {flat.size}")
        off = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[off:off + w.size].reshape(w.shape).copy()
            off += w.size
            self.biases[i] = flat[off:off + b.size].copy()
            off += b.size

    def forward(self, x):
        """Batched forward pass; x is (m,) and the result is (m,)."""
        a = np.asarray(x, dtype=np.float64).reshape(-1, 1) * self.input_scale
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < last:
                a = softplus(a)
        return a[:, 0]

    def backward(self, x, upstream):
        """Gradient of sum(upstream * forward(x)) w.r.t. the flat parameters."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1) * self.input_scale
        upstream = np.asarray(upstream, dtype=np.float64).reshape(-1)
        last = len(self.weights) - 1
        acts = [x]   # inputs of each layer
        pre = []     # pre-activations of hidden layers
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if i < last:
                pre.append(z)
                a = softplus(z)
                acts.append(a)
            else:
                a = z
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = upstream[:, None]  # (m, 1), output layer is linear
        for i in range(last, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * sigmoid(pre[i - 1])
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    def copy(self):
        dup = ScalarNet(hidden=self.widths[1:-1], input_scale=self.input_scale)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup


def net_forward(net: ScalarNet, t) -> float:
    """Evaluate the network at a single scalar input."""
    return float(net.forward(np.array([t]))[0])


def net_backward(net: ScalarNet, t, upstream) -> np.ndarray:
    """Parameter gradient of upstream * net(t) at a single scalar input."""
    return net.backward(np.array([t]), np.array([upstream]))


class TemporalGrid:
    """Uniform grid cache of the decay bases and their cumulative integrals.

    ``phi_values[l, j]`` holds the l-th decay basis at grid point j, forced to
    zero for grid points beyond ``tau_max``.  ``cum_values`` is the running
    trapezoidal integral, so it is flat past the truncation lag.  Lookups
    outside [0, T] are clamped and counted in ``clamp_warnings``.
    """

    def __init__(self, times, phi_values, cum_values, tau_max):
        self.times = times
        self.size = times.size
        self.horizon = float(times[-1])
        self.delta = float(times[1] - times[0])
        self.tau_max = float(tau_max)
        self.phi_values = phi_values
        self.cum_values = cum_values
        self.active = times <= self.tau_max + 1e-12  # knots that carry net values
        self.clamp_warnings = 0

    @property
    def num_bases(self):
        return self.phi_values.shape[0]

    def locate(self, x):
        """Bin indices and fractional offsets for linear interpolation."""
        x = np.asarray(x, dtype=np.float64)
        pos = np.clip(x / self.delta, 0.0, self.size - 1.0)
        idx = np.minimum(pos.astype(np.int64), self.size - 2)
        frac = pos - idx
        return idx, frac

    def interp_phi_many(self, lags):
        """All decay bases at the given lags, (L, m); zero beyond tau_max."""
        lags = np.asarray(lags, dtype=np.float64)
        idx, frac = self.locate(lags)
        vals = self.phi_values[:, idx] * (1.0 - frac) + self.phi_values[:, idx + 1] * frac
        vals[:, lags > self.tau_max] = 0.0
        return vals

    def interp_cum_many(self, ts):
        ts = np.asarray(ts, dtype=np.float64)
        outside = (ts < 0.0) | (ts > self.horizon)
        if outside.any():
            self.clamp_warnings += int(outside.sum())
            ts = np.clip(ts, 0.0, self.horizon)
        idx, frac = self.locate(ts)
        return self.cum_values[:, idx] * (1.0 - frac) + self.cum_values[:, idx + 1] * frac


def build_grid(phi_nets, T, G, tau_max=None) -> TemporalGrid:
    """Evaluate decay nets on a uniform grid over [0, T] and integrate them.

    ``tau_max`` defaults to T (no truncation).  The running integral uses the
    trapezoid rule, so doubling G quarters the quadrature error for smooth
    bases.
    """
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if G < 2:
        raise ValueError(f"grid needs at least 2 points, got {G}")
    if tau_max is None:
        tau_max = T
    if not (0.0 < tau_max <= T):
        raise ValueError(f"tau_max must be in (0, T], got {tau_max}")
    times = np.linspace(0.0, float(T), int(G))
    phi = np.stack([net.forward(times) for net in phi_nets])
    phi[:, times > tau_max + 1e-12] = 0.0
    delta = times[1] - times[0]
    seg = 0.5 * (phi[:, 1:] + phi[:, :-1]) * delta
    cum = np.concatenate([np.zeros((phi.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1)
    return TemporalGrid(times=times, phi_values=phi, cum_values=cum, tau_max=tau_max)


def interp_phi(grid: TemporalGrid, l, lag) -> float:
    """Linearly interpolated decay basis l at one lag; zero past tau_max."""
    if lag < 0:
        raise ValueError(f"negative lag {lag}")
    return float(grid.interp_phi_many(np.array([lag]))[l, 0])


def interp_cum(grid: TemporalGrid, l, t) -> float:
    """Linearly interpolated cumulative integral F_l(t)."""
    return float(grid.interp_cum_many(np.array([t]))[l, 0])


def cum_adjoint(u_cum, delta):
    """Backpropagate gradients on cumulative values onto grid values.

    Adjoint of the trapezoidal running sum used in build_grid: given
    dLoss/dcum (L, G), returns dLoss/dphi (L, G).
    """
    suffix = np.cumsum(u_cum[:, ::-1], axis=1)[:, ::-1]  # suffix[l, g] = sum_{j>=g}
    out = delta * (suffix - 0.5 * u_cum)
    out[:, 0] = delta * 0.5 * (suffix[:, 0] - u_cum[:, 0])
    return out
