"""Low-rank deep influence kernel and the conditional intensity it induces.

The kernel evaluated between a past event (t', v') and a probe (t, v) is

    k(t', t, v', v) = sum_r sum_l alpha[r, l] * psi_l(t') * phi_l(t - t') * B_r(v', v)

with scalar-net temporal bases and a bank of localized graph filters.  The
intensity adds a positive per-node (or tied) background:

    lambda(t, v) = mu_v + sum_{t_j < t} k(t_j, t, v_j, v)

Two evaluation paths exist: ``exact`` calls the decay nets directly, the grid
path linearly interpolates cached grid values (training always uses the grid).
"""

from __future__ import annotations

import numpy as np

from .filters import FilterBank
from .graphs import Graph, khop_index, scaled_laplacian
from . import filters as _filters
from .temporal import ScalarNet, build_grid, inv_softplus, sigmoid, softplus


class KernelModel:
    def __init__(self, graph: Graph, bank: FilterBank, alpha, mu_raw, tied_mu,
                 psi_nets, phi_nets, T, G, tau_max=None):
        self.graph = graph
        self.bank = bank
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.mu_raw = np.asarray(mu_raw, dtype=np.float64)
        self.tied_mu = tied_mu
        self.psi_nets = list(psi_nets)
        self.phi_nets = list(phi_nets)
        self.T = float(T)
        self.G = int(G)
        self.tau_max = float(T if tau_max is None else tau_max)
        R, L = self.alpha.shape
        if R != bank.num_filters or L != len(self.psi_nets) or L != len(self.phi_nets):
            raise ValueError("alpha shape inconsistent with bank / nets")
        expected_mu = 1 if tied_mu else graph.num_nodes
        if self.mu_raw.size != expected_mu:
            raise ValueError(f"mu_raw must have {expected_mu} entries")
        self.grid = None
        self.refresh_grid()

    # ---- parameters ------------------------------------------------------

    @property
    def num_nodes(self):
        return self.graph.num_nodes

    @property
    def num_filters(self):
        return self.alpha.shape[0]

    @property
    def num_bases(self):
        return self.alpha.shape[1]

    @property
    def mu(self):
        """Per-node background rates, softplus of the free parameters."""
        vals = softplus(self.mu_raw)
        if self.tied_mu:
            return np.full(self.num_nodes, vals[0])
        return vals

    def param_blocks(self):
        """Ordered {name: slice} map over the flat trainable vector."""
        blocks = {}
        off = 0

        def add(name, size):
            nonlocal off
            blocks[name] = slice(off, off + size)
            off += size

        add("alpha", self.alpha.size)
        add("mu", self.mu_raw.size)
        for l, net in enumerate(self.psi_nets):
            add(f"psi_{l}", net.n_params)
        for l, net in enumerate(self.phi_nets):
            add(f"phi_{l}", net.n_params)
        if self.bank.n_free:
            add("bank", self.bank.n_free)
        return blocks

    @property
    def n_params(self):
        blocks = self.param_blocks()
        last = blocks[next(reversed(blocks))]
        return last.stop

    def get_params(self):
        parts = [self.alpha.ravel(), self.mu_raw]
        parts += [net.get_params() for net in self.psi_nets]
        parts += [net.get_params() for net in self.phi_nets]
        if self.bank.n_free:
            parts.append(self.bank.free_params)
        return np.concatenate(parts)

    def set_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        blocks = self.param_blocks()
        self.alpha = flat[blocks["alpha"]].reshape(self.alpha.shape).copy()
        self.mu_raw = flat[blocks["mu"]].copy()
        for l, net in enumerate(self.psi_nets):
            net.set_params(flat[blocks[f"psi_{l}"]])
        for l, net in enumerate(self.phi_nets):
            net.set_params(flat[blocks[f"phi_{l}"]])
        if self.bank.n_free:
            self.bank.free_params = flat[blocks["bank"]].copy()
        self.refresh_grid()

    def refresh_grid(self):
        """Rebuild the decay-basis grid cache after parameter changes."""
        self.grid = build_grid(self.phi_nets, self.T, self.G, self.tau_max)

    def psi_values(self, times):
        """(L, m) matrix of origin bases at the given times."""
        times = np.asarray(times, dtype=np.float64)
        return np.stack([net.forward(times) for net in self.psi_nets])

    def phi_values(self, lags, exact=False):
        """(L, m) decay bases at the given lags, truncated past tau_max."""
        lags = np.asarray(lags, dtype=np.float64)
        if not exact:
            return self.grid.interp_phi_many(lags)
        vals = np.stack([net.forward(lags) for net in self.phi_nets])
        vals[:, lags > self.tau_max] = 0.0
        return vals

    def copy(self):
        dup = KernelModel(self.graph, self.bank.copy(), self.alpha.copy(),
                          self.mu_raw.copy(), self.tied_mu,
                          [n.copy() for n in self.psi_nets],
                          [n.copy() for n in self.phi_nets],
                          self.T, self.G, self.tau_max)
        return dup

    # ---- evaluation ------------------------------------------------------

    def kernel_rows(self, t_primes, lags, v_primes, exact=False):
        """Influence of past events onto every node: (m, V).

        Row p is k(t'_p, t'_p + lag_p, v'_p, :).
        """
        t_primes = np.atleast_1d(np.asarray(t_primes, dtype=np.float64))
        lags = np.atleast_1d(np.asarray(lags, dtype=np.float64))
        v_primes = np.atleast_1d(np.asarray(v_primes, dtype=np.int64))
        psi = self.psi_values(t_primes)            # (L, m)
        phi = self.phi_values(lags, exact=exact)   # (L, m)
        mats = self.bank.matrices()                # (R, V, V)
        rows = mats[:, v_primes, :]                # (R, m, V)
        return np.einsum("rl,lm,lm,rmv->mv", self.alpha, psi, phi, rows,
                         optimize=True)


def kernel_eval(m: KernelModel, t_prime, t, v_prime, v, exact=False) -> float:
    """Kernel value k(t', t, v', v); requires t >= t'."""
    if t < t_prime:
        raise ValueError(f"probe time {t} precedes source time {t_prime}")
    row = m.kernel_rows([t_prime], [t - t_prime], [v_prime], exact=exact)
    return float(row[0, v])


def kernel_matrix(m: KernelModel, t_prime, lag, exact=True) -> np.ndarray:
    """Full (V, V) kernel slice k(t', t' + lag, :, :)."""
    psi = m.psi_values(np.array([t_prime]))[:, 0]
    phi = m.phi_values(np.array([lag]), exact=exact)[:, 0]
    coeff = m.alpha * (psi * phi)[None, :]         # (R, L)
    return np.einsum("rl,rpv->pv", coeff, m.bank.matrices())


def intensity(m: KernelModel, t, v, history, exact=False) -> float:
    """Conditional intensity at (t, v) given history events strictly before t.

    May be negative before the positivity penalty has done its job; callers
    that need a rate must clamp.
    """
    times = np.asarray(history.times if hasattr(history, "times") else history[0],
                       dtype=np.float64)
    nodes = np.asarray(history.nodes if hasattr(history, "nodes") else history[1],
                       dtype=np.int64)
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("history must be time-ordered")
    if np.any(times >= t):
        raise ValueError("history contains events at or after the probe time")
    lam = intensity_vector(m, t, times, nodes, exact=exact)
    return float(lam[v])


def intensity_vector(m: KernelModel, t, times, nodes, exact=False) -> np.ndarray:
    """lambda(t, :) over all nodes for a history given as parallel arrays."""
    lam = m.mu.copy()
    if times.size:
        rows = m.kernel_rows(times, t - times, nodes, exact=exact)
        lam += rows.sum(axis=0)
    return lam


def intensity_grad(m: KernelModel, t, v, history, upstream=1.0) -> np.ndarray:
    """Gradient of upstream * lambda(t, v) w.r.t. the flat parameter vector.

    Differentiates the grid evaluation path (the one training uses), so the
    decay-net chain runs through the cached grid knots.
    """
    times = np.asarray(history.times if hasattr(history, "times") else history[0],
                       dtype=np.float64)
    nodes = np.asarray(history.nodes if hasattr(history, "nodes") else history[1],
                       dtype=np.int64)
    grid = m.grid
    keep = (t - times) <= grid.tau_max
    times, nodes = times[keep], nodes[keep]
    blocks = m.param_blocks()
    grad = np.zeros(m.n_params)

    # background
    gmu = np.zeros(m.num_nodes)
    gmu[v] = upstream
    smu = sigmoid(m.mu_raw)
    if m.tied_mu:
        grad[blocks["mu"]] = gmu.sum() * smu
    else:
        grad[blocks["mu"]] = gmu * smu

    if times.size == 0:
        return grad

    lags = t - times
    psi = m.psi_values(times)                       # (L, n)
    idx, frac = grid.locate(lags)
    phi = grid.phi_values[:, idx] * (1 - frac) + grid.phi_values[:, idx + 1] * frac
    mats = m.bank.matrices()
    bcol = mats[:, nodes, v]                        # (R, n)

    # alpha block
    dalpha = upstream * np.einsum("rn,ln,ln->rl", bcol, psi, phi)
    grad[blocks["alpha"]] = dalpha.ravel()

    # psi nets: coefficient on psi[l, j]
    e = np.einsum("rl,rn->ln", m.alpha, bcol)       # (L, n)
    upsi = upstream * e * phi
    for l, net in enumerate(m.psi_nets):
        grad[blocks[f"psi_{l}"]] = net.backward(times, upsi[l])

    # phi nets via the grid knots
    uP = np.zeros_like(grid.phi_values)
    coef = upstream * e * psi                       # (L, n)
    for l in range(m.num_bases):
        np.add.at(uP[l], idx, coef[l] * (1 - frac))
        np.add.at(uP[l], idx + 1, coef[l] * frac)
    uP[:, ~grid.active] = 0.0
    for l, net in enumerate(m.phi_nets):
        grad[blocks[f"phi_{l}"]] = net.backward(grid.times, uP[l])

    # filter bank
    if m.bank.n_free:
        dB = np.zeros_like(mats)
        cvals = upstream * np.einsum("rl,ln,ln->rn", m.alpha, psi, phi)
        for r in range(m.num_filters):
            np.add.at(dB[r], (nodes, np.full(nodes.size, v)), cvals[r])
        grad[blocks["bank"]] = m.bank.grad_free(dB)
    return grad


def rank_report(m: KernelModel):
    """Mixing coefficients sorted by magnitude, largest first.

    Each row is (filter_index, basis_index, value, magnitude); supports the
    truncation workflow where near-zero coefficients indicate excess rank.
    """
    rows = []
    for r in range(m.num_filters):
        for l in range(m.num_bases):
            val = float(m.alpha[r, l])
            rows.append({"filter": r, "basis": l, "alpha": val,
                         "magnitude": abs(val)})
    rows.sort(key=lambda row: -row["magnitude"])
    return rows


def discardable(report, rel_threshold):
    """Entries of a rank report below rel_threshold * max magnitude."""
    if not report:
        return []
    cut = rel_threshold * report[0]["magnitude"]
    return [row for row in report if row["magnitude"] < cut]


def truncate_alpha(m: KernelModel, rel_threshold) -> KernelModel:
    """Copy of the model with coefficients below the relative cutoff zeroed."""
    dup = m.copy()
    cut = rel_threshold * np.abs(dup.alpha).max()
    dup.alpha = np.where(np.abs(dup.alpha) < cut, 0.0, dup.alpha)
    return dup


def build_model(graph: Graph, *, L, R, filter_mode, T, G, orders=None,
                gat_support="one_hop", tau_max=None, mu_mode="per_node",
                mu_init=0.5, hidden=(32, 32), seed=0,
                alpha_scale=0.1) -> KernelModel:
    """Assemble a model from hyperparameters with seeded initialization.

    Temporal nets get a fixed 1/T input rescaling; mixing coefficients start
    near ``alpha_scale`` with a small jitter so attention heads that share a
    mask can differentiate.
    """
    rng = np.random.default_rng(seed)
    if filter_mode == "chebyshev":
        bank = _filters.chebyshev_bank(scaled_laplacian(graph), R)
    elif filter_mode == "l3net":
        if orders is None:
            orders = list(range(R))
        if len(orders) != R:
            raise ValueError(f"need {R} orders, got {orders}")
        idx = khop_index(graph, max(orders))
        bank = _filters.l3net_bank(idx, orders, rng=rng)
    elif filter_mode == "gat":
        idx = khop_index(graph, 1)
        bank = _filters.gat_bank(idx, R, support=gat_support, rng=rng)
    else:
        raise ValueError(f"unknown filter mode {filter_mode!r}")

    alpha = alpha_scale * (1.0 + 0.1 * rng.standard_normal((R, L)))
    # condition each net on its own input range: origin bases see [0, T],
    # decay bases effectively live on [0, tau_max]
    lag_range = float(T if tau_max is None else tau_max)
    psi_nets = [ScalarNet(hidden=hidden, rng=rng, input_scale=1.0 / float(T))
                for _ in range(L)]
    phi_nets = [ScalarNet(hidden=hidden, rng=rng, input_scale=1.0 / lag_range)
                for _ in range(L)]
    raw = inv_softplus(max(mu_init, 1e-6))
    if mu_mode == "tied":
        mu_raw = np.array([raw])
    elif mu_mode == "per_node":
        mu_raw = np.full(graph.num_nodes, raw)
    else:
        raise ValueError(f"unknown mu mode {mu_mode!r}")
    return KernelModel(graph, bank, alpha, mu_raw, mu_mode == "tied",
                       psi_nets, phi_nets, T, G, tau_max)
