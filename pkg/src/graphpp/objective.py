"""Training objectives on the O(n) grid scheme, with exact analytic gradients.

Two data losses over a batch of sequences (both averaged over the batch):

    nll:  sum_v int_0^T lambda(t, v) dt  -  sum_i log lambda(t_i, v_i)
    ls:   sum_v int_0^T lambda(t, v)^2 dt - sum_i 2 lambda(t_i, v_i)

plus a log-barrier penalty keeping the intensity above a bound b on a dense
time grid:

    p = - mean_{s, grid, v} log(lambda(t, v) - b)

and the total objective  loss + p / w.

The nll integral is computed in closed grid form (background term plus
per-event weighted cumulative integrals of the decay bases); the squared
integral for ls uses the trapezoid rule on the barrier grid.  Decay bases are
only ever read off the interpolation grid here, never evaluated directly, so
the cost per sequence is O(n + grid).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .temporal import cum_adjoint, sigmoid


class InfeasibleIntensityError(RuntimeError):
    """Raised when an intensity violates a positivity requirement.

    ``where`` is 'event' (lambda <= 0 at an observed event, nll only) or
    'barrier' (lambda <= b at a penalty grid point).
    """

    def __init__(self, where, sequence, detail, value):
        self.where = where
        self.sequence = sequence
        self.detail = detail
        self.value = value
        super().__init__(
            f"infeasible intensity ({where}) in sequence {sequence} at "
            f"{detail}: {value:.6g}")


@dataclass
class LossBreakdown:
    data_term: float
    integral_term: float
    barrier_term: float
    total: float
    per_sequence: list = field(default_factory=list)
    min_grid_intensity: float = np.nan


class BarrierGrid:
    """Dense uniform time grid coupled with the barrier bound and weight."""

    def __init__(self, times, num_nodes, b=0.0, w=1.0):
        times = np.asarray(times, dtype=np.float64)
        if w <= 0:
            raise ValueError(f"barrier weight must be positive, got {w}")
        self.times = times
        self.num_nodes = int(num_nodes)
        self.b = float(b)
        self.w = float(w)
        delta = times[1] - times[0]
        wq = np.full(times.size, delta)
        wq[0] = wq[-1] = 0.5 * delta
        self.quad_weights = wq  # trapezoid weights for int lambda^2


def make_barrier_grid(T, g_bar, num_nodes, b=0.0, w=1.0) -> BarrierGrid:
    return BarrierGrid(np.linspace(0.0, float(T), int(g_bar)), num_nodes, b, w)


class SequenceCache:
    """Parameter-independent index structures for one sequence.

    Everything here depends only on the event data and the grid geometry, so
    the trainer builds these once and reuses them for every step.
    """

    def __init__(self, seq, model, bg=None):
        grid = model.grid
        V = model.num_nodes
        t = seq.times
        v = seq.nodes
        self.times = t
        self.nodes = v
        self.n = t.size
        if np.any(v >= V):
            raise ValueError("sequence references nodes outside the graph")
        if t.size and t[-1] > model.T + 1e-12:
            raise ValueError("sequence extends past the model horizon")

        # event pairs j < i with lag inside the truncation window
        lag = t[:, None] - t[None, :]
        ii, jj = np.nonzero((lag > 0.0) & (lag <= grid.tau_max))
        self.ev_i = ii
        self.ev_j = jj
        self.ev_bin, self.ev_frac = grid.locate(lag[ii, jj])

        # cumulative-integral lookups at T - t_i
        self.f_bin, self.f_frac = grid.locate(model.T - t)

        self.onehot = np.zeros((self.n, V))
        if self.n:
            self.onehot[np.arange(self.n), v] = 1.0
        self.ev_bidx = v[jj] * V + v[ii]

        if bg is not None:
            blag = bg.times[:, None] - t[None, :]
            gg, bj = np.nonzero((blag > 0.0) & (blag <= grid.tau_max))
            self.bar_g = gg
            self.bar_j = bj
            self.bar_bin, self.bar_frac = grid.locate(blag[gg, bj])
            self.bar_sidx = gg * V + v[bj]
        else:
            self.bar_g = None


class _StepContext:
    """Per-step shared quantities (one materialization per batch)."""

    def __init__(self, model, bg):
        self.model = model
        self.bg = bg
        self.mats = model.bank.matrices()          # (R, V, V)
        self.row_sums = self.mats.sum(axis=2)      # (R, V)
        self.mu = model.mu                         # (V,)
        self.alpha = model.alpha                   # (R, L)
        self.P = model.grid.phi_values             # (L, G)
        self.F = model.grid.cum_values             # (L, G)


_BARRIER_NEGLIGIBLE = 1e-10


def _interp(P, idx, frac):
    return P[:, idx] * (1.0 - frac) + P[:, idx + 1] * frac


def _seq_terms(ctx, cache, kind, want_grad, seq_index):
    """Loss pieces and (optionally) raw gradient contributions of one sequence."""
    model, bg = ctx.model, ctx.bg
    V = model.num_nodes
    G = model.grid.size
    L, R = model.num_bases, model.num_filters
    t, v, n = cache.times, cache.nodes, cache.n
    out = {"data": 0.0, "integral": 0.0}

    psi = model.psi_values(t)                                 # (L, n)

    lam_ev = phie = ae = be = ce = None
    if kind != "barrier_only":
        # intensity at the events
        phie = _interp(ctx.P, cache.ev_bin, cache.ev_frac)    # (L, Pe)
        ae = psi[:, cache.ev_j] * phie
        be = ctx.mats[:, v[cache.ev_j], v[cache.ev_i]]        # (R, Pe)
        ce = ctx.alpha @ ae                                   # (R, Pe)
        kpair = (ce * be).sum(axis=0)
        lam_ev = ctx.mu[v] + np.bincount(cache.ev_i, weights=kpair, minlength=n)

    Fi = wrv = None
    if kind == "nll":
        if n and lam_ev.min() <= 0.0:
            bad = int(np.argmin(lam_ev))
            raise InfeasibleIntensityError(
                "event", seq_index, f"event {bad} (t={t[bad]:.6g}, v={v[bad]})",
                float(lam_ev.min()))
        Fi = _interp(ctx.F, cache.f_bin, cache.f_frac)         # (L, n)
        wrv = ctx.row_sums[:, v]                               # (R, n)
        comp = model.T * ctx.mu.sum()
        if n:
            comp += float(np.einsum("rl,ri,li,li->", ctx.alpha, wrv, psi, Fi,
                                    optimize=True))
        out["integral"] = comp
        out["data"] = -float(np.log(lam_ev).sum()) if n else 0.0
    elif kind == "ls":
        out["data"] = -2.0 * float(lam_ev.sum())
        if bg is None:
            raise ValueError("ls loss needs a barrier grid for its square integral")

    # intensity on the barrier grid
    lam_bar = margins = S = Q = None
    if bg is not None:
        Gb = bg.times.size
        phib = _interp(ctx.P, cache.bar_bin, cache.bar_frac)   # (L, Pb)
        sb = psi[:, cache.bar_j] * phib
        S = np.stack([
            np.bincount(cache.bar_sidx, weights=sb[l], minlength=Gb * V)
            for l in range(L)
        ]).reshape(L, Gb, V)
        Q = np.einsum("rl,lgv->rgv", ctx.alpha, S)
        lam_bar = ctx.mu[None, :] + np.einsum("rgp,rpv->gv", Q, ctx.mats,
                                              optimize=True)
        out["min_bar"] = float(lam_bar.min())
        # once 1/w is below double-precision noise the penalty contributes
        # nothing to the objective; skip its log so a grazing intensity cannot
        # raise a spurious domain error (the bound update still sees min_bar)
        active = (kind == "barrier_only") or (1.0 / bg.w >= _BARRIER_NEGLIGIBLE)
        if np.isfinite(bg.b) and active:
            margins = lam_bar - bg.b
            if margins.min() <= 0.0:
                g, vv = np.unravel_index(int(np.argmin(margins)), margins.shape)
                raise InfeasibleIntensityError(
                    "barrier", seq_index, f"(t={bg.times[g]:.6g}, v={vv})",
                    float(lam_bar[g, vv]))
            out["barrier"] = -float(np.log(margins).mean())
        if kind == "ls":
            sq = float(np.einsum("g,gv->", bg.quad_weights, lam_bar ** 2))
            out["integral"] = sq

    out["per_seq"] = out["integral"] + out["data"]
    if not want_grad:
        return out

    # ---- reverse pass: raw (unaveraged) gradient contributions ----
    dlam_ev = (-1.0 / lam_ev) if kind == "nll" else np.full(n, -2.0)
    dlam_bar = np.zeros((bg.times.size, V)) if bg is not None else None
    if bg is not None:
        if margins is not None:
            dlam_bar += (-1.0 / (bg.w * bg.times.size * V)) / margins
        if kind == "ls":
            dlam_bar += 2.0 * bg.quad_weights[:, None] * lam_bar

    gmu = np.bincount(v, weights=dlam_ev, minlength=V) if n else np.zeros(V)
    if dlam_bar is not None:
        gmu = gmu + dlam_bar.sum(axis=0)
    if kind == "nll":
        gmu = gmu + model.T

    dalpha = np.einsum("p,rp,lp->rl", dlam_ev[cache.ev_i], be, ae,
                       optimize=True) if cache.ev_i.size else np.zeros((R, L))
    el = np.einsum("rl,rp->lp", ctx.alpha, be)                 # (L, Pe)
    upsi = np.zeros((L, n))
    uP = np.zeros((L, G))
    wev = dlam_ev[cache.ev_i]
    coef_psi_ev = wev * phie * el                              # (L, Pe)
    coef_phi_ev = wev * psi[:, cache.ev_j] * el
    for l in range(L):
        if cache.ev_i.size:
            upsi[l] += np.bincount(cache.ev_j, weights=coef_psi_ev[l], minlength=n)
            uP[l] += np.bincount(cache.ev_bin, weights=coef_phi_ev[l] * (1 - cache.ev_frac), minlength=G)
            uP[l] += np.bincount(cache.ev_bin + 1, weights=coef_phi_ev[l] * cache.ev_frac, minlength=G)

    dB = np.zeros((R, V, V))
    if cache.ev_i.size:
        vals_ev = wev * ce                                     # (R, Pe)
        for r in range(R):
            dB[r] += np.bincount(cache.ev_bidx, weights=vals_ev[r],
                                 minlength=V * V).reshape(V, V)

    if dlam_bar is not None:
        Z = np.einsum("gv,rpv->rgp", dlam_bar, ctx.mats, optimize=True)
        dalpha += np.einsum("lgp,rgp->rl", S, Z, optimize=True)
        dB += np.einsum("rgp,gv->rpv", Q, dlam_bar, optimize=True)
        if cache.bar_j.size:
            Zg = Z[:, cache.bar_g, v[cache.bar_j]]             # (R, Pb)
            Eb = np.einsum("rl,rp->lp", ctx.alpha, Zg)
            coef_phi_bar = psi[:, cache.bar_j] * Eb
            for l in range(L):
                upsi[l] += np.bincount(cache.bar_j, weights=phib[l] * Eb[l], minlength=n)
                uP[l] += np.bincount(cache.bar_bin, weights=coef_phi_bar[l] * (1 - cache.bar_frac), minlength=G)
                uP[l] += np.bincount(cache.bar_bin + 1, weights=coef_phi_bar[l] * cache.bar_frac, minlength=G)

    if kind == "nll" and n:
        aw = np.einsum("rl,ri->li", ctx.alpha, wrv)            # (L, n)
        dalpha += np.einsum("ri,li,li->rl", wrv, psi, Fi, optimize=True)
        upsi += aw * Fi
        dFi = aw * psi
        uF = np.zeros((L, G))
        for l in range(L):
            uF[l] += np.bincount(cache.f_bin, weights=dFi[l] * (1 - cache.f_frac), minlength=G)
            uF[l] += np.bincount(cache.f_bin + 1, weights=dFi[l] * cache.f_frac, minlength=G)
        uP += cum_adjoint(uF, model.grid.delta)
        crn = np.einsum("rl,li,li->ri", ctx.alpha, psi, Fi, optimize=True)
        dB += (crn @ cache.onehot)[:, :, None]

    uP[:, ~model.grid.active] = 0.0
    out.update(dalpha=dalpha, gmu=gmu, dB=dB, uP=uP, upsi=upsi, psi_t=t)
    return out


def _run_batch(model, batch, kind, bg, caches, want_grad, workers=1):
    ctx = _StepContext(model, bg)
    if caches is None:
        caches = [SequenceCache(s, model, bg) for s in batch]

    def work(args):
        i, cache = args
        return _seq_terms(ctx, cache, kind, want_grad, i)

    jobs = list(enumerate(caches))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    nb = len(batch)
    data = sum(r["data"] for r in results) / nb
    integral = sum(r["integral"] for r in results) / nb
    barrier = sum(r.get("barrier", 0.0) for r in results) / nb if bg is not None else 0.0
    total = data + integral + (barrier / bg.w if bg is not None else 0.0)
    breakdown = LossBreakdown(
        data_term=data, integral_term=integral, barrier_term=barrier,
        total=total, per_sequence=[r["per_seq"] for r in results],
        min_grid_intensity=(min(r["min_bar"] for r in results)
                            if bg is not None else np.nan))
    if not want_grad:
        return breakdown, None

    blocks = model.param_blocks()
    grad = np.zeros(model.n_params)
    grad[blocks["alpha"]] = sum(r["dalpha"] for r in results).ravel()
    gmu = sum(r["gmu"] for r in results)
    smu = sigmoid(model.mu_raw)
    grad[blocks["mu"]] = (gmu.sum() * smu) if model.tied_mu else gmu * smu
    all_t = np.concatenate([r["psi_t"] for r in results])
    all_u = np.concatenate([r["upsi"] for r in results], axis=1)
    for l, net in enumerate(model.psi_nets):
        grad[blocks[f"psi_{l}"]] = net.backward(all_t, all_u[l])
    uP = sum(r["uP"] for r in results)
    for l, net in enumerate(model.phi_nets):
        grad[blocks[f"phi_{l}"]] = net.backward(model.grid.times, uP[l])
    if model.bank.n_free:
        dB = sum(r["dB"] for r in results)
        grad[blocks["bank"]] = model.bank.grad_free(dB)
    grad /= nb
    return breakdown, grad


def nll(model, batch) -> LossBreakdown:
    """Mean negative log-likelihood of a batch (no barrier term)."""
    breakdown, _ = _run_batch(model, batch, "nll", None, None, False)
    return breakdown


def ls(model, batch, bg=None) -> LossBreakdown:
    """Mean least-squares loss of a batch (no barrier term).

    The square integral needs a dense grid; if ``bg`` is omitted a default
    barrier-density grid (2G points, zero weighting of the penalty) is used
    purely for quadrature.
    """
    if bg is None:
        bg = make_barrier_grid(model.T, 2 * model.G, model.num_nodes,
                               b=-np.inf, w=1.0)
    breakdown, _ = _run_batch(model, batch, "ls", bg, None, False)
    breakdown.barrier_term = 0.0
    breakdown.total = breakdown.data_term + breakdown.integral_term
    return breakdown


def log_barrier(model, batch, bg: BarrierGrid) -> float:
    """Averaged negative log margins of the intensity over the barrier grid."""
    breakdown, _ = _run_batch(model, batch, "barrier_only", bg, None, False)
    return breakdown.barrier_term


def min_grid_intensity(model, batch, bg: BarrierGrid, caches=None) -> float:
    """Smallest intensity over the barrier grid across the batch."""
    saved = bg.b
    bg.b = -np.inf
    try:
        breakdown, _ = _run_batch(model, batch, "barrier_only", bg, caches, False)
    finally:
        bg.b = saved
    return breakdown.min_grid_intensity


def total_loss_and_grad(model, batch, loss_kind, bg: BarrierGrid, caches=None,
                        workers=1):
    """Full objective  loss + barrier/w  and its exact parameter gradient."""
    if loss_kind not in ("nll", "ls"):
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    return _run_batch(model, batch, loss_kind, bg, caches, True, workers=workers)
