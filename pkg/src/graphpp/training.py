"""Epoch training loop: Adam steps on the barrier-penalized objective.

Per epoch the sequences are reshuffled and processed in mini-batches; after
each epoch the barrier weight grows by a constant factor (so the penalty's
1/w prefactor decays geometrically to nothing) and the barrier bound is reset
to the epoch's minimum grid intensity minus a small slack, capped at zero.
If a step lands outside the feasible region the step is undone and retried
with a halved rate, a bounded number of times.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .objective import (InfeasibleIntensityError, SequenceCache,
                        make_barrier_grid, min_grid_intensity, nll, ls,
                        total_loss_and_grad)


class TrainingAbort(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-2
    w0: float = 1.0
    barrier_growth: float = 1.5       # the a > 1 multiplier on w per epoch
    epsilon: float = 1e-3             # slack in the bound update
    loss_kind: str = "nll"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    g_bar: int = 0                    # 0 -> twice the interpolation grid
    max_backtracks: int = 10
    workers: int = 1

    def __post_init__(self):
        if self.barrier_growth <= 1.0:
            raise ValueError("barrier growth factor must exceed 1")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("need positive learning rate and batch size >= 1")
        if self.loss_kind not in ("nll", "ls"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


class Adam:
    """First-order adaptive-moment updates on a flat parameter vector."""

    def __init__(self, n, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, params, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - lr * mhat / (np.sqrt(vhat) + self.eps)

    def snapshot(self):
        return (self.m.copy(), self.v.copy(), self.t)

    def restore(self, snap):
        self.m, self.v, self.t = snap[0].copy(), snap[1].copy(), snap[2]


def _validation_loss(model, val_seqs, loss_kind):
    if not val_seqs:
        return np.nan
    try:
        if loss_kind == "nll":
            return nll(model, val_seqs).total
        return ls(model, val_seqs).total
    except InfeasibleIntensityError:
        return np.inf


def train(model, train_seqs, val_seqs, cfg: TrainConfig):
    """Fit the model in place; returns (best-validation model, step log).

    The returned model is the best validation snapshot seen, which includes
    the initialization, so it is never worse than the starting point on the
    validation split.
    """
    rng = np.random.default_rng(cfg.seed)
    g_bar = cfg.g_bar if cfg.g_bar else 2 * model.G
    bg = make_barrier_grid(model.T, g_bar, model.num_nodes, b=0.0, w=cfg.w0)
    caches = [SequenceCache(s, model, bg) for s in train_seqs]

    # feasible starting bound: a pre-pass minimum minus the slack, capped at 0
    lam_min0 = min_grid_intensity(model, train_seqs, bg, caches=caches)
    bg.b = min(0.0, lam_min0 - cfg.epsilon)

    best_val = _validation_loss(model, val_seqs, cfg.loss_kind)
    best_params = model.get_params()
    log = []

    adam = Adam(model.n_params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    n = len(train_seqs)
    last_step = None  # (params_before, adam_snap, grad) of the accepted step

    for epoch in range(cfg.epochs):
        bg.w = cfg.w0 * cfg.barrier_growth ** epoch
        order = rng.permutation(n)
        b_temp = 0.0
        step = 0
        for start in range(0, n, cfg.batch_size):
            take = order[start:start + cfg.batch_size]
            batch = [train_seqs[i] for i in take]
            bcaches = [caches[i] for i in take]

            breakdown = grad = None
            relaxed = False
            for attempt in range(cfg.max_backtracks + 2):
                try:
                    breakdown, grad = total_loss_and_grad(
                        model, batch, cfg.loss_kind, bg, caches=bcaches,
                        workers=cfg.workers)
                    break
                except InfeasibleIntensityError as exc:
                    can_backtrack = (last_step is not None
                                     and attempt < cfg.max_backtracks)
                    if can_backtrack:
                        # undo the previous update, retake it at half the rate
                        params_before, snap, prev_grad = last_step
                        model.set_params(params_before)
                        adam.restore(snap)
                        retry_lr = cfg.learning_rate / 2.0 ** (attempt + 1)
                        model.set_params(adam.step(params_before, prev_grad,
                                                   retry_lr))
                        continue
                    if exc.where == "barrier" and not relaxed:
                        # not step-induced: the bound carried over from the
                        # last epoch is above the current iterate's minimum;
                        # re-anchor it to the freshly observed minimum
                        lam_min = min_grid_intensity(model, batch, bg,
                                                     caches=bcaches)
                        if lam_min <= bg.b:
                            bg.b = lam_min - cfg.epsilon
                            relaxed = True
                            continue
                    raise TrainingAbort(
                        f"infeasible at epoch {epoch}: {exc}") from exc

            params_before = model.get_params()
            snap = adam.snapshot()
            model.set_params(adam.step(params_before, grad, cfg.learning_rate))
            last_step = (params_before, snap, grad)

            b_temp = min(b_temp, breakdown.min_grid_intensity - cfg.epsilon)
            log.append({
                "epoch": epoch, "step": step,
                "data_term": breakdown.data_term,
                "integral_term": breakdown.integral_term,
                "barrier_term": breakdown.barrier_term,
                "total": breakdown.total,
                "w": bg.w, "b": bg.b,
                "min_grid_intensity": breakdown.min_grid_intensity,
                "grad_norm": float(np.linalg.norm(grad)),
            })
            step += 1

        bg.b = b_temp
        val = _validation_loss(model, val_seqs, cfg.loss_kind)
        if not np.isnan(val) and (np.isnan(best_val) or val < best_val):
            best_val = val
            best_params = model.get_params()

    if val_seqs:
        model.set_params(best_params)
    return model, log


def gradient_check(model, batch, loss_kind, w=10.0, h=1e-5):
    """Central finite differences vs the analytic gradient, per block.

    Returns {block name: max |analytic - fd| relative to the block's largest
    fd magnitude}.  Uses the full barrier-penalized objective at a feasible
    bound, so every term's gradient is exercised.
    """
    bg = make_barrier_grid(model.T, 2 * model.G, model.num_nodes, b=0.0, w=w)
    lam_min = min_grid_intensity(model, batch, bg)
    bg.b = min(0.0, lam_min - 0.1)

    _, grad = total_loss_and_grad(model, batch, loss_kind, bg)
    theta = model.get_params()
    fd = np.zeros_like(grad)
    for i in range(theta.size):
        hi = h * max(1.0, abs(theta[i]))
        for sign in (1.0, -1.0):
            probe = theta.copy()
            probe[i] += sign * hi
            model.set_params(probe)
            breakdown, _ = total_loss_and_grad(model, batch, loss_kind, bg)
            fd[i] += sign * breakdown.total / (2.0 * hi)
    model.set_params(theta)

    report = {}
    for name, sl in model.param_blocks().items():
        scale = max(np.abs(fd[sl]).max(), 1e-6)
        report[name] = float(np.abs(grad[sl] - fd[sl]).max() / scale)
    return report
