"""Banks of localized graph filters: the node-space factors of the kernel.

Three parametrizations:

* ``chebyshev`` -- fixed polynomials T_0..T_{R-1} of the scaled Laplacian,
  generated by the recurrence B_r = 2 L~ B_{r-1} - B_{r-2}; no free params.
* ``l3net``     -- one learnable filter per requested hop order, supported on
  the exact shortest-path shell of that order; free params are the masked
  entries themselves.
* ``gat``       -- learnable attention-style filters: per source row, a masked
  softmax of free logits, so entries are positive and each supported row sums
  to one.
"""

from __future__ import annotations

import numpy as np

from .graphs import NeighborhoodIndex, SpectralData


class FilterBankError(ValueError):
    pass


class FilterBank:
    def __init__(self, mode, num_nodes, masks, free_params, orders=None,
                 fixed=None, support=None):
        self.mode = mode
        self.num_nodes = num_nodes
        self.masks = masks                    # (R, V, V) bool
        self.orders = orders
        self.support = support                # gat: 'one_hop' | 'full'
        self.free_params = np.asarray(free_params, dtype=np.float64)
        self._fixed = fixed                   # (R, V, V) for chebyshev
        self._midx = np.nonzero(masks) if mode != "chebyshev" else None

    @property
    def num_filters(self):
        return self.masks.shape[0]

    @property
    def n_free(self):
        return self.free_params.size

    def matrices(self):
        """Concrete (R, V, V) filter stack for the current free parameters."""
        if self.mode == "chebyshev":
            return self._fixed
        mats = np.zeros_like(self.masks, dtype=np.float64)
        if self.mode == "l3net":
            mats[self._midx] = self.free_params
            return mats
        # gat: per-row masked softmax of the logits
        mats[self._midx] = self.free_params
        neg = np.where(self.masks, mats, -np.inf)
        rowmax = neg.max(axis=2, keepdims=True)
        has_support = np.isfinite(rowmax)
        rowmax = np.where(has_support, rowmax, 0.0)
        ex = np.exp(neg - rowmax, where=self.masks, out=np.zeros_like(mats))
        rowsum = ex.sum(axis=2, keepdims=True)
        rowsum = np.where(rowsum > 0, rowsum, 1.0)
        return ex / rowsum

    def grad_free(self, upstream):
        """Map loss sensitivities on the materialized filters to free params.

        ``upstream`` is (R, V, V).  For l3net the parametrization is the
        identity on the mask; for gat this applies the per-row softmax
        Jacobian.  Chebyshev banks have no free parameters.
        """
        if self.mode == "chebyshev":
            raise FilterBankError("chebyshev bank has no trainable parameters")
        upstream = np.asarray(upstream, dtype=np.float64)
        if self.mode == "l3net":
            return upstream[self._midx].copy()
        probs = self.matrices()
        inner = (upstream * probs).sum(axis=2, keepdims=True)
        jac = probs * (upstream - inner)
        return jac[self._midx].copy()

    def copy(self):
        return FilterBank(self.mode, self.num_nodes, self.masks,
                          self.free_params.copy(), orders=self.orders,
                          fixed=self._fixed, support=self.support)


def chebyshev_bank(spec: SpectralData, R) -> FilterBank:
    """Fixed bank [I, L~, 2 L~^2 - I, ...] up to R polynomials."""
    if R < 1:
        raise FilterBankError(f"need R >= 1, got {R}")
    lt = spec.scaled_laplacian
    n = lt.shape[0]
    mats = [np.eye(n)]
    if R >= 2:
        mats.append(lt.copy())
    for _ in range(R - 2):
        mats.append(2.0 * lt @ mats[-1] - mats[-2])
    fixed = np.stack(mats)
    masks = fixed != 0.0
    return FilterBank("chebyshev", n, masks, np.empty(0), fixed=fixed)


def l3net_bank(idx: NeighborhoodIndex, orders, rng=None, init_high=0.1) -> FilterBank:
    """Learnable masked filters, one per hop order in ``orders``.

    Entries start i.i.d. uniform on [0, init_high]: a small positive start
    keeps the initial intensity near the background and inside the barrier's
    feasible region.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    orders = list(orders)
    for o in orders:
        if o > idx.o_max:
            raise FilterBankError(
                f"order {o} exceeds precomputed o_max={idx.o_max}")
    masks = np.stack([idx.shell_mask(o) for o in orders])
    n_free = int(masks.sum())
    free = rng.uniform(0.0, init_high, size=n_free)
    return FilterBank("l3net", idx.num_nodes, masks, free, orders=orders)


def gat_bank(idx: NeighborhoodIndex, R, support="one_hop", rng=None) -> FilterBank:
    """R attention-style filters sharing one support mask.

    ``one_hop`` restricts each source row to its 1-hop shell; ``full`` allows
    attention between every pair of nodes.  Logits start at zero (uniform
    attention over the support).
    """
    if R < 1:
        raise FilterBankError(f"need R >= 1, got {R}")
    if support == "one_hop":
        base = idx.shell_mask(1)
    elif support == "full":
        base = np.ones((idx.num_nodes, idx.num_nodes), dtype=bool)
    else:
        raise FilterBankError(f"unknown gat support {support!r}")
    masks = np.broadcast_to(base, (R, *base.shape)).copy()
    free = np.zeros(int(masks.sum()))
    return FilterBank("gat", idx.num_nodes, masks, free, support=support)


def materialize(fb: FilterBank):
    """The concrete filter matrices as a list, one (V, V) array per filter."""
    return [m for m in fb.matrices()]


def filter_grad(fb: FilterBank, upstream) -> np.ndarray:
    """Gradient of the loss w.r.t. free parameters given per-filter upstreams."""
    if isinstance(upstream, (list, tuple)):
        upstream = np.stack(upstream)
    return fb.grad_free(upstream)
