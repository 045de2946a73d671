"""Independent reference computations used by tests.

Everything here avoids the library's grid path: intensities evaluate the
decay nets directly and integrals use adaptive quadrature, so agreement with
the grid scheme is evidence, not tautology.
"""

import numpy as np
from scipy.integrate import quad

from graphpp import intensity
from graphpp.model import intensity_vector


def brute_force_losses(m, seq):
    """Adaptive-quadrature values of both losses for one sequence."""
    lam_ev = np.array([
        intensity(m, float(ti), int(vi), (seq.times[:i], seq.nodes[:i]), exact=True)
        for i, (ti, vi) in enumerate(zip(seq.times, seq.nodes))])
    cuts = np.concatenate([[0.0], seq.times, [seq.horizon]])
    comp = comp_sq = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        for node in range(m.num_nodes):
            def lam(x, node=node):
                keep = seq.times < x
                return intensity_vector(m, x, seq.times[keep], seq.nodes[keep],
                                        exact=True)[node]
            comp += quad(lam, a, b, limit=300)[0]
            comp_sq += quad(lambda x: lam(x) ** 2, a, b, limit=300)[0]
    nll_val = comp - float(np.log(lam_ev).sum())
    ls_val = comp_sq - 2.0 * float(lam_ev.sum())
    return nll_val, ls_val


def rescaled_interevent_times(gt, sequences, grid_per_unit=4000):
    """Unit-rate waiting times via fine-quadrature compensators.

    For each sequence, the total intensity is evaluated on a dense uniform
    grid (in chunks), integrated with the trapezoid rule, and interpolated at
    the event times; sequences are processed independently and the rescaled
    gaps pooled.
    """
    taus = []
    for seq in sequences:
        G = int(grid_per_unit * gt.T) + 1
        grid = np.linspace(0.0, gt.T, G)
        total = np.zeros(G)
        chunk = 4000
        for lo in range(0, G, chunk):
            hi = min(lo + chunk, G)
            total[lo:hi] = gt.intensity_on_grid(seq, grid[lo:hi]).sum(axis=1)
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (total[1:] + total[:-1]) * (grid[1] - grid[0]))])
        lam_at_events = np.interp(seq.times, grid, cum)
        taus.append(np.diff(np.concatenate([[0.0], lam_at_events])))
    return np.concatenate(taus)
