"""Versioned JSON checkpoints: everything needed to rebuild a model bit-exactly.

Floats are serialized through ``repr`` (the json module's default), which
round-trips IEEE doubles exactly, so a reloaded model reproduces every
intensity evaluation bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from .filters import FilterBank
from .graphs import build_graph
from .model import KernelModel
from .temporal import ScalarNet

SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def _net_to_dict(net: ScalarNet):
    return {
        "hidden": list(net.widths[1:-1]),
        "input_scale": net.input_scale,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d) -> ScalarNet:
    net = ScalarNet(hidden=tuple(d["hidden"]), input_scale=d["input_scale"])
    net.weights = [np.array(w, dtype=np.float64) for w in d["weights"]]
    net.biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
    return net


def _bank_to_dict(bank: FilterBank):
    d = {"mode": bank.mode, "num_filters": int(bank.num_filters)}
    if bank.mode == "chebyshev":
        return d
    d["orders"] = list(bank.orders) if bank.orders is not None else None
    d["support"] = bank.support
    d["mask_indices"] = [np.nonzero(m) for m in bank.masks]
    d["mask_indices"] = [[rows.tolist(), cols.tolist()]
                         for rows, cols in d["mask_indices"]]
    d["free_params"] = bank.free_params.tolist()
    return d


def _bank_from_dict(d, graph):
    from .filters import chebyshev_bank
    from .graphs import scaled_laplacian

    if d["mode"] == "chebyshev":
        return chebyshev_bank(scaled_laplacian(graph), d["num_filters"])
    n = graph.num_nodes
    masks = np.zeros((d["num_filters"], n, n), dtype=bool)
    for r, (rows, cols) in enumerate(d["mask_indices"]):
        masks[r, rows, cols] = True
    return FilterBank(d["mode"], n, masks,
                      np.array(d["free_params"], dtype=np.float64),
                      orders=d.get("orders"), support=d.get("support"))


def save_checkpoint(model: KernelModel, path, config_echo=None, log_digest=None):
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": config_echo or {},
        "training_log_digest": log_digest,
        "graph": {"num_nodes": model.graph.num_nodes,
                  "edges": [list(e) for e in model.graph.edges]},
        "kernel": {
            "alpha": model.alpha.tolist(),
            "mu_raw": model.mu_raw.tolist(),
            "tied_mu": model.tied_mu,
            "psi_nets": [_net_to_dict(n) for n in model.psi_nets],
            "phi_nets": [_net_to_dict(n) for n in model.phi_nets],
            "grid": {"T": model.T, "G": model.G, "tau_max": model.tau_max},
        },
        "bank": _bank_to_dict(model.bank),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Returns (model, payload dict)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint schema {payload.get('schema_version')!r}")
    graph = build_graph(payload["graph"]["num_nodes"],
                        [tuple(e) for e in payload["graph"]["edges"]])
    bank = _bank_from_dict(payload["bank"], graph)
    k = payload["kernel"]
    model = KernelModel(
        graph, bank,
        np.array(k["alpha"], dtype=np.float64),
        np.array(k["mu_raw"], dtype=np.float64),
        k["tied_mu"],
        [_net_from_dict(d) for d in k["psi_nets"]],
        [_net_from_dict(d) for d in k["phi_nets"]],
        k["grid"]["T"], k["grid"]["G"], k["grid"]["tau_max"])
    return model, payload
