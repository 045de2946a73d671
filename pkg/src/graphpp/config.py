"""Experiment configuration: flat key-value text with sections (INI style).

Sections and keys (unknown keys are rejected so typos fail loudly):

    [graph]    kind = gt16_twohop         # or: edge_list = path/to/file
    [model]    L, R, filter_mode, orders, gat_support, horizon, grid_size,
               barrier_grid_size, tau_max, mu_mode, hidden, seed
    [train]    epochs, batch_size, learning_rate, w0, barrier_growth, epsilon,
               loss, seed, split, workers
    [simulate] num_sequences, seed, clamp_negative

``horizon`` is required when the graph comes from an edge list; for a built-in
ground truth it defaults to that process's own horizon.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .graphs import read_edge_list
from .simulate import GT_KINDS, ground_truth
from .training import TrainConfig
from .simulate import SimConfig


class ConfigError(ValueError):
    pass


_KNOWN = {
    "graph": {"kind", "edge_list"},
    "model": {"L", "R", "filter_mode", "orders", "gat_support", "horizon",
              "grid_size", "barrier_grid_size", "tau_max", "mu_mode",
              "hidden", "seed"},
    "train": {"epochs", "batch_size", "learning_rate", "w0", "barrier_growth",
              "epsilon", "loss", "seed", "split", "workers"},
    "simulate": {"num_sequences", "seed", "clamp_negative", "horizon"},
}


@dataclass
class ExperimentConfig:
    kind: str | None = None
    edge_list: str | None = None
    L: int = 1
    R: int = 3
    filter_mode: str = "l3net"
    orders: list = field(default_factory=list)   # defaults to range(R)
    gat_support: str = "one_hop"
    horizon: float = 0.0                         # 0 -> ground truth default
    grid_size: int = 0                           # 0 -> 10 points per unit time
    barrier_grid_size: int = 0                   # 0 -> 2 * grid_size
    tau_max: float = 0.0                         # 0 -> horizon
    mu_mode: str = "tied"
    hidden: tuple = (32, 32)
    model_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    split: float = 0.8
    sim: SimConfig = field(default_factory=lambda: SimConfig(num_sequences=1000))

    def validate(self):
        if (self.kind is None) == (self.edge_list is None):
            raise ConfigError("graph section needs exactly one of kind / edge_list")
        if self.kind is not None and self.kind not in GT_KINDS:
            raise ConfigError(f"unknown ground-truth kind {self.kind!r}")
        if self.L < 1 or self.R < 1:
            raise ConfigError("kernel ranks L and R must be >= 1")
        if not (0.0 < self.split < 1.0):
            raise ConfigError(f"split ratio must be in (0, 1), got {self.split}")
        if self.filter_mode not in ("chebyshev", "l3net", "gat"):
            raise ConfigError(f"unknown filter_mode {self.filter_mode!r}")
        if self.mu_mode not in ("tied", "per_node"):
            raise ConfigError(f"unknown mu_mode {self.mu_mode!r}")
        if self.edge_list is not None and self.horizon <= 0:
            raise ConfigError("horizon is required with an edge-list graph")
        return self

    # ---- resolution helpers ----

    def resolved_horizon(self):
        if self.horizon > 0:
            return float(self.horizon)
        return ground_truth(self.kind).T

    def resolved_grid(self):
        T = self.resolved_horizon()
        G = self.grid_size if self.grid_size else max(100, int(round(10 * T)))
        g_bar = self.barrier_grid_size if self.barrier_grid_size else 2 * G
        tau = self.tau_max if self.tau_max else T
        return G, g_bar, min(tau, T)

    def load_graph(self):
        if self.kind is not None:
            return ground_truth(self.kind).graph
        return read_edge_list(self.edge_list)

    def to_dict(self):
        out = {
            "graph": {"kind": self.kind, "edge_list": self.edge_list},
            "model": {"L": self.L, "R": self.R, "filter_mode": self.filter_mode,
                      "orders": list(self.orders), "gat_support": self.gat_support,
                      "horizon": self.resolved_horizon(),
                      "grid_size": self.resolved_grid()[0],
                      "barrier_grid_size": self.resolved_grid()[1],
                      "tau_max": self.resolved_grid()[2],
                      "mu_mode": self.mu_mode, "hidden": list(self.hidden),
                      "seed": self.model_seed},
            "train": {"epochs": self.train.epochs, "batch_size": self.train.batch_size,
                      "learning_rate": self.train.learning_rate, "w0": self.train.w0,
                      "barrier_growth": self.train.barrier_growth,
                      "epsilon": self.train.epsilon, "loss": self.train.loss_kind,
                      "seed": self.train.seed, "split": self.split,
                      "workers": self.train.workers},
            "simulate": {"num_sequences": self.sim.num_sequences, "seed": self.sim.seed,
                         "clamp_negative": self.sim.clamp_negative},
        }
        return out


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _int_list(raw):
    return [int(x) for x in raw.replace(",", " ").split()]


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case (L vs R matter here)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _KNOWN[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    cfg = ExperimentConfig()
    cfg.kind = _get(parser, "graph", "kind", str, None)
    cfg.edge_list = _get(parser, "graph", "edge_list", str, None)
    cfg.L = _get(parser, "model", "L", int, cfg.L)
    cfg.R = _get(parser, "model", "R", int, cfg.R)
    cfg.filter_mode = _get(parser, "model", "filter_mode", str, cfg.filter_mode)
    cfg.orders = _get(parser, "model", "orders", _int_list, [])
    cfg.gat_support = _get(parser, "model", "gat_support", str, cfg.gat_support)
    cfg.horizon = _get(parser, "model", "horizon", float, 0.0)
    cfg.grid_size = _get(parser, "model", "grid_size", int, 0)
    cfg.barrier_grid_size = _get(parser, "model", "barrier_grid_size", int, 0)
    cfg.tau_max = _get(parser, "model", "tau_max", float, 0.0)
    cfg.mu_mode = _get(parser, "model", "mu_mode", str, cfg.mu_mode)
    cfg.hidden = tuple(_get(parser, "model", "hidden", _int_list, list(cfg.hidden)))
    cfg.model_seed = _get(parser, "model", "seed", int, 0)

    tc = TrainConfig(
        epochs=_get(parser, "train", "epochs", int, 100),
        batch_size=_get(parser, "train", "batch_size", int, 32),
        learning_rate=_get(parser, "train", "learning_rate", float, 1e-2),
        w0=_get(parser, "train", "w0", float, 1.0),
        barrier_growth=_get(parser, "train", "barrier_growth", float, 1.5),
        epsilon=_get(parser, "train", "epsilon", float, 1e-3),
        loss_kind=_get(parser, "train", "loss", str, "nll"),
        seed=_get(parser, "train", "seed", int, 0),
        workers=_get(parser, "train", "workers", int, 1),
    )
    cfg.train = tc
    cfg.split = _get(parser, "train", "split", float, 0.8)
    cfg.sim = SimConfig(
        num_sequences=_get(parser, "simulate", "num_sequences", int, 1000),
        horizon=_get(parser, "simulate", "horizon", float, 0.0),
        seed=_get(parser, "simulate", "seed", int, 0),
        clamp_negative=_get(parser, "simulate", "clamp_negative", bool, True),
    )
    return cfg.validate()


def build_model_from_config(cfg: ExperimentConfig, graph, mu_init):
    from .model import build_model

    T = cfg.resolved_horizon()
    G, _, tau = cfg.resolved_grid()
    return build_model(
        graph, L=cfg.L, R=cfg.R, filter_mode=cfg.filter_mode,
        orders=(cfg.orders or None), gat_support=cfg.gat_support, T=T, G=G,
        tau_max=tau, mu_mode=cfg.mu_mode, mu_init=mu_init,
        hidden=cfg.hidden, seed=cfg.model_seed)
