"""Event sequences on [0, T] x V and their CSV persistence.

File format: header ``seq_id,t,v``, times as decimal text with full round-trip
precision, rows sorted by (seq_id, t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EventDataError(ValueError):
    pass


@dataclass(frozen=True)
class EventSequence:
    """Time-ordered (t_i, v_i) pairs on [0, horizon]."""

    times: np.ndarray
    nodes: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        v = np.asarray(self.nodes, dtype=np.int64)
        if t.shape != v.shape:
            raise EventDataError("times and nodes must have equal length")
        if t.size and (np.any(t < 0) or np.any(t > self.horizon)):
            raise EventDataError("event times outside [0, horizon]")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise EventDataError("event times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "nodes", v)
        t.setflags(write=False)
        v.setflags(write=False)

    def __len__(self):
        return self.times.size


def save_events_csv(sequences, path):
    with open(path, "w") as fh:
        fh.write("seq_id,t,v\n")
        for sid, seq in enumerate(sequences):
            for t, v in zip(seq.times, seq.nodes):
                fh.write(f"{sid},{float(t)!r},{int(v)}\n")


def load_events_csv(path, horizon, num_nodes=None, duplicates="reject",
                    jitter_seed=0):
    """Load sequences from CSV; validates order, range, and duplicate times.

    ``duplicates='jitter'`` resolves tied timestamps inside a sequence with a
    uniform 1e-9 perturbation instead of rejecting the file.
    """
    if duplicates not in ("reject", "jitter"):
        raise EventDataError(f"unknown duplicates policy {duplicates!r}")
    per_seq = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "seq_id,t,v":
            raise EventDataError(f"{path}:1: expected header 'seq_id,t,v'")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise EventDataError(f"{path}:{lineno}: malformed row {raw!r}")
            try:
                sid, t, v = int(parts[0]), float(parts[1]), int(parts[2])
            except ValueError as exc:
                raise EventDataError(f"{path}:{lineno}: {exc}") from None
            if num_nodes is not None and not (0 <= v < num_nodes):
                raise EventDataError(
                    f"{path}:{lineno}: node {v} out of range [0, {num_nodes})")
            per_seq.setdefault(sid, []).append((t, v, lineno))
    rng = np.random.default_rng(jitter_seed)
    sequences = []
    for sid in sorted(per_seq):
        rows = per_seq[sid]
        times = np.array([r[0] for r in rows])
        nodes = np.array([r[1] for r in rows], dtype=np.int64)
        if np.any(np.diff(times) < 0):
            bad = int(np.nonzero(np.diff(times) < 0)[0][0])
            raise EventDataError(
                f"{path}:{rows[bad + 1][2]}: times not sorted within sequence {sid}")
        dup = np.nonzero(np.diff(times) == 0)[0]
        if dup.size:
            if duplicates == "reject":
                raise EventDataError(
                    f"{path}:{rows[int(dup[0]) + 1][2]}: duplicate timestamp in "
                    f"sequence {sid} (pass jitter to perturb)")
            times = times + rng.uniform(0.0, 1e-9, size=times.size)
            order = np.argsort(times, kind="stable")
            times, nodes = times[order], nodes[order]
        sequences.append(EventSequence(times, nodes, horizon))
    return sequences


def train_test_split(sequences, ratio, seed=0):
    """Deterministic seeded shuffle split; ratio is the training fraction."""
    if not (0.0 < ratio < 1.0):
        raise EventDataError(f"split ratio must be in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(sequences))
    n_train = int(round(ratio * len(sequences)))
    n_train = min(max(n_train, 1), len(sequences) - 1)
    train = [sequences[i] for i in order[:n_train]]
    test = [sequences[i] for i in order[n_train:]]
    return train, test
