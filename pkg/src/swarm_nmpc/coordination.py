"""Trajectory sharing between agents.

Agents publish each committed plan; every other agent's trajectory
obstacle map stores the latest message per teammate (never its own).
Snapshots are immutable copies used as the obstacle set of one replan,
so a plan round sees a consistent picture regardless of later publishes.

The in-process bus is the primary transport. For running agents as
separate processes over a stream transport, messages have a
line-delimited text codec:

    agent_id,t_commit,h,N,x0,y0,z0,x1,y1,z1,...

with exactly ``3 (N+1)`` position floats. Malformed lines raise
:class:`CodecError` (callers log and reject them; they are never
silently dropped).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trajectory import H_MAX, H_MIN, KnotTrajectory


class CodecError(ValueError):
    """A wire-format line failed to parse or validate."""


@dataclass
class TrajectoryMessage:
    """One committed plan, reduced to what teammates need for avoidance."""

    agent_id: int
    t_commit: float
    h: float
    positions: np.ndarray  # (N+1, 3)

    def __post_init__(self):
        self.agent_id = int(self.agent_id)
        self.t_commit = float(self.t_commit)
        self.h = float(self.h)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("trajectory message contains non-finite knots")
        if not H_MIN <= self.h <= H_MAX:
            raise ValueError(f"knot step {self.h} outside [{H_MIN}, {H_MAX}] s")

    @classmethod
    def from_trajectory(cls, traj: KnotTrajectory, t_commit: float) -> "TrajectoryMessage":
        return cls(agent_id=traj.agent_id, t_commit=t_commit, h=traj.h,
                   positions=traj.positions.copy())


@dataclass
class TrajectoryObstacleMap:
    """Latest teammate plans, keyed by agent id; excludes the ego."""

    ego_id: int
    entries: dict[int, TrajectoryMessage] = field(default_factory=dict)

    def store(self, msg: TrajectoryMessage) -> None:
        if msg.agent_id == self.ego_id:
            raise ValueError("an agent's own trajectory does not belong in its obstacle map")
        cur = self.entries.get(msg.agent_id)
        if cur is None or msg.t_commit >= cur.t_commit:
            self.entries[msg.agent_id] = msg

    def snapshot(self) -> "TrajectoryObstacleMap":
        """Immutable-by-copy view, consistent at one instant."""
        return TrajectoryObstacleMap(ego_id=self.ego_id, entries=dict(self.entries))

    def teammate_knots(self, min_knots: int = 0) -> list[tuple[int, np.ndarray]]:
        """(agent_id, positions) pairs sorted by id; shorter plans are
        extended by holding their last knot up to ``min_knots``."""
        out = []
        for agent_id in sorted(self.entries):
            pos = self.entries[agent_id].positions
            if min_knots and pos.shape[0] < min_knots:
                pad = np.tile(pos[-1], (min_knots - pos.shape[0], 1))
                pos = np.concatenate([pos, pad], axis=0)
            out.append((agent_id, pos))
        return out

    def __contains__(self, agent_id: int) -> bool:
        return agent_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class TrajectoryBus:
    """In-process publish/subscribe of committed plans.

    Publishes are serialized by the caller (the lock-step harness runs
    all bus activity at round boundaries); each agent's map receives
    every message except its own, latest commit winning per sender.
    """

    def __init__(self, agent_ids):
        self.maps = {i: TrajectoryObstacleMap(ego_id=i) for i in agent_ids}

    def publish(self, msg: TrajectoryMessage) -> None:
        if msg.agent_id not in self.maps:
            raise KeyError(f"unknown publishing agent {msg.agent_id}")
        for agent_id, m in self.maps.items():
            if agent_id != msg.agent_id:
                m.store(msg)

    def snapshot_map(self, agent_id: int) -> TrajectoryObstacleMap:
        return self.maps[agent_id].snapshot()


def encode_message(msg: TrajectoryMessage) -> str:
    """One message per line, fixed field order, decimal text."""
    n = msg.positions.shape[0] - 1
    fields = [str(msg.agent_id), repr(msg.t_commit), repr(msg.h), str(n)]
    fields.extend(repr(v) for v in msg.positions.ravel())
    return ",".join(fields)


def decode_message(line: str) -> TrajectoryMessage:
    """Parse one wire line; raises CodecError on any malformation."""
    parts = line.strip().split(",")
    if len(parts) < 4:
        raise CodecError("message needs at least agent_id, t_commit, h, N")
    try:
        agent_id = int(parts[0])
        t_commit = float(parts[1])
        h = float(parts[2])
        n = int(parts[3])
    except ValueError as exc:
        raise CodecError(f"malformed header fields: {exc}") from exc
    if n < 0:
        raise CodecError(f"negative knot count {n}")
    expect = 4 + 3 * (n + 1)
    if len(parts) != expect:
        raise CodecError(f"expected {expect} fields for N={n}, got {len(parts)}")
    try:
        flat = np.array([float(v) for v in parts[4:]])
    except ValueError as exc:
        raise CodecError(f"malformed position float: {exc}") from exc
    try:
        return TrajectoryMessage(agent_id=agent_id, t_commit=t_commit, h=h,
                                 positions=flat.reshape(-1, 3))
    except ValueError as exc:
        raise CodecError(str(exc)) from exc


def pairwise_separation(plans: dict[int, np.ndarray] | list[tuple[int, np.ndarray]]):
    """Minimum distance over all agent pairs and all knot index pairs.

    Returns ``(min_distance, (agent_i, knot_k, agent_j, knot_l))``.
    """
    if isinstance(plans, dict):
        items = sorted(plans.items())
    else:
        items = sorted(plans)
    if len(items) < 2:
        raise ValueError("pairwise separation needs at least two agents")
    best = (np.inf, None)
    for a in range(len(items)):
        id_a, pos_a = items[a][0], np.asarray(items[a][1], dtype=float).reshape(-1, 3)
        for bidx in range(a + 1, len(items)):
            id_b, pos_b = items[bidx][0], np.asarray(items[bidx][1], dtype=float).reshape(-1, 3)
            diff = pos_a[:, None, :] - pos_b[None, :, :]
            dist = np.sqrt(np.sum(diff * diff, axis=-1))
            k, l = np.unravel_index(np.argmin(dist), dist.shape)
            if dist[k, l] < best[0]:
                best = (float(dist[k, l]), (id_a, int(k), id_b, int(l)))
    return best
