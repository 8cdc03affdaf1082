"""Knot-point trajectories, cost weights, and decision-variable bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .states import INPUT_DIM, STATE_DIM

H_MIN = 0.001
H_MAX = 0.2


@dataclass
class KnotTrajectory:
    """A time-stamped sequence of state/input knots with uniform step.

    The unit of planning, sharing, and tracking: knot ``k`` sits at time
    ``t0 + k * h``.
    """

    states: np.ndarray          # (N+1, 16)
    inputs: np.ndarray          # (N+1, 4)
    h: float
    t0: float = 0.0
    agent_id: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.h = float(self.h)
        self.t0 = float(self.t0)
        if self.states.ndim != 2 or self.states.shape[1] != STATE_DIM:
            raise ValueError(f"states must be (N+1, {STATE_DIM}), got {self.states.shape}")
        if self.inputs.shape != (self.states.shape[0], INPUT_DIM):
            raise ValueError("states and inputs must have equal knot counts")
        if self.states.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 knots")
        if not H_MIN <= self.h <= H_MAX:
            raise ValueError(f"step {self.h} outside [{H_MIN}, {H_MAX}] s")

    @property
    def n_knots(self) -> int:
        return self.states.shape[0]

    @property
    def duration(self) -> float:
        return (self.n_knots - 1) * self.h

    @property
    def end_time(self) -> float:
        return self.t0 + self.duration

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_knots)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, 0:3]

    def knot_index(self, t: float) -> int:
        """Zero-order-hold knot index for time t, clamped to [0, N-1]."""
        k = int(np.floor((t - self.t0) / self.h))
        return min(max(k, 0), self.n_knots - 2)

    def state_at(self, t: float) -> np.ndarray:
        """Linear interpolation between knots, clamped at the ends."""
        s = (t - self.t0) / self.h
        s = min(max(s, 0.0), float(self.n_knots - 1))
        k = min(int(np.floor(s)), self.n_knots - 2)
        w = s - k
        return (1.0 - w) * self.states[k] + w * self.states[k + 1]

    def position_at(self, t) -> np.ndarray:
        """Interpolated position; accepts scalar or array times."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        s = np.clip((tt - self.t0) / self.h, 0.0, self.n_knots - 1.0)
        k = np.minimum(s.astype(int), self.n_knots - 2)
        w = (s - k)[:, None]
        out = (1.0 - w) * self.states[k, 0:3] + w * self.states[k + 1, 0:3]
        return out[0] if np.isscalar(t) else out


@dataclass
class CostWeights:
    """Quadratic cost weights: Q, Q_f PSD on states; R PD on inputs."""

    Q: np.ndarray
    R: np.ndarray
    Q_f: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float).reshape(STATE_DIM, STATE_DIM)
        self.R = np.asarray(self.R, dtype=float).reshape(INPUT_DIM, INPUT_DIM)
        self.Q_f = np.asarray(self.Q_f, dtype=float).reshape(STATE_DIM, STATE_DIM)
        for name, M in (("Q", self.Q), ("R", self.R), ("Q_f", self.Q_f)):
            if not np.allclose(M, M.T, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
        if np.any(np.linalg.eigvalsh(self.Q) < -1e-10):
            raise ValueError("Q must be positive semidefinite")
        if np.any(np.linalg.eigvalsh(self.Q_f) < -1e-10):
            raise ValueError("Q_f must be positive semidefinite")
        if np.any(np.linalg.eigvalsh(self.R) <= 0.0):
            raise ValueError("R must be positive definite")

    @classmethod
    def from_diagonals(cls, q, r, q_f) -> "CostWeights":
        return cls(Q=np.diag(q), R=np.diag(r), Q_f=np.diag(q_f))


def default_cost_weights() -> CostWeights:
    """Planner weights: position- and velocity-dominant, light on inputs."""
    q = np.concatenate([
        [4.0, 4.0, 6.0],        # position
        [0.5, 0.5, 1.5],        # attitude
        [0.02, 0.02, 0.02],     # deflections
        [0.01],                 # thrust state
        [0.3, 0.3, 0.3],        # body velocity
        [0.01, 0.01, 0.01],     # body rates
    ])
    r = np.array([0.02, 0.02, 0.02, 0.1])
    q_f = np.concatenate([
        [12.0, 12.0, 18.0],
        [1.0, 1.0, 3.0],
        [0.02, 0.02, 0.02],
        [0.01],
        [0.8, 0.8, 0.8],
        [0.02, 0.02, 0.02],
    ])
    return CostWeights.from_diagonals(q, r, q_f)


@dataclass
class Bounds:
    """Box bounds on states, inputs, the step, and the end-state boxes.

    ``delta_i`` / ``delta_f`` are half-widths of the boxes around the
    initial estimate and the reference final state.
    """

    x_min: np.ndarray
    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    h_min: float = H_MIN
    h_max: float = H_MAX
    delta_i: np.ndarray = field(default_factory=lambda: np.full(STATE_DIM, 1e-2))
    delta_f: np.ndarray = field(default_factory=lambda: np.full(STATE_DIM, 10.0))

    def __post_init__(self):
        self.x_min = np.asarray(self.x_min, dtype=float).reshape(STATE_DIM)
        self.x_max = np.asarray(self.x_max, dtype=float).reshape(STATE_DIM)
        self.u_min = np.asarray(self.u_min, dtype=float).reshape(INPUT_DIM)
        self.u_max = np.asarray(self.u_max, dtype=float).reshape(INPUT_DIM)
        self.delta_i = np.asarray(self.delta_i, dtype=float).reshape(STATE_DIM)
        self.delta_f = np.asarray(self.delta_f, dtype=float).reshape(STATE_DIM)
        if np.any(self.x_min > self.x_max) or np.any(self.u_min > self.u_max):
            raise ValueError("lower bounds exceed upper bounds")
        if not (H_MIN <= self.h_min <= self.h_max <= H_MAX):
            raise ValueError(f"step bounds must satisfy {H_MIN} <= h_min <= h_max <= {H_MAX}")
        if np.any(self.delta_i < 0.0) or np.any(self.delta_f < 0.0):
            raise ValueError("end-state box half-widths must be nonnegative")


def default_bounds() -> Bounds:
    """Flight-envelope box for the default airframe.

    Pitch is kept well inside the Euler singularity guard; yaw is wide
    open because references use unwrapped heading. Forward speed stays
    positive so the angle-of-attack map is smooth along iterates.
    """
    x_min = np.concatenate([
        [-60.0, -60.0, 0.25],
        [-1.2, -1.25, -1e3],
        [-0.85, -0.85, -0.85],
        [0.0],
        [0.3, -6.0, -6.0],
        [-14.0, -14.0, -14.0],
    ])
    x_max = np.concatenate([
        [60.0, 60.0, 8.0],
        [1.2, 1.25, 1e3],
        [0.85, 0.85, 0.85],
        [3.0],
        [10.0, 6.0, 6.0],
        [14.0, 14.0, 14.0],
    ])
    u_min = np.array([-12.0, -12.0, -12.0, 0.0])
    u_max = np.array([12.0, 12.0, 12.0, 1.0])
    delta_i = np.concatenate([
        [0.01, 0.01, 0.01],     # position
        [0.02, 0.02, 0.02],     # attitude
        [0.05, 0.05, 0.05],     # deflections
        [0.1],                  # thrust
        [0.3, 0.3, 0.3],        # velocity (loose: x0 is a prediction)
        [1.0, 1.0, 1.0],        # rates (loose)
    ])
    delta_f = np.concatenate([
        [3.0, 3.0, 1.5],
        [0.8, 0.8, 1.5],
        [1.4, 1.4, 1.4],
        [3.0],
        [4.0, 4.0, 4.0],
        [20.0, 20.0, 20.0],
    ])
    return Bounds(x_min=x_min, x_max=x_max, u_min=u_min, u_max=u_max,
                  h_min=H_MIN, h_max=H_MAX, delta_i=delta_i, delta_f=delta_f)
