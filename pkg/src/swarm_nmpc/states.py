"""Aircraft state and input vector layout.

The 16-component state vector is laid out as

    index  0:3   r        world-frame position [m]
    index  3:6   theta    Euler angles (phi, theta, psi) [rad], ZYX intrinsic
    index  6:9   delta    control-surface deflections (d_ar, d_e, d_r) [rad]
    index  9     delta_t  propeller thrust magnitude [N]
    index 10:13  v        velocity of the center of mass, body-frame
                          components [m/s]
    index 13:16  omega    body-frame angular velocity [rad/s]

The left aileron is kinematically linked to the right one
(``delta_al = -delta_ar``) and is not a state.

The 4-component input vector is

    index 0:3   u_cs  control-surface angular velocities (w_ar, w_e, w_r) [rad/s]
    index 3     u_t   normalized motor command, in [0, 1]

Core numeric routines operate on plain ndarrays with these layouts;
:class:`RigidState` and :class:`ControlInput` are structured views for
construction and inspection at API boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 16
INPUT_DIM = 4

# State vector slices.
IR = slice(0, 3)
ITHETA = slice(3, 6)
IDELTA = slice(6, 9)
IDELTA_T = 9
IV = slice(10, 13)
IOMEGA = slice(13, 16)

# Input vector slices.
IU_CS = slice(0, 3)
IU_T = 3

STATE_LABELS = (
    "x", "y", "z",
    "phi", "theta", "psi",
    "d_ar", "d_e", "d_r",
    "d_t",
    "vx", "vy", "vz",
    "wx", "wy", "wz",
)
INPUT_LABELS = ("w_ar", "w_e", "w_r", "u_t")


def _vec3(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {a.shape}")
    return a


@dataclass
class RigidState:
    """Structured view of one 16-component aircraft state."""

    r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta_t: float = 0.0
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.r = _vec3(self.r)
        self.theta = _vec3(self.theta)
        self.delta = _vec3(self.delta)
        self.delta_t = float(self.delta_t)
        self.v = _vec3(self.v)
        self.omega = _vec3(self.omega)

    def to_array(self) -> np.ndarray:
        x = np.empty(STATE_DIM)
        x[IR] = self.r
        x[ITHETA] = self.theta
        x[IDELTA] = self.delta
        x[IDELTA_T] = self.delta_t
        x[IV] = self.v
        x[IOMEGA] = self.omega
        return x

    @classmethod
    def from_array(cls, x) -> "RigidState":
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise ValueError(f"expected state vector of shape ({STATE_DIM},), got {x.shape}")
        return cls(
            r=x[IR].copy(),
            theta=x[ITHETA].copy(),
            delta=x[IDELTA].copy(),
            delta_t=float(x[IDELTA_T]),
            v=x[IV].copy(),
            omega=x[IOMEGA].copy(),
        )

    def __array__(self, dtype=None, copy=None):
        a = self.to_array()
        return a.astype(dtype) if dtype is not None else a


@dataclass
class ControlInput:
    """Structured view of one 4-component control input."""

    u_cs: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_t: float = 0.0

    def __post_init__(self):
        self.u_cs = _vec3(self.u_cs)
        self.u_t = float(self.u_t)

    def to_array(self) -> np.ndarray:
        u = np.empty(INPUT_DIM)
        u[IU_CS] = self.u_cs
        u[IU_T] = self.u_t
        return u

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        if u.shape != (INPUT_DIM,):
            raise ValueError(f"expected input vector of shape ({INPUT_DIM},), got {u.shape}")
        return cls(u_cs=u[IU_CS].copy(), u_t=float(u[IU_T]))

    def __array__(self, dtype=None, copy=None):
        a = self.to_array()
        return a.astype(dtype) if dtype is not None else a


def as_state_array(x) -> np.ndarray:
    """Coerce a RigidState or array-like to a (16,) float array."""
    a = np.asarray(x, dtype=float)
    if a.shape != (STATE_DIM,):
        raise ValueError(f"expected state vector of shape ({STATE_DIM},), got {a.shape}")
    return a


def as_input_array(u) -> np.ndarray:
    """Coerce a ControlInput or array-like to a (4,) float array."""
    a = np.asarray(u, dtype=float)
    if a.shape != (INPUT_DIM,):
        raise ValueError(f"expected input vector of shape ({INPUT_DIM},), got {a.shape}")
    return a


def wrap_angle(a):
    """Wrap angles to (-pi, pi] componentwise."""
    a = np.asarray(a, dtype=float)
    wrapped = -((-a + np.pi) % (2.0 * np.pi) - np.pi)
    return wrapped
