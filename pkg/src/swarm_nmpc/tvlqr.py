"""Discrete time-varying LQR tracking along a planned trajectory.

The gain schedule comes from the standard discrete Riccati recursion run
backward along the nominal knots:

    S_N = Q_fc
    K_k = (R_c + B_k^T S_{k+1} B_k)^{-1} B_k^T S_{k+1} A_k
    S_k = Q_c + A_k^T S_{k+1} A_k - A_k^T S_{k+1} B_k K_k

with (A_k, B_k) the first-order-hold discretization of the dynamics
Jacobians at each knot. The feedback policy applied between replans is

    u(t, x) = u_k^d - K_k (x - x_k^d)

with zero-order hold on the knot index, attitude errors wrapped to
(-pi, pi], and the result saturated to the input box. K_k is stored with
the positive-definite convention (closed loop ``A_k - B_k K_k``), so the
policy subtracts the feedback term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aircraft import AircraftParams
from .dynamics import linearize_batch_fast
from .states import INPUT_DIM, ITHETA, STATE_DIM, as_state_array, wrap_angle
from .trajectory import Bounds, KnotTrajectory


@dataclass
class TrackingWeights:
    """TVLQR design weights (diagonal, position-dominant defaults)."""

    Q_c: np.ndarray
    R_c: np.ndarray
    Q_fc: np.ndarray

    def __post_init__(self):
        self.Q_c = np.asarray(self.Q_c, dtype=float).reshape(STATE_DIM, STATE_DIM)
        self.R_c = np.asarray(self.R_c, dtype=float).reshape(INPUT_DIM, INPUT_DIM)
        self.Q_fc = np.asarray(self.Q_fc, dtype=float).reshape(STATE_DIM, STATE_DIM)


def default_tracking_weights() -> TrackingWeights:
    q = np.concatenate([
        [50.0, 50.0, 60.0],     # position
        [4.0, 4.0, 6.0],        # attitude
        [0.2, 0.2, 0.2],        # deflections
        [0.05],                 # thrust state
        [3.0, 3.0, 3.0],        # body velocity
        [0.2, 0.2, 0.2],        # body rates
    ])
    r = np.array([2.0, 2.0, 2.0, 6.0])
    return TrackingWeights(Q_c=np.diag(q), R_c=np.diag(r), Q_fc=np.diag(q))


@dataclass
class GainSchedule:
    """Per-knot feedback gains and cost-to-go along a nominal trajectory."""

    K: np.ndarray               # (N, 4, 16)
    S: np.ndarray               # (N+1, 16, 16)
    nominal: KnotTrajectory
    weights: TrackingWeights

    @property
    def t0(self) -> float:
        return self.nominal.t0

    @property
    def end_time(self) -> float:
        return self.nominal.end_time


def riccati_backward(nominal: KnotTrajectory, weights: TrackingWeights,
                     params: AircraftParams) -> GainSchedule:
    """Backward Riccati sweep along the nominal, first-order-hold models.

    Every S_k is symmetrized after its update; R_c positive definite
    keeps the gain solve well posed.
    """
    if nominal.n_knots < 2:
        raise ValueError("nominal trajectory needs at least 2 knots")
    N = nominal.n_knots - 1
    h = nominal.h
    A_c, B_c = linearize_batch_fast(nominal.states, nominal.inputs, params)
    eye = np.eye(STATE_DIM)
    A_d = eye + h * A_c
    B_d = h * B_c

    S = np.empty((N + 1, STATE_DIM, STATE_DIM))
    K = np.empty((N, INPUT_DIM, STATE_DIM))
    S[N] = 0.5 * (weights.Q_fc + weights.Q_fc.T)
    for k in range(N - 1, -1, -1):
        Ak, Bk = A_d[k], B_d[k]
        S_next = S[k + 1]
        BtS = Bk.T @ S_next
        gram = weights.R_c + BtS @ Bk
        K[k] = np.linalg.solve(gram, BtS @ Ak)
        Sk = weights.Q_c + Ak.T @ S_next @ Ak - (BtS @ Ak).T @ K[k]
        S[k] = 0.5 * (Sk + Sk.T)
    return GainSchedule(K=K, S=S, nominal=nominal, weights=weights)


def riccati_step(A, B, S_next, Q, R):
    """One generic discrete Riccati update; returns (S, K).

    Shared by the aircraft schedule and oracle tests on small systems.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim < 2:
        B = B.reshape(-1, 1)
    S_next = np.atleast_2d(np.asarray(S_next, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    BtS = B.T @ S_next
    K = np.linalg.solve(R + BtS @ B, BtS @ A)
    S = Q + A.T @ S_next @ A - (BtS @ A).T @ K
    return 0.5 * (S + S.T), K


def feedback(schedule: GainSchedule, x, t: float, bounds: Bounds | None = None) -> np.ndarray:
    """Evaluate the tracking policy at (t, x), saturated to input bounds.

    The gain matrix is selected by zero-order hold on time, clamped at
    the trajectory ends. The nominal state and input are interpolated
    linearly between knots: holding them as well would make the aircraft
    chase a stair-stepped reference and leave a steady lag of about
    ``v h / 2``. Attitude error components are wrapped to (-pi, pi].
    """
    x = as_state_array(x)
    nom = schedule.nominal
    k = nom.knot_index(t)
    s = min(max((t - nom.t0) / nom.h - k, 0.0), 1.0)
    x_d = (1.0 - s) * nom.states[k] + s * nom.states[k + 1]
    u_d = (1.0 - s) * nom.inputs[k] + s * nom.inputs[k + 1]
    err = x - x_d
    err[ITHETA] = wrap_angle(err[ITHETA])
    u = u_d - schedule.K[k] @ err
    if bounds is not None:
        u = np.clip(u, bounds.u_min, bounds.u_max)
    else:
        u[3] = min(max(u[3], 0.0), 1.0)
    return u
