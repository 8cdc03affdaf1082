"""Direct transcription of the trajectory optimization problem.

Decision vector layout (dimension ``(N+1)*(16+4) + 1``):

    z = [ x_0 ... x_N | u_0 ... u_N | h ]

Dynamics enter as N implicit Simpson integration defects

    x_k - x_{k+1} + (h/6) (f_k + 4 f_c + f_{k+1}) = 0

with the midpoint state ``x_c = (x_k + x_{k+1})/2 + h (f_k - f_{k+1})/8``
and midpoint input ``u_c = (u_k + u_{k+1})/2``. The cost is quadratic:
terminal ``(x_N - x_f)^T Q_f (x_N - x_f)`` plus running state error
against a reference knot sequence and raw input effort. Teammate
trajectories contribute pairwise separation inequalities over every pair
of knot indices.

Defect Jacobians are assembled by the chain rule from the per-point
dynamics Jacobians, giving the band-block sparsity (each defect row
touches only knots k and k+1 and the shared step variable h).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aircraft import AircraftParams
from .dynamics import (
    PITCH_GUARD,
    GimbalLockError,
    dynamics_array,
    integrate_rk4,
    linearize_batch_fast,
)
from .states import INPUT_DIM, STATE_DIM
from .trajectory import Bounds, CostWeights, KnotTrajectory

# Smoothing added under the square root of obstacle distances so the
# gradient stays finite at coincident points.
OBSTACLE_SMOOTHING = 1e-9


def simpson_defect_general(f, x_k, x_k1, u_k, u_k1, h: float) -> np.ndarray:
    """Simpson integration defect for a generic dynamics callable f(x, u)."""
    x_k = np.asarray(x_k, dtype=float)
    x_k1 = np.asarray(x_k1, dtype=float)
    if h <= 0.0:
        raise ValueError("step must be positive")
    f_k = np.asarray(f(x_k, u_k), dtype=float)
    f_k1 = np.asarray(f(x_k1, u_k1), dtype=float)
    u_c = (np.asarray(u_k) + np.asarray(u_k1)) / 2.0
    x_c = (x_k + x_k1) / 2.0 + h * (f_k - f_k1) / 8.0
    f_c = np.asarray(f(x_c, u_c), dtype=float)
    return x_k - x_k1 + (h / 6.0) * (f_k + 4.0 * f_c + f_k1)


def simpson_defect(x_k, x_k1, u_k, u_k1, h: float, params: AircraftParams) -> np.ndarray:
    """Simpson defect of the aircraft dynamics between two knots."""
    return simpson_defect_general(
        lambda x, u: dynamics_array(np.asarray(x, dtype=float), np.asarray(u, dtype=float), params),
        x_k, x_k1, u_k, u_k1, h,
    )


@dataclass
class ObstacleConstraintSet:
    """Teammate trajectories treated as fixed knot obstacles.

    ``trajectories`` maps agent ids to (L, 3) position knot arrays. The
    ego's own id may not appear. Separation applies between every ego
    knot and every obstacle knot.
    """

    trajectories: list[tuple[int, np.ndarray]] = field(default_factory=list)
    d: float = 1.0
    ego_id: int | None = None

    def __post_init__(self):
        if self.d <= 0.0:
            raise ValueError("separation distance d must be positive")
        cleaned = []
        for agent_id, knots in self.trajectories:
            if self.ego_id is not None and agent_id == self.ego_id:
                raise ValueError(f"obstacle set may not contain the ego agent {agent_id}")
            cleaned.append((int(agent_id), np.asarray(knots, dtype=float).reshape(-1, 3)))
        self.trajectories = cleaned

    @property
    def n_points(self) -> int:
        return sum(k.shape[0] for _, k in self.trajectories)

    def stacked_points(self) -> np.ndarray:
        if not self.trajectories:
            return np.zeros((0, 3))
        return np.concatenate([k for _, k in self.trajectories], axis=0)


def obstacle_residuals(ego_positions, obstacles: ObstacleConstraintSet) -> np.ndarray:
    """Separation residuals ``|r_k - p_l| - d`` for every (k, l) pair.

    Returned flat, ego-knot-major; the constraint is satisfied iff all
    residuals are >= 0. Distances use the position components only, with
    a small smoothing term under the square root.
    """
    ego = np.asarray(ego_positions, dtype=float).reshape(-1, 3)
    pts = obstacles.stacked_points()
    if pts.shape[0] == 0:
        return np.zeros(0)
    diff = ego[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1) + OBSTACLE_SMOOTHING)
    return (dist - obstacles.d).ravel()


@dataclass
class NlpProblem:
    """One trajectory solve: cost, bounds, defects, obstacle constraints."""

    N: int
    x_i: np.ndarray
    x_f: np.ndarray
    x_ref: np.ndarray           # (N+1, 16) running-cost reference knots
    u_ref: np.ndarray           # (N+1, 4) initial-guess inputs
    bounds: Bounds
    weights: CostWeights
    obstacles: ObstacleConstraintSet
    params: AircraftParams
    h_init: float
    agent_id: int = 0
    t0: float = 0.0

    # ------------------------------------------------------------------
    # Layout
    # ------------------------------------------------------------------
    @property
    def n_states_flat(self) -> int:
        return (self.N + 1) * STATE_DIM

    @property
    def n_inputs_flat(self) -> int:
        return (self.N + 1) * INPUT_DIM

    @property
    def n_vars(self) -> int:
        return self.n_states_flat + self.n_inputs_flat + 1

    @property
    def n_defects(self) -> int:
        return self.N * STATE_DIM

    @property
    def n_obstacle(self) -> int:
        return (self.N + 1) * self.obstacles.n_points

    def split(self, z: np.ndarray):
        """Decision vector -> (states (N+1,16), inputs (N+1,4), h)."""
        ns = self.n_states_flat
        states = z[:ns].reshape(self.N + 1, STATE_DIM)
        inputs = z[ns:ns + self.n_inputs_flat].reshape(self.N + 1, INPUT_DIM)
        return states, inputs, float(z[-1])

    def join(self, states, inputs, h: float) -> np.ndarray:
        return np.concatenate([
            np.asarray(states, dtype=float).ravel(),
            np.asarray(inputs, dtype=float).ravel(),
            [float(h)],
        ])

    def variable_bounds(self):
        """Per-variable (lo, hi) with the end-state boxes folded in."""
        b = self.bounds
        lo_x = np.tile(b.x_min, (self.N + 1, 1))
        hi_x = np.tile(b.x_max, (self.N + 1, 1))
        lo_x[0] = np.maximum(lo_x[0], self.x_i - b.delta_i)
        hi_x[0] = np.minimum(hi_x[0], self.x_i + b.delta_i)
        lo_x[-1] = np.maximum(lo_x[-1], self.x_f - b.delta_f)
        hi_x[-1] = np.minimum(hi_x[-1], self.x_f + b.delta_f)
        lo = np.concatenate([lo_x.ravel(), np.tile(b.u_min, self.N + 1), [b.h_min]])
        hi = np.concatenate([hi_x.ravel(), np.tile(b.u_max, self.N + 1), [b.h_max]])
        if np.any(lo > hi + 1e-12):
            raise ValueError("inconsistent bounds: end-state boxes conflict with the flight envelope")
        return lo, hi

    def initial_guess(self) -> np.ndarray:
        """Cold-start guess: dynamics rollout from x_i under the guess inputs.

        A rollout is nearly defect-free, which conditions the first
        augmented-Lagrangian subproblem far better than the (dynamically
        inconsistent) reference sequence. Falls back to the reference
        knots if the rollout leaves the valid flight envelope.
        """
        lo, hi = self.variable_bounds()
        states = np.tile(self.x_ref[-1], (self.N + 1, 1))
        states[0] = self.x_i
        try:
            x = self.x_i.copy()
            for k in range(self.N):
                x = integrate_rk4(x, lambda t, uu=self.u_ref[k]: uu, self.h_init, self.params)
                states[k + 1] = np.clip(x, self.bounds.x_min, self.bounds.x_max)
        except GimbalLockError:
            states = self.x_ref.copy()
            states[0] = self.x_i
        z = self.join(states, self.u_ref, self.h_init)
        return np.clip(z, lo, hi)

    def warm_start_vector(self, warm: KnotTrajectory) -> np.ndarray:
        if warm.n_knots != self.N + 1:
            raise ValueError("warm start knot count does not match problem")
        lo, hi = self.variable_bounds()
        return np.clip(self.join(warm.states, warm.inputs, warm.h), lo, hi)

    # ------------------------------------------------------------------
    # Cost
    # ------------------------------------------------------------------
    def cost(self, z: np.ndarray) -> float:
        states, inputs, _ = self.split(z)
        dx = states[:-1] - self.x_ref[:-1]
        du = inputs[:-1]
        dxf = states[-1] - self.x_f
        cost = float(dxf @ self.weights.Q_f @ dxf)
        cost += float(np.sum(dx * (dx @ self.weights.Q.T)))
        cost += float(np.sum(du * (du @ self.weights.R.T)))
        return cost

    def cost_gradient(self, z: np.ndarray) -> np.ndarray:
        states, inputs, _ = self.split(z)
        g_x = np.zeros_like(states)
        g_u = np.zeros_like(inputs)
        g_x[:-1] = 2.0 * (states[:-1] - self.x_ref[:-1]) @ self.weights.Q.T
        g_x[-1] = 2.0 * (states[-1] - self.x_f) @ self.weights.Q_f.T
        g_u[:-1] = 2.0 * inputs[:-1] @ self.weights.R.T
        g = np.concatenate([g_x.ravel(), g_u.ravel(), [0.0]])
        return g

    # ------------------------------------------------------------------
    # Defects
    # ------------------------------------------------------------------
    def defects(self, z: np.ndarray, with_aux: bool = False):
        """All Simpson defects, vectorized; optionally keep midpoint data.

        The interpolated midpoint state has its pitch clamped just inside
        the Euler singularity guard; knot pitch is box-bounded well away
        from it, so the clamp can only engage on garbage intermediate
        iterates where the unclamped model would be undefined. The clamp
        mask rides along so Jacobians stay consistent.
        """
        states, inputs, h = self.split(z)
        f = dynamics_array(states, inputs, self.params)
        f_k, f_k1 = f[:-1], f[1:]
        x_c = (states[:-1] + states[1:]) / 2.0 + h * (f_k - f_k1) / 8.0
        pitch_lim = PITCH_GUARD - 1e-3
        clipped = np.clip(x_c[:, 4], -pitch_lim, pitch_lim)
        mask_c = np.ones_like(x_c)
        mask_c[:, 4] = (x_c[:, 4] == clipped)
        x_c = x_c.copy()
        x_c[:, 4] = clipped
        u_c = (inputs[:-1] + inputs[1:]) / 2.0
        f_c = dynamics_array(x_c, u_c, self.params)
        defects = states[:-1] - states[1:] + (h / 6.0) * (f_k + 4.0 * f_c + f_k1)
        if with_aux:
            return defects, (states, inputs, h, f, x_c, u_c, f_c, mask_c)
        return defects

    def defect_blocks(self, z: np.ndarray):
        """Defects plus their Jacobian blocks w.r.t. knot variables and h.

        Returns (defects (N,16), Dxk, Dxk1 (N,16,16), Duk, Duk1 (N,16,4),
        Dh (N,16)). Knot and midpoint linearizations share one fused
        finite-difference batch.
        """
        defects, (states, inputs, h, f, x_c, u_c, f_c, mask_c) = self.defects(z, with_aux=True)
        A_all, B_all = linearize_batch_fast(
            np.concatenate([states, x_c], axis=0),
            np.concatenate([inputs, u_c], axis=0),
            self.params,
            base=np.concatenate([f, f_c], axis=0),
        )
        A, A_c = A_all[:self.N + 1], A_all[self.N + 1:]
        B, B_c = B_all[:self.N + 1], B_all[self.N + 1:]
        # Clamped midpoint components do not propagate derivatives.
        A_c = A_c * mask_c[:, None, :]
        A_k, A_k1 = A[:-1], A[1:]
        B_k, B_k1 = B[:-1], B[1:]

        eye = np.eye(STATE_DIM)
        AcAk = np.matmul(A_c, A_k)
        AcAk1 = np.matmul(A_c, A_k1)
        Dxk = eye + (h / 6.0) * A_k + (h / 3.0) * A_c + (h * h / 12.0) * AcAk
        Dxk1 = -eye + (h / 6.0) * A_k1 + (h / 3.0) * A_c - (h * h / 12.0) * AcAk1
        Duk = (h / 6.0) * B_k + (h / 3.0) * B_c + (h * h / 12.0) * np.matmul(A_c, B_k)
        Duk1 = (h / 6.0) * B_k1 + (h / 3.0) * B_c - (h * h / 12.0) * np.matmul(A_c, B_k1)
        df = f[:-1] - f[1:]
        Dh = (f[:-1] + 4.0 * f_c + f[1:]) / 6.0 + (h / 12.0) * np.matmul(
            A_c, df[:, :, None])[:, :, 0]
        return defects, Dxk, Dxk1, Duk, Duk1, Dh

    def defect_jacobian_dense(self, z: np.ndarray) -> np.ndarray:
        """Full (16N, n_vars) defect Jacobian (tests and dumps only)."""
        _, Dxk, Dxk1, Duk, Duk1, Dh = self.defect_blocks(z)
        J = np.zeros((self.n_defects, self.n_vars))
        ns = self.n_states_flat
        for k in range(self.N):
            rows = slice(k * STATE_DIM, (k + 1) * STATE_DIM)
            J[rows, k * STATE_DIM:(k + 1) * STATE_DIM] = Dxk[k]
            J[rows, (k + 1) * STATE_DIM:(k + 2) * STATE_DIM] = Dxk1[k]
            J[rows, ns + k * INPUT_DIM: ns + (k + 1) * INPUT_DIM] = Duk[k]
            J[rows, ns + (k + 1) * INPUT_DIM: ns + (k + 2) * INPUT_DIM] = Duk1[k]
            J[rows, -1] = Dh[k]
        return J

    def scatter_defect_gradient(self, w, Dxk, Dxk1, Duk, Duk1, Dh) -> np.ndarray:
        """Gradient contribution ``J_defects^T w`` for multipliers w (N, 16)."""
        g_x = np.zeros((self.N + 1, STATE_DIM))
        g_u = np.zeros((self.N + 1, INPUT_DIM))
        g_x[:-1] += np.einsum("kij,ki->kj", Dxk, w)
        g_x[1:] += np.einsum("kij,ki->kj", Dxk1, w)
        g_u[:-1] += np.einsum("kij,ki->kj", Duk, w)
        g_u[1:] += np.einsum("kij,ki->kj", Duk1, w)
        g_h = float(np.sum(Dh * w))
        return np.concatenate([g_x.ravel(), g_u.ravel(), [g_h]])

    # ------------------------------------------------------------------
    # Obstacles
    # ------------------------------------------------------------------
    def obstacle_values(self, z: np.ndarray):
        """Residuals (flat) and unit offsets for the gradient."""
        if self.obstacles.n_points == 0:
            return np.zeros(0), None
        states, _, _ = self.split(z)
        ego = states[:, 0:3]
        pts = self.obstacles.stacked_points()
        diff = ego[:, None, :] - pts[None, :, :]              # (N+1, L, 3)
        dist = np.sqrt(np.sum(diff * diff, axis=-1) + OBSTACLE_SMOOTHING)
        return (dist - self.obstacles.d).ravel(), diff / dist[..., None]

    def scatter_obstacle_gradient(self, w_flat: np.ndarray, unit) -> np.ndarray:
        """Gradient contribution ``J_obs^T w`` for multipliers w (flat)."""
        g = np.zeros(self.n_vars)
        if unit is None:
            return g
        L = self.obstacles.n_points
        w = w_flat.reshape(self.N + 1, L)
        g_pos = np.einsum("kl,kli->ki", w, unit)              # (N+1, 3)
        g_x = np.zeros((self.N + 1, STATE_DIM))
        g_x[:, 0:3] = g_pos
        g[:self.n_states_flat] = g_x.ravel()
        return g

    def constraint_jacobian_dense(self, z: np.ndarray) -> np.ndarray:
        """Defect + obstacle Jacobian, dense (tests and dumps only)."""
        J_d = self.defect_jacobian_dense(z)
        if self.obstacles.n_points == 0:
            return J_d
        _, unit = self.obstacle_values(z)
        L = self.obstacles.n_points
        J_o = np.zeros(((self.N + 1) * L, self.n_vars))
        for k in range(self.N + 1):
            for l in range(L):
                row = k * L + l
                J_o[row, k * STATE_DIM: k * STATE_DIM + 3] = unit[k, l]
        return np.vstack([J_d, J_o])

    # ------------------------------------------------------------------
    # Inspection dump
    # ------------------------------------------------------------------
    def describe(self) -> str:
        """Human-readable structured dump: layout, bounds, sparsity."""
        lo, hi = self.variable_bounds()
        lines = [
            "nlp-dump/1",
            f"knots: {self.N + 1}",
            f"decision-dim: {self.n_vars}",
            f"layout: states[0:{self.n_states_flat}] "
            f"inputs[{self.n_states_flat}:{self.n_states_flat + self.n_inputs_flat}] "
            f"h[{self.n_vars - 1}]",
            f"defects: {self.n_defects}",
            f"obstacle-inequalities: {self.n_obstacle} (points: {self.obstacles.n_points}, "
            f"d: {self.obstacles.d if self.obstacles.n_points else 'n/a'})",
            "defect-sparsity: row-block k couples state knots (k, k+1), "
            "input knots (k, k+1), and h",
            "obstacle-sparsity: row (k, l) couples position of state knot k only",
        ]
        lines.append("variable-bounds:")
        for i in range(self.n_vars):
            lines.append(f"  z[{i}] in [{lo[i]:.6g}, {hi[i]:.6g}]")
        return "\n".join(lines)


def build_nlp(x_i, x_f, bounds: Bounds, weights: CostWeights,
              obstacles: ObstacleConstraintSet | None, N: int,
              params: AircraftParams, x_ref=None, u_ref=None,
              h_init: float | None = None, agent_id: int = 0,
              t0: float = 0.0) -> NlpProblem:
    """Assemble the trajectory NLP.

    ``x_ref`` defaults to holding ``x_f`` at every knot; ``u_ref`` (also
    the input initial guess) defaults to zeros. ``h_init`` defaults to
    the midpoint of the step bounds.
    """
    if N < 2:
        raise ValueError("need at least N = 2 intervals")
    x_i = np.asarray(x_i, dtype=float).reshape(STATE_DIM)
    x_f = np.asarray(x_f, dtype=float).reshape(STATE_DIM)
    if x_ref is None:
        x_ref = np.tile(x_f, (N + 1, 1))
    else:
        x_ref = np.asarray(x_ref, dtype=float).reshape(N + 1, STATE_DIM)
    if u_ref is None:
        u_ref = np.zeros((N + 1, INPUT_DIM))
    else:
        u_ref = np.asarray(u_ref, dtype=float).reshape(N + 1, INPUT_DIM)
    if obstacles is None:
        obstacles = ObstacleConstraintSet(trajectories=[], d=1.0, ego_id=agent_id)
    if h_init is None:
        h_init = 0.5 * (bounds.h_min + bounds.h_max)
    problem = NlpProblem(
        N=N, x_i=x_i, x_f=x_f, x_ref=x_ref, u_ref=u_ref, bounds=bounds,
        weights=weights, obstacles=obstacles, params=params,
        h_init=float(h_init), agent_id=agent_id, t0=t0,
    )
    problem.variable_bounds()  # construction-time consistency check
    return problem
