"""Per-aircraft receding-horizon NMPC controller.

Each agent holds an active plan (trajectory plus TVLQR schedule) that it
tracks over the current planning interval of length T, and at most one
pending plan that becomes active exactly at the next interval boundary.
At each boundary the agent:

1. swaps the pending plan in (if its replan converged last interval),
2. forward-simulates the closed loop from the measured state over T
   seconds to predict the state at the next handoff,
3. solves the trajectory NLP from that predicted state against the
   teammates' latest committed plans, and
4. commits and publishes the result as the new pending plan.

A failed replan (non-convergence, dynamics blow-up, or rejected
feasibility) leaves the active plan in place: the agent keeps flying it
and, past its end, regulates to its final knot until a later replan
succeeds. Plans span two planning intervals so one failure never leaves
the tracker without a reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aircraft import AircraftParams
from .coordination import TrajectoryMessage, TrajectoryObstacleMap
from .dynamics import GimbalLockError, integrate_rk4
from .solver import SolveReport, SolverConfig, SolverError, solve
from .states import INPUT_DIM, STATE_DIM, as_state_array
from .trajectory import Bounds, CostWeights, KnotTrajectory, H_MAX
from .transcription import ObstacleConstraintSet, build_nlp
from .tvlqr import GainSchedule, TrackingWeights, feedback, riccati_backward
from .scenario import ReferencePath


@dataclass
class AgentConfig:
    """Static configuration of one NMPC agent."""

    agent_id: int
    reference: ReferencePath
    params: AircraftParams
    planning_interval: float = 0.4
    n_knots: int = 16
    sim_step: float = 0.01
    separation: float = 1.61          # knot separation distance d
    separation_margin: float = 0.005  # planner conservatism added to d
    weights: CostWeights = None
    tracking: TrackingWeights = None
    bounds: Bounds = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    plan_accept_violation: float = 1e-3

    def __post_init__(self):
        if self.planning_interval <= 0:
            raise ValueError("planning interval must be positive")
        ratio = self.planning_interval / self.sim_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("planning interval must be an integer multiple of sim_step")
        if self.weights is None:
            from .trajectory import default_cost_weights
            self.weights = default_cost_weights()
        if self.tracking is None:
            from .tvlqr import default_tracking_weights
            self.tracking = default_tracking_weights()
        if self.bounds is None:
            from .trajectory import default_bounds
            self.bounds = default_bounds()

    @property
    def h_nominal(self) -> float:
        return 2.0 * self.planning_interval / self.n_knots


@dataclass
class PlanInterval:
    """Active and pending plans; pending activates only at boundaries."""

    active_traj: KnotTrajectory | None = None
    active_sched: GainSchedule | None = None
    pending_traj: KnotTrajectory | None = None
    pending_sched: GainSchedule | None = None
    interval_start: float = 0.0


@dataclass
class ReplanLog:
    """One replan attempt, recorded every interval."""

    interval: int
    t_commit: float
    accepted: bool
    converged: bool
    iterations: int
    max_violation: float
    cost: float
    solve_time: float
    trajectory: KnotTrajectory | None
    handoff_jump: float = float("nan")
    reason: str = ""


class NmpcAgent:
    """State machine advanced by the simulation harness."""

    def __init__(self, config: AgentConfig):
        self.config = config
        self.plan = PlanInterval()
        self.interval_index = -1
        self._mults = None
        self._u_ref_row = config.reference.trim.input(config.params)
        h_nom = config.h_nominal
        if not h_nom <= H_MAX:
            raise ValueError("nominal knot step exceeds the global step bound")
        self._failure_streak = 0

    # ------------------------------------------------------------------
    def _reference_knots(self, t0: float):
        cfg = self.config
        h = cfg.h_nominal
        x_ref = np.array([cfg.reference.state_at(t0 + k * h) for k in range(cfg.n_knots + 1)])
        u_ref = np.tile(self._u_ref_row, (cfg.n_knots + 1, 1))
        return x_ref, u_ref

    def _problem(self, x_hat: np.ndarray, t0: float, obstacle_map: TrajectoryObstacleMap | None):
        cfg = self.config
        x_ref, u_ref = self._reference_knots(t0)
        obstacles = None
        if obstacle_map is not None and len(obstacle_map):
            obstacles = ObstacleConstraintSet(
                trajectories=obstacle_map.teammate_knots(min_knots=cfg.n_knots + 1),
                d=cfg.separation + cfg.separation_margin,
                ego_id=cfg.agent_id,
            )
        import dataclasses as _dc
        h_nom = cfg.h_nominal
        bounds = _dc.replace(cfg.bounds, h_min=h_nom, h_max=min(H_MAX, 1.5 * h_nom))
        return build_nlp(
            x_hat, x_ref[-1], bounds, cfg.weights, obstacles, cfg.n_knots,
            cfg.params, x_ref=x_ref, u_ref=u_ref, h_init=h_nom,
            agent_id=cfg.agent_id, t0=t0,
        )

    def _flow_sample(self, traj: KnotTrajectory, t: float) -> np.ndarray:
        """Dynamics-consistent sample of a plan at time t: start from the
        preceding knot and integrate the interpolated inputs forward.
        Linear state interpolation would leave large Simpson defects on
        aggressive segments and ruin the warm start."""
        k = traj.knot_index(t)
        x = traj.states[k].copy()
        t_k = traj.t0 + k * traj.h
        remain = t - t_k
        if remain < 1e-9:
            return x
        n_sub = max(1, int(np.ceil(remain / 0.02)))
        dt = remain / n_sub
        for j in range(n_sub):
            tau = (t_k + (j + 0.5) * dt - (traj.t0 + k * traj.h)) / traj.h
            u = (1.0 - tau) * traj.inputs[k] + tau * traj.inputs[k + 1]
            x = integrate_rk4(x, lambda tt, uu=u: uu, dt, self.config.params)
        return x

    def _warm_start(self, problem) -> KnotTrajectory | None:
        """Resample the active plan along its own flow at the new knot
        times; extend the tail by a trim rollout past the plan's end."""
        active = self.plan.active_traj
        if active is None:
            return None
        cfg = self.config
        h = cfg.h_nominal
        n1 = cfg.n_knots + 1
        states = np.empty((n1, STATE_DIM))
        inputs = np.empty((n1, INPUT_DIM))
        t_end = active.end_time
        covered = -1
        try:
            for k in range(n1):
                tk = problem.t0 + k * h
                if tk <= t_end + 1e-9:
                    states[k] = self._flow_sample(active, tk)
                    kk = active.knot_index(tk)
                    tau = min(max((tk - active.t0) / active.h - kk, 0.0), 1.0)
                    inputs[k] = (1.0 - tau) * active.inputs[kk] + tau * active.inputs[kk + 1]
                    covered = k
                else:
                    break
            if covered < 0:
                return None
            x = states[covered].copy()
            for k in range(covered + 1, n1):
                inputs[k] = self._u_ref_row
                x = integrate_rk4(x, lambda t, uu=self._u_ref_row: uu, h, cfg.params)
                states[k] = x
        except GimbalLockError:
            return None
        states[0] = problem.x_i
        return KnotTrajectory(states=states, inputs=inputs, h=h, t0=problem.t0,
                              agent_id=cfg.agent_id)

    # ------------------------------------------------------------------
    def forward_simulate_closed_loop(self, x_now, t_now: float, horizon: float) -> np.ndarray:
        """Deterministic closed-loop rollout of the active policy.

        Mirrors the harness loop exactly (ZOH feedback at the simulation
        step, RK4 in between), so in the absence of disturbances the
        prediction equals the state the aircraft will actually reach.
        """
        cfg = self.config
        x = as_state_array(x_now).copy()
        if horizon <= 0.0:
            return x
        sched = self.plan.active_sched
        if sched is None:
            raise RuntimeError("agent has no active plan to simulate")
        n_steps = int(round(horizon / cfg.sim_step))
        t = t_now
        for _ in range(n_steps):
            u = feedback(sched, x, t, cfg.bounds)
            x = integrate_rk4(x, lambda tt, uu=u: uu, cfg.sim_step, cfg.params, t0=t)
            t += cfg.sim_step
        return x

    def replan(self, x_hat, t0: float, obstacle_map: TrajectoryObstacleMap | None):
        """One trajectory solve from the predicted handoff state.

        Returns (trajectory, schedule, report) on acceptance or
        (None, None, report_or_None) on failure; never raises for solver
        trouble.
        """
        cfg = self.config
        try:
            problem = self._problem(as_state_array(x_hat), t0, obstacle_map)
        except ValueError:
            return None, None, None
        warm = self._warm_start(problem)
        mults = None
        if self._mults is not None:
            # Defect multipliers shift with the receding horizon: the new
            # plan starts one planning interval into the previous one.
            lam_flat, h_old = self._mults
            s = int(round(cfg.planning_interval / h_old))
            s = min(max(s, 0), cfg.n_knots)
            lam = lam_flat.reshape(cfg.n_knots, STATE_DIM)
            if s > 0:
                lam = np.concatenate([lam[s:], np.tile(lam[-1:], (s, 1))], axis=0)
            mults = (lam.ravel(), None)
        try:
            traj, report = solve(problem, warm_start=warm, config=cfg.solver,
                                 multipliers=mults)
        except SolverError:
            return None, None, None
        accepted = report.converged or report.max_violation <= cfg.plan_accept_violation
        if not accepted:
            return None, None, report
        self._mults = (report.multipliers[0].copy(), traj.h) if report.converged else None
        try:
            sched = riccati_backward(traj, cfg.tracking, cfg.params)
        except GimbalLockError:
            return None, None, report
        return traj, sched, report

    # ------------------------------------------------------------------
    def start(self, x0, t0: float, obstacle_map: TrajectoryObstacleMap | None = None) -> ReplanLog:
        """Bootstrap: plan and activate the first trajectory from x0."""
        self.interval_index = 0
        self.plan.interval_start = t0
        traj, sched, report = self.replan(as_state_array(x0), t0, obstacle_map)
        log = self._log_from(0, t0, traj, report)
        if traj is not None:
            self.plan.active_traj = traj
            self.plan.active_sched = sched
        return log

    def on_boundary(self, t: float, x_measured, obstacle_map: TrajectoryObstacleMap | None) -> ReplanLog:
        """Interval boundary: swap pending in, predict, replan, commit."""
        cfg = self.config
        self.interval_index += 1
        self.plan.interval_start = t
        jump = float("nan")
        if self.plan.pending_traj is not None:
            x = as_state_array(x_measured)
            u_before = feedback(self.plan.active_sched, x, t, cfg.bounds)
            self.plan.active_traj = self.plan.pending_traj
            self.plan.active_sched = self.plan.pending_sched
            self.plan.pending_traj = None
            self.plan.pending_sched = None
            u_after = feedback(self.plan.active_sched, x, t, cfg.bounds)
            jump = float(np.max(np.abs(u_after - u_before)))

        t_next = t + cfg.planning_interval
        try:
            x_hat = self.forward_simulate_closed_loop(x_measured, t, cfg.planning_interval)
        except GimbalLockError:
            log = self._log_from(self.interval_index, t, None, None)
            log.reason = "forward simulation hit the pitch singularity"
            log.handoff_jump = jump
            self._failure_streak += 1
            return log
        traj, sched, report = self.replan(x_hat, t_next, obstacle_map)
        if traj is not None:
            self.plan.pending_traj = traj
            self.plan.pending_sched = sched
            self._failure_streak = 0
        else:
            self._failure_streak += 1
        log = self._log_from(self.interval_index, t, traj, report)
        log.handoff_jump = jump
        return log

    def committed_message(self, t_commit: float) -> TrajectoryMessage | None:
        """Wire message for the most recently committed plan."""
        traj = self.plan.pending_traj if self.plan.pending_traj is not None else self.plan.active_traj
        if traj is None:
            return None
        return TrajectoryMessage.from_trajectory(traj, t_commit)

    def step(self, t: float, x_measured) -> np.ndarray:
        """Tracking control at (t, x); swaps pending plans at boundaries."""
        cfg = self.config
        if (self.plan.pending_traj is not None
                and t >= self.plan.pending_traj.t0 - 1e-9):
            self.plan.active_traj = self.plan.pending_traj
            self.plan.active_sched = self.plan.pending_sched
            self.plan.pending_traj = None
            self.plan.pending_sched = None
        if self.plan.active_sched is None:
            raise RuntimeError("agent stepped before a first plan exists")
        return feedback(self.plan.active_sched, x_measured, t, cfg.bounds)

    @property
    def failure_streak(self) -> int:
        return self._failure_streak

    @staticmethod
    def _log_from(interval: int, t: float, traj, report: SolveReport | None) -> ReplanLog:
        if report is None:
            return ReplanLog(interval=interval, t_commit=t, accepted=traj is not None,
                             converged=False, iterations=0, max_violation=float("nan"),
                             cost=float("nan"), solve_time=0.0, trajectory=traj,
                             reason="solver error or invalid problem" if traj is None else "")
        return ReplanLog(
            interval=interval, t_commit=t, accepted=traj is not None,
            converged=report.converged, iterations=report.iterations,
            max_violation=report.max_violation, cost=report.cost,
            solve_time=report.wall_time, trajectory=traj,
            reason="" if traj is not None else report.message,
        )
