"""Lock-step multi-agent simulation.

One trial advances all aircraft on a shared clock at the simulation
step (default 0.01 s): inject the disturbance draw, evaluate each
agent's tracker, integrate each aircraft with RK4, and at every
planning-interval boundary run the replanning round (agents replan in
ascending id order, each against the freshest committed plans). Fatal
events (ground impact, pitch singularity, pairwise distance below 2R,
or a replan failure streak longer than 5) terminate the trial and are
recorded in the event log.

Trials are deterministic per (scenario, seed): disturbances come from
per-agent child streams of the trial seed, and records exclude wall
times, so re-running a seed reproduces the record byte for byte.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agent import AgentConfig, NmpcAgent
from .coordination import TrajectoryBus
from .dynamics import GimbalLockError, integrate_rk4, surface_alpha
from .records import RecordWriter, TrialRecord, read_record, write_manifest
from .scenario import ScenarioConfig, generate_reference
from .solver import SolverConfig
from .states import IR, ITHETA, IV
from .trim import find_trim
from .verification import TubeSpec, derive_separation

MAX_PLAN_FAILURE_STREAK = 5


def _agent_configs(config: ScenarioConfig, params):
    trim = find_trim(params, config.speed)
    tube = TubeSpec(rho=config.rho, eps=config.eps, T=config.planning_interval)
    d = derive_separation(tube, params.body_radius)
    solver_cfg = SolverConfig(
        feas_tol=config.solver.feas_tol,
        stat_tol=config.solver.stat_tol,
        max_outer=config.solver.max_outer,
        max_inner=config.solver.max_inner,
        wall_budget_s=config.solver.wall_budget_s,
    )
    agents = []
    for i in range(config.n_agents):
        ref = generate_reference(config, i, params=params, trim=trim)
        agents.append(AgentConfig(
            agent_id=i,
            reference=ref,
            params=params,
            planning_interval=config.planning_interval,
            n_knots=config.n_knots,
            sim_step=config.sim_step,
            separation=d,
            separation_margin=config.separation_margin,
            solver=solver_cfg,
            plan_accept_violation=config.solver.plan_accept_violation,
        ))
    return agents, trim, d


def _pairwise_distances(positions: np.ndarray) -> np.ndarray:
    m = positions.shape[0]
    out = []
    for i in range(m):
        for j in range(i + 1, m):
            out.append(float(np.linalg.norm(positions[i] - positions[j])))
    return np.array(out)


def run_trial(config: ScenarioConfig, seed: int | None = None, out_path=None,
              compress: bool = False) -> TrialRecord:
    """Run one trial; returns the parsed record (written to out_path)."""
    seed = config.seed if seed is None else int(seed)
    params = config.load_params()
    agent_cfgs, trim, d = _agent_configs(config, params)
    agents = [NmpcAgent(c) for c in agent_cfgs]
    m = config.n_agents
    two_r = 2.0 * params.body_radius

    rng_init = np.random.default_rng(np.random.SeedSequence([seed, 999]))
    rngs = [np.random.default_rng(np.random.SeedSequence([seed, 1000 + i]))
            for i in range(m)]
    dist = config.disturbance

    x = np.zeros((m, 16))
    for i in range(m):
        x[i] = agent_cfgs[i].reference.state_at(0.0)
        x[i, IR] += dist.sigma_init_pos * rng_init.standard_normal(3)
        x[i, ITHETA] += dist.sigma_init_att * rng_init.standard_normal(3)
        x[i, IV] += dist.sigma_init_vel * rng_init.standard_normal(3)

    if out_path is None:
        import tempfile
        out_path = Path(tempfile.mkdtemp(prefix="swarm-nmpc-")) / f"trial_{seed:05d}.jsonl"
    out_path = Path(out_path)

    header = {
        "config": dataclasses.asdict(config),
        "seed": seed,
        "n_agents": m,
        "d": d,
        "two_r": two_r,
        "trim": {"pitch": trim.pitch, "elevator": trim.elevator, "thrust": trim.thrust},
    }
    bus = TrajectoryBus(range(m))
    dt = config.sim_step
    n_steps = int(round(config.duration / dt))
    steps_per_interval = int(round(config.planning_interval / dt))
    status = "completed"
    steps_done = 0

    with RecordWriter(out_path, header, compress=compress) as rec:
        # Bootstrap round: first plans, in id order, each seeing earlier ones.
        for i, agent in enumerate(agents):
            log = agent.start(x[i], 0.0, bus.snapshot_map(i))
            rec.plan(i, log)
            if not log.accepted:
                rec.event(0.0, "bootstrap_failure", agent=i, detail=log.reason)
                status = "bootstrap_failure"
        if status == "completed":
            for i, agent in enumerate(agents):
                bus.publish(agent.committed_message(0.0))

            t = 0.0
            for step_idx in range(n_steps):
                t = step_idx * dt
                if step_idx > 0 and step_idx % steps_per_interval == 0:
                    for i, agent in enumerate(agents):
                        log = agent.on_boundary(t, x[i], bus.snapshot_map(i))
                        rec.plan(i, log)
                        if log.accepted:
                            bus.publish(agent.committed_message(t))
                        else:
                            rec.event(t, "plan_failure", agent=i, detail=log.reason)
                        if agent.failure_streak > MAX_PLAN_FAILURE_STREAK:
                            rec.event(t, "plan_failure_streak", agent=i)
                            status = "plan_failure_streak"
                    if status != "completed":
                        break

                u = np.array([agents[i].step(t, x[i]) for i in range(m)])
                pos = x[:, IR]
                speeds = np.linalg.norm(x[:, IV], axis=1)
                alphas = np.array([surface_alpha(x[i], u[i], params)[0] for i in range(m)])
                errs = np.array([
                    float(np.linalg.norm(pos[i] - agents[i].plan.active_traj.position_at(t)))
                    for i in range(m)
                ])
                pdists = _pairwise_distances(pos)
                rec.step(t, pos, speeds, alphas, errs, pdists)
                steps_done += 1

                if m > 1 and pdists.min() < two_r:
                    rec.event(t, "collision", detail=f"min pairwise {pdists.min():.3f} m")
                    status = "collision"
                    break

                try:
                    for i in range(m):
                        f_d = dist.sigma_force * rngs[i].standard_normal(3)
                        m_d = dist.sigma_moment * rngs[i].standard_normal(3)
                        x[i] = integrate_rk4(x[i], lambda tt, uu=u[i]: uu, dt, params,
                                             t0=t, extra_force=f_d, extra_moment=m_d)
                except GimbalLockError:
                    rec.event(t, "pitch_singularity", agent=i)
                    status = "pitch_singularity"
                    break
                if np.any(x[:, 2] < 0.0):
                    low = int(np.argmin(x[:, 2]))
                    rec.event(t + dt, "ground_impact", agent=low)
                    status = "ground_impact"
                    break

        rec.end(t=steps_done * dt, steps=steps_done, status=status)
    return read_record(out_path)


def _batch_worker(args):
    config_doc, seed, out_dir, compress = args
    config = ScenarioConfig(**config_doc)
    name = f"trial_{seed:05d}.jsonl" + (".gz" if compress else "")
    path = Path(out_dir) / name
    try:
        record = run_trial(config, seed=seed, out_path=path, compress=compress)
        return {"file": name, "seed": seed, "status": record.status}
    except Exception as exc:  # per-trial failure is recorded, batch continues
        return {"file": name, "seed": seed, "status": f"error: {exc}"}


def batch(config: ScenarioConfig, n_seeds: int, out_dir, compress: bool = False,
          workers: int = 1, seed0: int | None = None) -> Path:
    """Run n_seeds independent trials; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = config.seed if seed0 is None else int(seed0)
    config_doc = dataclasses.asdict(config)
    jobs = [(config_doc, base + k, str(out_dir), compress) for k in range(n_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_worker, jobs))
    else:
        results = [_batch_worker(j) for j in jobs]
    return write_manifest(out_dir, config_doc, results)
