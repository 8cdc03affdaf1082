"""Scenario definitions and reference path generation.

Two scenario kinds:

* ``box``: each aircraft laps a rectangle (default 6.5 m x 4 m) at
  constant commanded speed, directions alternating clockwise /
  counterclockwise by agent parity, with each agent's circuit offset
  vertically (default 0.2 m per agent) so planner deadlocks from
  symmetric head-on geometry are avoided.
* ``search``: each aircraft visits a seeded sequence of waypoints drawn
  uniformly from a square (default 5.5 m x 5.5 m), connected at constant
  speed.

A reference path maps simulation time to a full 16-state reference: the
position moves along the piecewise-linear path, the heading follows the
current segment (unwrapped, so laps accumulate yaw rather than jumping
by 2 pi), and attitude, body velocity, surface deflections, and thrust
hold the trim point for the commanded speed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .aircraft import AircraftParams, load_aircraft_params
from .states import IDELTA, IDELTA_T, IR, ITHETA, IV, STATE_DIM, wrap_angle
from .trim import TrimPoint, find_trim


@dataclass
class DisturbanceConfig:
    """Zero-mean Gaussian force/moment noise per integrator step, plus
    initial-state jitter. All standard deviations >= 0; all zeros
    reproduces the deterministic run exactly."""

    sigma_force: float = 0.0        # N, per axis
    sigma_moment: float = 0.0       # N m, per axis
    sigma_init_pos: float = 0.0     # m
    sigma_init_vel: float = 0.0     # m/s
    sigma_init_att: float = 0.0     # rad

    def __post_init__(self):
        for name in ("sigma_force", "sigma_moment", "sigma_init_pos",
                     "sigma_init_vel", "sigma_init_att"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return (self.sigma_force == 0.0 and self.sigma_moment == 0.0
                and self.sigma_init_pos == 0.0 and self.sigma_init_vel == 0.0
                and self.sigma_init_att == 0.0)


@dataclass
class SolverSettings:
    """Solver block of the scenario file."""

    feas_tol: float = 1e-4
    stat_tol: float = 1e-3
    max_outer: int = 14
    max_inner: int = 150
    wall_budget_s: float = 5.0
    plan_accept_violation: float = 1e-3   # accept feasible-but-unpolished plans


@dataclass
class ScenarioConfig:
    """Everything needed to run one trial."""

    kind: str = "box"
    n_agents: int = 3
    box_length: float = 6.5
    box_width: float = 4.0
    search_side: float = 5.5
    altitude: float = 1.5
    vertical_offset: float = 0.2
    speed: float = 4.0
    alternating: bool = True
    seed: int = 0
    duration: float = 60.0
    sim_step: float = 0.01
    planning_interval: float = 0.4
    n_knots: int = 16
    rho: float = 0.35
    eps: float = 0.15
    separation_margin: float = 0.005
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    aircraft_file: str | None = None

    def __post_init__(self):
        if self.kind not in ("box", "search"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n_agents < 1:
            raise ValueError("need at least one agent")
        if min(self.box_length, self.box_width, self.search_side, self.altitude) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.duration <= 0 or self.sim_step <= 0 or self.planning_interval <= 0:
            raise ValueError("duration, sim_step, planning_interval must be positive")
        steps = self.planning_interval / self.sim_step
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("planning_interval must be an integer multiple of sim_step")
        if isinstance(self.disturbance, dict):
            self.disturbance = DisturbanceConfig(**self.disturbance)
        if isinstance(self.solver, dict):
            self.solver = SolverSettings(**self.solver)

    def load_params(self) -> AircraftParams:
        return load_aircraft_params(self.aircraft_file)


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(config), fh, sort_keys=False)


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"scenario file {path} is not a mapping")
    try:
        return ScenarioConfig(**doc)
    except TypeError as exc:
        raise ValueError(f"scenario file {path}: {exc}") from exc


class ReferencePath:
    """Piecewise-linear constant-speed reference with trim attitude."""

    def __init__(self, waypoints, speed: float, trim: TrimPoint, loop: bool,
                 agent_id: int = 0):
        self.waypoints = np.asarray(waypoints, dtype=float).reshape(-1, 3)
        if self.waypoints.shape[0] < 2:
            raise ValueError("a reference path needs at least two waypoints")
        self.speed = float(speed)
        self.trim = trim
        self.loop = loop
        self.agent_id = agent_id

        pts = self.waypoints
        if loop:
            pts = np.concatenate([pts, pts[:1]], axis=0)
        seg = np.diff(pts, axis=0)
        self._pts = pts
        self._seg_len = np.linalg.norm(seg, axis=1)
        if np.any(self._seg_len <= 0.0):
            raise ValueError("degenerate path segment")
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.total_length = float(self._cum[-1])
        raw_headings = np.arctan2(seg[:, 1], seg[:, 0])
        unwrapped = [float(raw_headings[0])]
        for hdg in raw_headings[1:]:
            unwrapped.append(unwrapped[-1] + float(wrap_angle(hdg - unwrapped[-1])))
        self._headings = np.array(unwrapped)
        # Heading continues to accumulate lap over lap when looping.
        self._lap_turn = (float(wrap_angle(raw_headings[0] - unwrapped[-1]))
                          + unwrapped[-1] - unwrapped[0]) if loop else 0.0

    @property
    def period(self) -> float:
        """Time for one full lap (looping paths)."""
        return self.total_length / self.speed

    def _locate(self, t: float):
        s = self.speed * max(t, 0.0)
        laps = 0
        if self.loop:
            laps = int(np.floor(s / self.total_length))
            s = s - laps * self.total_length
        else:
            s = min(s, self.total_length)
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(max(i, 0), len(self._seg_len) - 1)
        frac = (s - self._cum[i]) / self._seg_len[i]
        return i, frac, laps

    def position_at(self, t: float) -> np.ndarray:
        i, frac, _ = self._locate(t)
        return self._pts[i] + frac * (self._pts[i + 1] - self._pts[i])

    def heading_at(self, t: float) -> float:
        i, _, laps = self._locate(t)
        return float(self._headings[i] + laps * self._lap_turn)

    def state_at(self, t: float) -> np.ndarray:
        """Full 16-state reference at time t (trim attitude and speed)."""
        x = np.zeros(STATE_DIM)
        x[IR] = self.position_at(t)
        x[ITHETA] = [0.0, self.trim.pitch, self.heading_at(t)]
        x[IDELTA] = [0.0, self.trim.elevator, 0.0]
        x[IDELTA_T] = self.trim.thrust
        c, s = np.cos(self.trim.pitch), np.sin(self.trim.pitch)
        x[IV] = [self.speed * c, 0.0, self.speed * s]
        return x

    def input_at(self, t: float, params: AircraftParams) -> np.ndarray:
        return self.trim.input(params)


def generate_reference(config: ScenarioConfig, agent_id: int,
                       params: AircraftParams | None = None,
                       trim: TrimPoint | None = None) -> ReferencePath:
    """Build agent `agent_id`'s reference path for the scenario.

    Box: rectangle perimeter at commanded speed, direction alternating
    by agent parity (even ids counterclockwise), altitude raised by
    ``agent_id * vertical_offset``, start positions spread equally along
    the perimeter. Search: uniform waypoints from the seeded generator,
    one independent stream per agent.
    """
    if not 0 <= agent_id < config.n_agents:
        raise ValueError(f"agent_id {agent_id} outside [0, {config.n_agents})")
    if trim is None:
        if params is None:
            params = config.load_params()
        trim = find_trim(params, config.speed)
    z = config.altitude + agent_id * config.vertical_offset

    if config.kind == "box":
        lx, ly = config.box_length / 2.0, config.box_width / 2.0
        corners = np.array([
            [-lx, -ly, z],
            [lx, -ly, z],
            [lx, ly, z],
            [-lx, ly, z],
        ])
        ccw = (agent_id % 2 == 0) if config.alternating else True
        if not ccw:
            corners = corners[::-1]
        # Spread start points around the perimeter by rotating the corner
        # list and splitting the first segment at the start offset.
        perimeter = 2.0 * (config.box_length + config.box_width)
        offset = (agent_id / config.n_agents) * perimeter
        waypoints = _rotate_polygon(corners, offset)
        return ReferencePath(waypoints, config.speed, trim, loop=True, agent_id=agent_id)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, agent_id]))
    n_pts = max(4, int(np.ceil(config.duration * config.speed
                               / (0.5 * config.search_side))) + 4)
    side = config.search_side
    pts = rng.uniform(-side / 2.0, side / 2.0, size=(n_pts, 2))
    # Drop consecutive duplicates closer than 0.5 m (degenerate segments).
    keep = [0]
    for i in range(1, n_pts):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > 0.5:
            keep.append(i)
    pts = pts[keep]
    waypoints = np.column_stack([pts, np.full(len(pts), z)])
    return ReferencePath(waypoints, config.speed, trim, loop=False, agent_id=agent_id)


def _rotate_polygon(corners: np.ndarray, arc_offset: float) -> np.ndarray:
    """Start a closed polygon path `arc_offset` meters along its perimeter."""
    seg = np.diff(np.concatenate([corners, corners[:1]], axis=0), axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    s = arc_offset % total
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(seg_len) - 1)
    frac = (s - cum[i]) / seg_len[i]
    start = corners[i] + frac * seg[i]
    rest = [corners[(i + k) % len(corners)] for k in range(1, len(corners) + 1)]
    pts = [start] + rest
    # Remove duplicates when the offset landed exactly on a corner (both
    # consecutive and the wrap-around copy of the start point).
    out = [pts[0]]
    for q in pts[1:]:
        if np.linalg.norm(q - out[-1]) > 1e-9:
            out.append(q)
    if np.linalg.norm(out[-1] - out[0]) <= 1e-9:
        out.pop()
    # The closing edge back to `start` is added by ReferencePath(loop=True).
    return np.array(out)
