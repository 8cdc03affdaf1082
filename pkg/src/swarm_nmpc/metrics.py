"""Swarm scoring: energy density, hull volumes, distance statistics.

Swarm Energy Density (SED) is the total kinetic energy of the swarm
divided by twice the volume of the smallest convex hull enveloping it:

    SED = sum_i m_i v_i^2 / (2 V)      [J/m^3]

For scenario-level scoring V comes straight from published bounding
volumes; for the time-averaged variant V is the hull of the instantaneous
agent positions, each inflated to a sphere of the body radius so thin
formations (or a 3-agent swarm, whose point hull is flat) still enclose
volume. The inflation radius is reported alongside every time-averaged
value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hull import convex_hull_volume
from .records import TrialRecord


@dataclass
class SedInput:
    """Masses, speeds, and enclosing volume for one SED evaluation."""

    masses: np.ndarray     # kg, per agent
    speeds: np.ndarray     # m/s, per agent
    volume: float          # m^3

    def __post_init__(self):
        self.masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        self.speeds = np.atleast_1d(np.asarray(self.speeds, dtype=float))
        if self.masses.shape != self.speeds.shape:
            raise ValueError("masses and speeds must have matching shapes")
        if np.any(self.masses <= 0.0):
            raise ValueError("masses must be positive")

    @classmethod
    def uniform(cls, n_agents: int, mass: float, speed: float, volume: float) -> "SedInput":
        return cls(masses=np.full(n_agents, mass), speeds=np.full(n_agents, speed),
                   volume=volume)


def sed(inp: SedInput) -> float:
    """Swarm Energy Density, sum(m v^2) / (2 V)."""
    if inp.volume <= 0.0:
        raise ValueError("enclosing volume must be positive")
    return float(np.sum(inp.masses * inp.speeds ** 2) / (2.0 * inp.volume))


def inflated_hull_volume(positions, radius: float) -> float:
    """Hull volume of agent positions inflated by the body radius."""
    return convex_hull_volume(positions, inflate_radius=radius)


@dataclass
class SedSeries:
    """Instantaneous SED along a trial."""

    times: np.ndarray
    values: np.ndarray
    volumes: np.ndarray
    inflation_radius: float

    @property
    def time_average(self) -> float:
        return float(self.values.mean())


def sed_series(record: TrialRecord, mass: float, inflation_radius: float,
               stride: int = 1) -> SedSeries:
    """Instantaneous SED over a record (agents' hull, inflated)."""
    if record.n_agents < 2:
        raise ValueError("time-averaged SED needs at least 2 agents present")
    if record.times.size == 0:
        raise ValueError("record holds no steps")
    idx = np.arange(0, record.times.size, stride)
    vols = np.empty(idx.size)
    vals = np.empty(idx.size)
    for j, i in enumerate(idx):
        v = inflated_hull_volume(record.positions[i], inflation_radius)
        vols[j] = v
        vals[j] = float(np.sum(mass * record.speeds[i] ** 2) / (2.0 * v))
    return SedSeries(times=record.times[idx], values=vals, volumes=vols,
                     inflation_radius=inflation_radius)


def time_averaged_sed(record: TrialRecord, mass: float, inflation_radius: float,
                      stride: int = 1) -> float:
    """Mean instantaneous SED over the trial."""
    return sed_series(record, mass, inflation_radius, stride=stride).time_average


def time_averaged_density(record: TrialRecord, mass: float, inflation_radius: float,
                          stride: int = 1) -> tuple[float, float]:
    """(average, max) swarm mass density over the same inflated hull."""
    series = sed_series(record, mass, inflation_radius, stride=stride)
    dens = record.n_agents * mass / series.volumes
    return float(dens.mean()), float(dens.max())


@dataclass
class DistanceStats:
    """Pairwise-distance and angle-of-attack summary of one trial."""

    min_series: np.ndarray      # per-step minimum over pairs
    avg_min_distance: float
    min_distance: float
    avg_alpha: float
    argmin: tuple[int, int]     # (step index, pair index)

    def __post_init__(self):
        if self.min_distance > self.avg_min_distance + 1e-12:
            raise ValueError("global minimum cannot exceed the average minimum")


def distance_stats(record: TrialRecord) -> DistanceStats:
    """Closest-pair statistics and average wing angle of attack."""
    if record.n_agents < 2:
        raise ValueError("distance statistics need at least 2 agents")
    if record.pairwise.size == 0:
        raise ValueError("record holds no steps")
    min_series = record.pairwise.min(axis=1)
    step = int(np.argmin(min_series))
    pair = int(np.argmin(record.pairwise[step]))
    return DistanceStats(
        min_series=min_series,
        avg_min_distance=float(min_series.mean()),
        min_distance=float(min_series.min()),
        avg_alpha=float(record.alphas.mean()),
        argmin=(step, pair),
    )


def metrics_report(records: list[TrialRecord], inflation_radius: float | None = None,
                   stride: int = 1) -> dict:
    """Metrics block for a batch of records (CLI backend)."""
    if not records:
        raise ValueError("no records")
    cfg = records[0].config
    from .aircraft import load_aircraft_params
    params = load_aircraft_params(cfg.get("aircraft_file"))
    mass = params.mass
    radius = params.body_radius if inflation_radius is None else inflation_radius

    n = cfg["n_agents"]
    speed = cfg["speed"]
    out = {
        "n_agents": n,
        "mass": mass,
        "speed": speed,
        "inflation_radius": radius,
        "trials": [],
    }
    if cfg["kind"] == "box":
        approx_volume = cfg["box_length"] * cfg["box_width"] * max(
            2.0 * cfg["rho"], (n - 1) * cfg["vertical_offset"] + 2.0 * cfg["rho"])
        out["scenario_volume"] = approx_volume
        out["scenario_sed"] = sed(SedInput.uniform(n, mass, speed, approx_volume))
    for rec in records:
        entry = {"trial": rec.header.get("seed", rec.path), "status": rec.status}
        if rec.times.size and n >= 2:
            stats = distance_stats(rec)
            series = sed_series(rec, mass, radius, stride=stride)
            avg_d, max_d = time_averaged_density(rec, mass, radius, stride=stride)
            entry.update({
                "min_distance": stats.min_distance,
                "avg_min_distance": stats.avg_min_distance,
                "avg_alpha": stats.avg_alpha,
                "ta_sed": series.time_average,
                "avg_density": avg_d,
                "max_density": max_d,
            })
        elif rec.times.size:
            entry.update({"avg_alpha": float(rec.alphas.mean())})
        out["trials"].append(entry)
    return out
