"""Trial record files: versioned, line-delimited JSON entries.

Layout: the first line is a header object carrying the schema tag and
the scenario snapshot; every following line is one entry object with a
``type`` field:

* ``plan``: one replan attempt (agent, interval, solve diagnostics, and
  the committed knots when accepted),
* ``step``: one simulation step (per-agent position, speed, wing angle
  of attack, tracking error, and the pairwise distances),
* ``event``: collisions, plan failures, fatal terminations,
* ``end``: final status.

Files are deterministic for a given trial (same bytes on re-run): keys
are sorted, floats use repr round-tripping, and solver wall times stay
out of the file (they live only in the in-memory reports). Gzip output
is written with a zeroed mtime so compression preserves byte identity.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA = "swarm-nmpc-record/1"
MANIFEST_SCHEMA = "swarm-nmpc-manifest/1"


class RecordError(ValueError):
    """A record file failed schema validation."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class RecordWriter:
    """Streams entries of one trial to a (optionally gzipped) file."""

    def __init__(self, path, header: dict, compress: bool = False):
        self.path = Path(path)
        if compress:
            raw = open(self.path, "wb")
            self._fh = gzip.GzipFile(fileobj=raw, mode="wb", mtime=0)
        else:
            self._fh = open(self.path, "wb")
        head = dict(header)
        head["schema"] = SCHEMA
        self._write_line(head)

    def _write_line(self, obj) -> None:
        self._fh.write((_dump(obj) + "\n").encode())

    def plan(self, agent: int, log, t0: float | None = None) -> None:
        entry = {
            "type": "plan",
            "agent": agent,
            "interval": log.interval,
            "t_round": log.t_commit,
            "accepted": log.accepted,
            "converged": log.converged,
            "iterations": log.iterations,
            "max_violation": None if np.isnan(log.max_violation) else log.max_violation,
            "cost": None if np.isnan(log.cost) else log.cost,
            "handoff_jump": None if np.isnan(log.handoff_jump) else log.handoff_jump,
            "reason": log.reason,
        }
        if log.trajectory is not None:
            entry["t0"] = log.trajectory.t0
            entry["h"] = log.trajectory.h
            entry["states"] = [[float(v) for v in row] for row in log.trajectory.states]
            entry["inputs"] = [[float(v) for v in row] for row in log.trajectory.inputs]
        self._write_line(entry)

    def step(self, t: float, pos, speed, alpha, err, pdists) -> None:
        self._write_line({
            "type": "step",
            "t": t,
            "pos": [[float(v) for v in p] for p in pos],
            "speed": [float(v) for v in speed],
            "alpha": [float(v) for v in alpha],
            "err": [float(v) for v in err],
            "pd": [float(v) for v in pdists],
        })

    def event(self, t: float, kind: str, agent: int | None = None, detail: str = "") -> None:
        self._write_line({"type": "event", "t": t, "kind": kind,
                          "agent": agent, "detail": detail})

    def end(self, t: float, steps: int, status: str) -> None:
        self._write_line({"type": "end", "t": t, "steps": steps, "status": status})

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class PlanEntry:
    agent: int
    interval: int
    t_round: float
    accepted: bool
    converged: bool
    iterations: int
    max_violation: float | None
    cost: float | None
    handoff_jump: float | None
    reason: str
    t0: float | None = None
    h: float | None = None
    states: np.ndarray | None = None
    inputs: np.ndarray | None = None

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, 0:3]

    def position_at(self, t) -> np.ndarray:
        """Linear interpolation of planned positions, clamped at the ends."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.states.shape[0]
        s = np.clip((tt - self.t0) / self.h, 0.0, n - 1.0)
        k = np.minimum(s.astype(int), n - 2)
        w = (s - k)[:, None]
        return (1.0 - w) * self.states[k, 0:3] + w * self.states[k + 1, 0:3]


@dataclass
class TrialRecord:
    """Parsed trial record."""

    header: dict
    times: np.ndarray                  # (n_steps,)
    positions: np.ndarray              # (n_steps, M, 3)
    speeds: np.ndarray                 # (n_steps, M)
    alphas: np.ndarray                 # (n_steps, M)
    errors: np.ndarray                 # (n_steps, M)
    pairwise: np.ndarray               # (n_steps, M(M-1)/2)
    plans: list[PlanEntry]
    events: list[dict]
    status: str
    path: str = ""

    @property
    def n_agents(self) -> int:
        return int(self.header["n_agents"])

    @property
    def config(self) -> dict:
        return self.header["config"]

    def accepted_plans(self, agent: int) -> list[PlanEntry]:
        return [p for p in self.plans if p.agent == agent and p.accepted]

    def pair_labels(self) -> list[tuple[int, int]]:
        m = self.n_agents
        return [(i, j) for i in range(m) for j in range(i + 1, m)]


def read_record(path) -> TrialRecord:
    """Parse one record file (gzip detected by suffix)."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    times, pos, speed, alpha, err, pd = [], [], [], [], [], []
    plans: list[PlanEntry] = []
    events: list[dict] = []
    status = "truncated"
    with opener(path, "rt") as fh:
        head_line = fh.readline()
        if not head_line:
            raise RecordError(f"{path}: empty record file")
        try:
            header = json.loads(head_line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"{path}: header is not valid JSON: {exc}") from exc
        if header.get("schema") != SCHEMA:
            raise RecordError(
                f"{path}: schema {header.get('schema')!r} is not {SCHEMA!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                e = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: bad entry: {exc}") from exc
            kind = e.get("type")
            if kind == "step":
                times.append(e["t"])
                pos.append(e["pos"])
                speed.append(e["speed"])
                alpha.append(e["alpha"])
                err.append(e["err"])
                pd.append(e["pd"])
            elif kind == "plan":
                plans.append(PlanEntry(
                    agent=e["agent"], interval=e["interval"], t_round=e["t_round"],
                    accepted=e["accepted"], converged=e["converged"],
                    iterations=e["iterations"], max_violation=e["max_violation"],
                    cost=e["cost"], handoff_jump=e["handoff_jump"], reason=e["reason"],
                    t0=e.get("t0"), h=e.get("h"),
                    states=np.array(e["states"]) if "states" in e else None,
                    inputs=np.array(e["inputs"]) if "inputs" in e else None,
                ))
            elif kind == "event":
                events.append(e)
            elif kind == "end":
                status = e["status"]
            else:
                raise RecordError(f"{path}:{lineno}: unknown entry type {kind!r}")
    m = int(header["n_agents"])
    return TrialRecord(
        header=header,
        times=np.array(times),
        positions=np.array(pos).reshape(-1, m, 3) if times else np.zeros((0, m, 3)),
        speeds=np.array(speed).reshape(-1, m) if times else np.zeros((0, m)),
        alphas=np.array(alpha).reshape(-1, m) if times else np.zeros((0, m)),
        errors=np.array(err).reshape(-1, m) if times else np.zeros((0, m)),
        pairwise=(np.array(pd).reshape(len(times), -1)
                  if times else np.zeros((0, m * (m - 1) // 2))),
        plans=plans,
        events=events,
        status=status,
        path=str(path),
    )


def write_manifest(out_dir, scenario_doc: dict, trials: list[dict]) -> Path:
    path = Path(out_dir) / "manifest.json"
    doc = {"schema": MANIFEST_SCHEMA, "scenario": scenario_doc, "trials": trials}
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return path


def read_manifest(records_dir) -> dict:
    path = Path(records_dir) / "manifest.json"
    if not path.exists():
        raise RecordError(f"no manifest.json in {records_dir}")
    doc = json.loads(path.read_text())
    if doc.get("schema") != MANIFEST_SCHEMA:
        raise RecordError(f"{path}: unknown manifest schema {doc.get('schema')!r}")
    return doc


def load_records(records_dir) -> list[TrialRecord]:
    """All trial records listed by the manifest, in manifest order."""
    doc = read_manifest(records_dir)
    out = []
    for entry in doc["trials"]:
        out.append(read_record(Path(records_dir) / entry["file"]))
    return out
