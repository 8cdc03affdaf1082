"""Statistical bound on tube-violation probability from trial records.

Each replanning interval yields one binary sample X: starting from the
instant a plan becomes active, X = 1 iff the positional tracking error
against that plan reaches rho anywhere in the first planning interval
[0, T], or rho + eps anywhere in the second (T, 2T] (the second window
allows for the shift to the next committed plan). Sample means over many
intervals are turned into an upper confidence bound via Hoeffding's
inequality in its rearranged form

    E[X] <= mean(X) + sqrt(-ln(delta / 2) / (2 N)).

Samples are treated i.i.d. across intervals; an optional per-trial
aggregation mode (one sample per trial) is available for sensitivity
checks. Intervals truncated by the end of a trial are excluded, with the
exclusions counted and reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .records import TrialRecord


@dataclass
class TubeSpec:
    """Tube radius, replanning allowance, interval length, bound parameter."""

    rho: float
    eps: float
    T: float
    delta: float = 0.99

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("tube radius rho must be positive")
        if self.eps < 0.0:
            raise ValueError("replanning allowance eps must be nonnegative")
        if self.T <= 0.0:
            raise ValueError("planning interval T must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class ViolationSample:
    """One binary tube-violation observation."""

    value: int
    trial_id: str
    interval: int
    agent: int = 0

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError("violation sample must be 0 or 1")


@dataclass
class BoundReport:
    """Hoeffding upper bound on the violation probability."""

    n_samples: int
    sample_mean: float
    margin: float
    bound: float
    delta: float
    trial_ids: frozenset = field(default_factory=frozenset, repr=False)


def hoeffding_margin(n: int, delta: float) -> float:
    """sqrt(-ln(delta/2) / (2 N))."""
    if n < 1:
        raise ValueError("need at least one sample")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return float(np.sqrt(-np.log(delta / 2.0) / (2.0 * n)))


def hoeffding_bound(samples: list[ViolationSample], delta: float) -> BoundReport:
    """Upper-bound the violation probability from binary samples."""
    if not samples:
        raise ValueError("empty sample set")
    values = np.array([s.value for s in samples], dtype=float)
    mean = float(values.mean())
    margin = hoeffding_margin(len(values), delta)
    return BoundReport(
        n_samples=len(values),
        sample_mean=mean,
        margin=margin,
        bound=mean + margin,
        delta=delta,
        trial_ids=frozenset(s.trial_id for s in samples),
    )


def tube_violation(times, errors, t_start: float, spec: TubeSpec) -> int | None:
    """Binary violation over one 2T window starting at t_start.

    ``errors`` are positional error norms against the plan committed at
    the window start, sampled at the simulation rate. Returns None when
    the record does not span the full 2T window (end-of-trial
    truncation); callers count and report the exclusion.
    """
    times = np.asarray(times, dtype=float)
    errors = np.asarray(errors, dtype=float)
    rel = times - t_start
    tol = 1e-9
    if times.size == 0 or rel[-1] < 2.0 * spec.T - tol:
        return None
    first = (rel >= -tol) & (rel <= spec.T + tol)
    second = (rel > spec.T + tol) & (rel <= 2.0 * spec.T + tol)
    if np.any(errors[first] >= spec.rho):
        return 1
    if np.any(errors[second] >= spec.rho + spec.eps):
        return 1
    return 0


def collect_violation_samples(record: TrialRecord, spec: TubeSpec,
                              aggregate: str = "interval"):
    """Violation samples from every accepted plan window of a record.

    Errors are recomputed against each committed plan (not the running
    tracking error, which switches plans mid-window). Returns
    ``(samples, n_excluded)``.
    """
    if aggregate not in ("interval", "trial"):
        raise ValueError(f"unknown aggregation {aggregate!r}")
    trial_id = record.header.get("seed", record.path)
    samples: list[ViolationSample] = []
    excluded = 0
    for plan in record.plans:
        if not plan.accepted or plan.states is None:
            continue
        t0 = plan.t0
        sel = (record.times >= t0 - 1e-9) & (record.times <= t0 + 2.0 * spec.T + 1e-9)
        tt = record.times[sel]
        if tt.size == 0:
            excluded += 1
            continue
        pos = record.positions[sel, plan.agent, :]
        desired = plan.position_at(tt)
        err = np.linalg.norm(pos - desired, axis=1)
        x = tube_violation(tt, err, t0, spec)
        if x is None:
            excluded += 1
        else:
            samples.append(ViolationSample(value=x, trial_id=str(trial_id),
                                           interval=plan.interval, agent=plan.agent))
    if aggregate == "trial" and samples:
        worst = max(s.value for s in samples)
        samples = [ViolationSample(value=worst, trial_id=str(trial_id), interval=-1)]
    return samples, excluded


class Ecdf:
    """Empirical CDF: query(q) = fraction of samples <= q."""

    def __init__(self, samples):
        values = np.sort(np.asarray(samples, dtype=float))
        if values.size == 0:
            raise ValueError("eCDF needs at least one sample")
        self.values = values

    def query(self, q) -> float | np.ndarray:
        idx = np.searchsorted(self.values, q, side="right")
        out = idx / self.values.size
        return float(out) if np.isscalar(q) else out

    def __call__(self, q):
        return self.query(q)


def ecdf(samples) -> Ecdf:
    return Ecdf(samples)


def cross_validate(bound: BoundReport, holdout: list[ViolationSample]):
    """Check the bound against disjoint holdout samples.

    Returns ``(passed, holdout_mean)``; overlapping trial ids are an
    error because they would make the check circular.
    """
    if not holdout:
        raise ValueError("empty holdout set")
    holdout_ids = {s.trial_id for s in holdout}
    overlap = holdout_ids & set(bound.trial_ids)
    if overlap:
        raise ValueError(f"holdout shares trials with the bound: {sorted(overlap)}")
    mean = float(np.mean([s.value for s in holdout]))
    return mean <= bound.bound, mean


def derive_separation(spec: TubeSpec, body_radius: float) -> float:
    """Knot separation distance d = 2 (R + rho + eps)."""
    if body_radius <= 0.0:
        raise ValueError("body radius must be positive")
    return 2.0 * (body_radius + spec.rho + spec.eps)


def k_fold_cross_validation(samples: list[ViolationSample], delta: float,
                            n_folds: int = 5):
    """Split by trial id into folds; bound on each training set, check on
    the held-out fold. Returns a list of per-fold result dicts."""
    trial_ids = sorted({s.trial_id for s in samples})
    if len(trial_ids) < n_folds:
        raise ValueError(f"need at least {n_folds} distinct trials, got {len(trial_ids)}")
    folds = [set(trial_ids[i::n_folds]) for i in range(n_folds)]
    results = []
    for i, held in enumerate(folds):
        train = [s for s in samples if s.trial_id not in held]
        test = [s for s in samples if s.trial_id in held]
        bound = hoeffding_bound(train, delta)
        passed, holdout_mean = cross_validate(bound, test)
        results.append({
            "fold": i,
            "n_train": bound.n_samples,
            "n_holdout": len(test),
            "bound": bound.bound,
            "train_mean": bound.sample_mean,
            "holdout_mean": holdout_mean,
            "passed": passed,
        })
    return results


def verify_records(records: list[TrialRecord], spec: TubeSpec,
                   n_folds: int = 5, aggregate: str = "interval") -> dict:
    """Full verification pipeline over a batch of records."""
    samples: list[ViolationSample] = []
    excluded = 0
    for rec in records:
        s, ex = collect_violation_samples(rec, spec, aggregate=aggregate)
        samples.extend(s)
        excluded += ex
    if not samples:
        raise ValueError("no usable violation samples in the records")
    bound = hoeffding_bound(samples, spec.delta)
    report = {
        "rho": spec.rho,
        "eps": spec.eps,
        "T": spec.T,
        "delta": spec.delta,
        "n_samples": bound.n_samples,
        "n_excluded": excluded,
        "sample_mean": bound.sample_mean,
        "margin": bound.margin,
        "bound": bound.bound,
        "aggregate": aggregate,
    }
    trial_ids = {s.trial_id for s in samples}
    if len(trial_ids) >= n_folds and n_folds >= 2:
        folds = k_fold_cross_validation(samples, spec.delta, n_folds)
        report["folds"] = folds
        report["all_folds_passed"] = all(f["passed"] for f in folds)
    return report
