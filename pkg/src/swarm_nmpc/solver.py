"""Augmented-Lagrangian solver for the trajectory NLP.

Simpson defects (equalities) and obstacle separations (inequalities)
enter an augmented Lagrangian; box bounds on states, inputs, and the
step are handled by projection inside a limited-memory quasi-Newton
inner minimizer (L-BFGS-B). Multiplier estimates are updated between
inner solves; the penalty weight grows only when feasibility stalls.

The returned report carries the final multiplier estimates so
receding-horizon re-solves can warm start both the iterate and the
multipliers; a re-solve of an already-converged problem then terminates
in one outer iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds as ScipyBounds
from scipy.optimize import minimize

from .dynamics import GimbalLockError
from .trajectory import KnotTrajectory
from .transcription import NlpProblem


class SolverError(RuntimeError):
    """Dynamics blew up (NaN / gimbal lock) inside the optimizer."""


def _cost_hessian_diag(problem: NlpProblem) -> np.ndarray:
    """Diagonal of the (constant) cost Hessian in decision coordinates."""
    n1 = problem.N + 1
    dq = np.tile(2.0 * np.diag(problem.weights.Q), (n1, 1))
    dq[-1] = 2.0 * np.diag(problem.weights.Q_f)
    dr = np.tile(2.0 * np.diag(problem.weights.R), (n1, 1))
    dr[-1] = 0.0
    return np.concatenate([dq.ravel(), dr.ravel(), [0.0]])


def _preconditioner(problem: NlpProblem, z: np.ndarray, mu: float,
                    cost_diag: np.ndarray) -> np.ndarray:
    """Per-variable scale 1/sqrt(diag H) of the augmented Lagrangian.

    The input columns barely touch the Simpson defects (only through the
    h/6 quadrature weights and the hinge-rate aerodynamics), so without
    this the inner quasi-Newton iteration sees a diagonal spread of
    several hundred and stalls.
    """
    J = problem.defect_jacobian_dense(z)
    diag = cost_diag + mu * np.einsum("ij,ij->j", J, J)
    gvals, unit = problem.obstacle_values(z)
    if gvals.size:
        # Obstacle rows touch knot positions with unit-vector entries.
        col = np.zeros(problem.n_vars)
        w = np.sum(unit * unit, axis=1)  # (N+1, 3)
        g_x = np.zeros((problem.N + 1, 16))
        g_x[:, 0:3] = w
        col[:problem.n_states_flat] = g_x.ravel()
        diag = diag + mu * col
    return 1.0 / np.sqrt(np.clip(diag, 1e-2, 1e10))


@dataclass
class SolverConfig:
    """Tolerances and budgets for one trajectory solve."""

    feas_tol: float = 1e-4
    stat_tol: float = 1e-3
    max_outer: int = 20
    max_inner: int = 25
    max_inner_polish: int = 40
    mu0: float = 100.0
    mu_growth: float = 8.0
    mu_max: float = 1e6
    wall_budget_s: float | None = 5.0
    inner_method: str = "newton"   # "newton" (Gauss-Newton CG) or "lbfgsb"


@dataclass
class SolveReport:
    """Outcome diagnostics of one solve."""

    converged: bool
    iterations: int
    max_violation: float
    cost: float
    wall_time: float
    stationarity: float = float("nan")
    n_evals: int = 0
    message: str = ""
    multipliers: tuple | None = field(default=None, repr=False)


def _al_value_grad(problem: NlpProblem, z, lam_eq, lam_in, mu):
    """Augmented Lagrangian value and gradient at z."""
    defects, Dxk, Dxk1, Duk, Duk1, Dh = problem.defect_blocks(z)
    c = defects.ravel()
    val = problem.cost(z) + float(lam_eq @ c) + 0.5 * mu * float(c @ c)
    w_eq = (lam_eq + mu * c).reshape(problem.N, -1)
    grad = problem.cost_gradient(z)
    grad += problem.scatter_defect_gradient(w_eq, Dxk, Dxk1, Duk, Duk1, Dh)

    gvals, unit = problem.obstacle_values(z)
    if gvals.size:
        s = lam_in - mu * gvals
        act = np.maximum(s, 0.0)
        val += (float(act @ act) - float(lam_in @ lam_in)) / (2.0 * mu)
        grad += problem.scatter_obstacle_gradient(-act, unit)
    return val, grad, c, gvals


def _al_value_only(problem: NlpProblem, z, lam_eq, lam_in, mu) -> float:
    """Augmented Lagrangian value without Jacobian assembly (line search)."""
    c = problem.defects(z).ravel()
    val = problem.cost(z) + float(lam_eq @ c) + 0.5 * mu * float(c @ c)
    gvals, _ = problem.obstacle_values(z)
    if gvals.size:
        act = np.maximum(lam_in - mu * gvals, 0.0)
        val += (float(act @ act) - float(lam_in @ lam_in)) / (2.0 * mu)
    return val


class _GaussNewtonModel:
    """Hessian-vector products of the AL in its Gauss-Newton approximation.

    H v = H_cost v + mu J_eq^T (J_eq v) + mu J_act^T (J_act v)

    built from the defect Jacobian blocks and the active obstacle rows at
    the current iterate; constraint curvature (the lambda + mu c term) is
    dropped, which is the standard Gauss-Newton choice and exact at
    feasibility.
    """

    def __init__(self, problem: NlpProblem, blocks, unit, active, mu: float):
        self.problem = problem
        self.Dxk, self.Dxk1, self.Duk, self.Duk1, self.Dh = blocks
        self.unit = unit            # (N+1, L, 3) or None
        self.active = active        # (N+1, L) bool or None
        self.mu = mu
        p = problem
        n1 = p.N + 1
        self._sx = slice(0, n1 * 16)
        self._su = slice(n1 * 16, n1 * 16 + n1 * 4)

    def jac_vec(self, v: np.ndarray) -> np.ndarray:
        p = self.problem
        vx = v[self._sx].reshape(p.N + 1, 16)
        vu = v[self._su].reshape(p.N + 1, 4)
        vh = v[-1]
        w = np.einsum("kij,kj->ki", self.Dxk, vx[:-1])
        w += np.einsum("kij,kj->ki", self.Dxk1, vx[1:])
        w += np.einsum("kij,kj->ki", self.Duk, vu[:-1])
        w += np.einsum("kij,kj->ki", self.Duk1, vu[1:])
        w += vh * self.Dh
        return w

    def matvec(self, v: np.ndarray) -> np.ndarray:
        p = self.problem
        vx = v[self._sx].reshape(p.N + 1, 16)
        vu = v[self._su].reshape(p.N + 1, 4)
        # Cost Hessian (block diagonal).
        hx = np.zeros_like(vx)
        hx[:-1] = 2.0 * vx[:-1] @ p.weights.Q.T
        hx[-1] = 2.0 * vx[-1] @ p.weights.Q_f.T
        hu = np.zeros_like(vu)
        hu[:-1] = 2.0 * vu[:-1] @ p.weights.R.T
        out = np.concatenate([hx.ravel(), hu.ravel(), [0.0]])
        # Defect Gauss-Newton term.
        w = self.jac_vec(v)
        out += self.mu * p.scatter_defect_gradient(
            w, self.Dxk, self.Dxk1, self.Duk, self.Duk1, self.Dh)
        # Active obstacle rows.
        if self.unit is not None and np.any(self.active):
            vpos = vx[:, 0:3]
            s = np.einsum("kli,ki->kl", self.unit, vpos)
            s = np.where(self.active, s, 0.0)
            gpos = np.einsum("kl,kli->ki", s, self.unit)
            add = np.zeros_like(vx)
            add[:, 0:3] = self.mu * gpos
            out[self._sx] += add.ravel()
        return out


def _minimize_newton(problem: NlpProblem, z0, lo, hi, lam_eq, lam_in, mu,
                     gtol: float, max_newton: int, diag_scale):
    """Projected inexact Gauss-Newton descent on the AL inside the box.

    Free variables (not pinned at an active bound by the gradient) get a
    Jacobi-preconditioned truncated-CG step; a projected Armijo
    backtracking line search globalizes it. Returns (z, n_evals, pg).
    """
    z = np.clip(z0, lo, hi)
    n_evals = 0
    pg = np.inf
    for _ in range(max_newton):
        defects, Dxk, Dxk1, Duk, Duk1, Dh = problem.defect_blocks(z)
        n_evals += 1
        c = defects.ravel()
        val = problem.cost(z) + float(lam_eq @ c) + 0.5 * mu * float(c @ c)
        w_eq = (lam_eq + mu * c).reshape(problem.N, -1)
        grad = problem.cost_gradient(z)
        grad += problem.scatter_defect_gradient(w_eq, Dxk, Dxk1, Duk, Duk1, Dh)
        gvals, unit = problem.obstacle_values(z)
        active = None
        if gvals.size:
            s_in = lam_in - mu * gvals
            act = np.maximum(s_in, 0.0)
            val += (float(act @ act) - float(lam_in @ lam_in)) / (2.0 * mu)
            grad += problem.scatter_obstacle_gradient(-act, unit)
            active = (s_in > 0.0).reshape(problem.N + 1, -1)

        pg = float(np.max(np.abs(z - np.clip(z - grad, lo, hi))))
        if pg <= gtol * (1.0 + abs(val)):
            break

        model = _GaussNewtonModel(problem, (Dxk, Dxk1, Duk, Duk1, Dh), unit, active, mu)
        at_lo = (z <= lo + 1e-12) & (grad > 0.0)
        at_hi = (z >= hi - 1e-12) & (grad < 0.0)
        free = ~(at_lo | at_hi)
        rhs = np.where(free, -grad, 0.0)

        # Jacobi-preconditioned truncated CG in the free subspace.
        precond = np.where(free, diag_scale, 0.0)
        x = np.zeros_like(z)
        r = rhs.copy()
        y = precond * r
        p = y.copy()
        rz = float(r @ y)
        tol2 = max(0.01, min(0.3, np.sqrt(max(np.linalg.norm(rhs), 1e-30)))) ** 2 \
            * float(rhs @ rhs)
        for _cg in range(80):
            if float(r @ r) <= tol2:
                break
            Hp = model.matvec(p)
            Hp = np.where(free, Hp, 0.0)
            pHp = float(p @ Hp)
            if pHp <= 1e-14:
                if float(x @ x) == 0.0:
                    x = y  # preconditioned steepest descent fallback
                break
            alpha = rz / pHp
            x += alpha * p
            r -= alpha * Hp
            y = precond * r
            rz_new = float(r @ y)
            p = y + (rz_new / rz) * p
            rz = rz_new
        step = x if float(x @ grad) < 0.0 else np.where(free, -grad * diag_scale, 0.0)

        # Projected Armijo backtracking.
        alpha = 1.0
        accepted = False
        gdotd = float(grad @ step)
        for _ls in range(12):
            z_trial = np.clip(z + alpha * step, lo, hi)
            try:
                val_trial = _al_value_only(problem, z_trial, lam_eq, lam_in, mu)
            except GimbalLockError:
                alpha *= 0.5
                continue
            n_evals += 1
            pred = gdotd * alpha if gdotd < 0 else -float(np.sum((z_trial - z) ** 2))
            if val_trial <= val + 1e-4 * min(pred, 0.0) and np.isfinite(val_trial):
                z = z_trial
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    return z, n_evals, pg


def _violation(c: np.ndarray, gvals: np.ndarray) -> float:
    v = float(np.max(np.abs(c))) if c.size else 0.0
    if gvals.size:
        v = max(v, float(np.max(np.maximum(-gvals, 0.0))))
    return v


def solve(problem: NlpProblem, warm_start: KnotTrajectory | None = None,
          config: SolverConfig | None = None,
          multipliers: tuple | None = None) -> tuple[KnotTrajectory, SolveReport]:
    """Solve the trajectory NLP.

    Non-convergence (budget exhaustion) returns the best iterate with
    ``converged=False``; dynamics blow-ups raise :class:`SolverError`.
    """
    cfg = config or SolverConfig()
    t_start = time.perf_counter()

    lo, hi = problem.variable_bounds()
    cost_diag = _cost_hessian_diag(problem)
    if warm_start is not None:
        z = problem.warm_start_vector(warm_start)
    else:
        z = problem.initial_guess()

    lam_eq = np.zeros(problem.n_defects)
    lam_in = np.zeros(problem.n_obstacle)
    if multipliers is not None:
        m_eq, m_in = multipliers
        if m_eq is not None and np.shape(m_eq) == lam_eq.shape:
            lam_eq = np.asarray(m_eq, dtype=float).copy()
        if m_in is not None and np.shape(m_in) == lam_in.shape:
            lam_in = np.asarray(m_in, dtype=float).copy()
    mu = cfg.mu0

    n_evals = 0
    scale = np.ones(problem.n_vars)

    def objective(yy):
        nonlocal n_evals
        n_evals += 1
        try:
            val, grad, _, _ = _al_value_grad(problem, yy * scale, lam_eq, lam_in, mu)
        except GimbalLockError as exc:
            raise SolverError(f"dynamics singular inside solve: {exc}") from exc
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            raise SolverError("non-finite value in dynamics during solve")
        return val, grad * scale

    best = None  # (violation, cost, z, lam_eq, lam_in)
    prev_viol = np.inf
    pg = np.inf
    viol = np.inf
    outer_done = 0
    polish = False
    message = "iteration budget exhausted"

    for outer in range(1, cfg.max_outer + 1):
        try:
            scale = _preconditioner(problem, z, mu, cost_diag)
        except GimbalLockError as exc:
            raise SolverError(f"dynamics singular inside solve: {exc}") from exc
        inner_cap = cfg.max_inner_polish if polish else cfg.max_inner
        if cfg.inner_method == "newton":
            try:
                z, used, _ = _minimize_newton(problem, z, lo, hi, lam_eq, lam_in, mu,
                                              gtol=cfg.stat_tol * 0.3,
                                              max_newton=inner_cap,
                                              diag_scale=scale * scale)
            except GimbalLockError as exc:
                raise SolverError(f"dynamics singular inside solve: {exc}") from exc
            n_evals += used
        else:
            box = ScipyBounds(lo / scale, hi / scale)
            res = minimize(objective, z / scale, jac=True, method="L-BFGS-B", bounds=box,
                           options={"maxiter": inner_cap * 6,
                                    "ftol": 1e-14,
                                    "gtol": cfg.stat_tol * 0.3,
                                    "maxcor": 20})
            z = res.x * scale
        outer_done = outer

        val, grad, c, gvals = _al_value_grad(problem, z, lam_eq, lam_in, mu)
        viol = _violation(c, gvals)
        g_y = grad * scale
        # Scale-free stationarity: projected-gradient step relative to the
        # objective magnitude, in preconditioned coordinates.
        y = z / scale
        pg = float(np.max(np.abs(y - np.clip(y - g_y, lo / scale, hi / scale))))
        pg /= 1.0 + abs(val)
        cost = problem.cost(z)
        if best is None or (viol, cost) < best[:2]:
            best = (viol, cost, z.copy(), lam_eq.copy(), lam_in.copy())

        # First-order multiplier update (the gradient of the augmented
        # Lagrangian at the inner solution is the Lagrangian gradient at
        # these updated estimates; inexact inner solves still contract).
        lam_eq = lam_eq + mu * c
        if gvals.size:
            lam_in = np.maximum(0.0, lam_in - mu * gvals)

        if viol <= cfg.feas_tol and pg <= cfg.stat_tol:
            message = "converged"
            break

        # Feasible but not yet stationary: grant the inner solver a longer
        # polish budget instead of stiffening the penalty further.
        polish = viol <= cfg.feas_tol
        if not polish and viol > 0.3 * prev_viol:
            mu = min(mu * cfg.mu_growth, cfg.mu_max)
        prev_viol = min(prev_viol, viol)

        if cfg.wall_budget_s is not None and time.perf_counter() - t_start > cfg.wall_budget_s:
            message = "wall budget exhausted"
            break

    converged = message == "converged"
    if not converged and best is not None and best[0] < viol:
        viol, _, z, lam_eq, lam_in = best[0], best[1], best[2], best[3], best[4]

    states, inputs, h = problem.split(z)
    traj = KnotTrajectory(states=states.copy(), inputs=inputs.copy(), h=h,
                          t0=problem.t0, agent_id=problem.agent_id)
    report = SolveReport(
        converged=converged,
        iterations=outer_done,
        max_violation=viol,
        cost=problem.cost(z),
        wall_time=time.perf_counter() - t_start,
        stationarity=pg,
        n_evals=n_evals,
        message=message,
        multipliers=(lam_eq.copy(), lam_in.copy()),
    )
    return traj, report
