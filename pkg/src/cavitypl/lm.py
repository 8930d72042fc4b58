"""Damped Gauss-Newton (Levenberg-Marquardt) least-squares engine.

Used by the triplet/doublet spectral fits and the saturation-curve fit.
Supports box constraints (trial points are projected into the box),
parameters held fixed at supplied values, and an optional extra projection
hook applied to every trial point (used for the peak-ordering guard).

Step acceptance is strict: a trial point is accepted only when it lowers
the residual norm, so the sequence of accepted costs is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_LAMBDA_MAX = 1e13
_MAX_CONSECUTIVE_REJECTS = 24


@dataclass
class LMResult:
    params: np.ndarray
    cost: float
    covariance: np.ndarray | None
    converged: bool
    iterations: int
    cost_history: list
    gradient_norm: float
    message: str


def _covariance(jac, free, cost, n_res):
    """Full-size covariance with zero rows/columns for fixed parameters."""
    n_par = jac.shape[1]
    cov = np.zeros((n_par, n_par))
    jf = jac[:, free]
    k = jf.shape[1]
    if k == 0:
        return cov
    dof = max(n_res - k, 1)
    try:
        cov_free = np.linalg.pinv(jf.T @ jf) * (cost / dof)
    except np.linalg.LinAlgError:
        return None
    cov_free = 0.5 * (cov_free + cov_free.T)
    # pinv round-off can leave slightly negative diagonal entries
    d = np.diag(cov_free).copy()
    d[d < 0] = 0.0
    np.fill_diagonal(cov_free, d)
    cov[np.ix_(free, free)] = cov_free
    return cov


def levenberg_marquardt(
    residual,
    jacobian,
    p0,
    *,
    lower=None,
    upper=None,
    fixed_mask=None,
    max_iterations=200,
    rel_tolerance=1e-8,
    grad_tolerance=1e-10,
    step_tolerance=1e-12,
    damping_init=1e-3,
    project=None,
):
    """Minimize ``sum(residual(p)**2)`` starting from ``p0``.

    Parameters
    ----------
    residual, jacobian : callables
        ``residual(p)`` returns the residual vector, ``jacobian(p)`` its
        Jacobian (n_residuals x n_params).
    lower, upper : arrays or None
        Box constraints; trial points are clipped into the box.
    fixed_mask : bool array or None
        Parameters to hold fixed.  Their entries in the returned vector are
        bit-identical to ``p0`` and their covariance rows/columns are zero.
    project : callable or None
        Applied to each candidate point after clipping (must respect the
        box and may not move fixed parameters).

    Convergence rules, checked in order on accepted iterates: projected
    gradient max-norm below ``grad_tolerance`` (components pressing into an
    active bound are excluded); relative cost decrease below
    ``rel_tolerance`` on three consecutive accepted steps; relative step
    size below ``step_tolerance``; cost reaching the numerical noise floor
    (1e-28 of the initial cost).  When damping inflates without finding any
    improving step, the point is accepted as converged only if the residual
    is numerically orthogonal to the Jacobian columns (cosine test) or the
    decrease streak had already dropped below the relative tolerance;
    otherwise (and on budget exhaustion) ``converged=False`` with the best
    point found.
    """
    if max_iterations < 1:
        raise DomainError(f"max_iterations must be >= 1, got {max_iterations}")
    if not rel_tolerance > 0:
        raise DomainError(f"rel_tolerance must be > 0, got {rel_tolerance}")

    p = np.asarray(p0, dtype=float).copy()
    n_par = p.size
    lower = np.full(n_par, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n_par, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(lower >= upper):
        raise DomainError("each lower bound must be < the matching upper bound")
    fixed = (
        np.zeros(n_par, dtype=bool)
        if fixed_mask is None
        else np.asarray(fixed_mask, dtype=bool)
    )
    free = ~fixed
    fixed_values = p[fixed].copy()

    def make_candidate(values):
        cand = np.clip(values, lower, upper)
        cand[fixed] = fixed_values
        if project is not None:
            cand = project(cand)
            cand[fixed] = fixed_values
        return cand

    p = make_candidate(p)
    r = np.asarray(residual(p), dtype=float)
    if not np.all(np.isfinite(r)):
        raise DomainError("residual is not finite at the initial point")
    cost = float(r @ r)
    cost_floor = 1e-28 * cost
    history = [cost]

    lam = float(damping_init)
    small_streak = 0
    iterations = 0
    converged = False
    message = "iteration budget exhausted"
    grad_norm = np.inf

    def projected_gradient(grad):
        # zero out components that press into an active bound (KKT)
        proj = grad.copy()
        proj[(p <= lower) & (grad > 0)] = 0.0
        proj[(p >= upper) & (grad < 0)] = 0.0
        proj[fixed] = 0.0
        return proj

    for iterations in range(1, max_iterations + 1):
        jac = np.asarray(jacobian(p), dtype=float)
        grad = jac.T @ r
        proj = projected_gradient(grad)
        grad_norm = float(np.max(np.abs(proj))) if free.any() else 0.0
        if grad_norm < grad_tolerance:
            converged = True
            message = "gradient below tolerance"
            break
        if cost <= cost_floor:
            converged = True
            message = "cost at numerical noise floor"
            break

        jf = jac[:, free]
        a_mat = jf.T @ jf
        diag = np.diag(a_mat).copy()
        floor = max(diag.max(), 1.0) * 1e-14 if diag.size else 1.0
        diag[diag <= 0] = floor

        accepted = False
        rejects = 0
        while not accepted:
            m_mat = a_mat + lam * np.diag(diag)
            try:
                step = np.linalg.solve(m_mat, -grad[free])
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(m_mat, -grad[free], rcond=None)[0]
            trial = p.copy()
            trial[free] = p[free] + step
            trial = make_candidate(trial)
            r_trial = np.asarray(residual(trial), dtype=float)
            cost_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else np.inf

            if cost_trial < cost:
                accepted = True
                rel_decrease = (cost - cost_trial) / max(cost, 1e-300)
                step_rel = float(
                    np.max(np.abs(trial - p)) / max(1.0, np.max(np.abs(p)))
                )
                p, r, cost = trial, r_trial, cost_trial
                history.append(cost)
                lam = max(lam / 3.0, 1e-14)
                small_streak = small_streak + 1 if rel_decrease < rel_tolerance else 0
                if small_streak >= 3:
                    converged = True
                    message = "relative cost decrease below tolerance"
                elif step_rel < step_tolerance:
                    converged = True
                    message = "step size below tolerance"
                elif cost <= cost_floor:
                    converged = True
                    message = "cost at numerical noise floor"
            else:
                lam *= 4.0
                rejects += 1
                if lam > _LAMBDA_MAX or rejects > _MAX_CONSECUTIVE_REJECTS:
                    # No improving step exists.  Accept as a minimum if the
                    # residual is orthogonal to the Jacobian columns (scale
                    # free cosine test) or the last accepted decreases were
                    # already below the relative tolerance.
                    col_norms = np.linalg.norm(jf, axis=0)
                    denom = np.maximum(col_norms * max(np.sqrt(cost), 1e-150), 1e-300)
                    cosine = float(np.max(np.abs(grad[free]) / denom)) if free.any() else 0.0
                    if cosine < 1e-6 or small_streak >= 1:
                        converged = True
                        message = "stalled at a minimum (no improving step)"
                    else:
                        message = "stalled: no acceptable step found"
                    break
        if converged or not accepted:
            break

    # Covariance at the final point (recompute the Jacobian there).
    covariance = None
    if converged:
        jac = np.asarray(jacobian(p), dtype=float)
        covariance = _covariance(jac, free, cost, jac.shape[0])

    return LMResult(
        params=p,
        cost=cost,
        covariance=covariance,
        converged=converged,
        iterations=iterations,
        cost_history=history,
        gradient_norm=grad_norm,
        message=message,
    )
