"""Damped least squares (Levenberg-Marquardt) and finite-difference Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FitFailure


@dataclass
class FitResult:
    parameters: dict
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    message: str = ""
    extra: dict = field(default_factory=dict)

    def std_errors(self) -> dict:
        diag = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.parameters, diag))

    def as_dict(self):
        return {
            "parameters": {k: float(v) for k, v in self.parameters.items()},
            "std_errors": {k: float(v) for k, v in self.std_errors().items()},
            "covariance": np.asarray(self.covariance, dtype=float).tolist(),
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "message": self.message,
        }


def finite_difference_jacobian(objective, at, step=1e-6):
    """Central-difference Jacobian of ``objective`` at ``at``.

    ``step`` is relative to ``max(|x_j|, 1)`` for each coordinate.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    x = np.atleast_1d(np.asarray(at, dtype=float))
    f0 = np.atleast_1d(np.asarray(objective(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = step * max(abs(x[j]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fp = np.atleast_1d(np.asarray(objective(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(objective(xm), dtype=float))
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac


def levenberg_marquardt(
    residuals,
    x0,
    jacobian=None,
    *,
    names=None,
    max_iter=200,
    xtol=1e-10,
    damping=1e-3,
    damping_up=10.0,
    damping_down=10.0,
    bounds=None,
):
    """Minimise ``sum(residuals(x)**2)``.

    The damping term is scaled by diag(J^T J) (Marquardt). It is multiplied by
    ``damping_up`` after a rejected step and divided by ``damping_down`` after
    an accepted one. Stops once ``|dx| <= xtol * |x|`` (Euclidean norms, so
    parameters should be scaled to comparable magnitudes). The returned
    covariance is ``inv(J^T J)`` at the solution, which is the parameter
    covariance when residuals are already divided by their standard errors.

    ``bounds`` is an optional ``(lower, upper)`` pair; trial steps are clipped
    into it.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    names = list(names) if names is not None else [f"p{i}" for i in range(x.size)]
    if jacobian is None:
        jacobian = lambda p: finite_difference_jacobian(residuals, p)  # noqa: E731
    lo, hi = (None, None) if bounds is None else (np.asarray(bounds[0], float), np.asarray(bounds[1], float))

    r = np.asarray(residuals(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise FitFailure("non-finite residuals at the initial guess", {"x0": x.tolist()})
    cost = r @ r
    lam = damping
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        J = np.asarray(jacobian(x), dtype=float).reshape(r.size, x.size)
        g = J.T @ r
        A = J.T @ J
        scale = np.diag(A).copy()
        scale[scale <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= damping_up
                continue
            x_new = x + step
            if lo is not None:
                x_new = np.clip(x_new, lo, hi)
            r_new = np.asarray(residuals(x_new), dtype=float)
            cost_new = r_new @ r_new if np.all(np.isfinite(r_new)) else np.inf
            if cost_new <= cost:
                accepted = True
                break
            lam *= damping_up
        if not accepted:
            converged = True
            message = "no further decrease possible"
            break
        dx = x_new - x
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / damping_down, 1e-15)
        if np.linalg.norm(dx) <= xtol * np.linalg.norm(x):
            converged = True
            message = "relative parameter change below xtol"
            break

    J = np.asarray(jacobian(x), dtype=float).reshape(r.size, x.size)
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((x.size, x.size), np.inf)
    cov = 0.5 * (cov + cov.T)
    return FitResult(
        parameters=dict(zip(names, x)),
        covariance=cov,
        residual_norm=float(np.sqrt(cost)),
        converged=converged,
        iterations=it,
        message=message,
    )
