"""Primal log-barrier interior-point solver with trajectory recording.

Solves  max c.x  s.t.  A x <= b, x >= 0  by damped Newton ascent on the
barrier objective

    B(x; mu) = c.x + mu * (sum log(b - Ax) + sum log x),

shrinking mu geometrically by tau until it falls below epsilon. One trajectory
entry is recorded per mu value (the last iterate of that block), so trajectory
length equals the outer-iteration count. Every recorded iterate is strictly
feasible. After the final block, extra Newton steps at the terminal mu polish
the iterate until the KKT residual meets the certificate tolerance.

Two numerical notes. The barrier sign: subtracting the log terms under
maximization would have no interior maximum, so the standard additive form
above is used. The mu schedule: solve() multiplies the configured mu by
max(1, ||c||_inf), which makes the schedule dimensionless in the objective
units. Without this, demand-scale coefficients (~1e3) push the terminal
Newton systems beyond float64 conditioning and make the first barrier problem
nearly the raw LP; with it, trajectories descend gradually and the terminal
systems stay solvable. Recorded mu values are the effective ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .teprog import CanonicalLP

ALPHA_UNDERFLOW = 1e-14


class SolverError(RuntimeError):
    """Interior-point solve failed."""


class FactorizationError(SolverError):
    """The Newton system could not be factorized."""


class StalledProgressError(SolverError):
    """Line search underflowed; no progress possible."""


class CertificateError(SolverError):
    """The final iterate failed the KKT certificate."""


@dataclass(frozen=True)
class IPMConfig:
    mu0: float = 1.0
    tau: float = 0.2
    epsilon: float = 1e-8
    # Blocks exit early once the Newton decrement g.dx falls below
    # newton_tol * mu; 10 steps with that exit keeps every recorded iterate
    # well centered, which is what makes the recorded objectives monotone.
    max_newton_per_mu: int = 10
    boundary_fraction: float = 0.99
    newton_tol: float = 1e-4
    certificate_tol: float = 1e-6
    max_polish_steps: int = 80

    def __post_init__(self):
        if self.mu0 <= 0:
            raise ValueError("mu0 must be positive")
        if not (0 < self.tau < 1):
            raise ValueError("tau must be in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_newton_per_mu < 1:
            raise ValueError("max_newton_per_mu must be >= 1")
        if not (0 < self.boundary_fraction < 1):
            raise ValueError("boundary_fraction must be in (0, 1)")


@dataclass(frozen=True)
class KKTReport:
    stationarity: float  # ||c - A'lam + nu||_inf / max(1, ||c||_inf)
    complementarity: float  # max slack product, relative to objective scale
    primal: float  # relative primal infeasibility
    max_residual: float


@dataclass(frozen=True)
class IPMTrajectory:
    iterates: tuple  # of (x, mu, objective)
    final_x: np.ndarray
    kkt: KKTReport

    @property
    def iterations(self) -> int:
        return len(self.iterates)

    @property
    def final_objective(self) -> float:
        return self.iterates[-1][2]


def initial_point(lp: CanonicalLP) -> np.ndarray:
    """x0 = delta * 1 with delta = 0.5 * min_j b_j / rowsum(A_j); strictly
    feasible because every row of A is nonnegative with positive row sum."""
    rowsums = np.asarray(lp.a.sum(axis=1)).ravel()
    if np.any(rowsums <= 0):
        raise ValueError("every LP row must have a positive coefficient sum")
    delta = 0.5 * float(np.min(lp.b / rowsums))
    return np.full(lp.num_cols, delta)


def _barrier_value(c, a_dense, b, x, mu):
    s = b - a_dense @ x
    if np.any(s <= 0) or np.any(x <= 0):
        return -np.inf
    return float(c @ x + mu * (np.log(s).sum() + np.log(x).sum()))


def _newton_system(c, a_dense, b, x, mu):
    """Gradient of B and the ascent direction solving H dx = -g.

    H = -mu * M with M = A' diag(1/s^2) A + diag(1/x^2) positive definite, so
    dx = M^{-1} (g / mu). M spans ~16 orders of magnitude near the boundary,
    which defeats a direct Cholesky of the Gram matrix; instead R from a QR of
    the stacked matrix B = [A/s; diag(1/x)] is used (R'R = M, computed without
    squaring the condition number), with column equilibration.
    """
    s = b - a_dense @ x
    g = c - mu * (a_dense.T @ (1.0 / s)) + mu / x
    stacked = np.vstack([a_dense / s[:, None], np.diag(1.0 / x)])
    col = np.linalg.norm(stacked, axis=0)
    r = np.linalg.qr(stacked / col[None, :], mode="r")
    diag = np.abs(np.diag(r))
    if not np.all(np.isfinite(r)) or diag.min() <= diag.max() * 1e-300:
        raise FactorizationError(
            f"Newton system numerically singular (mu={mu:.3e}, "
            f"min |R_ii| = {diag.min():.3e})"
        )
    rhs = (g / mu) / col
    y = solve_triangular(r.T, rhs, lower=True)
    dx = solve_triangular(r, y, lower=False) / col
    return g, dx


def newton_direction(lp: CanonicalLP, x: np.ndarray, mu: float) -> np.ndarray:
    """Ascent direction of the barrier objective at a strictly feasible x."""
    a_dense = lp.a.toarray()
    _g, dx = _newton_system(lp.c, a_dense, lp.b, np.asarray(x, dtype=float), mu)
    return dx


def _max_step(a_dense, b, x, dx):
    """Largest alpha keeping b - A(x + alpha dx) > 0 and x + alpha dx > 0."""
    s = b - a_dense @ x
    ds = a_dense @ dx
    alpha = np.inf
    shrink = ds > 0
    if np.any(shrink):
        alpha = min(alpha, float(np.min(s[shrink] / ds[shrink])))
    neg = dx < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-x[neg] / dx[neg])))
    return alpha


def _line_search(c, a_dense, b, x, dx, mu, boundary_fraction):
    if not np.any(dx):
        return 1.0
    alpha = min(1.0, boundary_fraction * _max_step(a_dense, b, x, dx))
    base = _barrier_value(c, a_dense, b, x, mu)
    while alpha >= ALPHA_UNDERFLOW:
        if _barrier_value(c, a_dense, b, x + alpha * dx, mu) >= base:
            return alpha
        alpha *= 0.5
    raise StalledProgressError(
        f"line search underflowed below {ALPHA_UNDERFLOW} at mu={mu:.3e}"
    )


def line_search(
    lp: CanonicalLP,
    x: np.ndarray,
    dx: np.ndarray,
    boundary_fraction: float = 0.99,
    mu: float = 1.0,
) -> float:
    """Step size: alpha = min(1, boundary_fraction * alpha_max), then halved
    until the barrier objective at the given mu does not decrease. The
    resulting point stays strictly feasible."""
    a_dense = lp.a.toarray()
    return _line_search(
        lp.c, a_dense, lp.b, np.asarray(x, float), np.asarray(dx, float), mu, boundary_fraction
    )


def certify(lp: CanonicalLP, x: np.ndarray, mu: float) -> KKTReport:
    """KKT residuals from the barrier multiplier estimates lam = mu/s, nu = mu/x."""
    x = np.asarray(x, dtype=float)
    a_dense = lp.a.toarray()
    s = lp.b - a_dense @ x
    big = 1e30
    with np.errstate(divide="ignore"):
        lam = np.where(s > 0, mu / np.maximum(s, 1e-300), big)
        nu = np.where(x > 0, mu / np.maximum(x, 1e-300), big)
    lam = np.minimum(lam, big)
    nu = np.minimum(nu, big)
    c_scale = max(1.0, float(np.abs(lp.c).max()))
    stationarity = float(np.abs(lp.c - a_dense.T @ lam + nu).max()) / c_scale
    obj_scale = max(1.0, abs(float(lp.c @ x)))
    complementarity = float(max((lam * np.abs(s)).max(), (nu * np.abs(x)).max())) / obj_scale
    primal = float(
        max(
            np.max((a_dense @ x - lp.b) / np.maximum(lp.b, 1.0), initial=0.0),
            np.max(-x, initial=0.0),
        )
    )
    return KKTReport(
        stationarity,
        complementarity,
        primal,
        max(stationarity, complementarity, primal),
    )


def solve(lp: CanonicalLP, config: IPMConfig = IPMConfig()) -> IPMTrajectory:
    """Run the barrier method and record one strictly feasible iterate per mu."""
    c, b = lp.c, lp.b
    a_dense = lp.a.toarray()
    x = initial_point(lp)
    gamma = max(1.0, float(np.abs(c).max()))  # dimensionless mu schedule
    mu_rel = config.mu0
    iterates = []
    last_mu = mu_rel * gamma
    while mu_rel > config.epsilon:
        mu = mu_rel * gamma
        for _ in range(config.max_newton_per_mu):
            g, dx = _newton_system(c, a_dense, b, x, mu)
            decrement = float(g @ dx)
            if decrement <= config.newton_tol * mu:
                break
            try:
                alpha = _line_search(c, a_dense, b, x, dx, mu, config.boundary_fraction)
            except StalledProgressError:
                break  # at the numerical floor for this mu; certificate gates success
            x = x + alpha * dx
        iterates.append((x.copy(), mu, float(c @ x)))
        last_mu = mu
        mu_rel *= config.tau

    # Polish at the terminal mu until the certificate holds. Steps are
    # accepted only if they reduce the certified residual (Newton as a root
    # finder on the barrier gradient), which converges where the barrier
    # value itself is flat to rounding.
    report = certify(lp, x, last_mu)
    polish = 0
    while report.max_residual > config.certificate_tol:
        if polish >= config.max_polish_steps:
            break
        _g, dx = _newton_system(c, a_dense, b, x, last_mu)
        alpha = min(
            1.0, config.boundary_fraction * _max_step(a_dense, b, x, dx)
        )
        improved = False
        while alpha > 1e-16:
            cand = x + alpha * dx
            if np.all(cand > 0) and np.all(b - a_dense @ cand > 0):
                cand_report = certify(lp, cand, last_mu)
                if cand_report.max_residual < report.max_residual:
                    x, report, improved = cand, cand_report, True
                    break
            alpha *= 0.5
        if not improved:
            break
        polish += 1
    if report.max_residual > config.certificate_tol:
        raise CertificateError(
            f"KKT residual {report.max_residual:.3e} above tolerance "
            f"{config.certificate_tol:.1e} after {polish} polish steps "
            f"(stationarity={report.stationarity:.3e}, "
            f"complementarity={report.complementarity:.3e}, "
            f"primal={report.primal:.3e})"
        )
    iterates[-1] = (x.copy(), last_mu, float(c @ x))

    return IPMTrajectory(tuple(iterates), x.copy(), report)


# --- serialization ---------------------------------------------------------


def trajectory_to_dict(traj: IPMTrajectory) -> dict:
    return {
        "iterates": [
            {"x": x.tolist(), "mu": mu, "objective": obj} for x, mu, obj in traj.iterates
        ],
        "final_x": traj.final_x.tolist(),
        "kkt_residual": traj.kkt.max_residual,
        "kkt": {
            "stationarity": traj.kkt.stationarity,
            "complementarity": traj.kkt.complementarity,
            "primal": traj.kkt.primal,
        },
    }


def trajectory_from_dict(data: dict) -> IPMTrajectory:
    iterates = tuple(
        (np.array(entry["x"], dtype=float), float(entry["mu"]), float(entry["objective"]))
        for entry in data["iterates"]
    )
    kkt = data.get("kkt", {})
    report = KKTReport(
        float(kkt.get("stationarity", data["kkt_residual"])),
        float(kkt.get("complementarity", 0.0)),
        float(kkt.get("primal", 0.0)),
        float(data["kkt_residual"]),
    )
    return IPMTrajectory(iterates, np.array(data["final_x"], dtype=float), report)
