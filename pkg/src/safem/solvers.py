"""
Iterative solvers used both as "exact" solvers and as smoothers.

Every routine returns ``(x, SolveReport)`` and counts the matrix-vector
products it performs, which is the machine independent cost measure used
when comparing AFEM and S-AFEM. Two modes are supported throughout:

* ``steps=ell`` -- exactly ``ell`` iterations, no convergence test;
* ``tol=tau``  -- iterate until the true residual ``||b - A x||_2 <= tau``.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SolverBreakdown",
    "SolveReport",
    "RichardsonConfig",
    "richardson",
    "cg",
    "gmres",
    "estimate_spectral_radius",
    "jacobi_apply",
    "jacobi",
]


class SolverBreakdown(ArithmeticError):
    """Raised when a Krylov method hits a zero or negative curvature direction."""


@dataclass
class SolveReport:
    iterations: int
    final_residual_norm: float | None
    converged: bool
    matvecs: int = 0
    stagnated: bool = False


@dataclass(frozen=True)
class RichardsonConfig:
    omega: float
    steps: int

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")


def _check(A, b, x0):
    n = A.shape[0]
    if A.shape != (n, n) or np.shape(b) != (n,) or np.shape(x0) != (n,):
        raise ValueError(f"dimension mismatch: A {A.shape}, b {np.shape(b)}, x0 {np.shape(x0)}")
    return np.asarray(b, dtype=float), np.array(x0, dtype=float)


def _mode(steps, tol):
    if (steps is None) == (tol is None):
        raise ValueError("give exactly one of steps= or tol=")
    if steps is not None and steps < 0:
        raise ValueError("steps must be >= 0")


def richardson(A, b, x0, config, with_residual=False):
    """``x <- x + omega (b - A x)`` repeated ``config.steps`` times.

    Uses exactly ``steps`` products with ``A``. With ``with_residual`` the
    final residual norm is evaluated too, at the cost of one more product.
    """
    b, x = _check(A, b, x0)
    for _ in range(config.steps):
        x += config.omega * (b - A @ x)
    matvecs = config.steps
    res = None
    if with_residual:
        res = float(np.linalg.norm(b - A @ x))
        matvecs += 1
    return x, SolveReport(config.steps, res, False, matvecs)


def jacobi_apply(A, r):
    """Componentwise ``r_i / A_ii``."""
    d = A.diagonal()
    if np.any(d == 0):
        raise ValueError("Jacobi preconditioner needs a nonzero diagonal")
    return np.asarray(r) / d


def jacobi(A):
    """Jacobi preconditioner as a callable ``r -> D^{-1} r``."""
    d = A.diagonal()
    if np.any(d == 0):
        raise ValueError("Jacobi preconditioner needs a nonzero diagonal")
    inv = 1.0 / d
    return lambda r: inv * r


def cg(A, b, x0, preconditioner=None, steps=None, tol=None, max_iter=None):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    A : sparse or dense SPD matrix
    b, x0 : vectors
    preconditioner : callable ``r -> M^{-1} r`` or None
    steps : int, fixed number of iterations (smoothing mode)
    tol : float, absolute tolerance on ``||b - A x||_2`` (solver mode)
    max_iter : int, iteration cap in solver mode (default ``10 n + 100``)
    """
    _mode(steps, tol)
    b, x = _check(A, b, x0)
    M = preconditioner if preconditioner is not None else (lambda r: r)
    n = len(b)
    limit = steps if steps is not None else (max_iter or 10 * n + 100)

    r = b - A @ x
    matvecs = 1
    rnorm = float(np.linalg.norm(r))
    if tol is not None and rnorm <= tol:
        return x, SolveReport(0, rnorm, True, matvecs)
    z = M(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    best_true = rnorm
    restarts_without_gain = 0
    while it < limit:
        if rnorm == 0.0:
            break
        Ap = A @ p
        matvecs += 1
        pAp = float(p @ Ap)
        if not pAp > 0:
            raise SolverBreakdown(f"CG breakdown at iteration {it}: p.Ap = {pAp:.3e}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rnorm = float(np.linalg.norm(r))
        if tol is not None and rnorm <= tol:
            # confirm with the true residual; restart from it if recursion drifted
            r = b - A @ x
            matvecs += 1
            rnorm = float(np.linalg.norm(r))
            if rnorm <= tol:
                return x, SolveReport(it, rnorm, True, matvecs)
            if rnorm < 0.5 * best_true:
                best_true, restarts_without_gain = rnorm, 0
            else:
                restarts_without_gain += 1
                if restarts_without_gain >= 5:
                    return x, SolveReport(it, rnorm, False, matvecs, stagnated=True)
            z = M(r)
            p = z.copy()
            rz = float(r @ z)
            continue
        z = M(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    converged = rnorm == 0.0 or (tol is not None and rnorm <= tol)
    return x, SolveReport(it, rnorm, converged, matvecs)


def gmres(A, b, x0, restart=30, preconditioner=None, steps=None, tol=None, max_iter=None):
    """Restarted GMRES(m) with optional right preconditioning.

    In ``steps`` mode the count is the total number of Krylov steps across
    restarts. Within a restart cycle the residual norm is nonincreasing.
    """
    _mode(steps, tol)
    b, x = _check(A, b, x0)
    if restart < 1:
        raise ValueError("restart must be >= 1")
    M = preconditioner if preconditioner is not None else (lambda r: r)
    n = len(b)
    limit = steps if steps is not None else (max_iter or 10 * n + 100)
    m = restart

    r = b - A @ x
    matvecs = 1
    beta = float(np.linalg.norm(r))
    total = 0
    stagnated = False
    while True:
        if beta == 0.0 or (tol is not None and beta <= tol) or total >= limit:
            break
        cycle_start = beta
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(min(m, limit - total)):
            Z[j] = M(V[j])
            w = A @ Z[j]
            matvecs += 1
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            happy = H[j + 1, j] <= 1e-14 * max(np.abs(H[: j + 1, j]).max(), 1e-300)
            if not happy:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                raise SolverBreakdown(f"GMRES breakdown at step {total + j}")
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_done = j + 1
            if happy or (tol is not None and abs(g[j + 1]) <= tol):
                break
        y = np.linalg.solve(np.triu(H[:j_done, :j_done]), g[:j_done])
        x += y @ Z[:j_done]
        total += j_done
        r = b - A @ x
        matvecs += 1
        beta = float(np.linalg.norm(r))
        if tol is not None and beta > tol and beta >= cycle_start * (1 - 1e-12):
            stagnated = True
            break
    converged = beta == 0.0 or (tol is not None and beta <= tol)
    return x, SolveReport(total, beta, converged, matvecs, stagnated)


def estimate_spectral_radius(A, power_iterations=20, seed=0):
    """Rayleigh quotient after ``power_iterations`` power steps.

    The start vector is drawn from a fixed seed so results are reproducible.
    Costs ``power_iterations + 1`` products with ``A``. Returns 0 for the
    zero matrix; callers must reject that.
    """
    n = A.shape[0]
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(power_iterations):
        y = A @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
    return float(x @ (A @ x)) / float(x @ x)
