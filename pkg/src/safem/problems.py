"""
Benchmark problems with closed-form solutions.

Each source term is derived by hand from its exact solution and checked
against central finite differences of ``-Laplace(u) + beta . grad(u)``
when the problem is built.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import create_lshape_mesh, create_unit_square_mesh, refine

__all__ = [
    "ProblemSpec",
    "problem_peak2d",
    "problem_corner2d",
    "problem_drift2d",
    "problem_sine2d",
    "get_problem",
    "check_source",
]


@dataclass
class ProblemSpec:
    name: str
    build_mesh: Callable
    beta: tuple
    exact: Callable
    gradient: Callable
    source: Callable
    boundary: Callable
    initial_subdivisions: int
    singular_point: tuple | None = None
    domain_area: float = 1.0
    sample_box: tuple = ((0.0, 1.0), (0.0, 1.0))
    inside: Callable = field(default=lambda x, y: np.ones_like(x, dtype=bool))

    def initial_mesh(self):
        return self.build_mesh(self.initial_subdivisions)


def check_source(problem, n_points=100, step=1e-5, tol=1e-4, seed=12345):
    """Largest relative mismatch between ``f`` and finite differences of the exact solution.

    Also compares the analytic gradient with central differences. Raises
    ``ValueError`` when either exceeds ``tol``.
    """
    rng = np.random.default_rng(seed)
    (x0, x1), (y0, y1) = problem.sample_box
    pts = np.empty((0, 2))
    while len(pts) < n_points:
        cand = np.column_stack([rng.uniform(x0 + 1e-3, x1 - 1e-3, 4 * n_points), rng.uniform(y0 + 1e-3, y1 - 1e-3, 4 * n_points)])
        ok = problem.inside(cand[:, 0], cand[:, 1])
        if problem.singular_point is not None:
            ok &= np.hypot(*(cand - problem.singular_point).T) > 1e-2
        pts = np.vstack([pts, cand[ok]])
    x, y = pts[:n_points].T
    u = problem.exact
    e = step
    ux = (u(x + e, y) - u(x - e, y)) / (2 * e)
    uy = (u(x, y + e) - u(x, y - e)) / (2 * e)
    lap = (u(x + e, y) + u(x - e, y) + u(x, y + e) + u(x, y - e) - 4 * u(x, y)) / e**2
    bx, by = problem.beta
    fd = -lap + bx * ux + by * uy
    f = np.broadcast_to(problem.source(x, y), x.shape)
    src_err = np.max(np.abs(fd - f) / np.maximum(1.0, np.abs(f)))
    g = problem.gradient(x, y)
    grad_err = np.max(np.abs(np.stack([ux, uy], axis=-1) - g) / np.maximum(1.0, np.abs(g)))
    if src_err > tol or grad_err > tol:
        raise ValueError(
            f"{problem.name}: closed forms disagree with finite differences "
            f"(source {src_err:.2e}, gradient {grad_err:.2e})"
        )
    return max(src_err, grad_err)


# -- peak: u = x(x-1) y(y-1) exp(-100((x-0.5)^2 + (y-0.117)^2)) --------------

_PX, _PY, _PA = 0.5, 0.117, 100.0


def _peak_factor(s, c):
    """p(s) = s(s-1) exp(-a (s-c)^2) and its first two derivatives."""
    e = np.exp(-_PA * (s - c) ** 2)
    q, dq, d2q = s * (s - 1), 2 * s - 1, 2.0
    k = -2 * _PA * (s - c)
    p = q * e
    dp = (dq + q * k) * e
    d2p = (d2q + 2 * dq * k + q * (k**2 - 2 * _PA)) * e
    return p, dp, d2p


def _peak_exact(x, y):
    return _peak_factor(x, _PX)[0] * _peak_factor(y, _PY)[0]


def _peak_gradient(x, y):
    px, dpx, _ = _peak_factor(x, _PX)
    py, dpy, _ = _peak_factor(y, _PY)
    return np.stack([dpx * py, px * dpy], axis=-1)


def _peak_source(x, y):
    px, _, d2px = _peak_factor(x, _PX)
    py, _, d2py = _peak_factor(y, _PY)
    return -(d2px * py + px * d2py)


def problem_peak2d(initial_subdivisions=4):
    p = ProblemSpec(
        name="peak2d",
        build_mesh=create_unit_square_mesh,
        beta=(0.0, 0.0),
        exact=_peak_exact,
        gradient=_peak_gradient,
        source=_peak_source,
        boundary=lambda x, y: np.zeros_like(x),
        initial_subdivisions=initial_subdivisions,
    )
    check_source(p)
    return p


# -- L-shaped domain: u = r^(2/3) sin((2 theta + 5 pi) / 3) ------------------


def _corner_polar(x, y):
    theta = np.arctan2(y, x)
    theta = np.where(theta < np.pi / 2, theta + 2 * np.pi, theta)  # into [pi/2, 2pi]
    return np.hypot(x, y), theta


def _corner_exact(x, y):
    r, theta = _corner_polar(x, y)
    return r ** (2.0 / 3.0) * np.sin((2 * theta + 5 * np.pi) / 3)


def _corner_gradient(x, y):
    r, theta = _corner_polar(x, y)
    phi = (2 * theta + 5 * np.pi) / 3
    with np.errstate(divide="ignore"):
        s = (2.0 / 3.0) * r ** (-1.0 / 3.0)
    return np.stack([s * np.sin(phi - theta), s * np.cos(phi - theta)], axis=-1)


def _lshape_mesh(initial_refinements):
    mesh = create_lshape_mesh()
    for _ in range(initial_refinements):
        mesh = refine(mesh, mesh.active_cells)
    return mesh


def problem_corner2d(initial_refinements=2):
    p = ProblemSpec(
        name="corner2d",
        build_mesh=_lshape_mesh,
        beta=(0.0, 0.0),
        exact=_corner_exact,
        gradient=_corner_gradient,
        source=lambda x, y: np.zeros_like(x),
        boundary=_corner_exact,
        initial_subdivisions=initial_refinements,
        singular_point=(0.0, 0.0),
        domain_area=3.0,
        sample_box=((-1.0, 1.0), (-1.0, 1.0)),
        inside=lambda x, y: (x < 0) | (y < 0),
    )
    check_source(p)
    return p


# -- drift-diffusion: u = x + y + (1 - e^{bx})/(e^b - 1) - (e^{by} - 1)/(e^b - 1)


def problem_drift2d(beta_scalar=1.0, initial_subdivisions=4):
    b = float(beta_scalar)
    if not b > 0:
        raise ValueError(f"beta must be positive, got {b}")
    # e^{b s} / (e^b - 1) written to stay finite for large b
    scale = -np.expm1(-b)

    def layer(s):
        return np.exp(b * (s - 1.0)) / scale

    denom_inv = np.exp(-b) / scale  # 1 / (e^b - 1)

    def exact(x, y):
        return x + y + (denom_inv - layer(x)) - (layer(y) - denom_inv)

    def gradient(x, y):
        return np.stack([1.0 - b * layer(x), 1.0 - b * layer(y)], axis=-1)

    p = ProblemSpec(
        name="drift2d",
        build_mesh=create_unit_square_mesh,
        beta=(b, b),
        exact=exact,
        gradient=gradient,
        # -Laplace u = b^2 (layer(x) + layer(y)), beta.grad u = b (2 - b (layer(x) + layer(y)))
        source=lambda x, y: np.full(np.shape(x), 2.0 * b),
        boundary=exact,
        initial_subdivisions=initial_subdivisions,
    )
    check_source(p)
    return p


def problem_sine2d(initial_subdivisions=4):
    """u = sin(pi x) sin(pi y) on the unit square, for uniform convergence studies."""
    pi = np.pi
    p = ProblemSpec(
        name="sine2d",
        build_mesh=create_unit_square_mesh,
        beta=(0.0, 0.0),
        exact=lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        gradient=lambda x, y: np.stack(
            [pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)], axis=-1
        ),
        source=lambda x, y: 2 * pi**2 * np.sin(pi * x) * np.sin(pi * y),
        boundary=lambda x, y: np.zeros_like(x),
        initial_subdivisions=initial_subdivisions,
    )
    check_source(p)
    return p


def get_problem(name, beta=1.0, initial_subdivisions=None):
    """Problem by name; ``initial_subdivisions`` overrides the default coarse mesh."""
    extra = () if initial_subdivisions is None else (int(initial_subdivisions),)
    if name == "drift2d":
        return problem_drift2d(beta, *extra)
    factories = {"peak2d": problem_peak2d, "corner2d": problem_corner2d, "sine2d": problem_sine2d}
    if name not in factories:
        raise ValueError(f"unknown problem {name!r}")
    return factories[name](*extra)
