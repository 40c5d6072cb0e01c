"""
Drift-diffusion with GMRES smoothing.

The system is nonsymmetric, so both the exact solves and the smoother use
Jacobi-preconditioned GMRES. Plain Galerkin is used at every drift
strength; for beta = 50 the coarse meshes cannot resolve the boundary layer
and the error stays large, but AFEM and S-AFEM still agree.
"""
from safem import RunConfig, get_problem, run

for beta in (1.0, 10.0, 50.0):
    p = get_problem("drift2d", beta=beta)
    a = run(RunConfig(p, mode="afem"))[-1]
    s = run(RunConfig(p, mode="safem", smoother="gmres", smoothing_steps=5))[-1]
    print(f"beta {beta:>4g}: AFEM {a.error_h1:.3e} ({a.n_dofs} dofs)   S-AFEM {s.error_h1:.3e} ({s.n_dofs} dofs)")
