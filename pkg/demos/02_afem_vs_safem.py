"""
AFEM against S-AFEM on the peak problem.

S-AFEM replaces the intermediate solves by three Richardson steps. In
diagnostic mode each intermediate cycle is also solved exactly: the
estimator of the smoothed iterate stays within a few percent of the exact
one, so marking and final accuracy hardly change.
"""
from safem import RunConfig, get_problem, run

problem = get_problem("peak2d")
afem = run(RunConfig(problem, mode="afem"))
safem = run(RunConfig(problem, mode="safem", smoother="richardson", smoothing_steps=3, diagnostic=True))

print(f"{'k':>2} {'dofs':>6} {'err afem':>10} {'dofs':>6} {'err safem':>10} {'J(u^l)':>9} {'J(u_h)':>9} {'matvecs':>8}")
for a, s in zip(afem, safem):
    print(f"{a.cycle:>2} {a.n_dofs:>6} {a.error_h1:>10.3e} {s.n_dofs:>6} {s.error_h1:>10.3e} "
          f"{s.estimator_J:>9.3e} {s.estimator_J_exact:>9.3e} {a.matvec_count:>4}/{s.matvec_count:<3}")

inter_a = sum(r.matvec_count for r in afem[1:-1])
inter_s = sum(r.matvec_count for r in safem[1:-1])
print(f"intermediate matvecs: AFEM {inter_a}, S-AFEM {inter_s} "
      f"(+{sum(r.diagnostics['setup_matvecs'] for r in safem[1:-1])} for estimating omega)")
