"""
Higher polynomial degree on the L-shaped domain.

Dorfler marking is replaced by refining a third of the cells. CG and GMRES
remain good smoothers for Q2. Richardson with omega = 1/rho(A) does not for
Q3: its intermediate error stalls while the exact-solve run keeps improving.
Takes about two minutes. The final tight solve recovers the Q3 accuracy.
"""
from safem import MarkingConfig, RunConfig, get_problem, run

p = get_problem("corner2d")
third = MarkingConfig("fixed_fraction", fraction=1 / 3)

a = run(RunConfig(p, degree=2, mode="afem", marking=third))[-1]
print(f"Q2 AFEM                  final error {a.error_h1:.4e} with {a.n_dofs} dofs")
for smoother in ("cg", "gmres"):
    s = run(RunConfig(p, degree=2, mode="safem", smoother=smoother, smoothing_steps=3, marking=third))[-1]
    print(f"Q2 S-AFEM {smoother:<6} l=3      final error {s.error_h1:.4e} with {s.n_dofs} dofs")

rich = run(RunConfig(p, degree=3, mode="safem", smoother="richardson", smoothing_steps=3, marking=third))
print("Q3 S-AFEM richardson l=3, error per cycle:")
print("  " + "  ".join(f"{r.error_h1:.2e}" for r in rich))
