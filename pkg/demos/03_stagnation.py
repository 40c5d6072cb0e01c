"""
Richardson stagnation on an intermediate mesh.

After a handful of steps the estimator stops changing although the
algebraic residual is still far from zero: the remaining error is smooth
and invisible to the gradient jumps.
"""
from safem import get_problem, stagnation_study

rows = stagnation_study(get_problem("peak2d"), cycle=3, max_steps=30)
J_final = rows[-1][2]
print(f"{'steps':>5} {'residual':>11} {'J':>11} {'rel. change':>11}")
for ell, res, J in rows:
    if ell <= 5 or ell % 5 == 0:
        print(f"{ell:>5} {res:>11.3e} {J:>11.5e} {abs(J - J_final) / J_final:>11.2e}")
