"""
The error propagation identity of S-AFEM.

With e_k the algebraic error on level k, a_{k+1} = u_{k+1} - I u_k and
M = I - omega A the Richardson propagator,

    e_{k+1} = M^l (a_{k+1} + I e_k).

The probe evaluates both sides on a three-level peak run.
"""
from safem import error_propagation_probe, get_problem

for level, d in enumerate(error_propagation_probe(get_problem("peak2d"), levels=3, steps=3), start=2):
    print(f"level {level}: ||e - M^l (a + I e_prev)|| / ||f|| = {d:.2e}")
