"""How large the constants of the iteration arguments really are.

Run: python3 demos/iteration_constants.py
"""

import numpy as np

from kinetraj.iteration import (
    IterationParams,
    NestedFamily,
    bombieri_giusti_check,
    moser_constant_stopped,
    moser_constant_unbounded,
    moser_recursion_unbounded,
    moser_smallp,
)
from kinetraj.pde import SupBoundConfig, inverse_sup_bound_experiment

base = IterationParams()
M, gt = moser_constant_unbounded(base)
print(f"closed form M={M:g}, exponent {gt:g}; summing the recursion directly gives {moser_recursion_unbounded(base):.2f}")
M3, g0 = moser_constant_stopped(IterationParams(p0=1.0))
print(f"stopping below kappa: M=2^{np.log2(M3):.0f}, exponent {g0:g}")

# small exponents: the answer depends on p*mu only through its supremum
for mu in (1.0, 10.0, 100.0):
    res = moser_smallp(IterationParams(kappa=1.5, mu=mu, p=0.5 / mu))
    print(f"mu={mu:>5}: M={res.M:.3e} after {res.iterations} steps")

# the crossover lemma: fine for smooth data, astronomically large constant
smooth = NestedFamily.interval(lambda x: 1 + 0.5 * np.cos(3 * x))
ok = bombieri_giusti_check(smooth, 2.0, 2.0, 2.0, 0.5, 0.5, 1.0)
print(f"\nsmooth data: holds={ok.holds}, log M={ok.log_M:.0f} (tau={ok.tau})")
spike = NestedFamily.interval(lambda x: np.abs(x) ** -1.5)
bad = bombieri_giusti_check(spike, 2.0, 2.0, 2.0, 0.5, 0.5, 1.0)
print(f"|x|^-1.5: holds={bad.holds}, first violation {bad.violation}")

# constants fitted on a rough-coefficient solution, pushed through the closed form
rep = inverse_sup_bound_experiment(SupBoundConfig())
m = rep.measured
print(f"\nfitted C={m['C_fitted']:g} -> M={m['M']:g}: sup 1/f = {m['sup_inverse']:.3f} <= bound {m['sup_bound']:.3g}")
