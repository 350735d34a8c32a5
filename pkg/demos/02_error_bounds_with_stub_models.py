"""How one-step errors accumulate under composition, without any training.

Any callable increment(x, alpha, delta) can stand in for a trained network.
Here the exact increment of dx/dt = -alpha x is shifted by a constant E, so
the one-step error is known exactly. The measured rollout error is compared
with the composition bound C(n, L, Delta) * E and the mean/variance bounds.

Run:  python demos/02_error_bounds_with_stub_models.py
"""

import numpy as np

from flowmap import (
    BoundInputs, DeltaSchedule, ExactDecayIncrement, PerturbedIncrement, composition_factor,
    gauss_legendre, mean_var_bounds, model_evaluator, uq_statistics,
)
from flowmap.bounds import rollout_sup_error
from flowmap.systems import lipschitz_estimate
from flowmap.uq import analytic_ex1_evaluator

L = lipschitz_estimate("linear-scalar")
print(f"estimated Lipschitz constant of f over the domain: {L:.6f}")

E = 1e-3
stub = PerturbedIncrement(ExactDecayIncrement(), [E])
sched = DeltaSchedule.uniform(0.1, 300)

rng = np.random.default_rng(0)
x0 = rng.uniform(0, 1, (50, 1))
alpha = rng.uniform(0, 1, (50, 1))
measured = rollout_sup_error(stub, "linear-scalar", x0, alpha, sched)

print("\n   n   measured     bound C*E")
for n in (1, 10, 100, 300):
    print(f"{n:4d}   {measured[n]:.3e}    {composition_factor(n, L, 0.1) * E:.3e}")

# Mean and variance over alpha ~ U[0, 1], both estimated with the same 10-point rule.
rule = gauss_legendre(10, (0.0, 1.0), probability=True)
est = uq_statistics(model_evaluator(stub, [1.0], sched), rule, batched=True)
ref = uq_statistics(analytic_ex1_evaluator(sched.times), rule, batched=True)

print("\n   n   mean err   mean bound   var err    var bound")
for n in (10, 100, 300):
    mb, vb = mean_var_bounds(BoundInputs(n, L, 0.1, E, C_t=1.0))
    print(f"{n:4d}   {abs(est.mean[n, 0] - ref.mean[n, 0]):.2e}   {mb:.2e}     "
          f"{abs(est.var[n, 0] - ref.var[n, 0]):.2e}   {vb:.2e}")
print("\nThe bounds hold but grow exponentially in n; the measured errors stay far below them.")
