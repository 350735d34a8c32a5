"""Statistics over a random parameter: Gauss-Legendre quadrature versus Monte Carlo.

For dx/dt = -alpha x with x0 = 1 and alpha ~ U[0, 1], the mean and variance
are known in closed form. A handful of quadrature nodes matches them closely
at moderate times; Monte Carlo needs far more samples. At late times the
integrand exp(-alpha t) sharpens and a fixed rule loses accuracy.

Run:  python demos/03_quadrature_and_monte_carlo.py
"""

import numpy as np

from flowmap import BoxDomain, Density, Rng, analytic_mean_var_ex1, gauss_legendre, mc_statistics, uq_statistics
from flowmap.bounds import uniform_box_mismatch
from flowmap.uq import analytic_ex1_evaluator, rule_for_box

times = np.array([0.0, 1.0, 5.0, 10.0, 30.0])
evaluator = analytic_ex1_evaluator(times)
exact_mean, exact_var = analytic_mean_var_ex1(times)

print("nodes  t=1 mean err  t=10 mean err  t=30 mean err")
for npts in (2, 5, 10, 20):
    s = uq_statistics(evaluator, gauss_legendre(npts, (0, 1), probability=True), batched=True)
    errs = np.abs(s.mean[:, 0] - exact_mean)
    print(f"{npts:5d}  {errs[1]:.2e}      {errs[3]:.2e}       {errs[4]:.2e}")

for n in (1_000, 100_000):
    s = mc_statistics(evaluator, Density(BoxDomain([0.0], [1.0])), n, Rng(0), batched=True)
    print(f"Monte Carlo with {n:>7d} samples: t=1 mean err {abs(s.mean[1, 0] - exact_mean[1]):.2e}")

# Statistics under a misjudged parameter range: the rule is built over the
# assumed box, and (gamma, eta) quantify how far it is from the true one.
assumed = BoxDomain([0.1], [1.2])
s = uq_statistics(evaluator, rule_for_box(assumed, 10), batched=True)
gamma, eta = uniform_box_mismatch(BoxDomain([0.0], [1.0]), assumed)
print(f"\nassumed range [0.1, 1.2]: gamma={gamma:.3f}, eta={eta:.3f}")
print(f"t=5 mean {s.mean[2, 0]:.4f} versus true {exact_mean[2]:.4f}")
