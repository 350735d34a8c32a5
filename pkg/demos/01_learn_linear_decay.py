"""Learn the flow map of dx/dt = -alpha x and use it for long-horizon prediction.

A small residual network sees pairs (x_in, alpha, delta) -> x_out drawn with
random time lags in [0, 0.1]. Once trained, it is composed 300 times with a
fixed lag of 0.1 and compared against the closed-form solution.

Run:  python demos/01_learn_linear_decay.py      (about a minute on one core)
"""

import numpy as np

from flowmap import (
    DeltaSchedule, GenConfig, NetworkSpec, Rng, TrainConfig, analytic_solution_ex1, error_metrics,
    generate_pairs, init_network, predict_batch, sample_uniform_box, train,
)
from flowmap.systems import get_system

system = get_system("linear-scalar")

# Training pairs: initial state, parameter and lag are all sampled uniformly.
data = generate_pairs(GenConfig(system, J=5000, seed=0))
print(f"generated {data.J} pairs; first one: x_in={data.x_in[0, 0]:.4f}, "
      f"alpha={data.alpha[0, 0]:.4f}, delta={data.delta[0]:.4f}, x_out={data.x_out[0, 0]:.4f}")

# A (3, 40) tanh network; the skip connection adds x_in to its output.
spec = NetworkSpec(d=1, l=1, hidden_layers=3, width=40)
net = init_network(spec, Rng(0).substream("init"))
print(f"network has {spec.n_params} trainable parameters")

net, report = train(net, data, TrainConfig(epochs=100, seed=0))
print(f"loss after epoch 1: {report.loss[0]:.3e}, after epoch 100: {report.loss[-1]:.3e} "
      f"({report.wall_time:.0f}s)")

# Roll the model out to t = 30 for 100 random decay rates, starting from x0 = 1.
alphas = sample_uniform_box(system.default_Ialpha, Rng(1), 100)
sched = DeltaSchedule.uniform(0.1, 300)
times, pred = predict_batch(net, [[1.0]], alphas, sched)
exact = analytic_solution_ex1(times[None, :], alphas, 1.0)[:, :, None]
err = error_metrics(pred, exact, times)

for k in (0, 10, 50, 100, 200, 300):
    print(f"t = {times[k]:5.1f}   max error {err.linf[k]:.2e}   rms error {err.l2[k]:.2e}")
print(f"worst error over the whole horizon: {np.max(err.linf):.2e}")
