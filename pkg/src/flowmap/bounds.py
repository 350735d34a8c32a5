"""Error bounds for composed flow-map models and the quantities they need.

With a one-step sup error ``E``, Lipschitz constant ``L`` and largest lag
``Delta``, ``n`` compositions stay within ``C(n, L, Delta) * E`` of the true
solution, where ``C = (exp(n L Delta) - 1) / (exp(L Delta) - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BoxDomain, Rng, sample_uniform_box
from .rollout import DeltaSchedule, Increment, predict_batch
from .systems import SystemDef, default_substeps, flow_oracle, get_system, integrate_many

EXP_LIMIT = 700.0


class BoundOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    n: int
    L: float
    Delta: float
    E: float
    C_t: float = 0.0
    C_t_tilde: float = 0.0
    gamma: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        for name in ("L", "Delta", "E", "C_t", "C_t_tilde", "gamma", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def composition_factor(n: int, L: float, Delta: float) -> float:
    """``(e^{n L Delta} - 1) / (e^{L Delta} - 1)``, equal to ``n`` when ``L Delta = 0``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if L < 0 or Delta < 0:
        raise ValueError("L and Delta must be >= 0")
    x = L * Delta
    if x == 0.0:
        return float(n)
    if n * x > EXP_LIMIT:
        raise BoundOverflowError(f"bound overflows: n*L*Delta = {n * x:g} exceeds {EXP_LIMIT:g}")
    return math.expm1(n * x) / math.expm1(x)


def mean_var_bounds(inp: BoundInputs) -> tuple[float, float]:
    """Bounds on the mean and variance errors when the parameter range is exact."""
    C = composition_factor(inp.n, inp.L, inp.Delta)
    CE = C * inp.E
    return CE, 2.0 * CE * CE + 4.0 * CE * inp.C_t


def mismatch_bounds(inp: BoundInputs) -> tuple[float, float]:
    """Bounds when statistics are taken over an estimated parameter range.

    ``gamma`` measures the density discrepancy on the overlap and ``eta`` the
    probability mass outside it; ``C_t_tilde`` bounds the solution on the
    union of both ranges.
    """
    C = composition_factor(inp.n, inp.L, inp.Delta)
    CE = C * inp.E
    Ct, mis = inp.C_t_tilde, inp.eta + inp.gamma
    mean = Ct * mis + (1.0 + inp.eta) * CE
    var = (3.0 * Ct * Ct + CE * Ct) * mis + (4.0 * Ct + 2.0 * CE) * (1.0 + inp.eta) * CE
    return mean, var


def uniform_box_mismatch(true_box: BoxDomain, est_box: BoxDomain) -> tuple[float, float]:
    """``(gamma, eta)`` for uniform densities on two boxes.

    Pinned coordinates must agree and are left out of the volumes.
    """
    if true_box.dim != est_box.dim:
        raise ValueError("boxes differ in dimension")
    pinned = true_box.degenerate | est_box.degenerate
    if np.any(pinned & ((true_box.lo != est_box.lo) | (true_box.hi != est_box.hi))):
        raise ValueError("pinned coordinates must coincide in both boxes")
    free = ~pinned
    V = float(np.prod(true_box.width[free]))
    Vt = float(np.prod(est_box.width[free]))
    lo = np.maximum(true_box.lo, est_box.lo)[free]
    hi = np.minimum(true_box.hi, est_box.hi)[free]
    Vo = float(np.prod(np.clip(hi - lo, 0.0, None)))
    gamma = Vo * abs(1.0 / V - 1.0 / Vt)
    eta = (Vt - Vo) / Vt + (V - Vo) / V
    return gamma, eta


@dataclass
class SupError:
    value: float
    z: np.ndarray
    alpha: np.ndarray
    delta: float


def empirical_sup_error(
    model: Increment,
    sys: str | SystemDef,
    n_samples: int = 100_000,
    rng: Rng | None = None,
    Ix: BoxDomain | None = None,
    Ialpha: BoxDomain | None = None,
    Idelta: BoxDomain = BoxDomain([0.0], [0.1]),
    chunk: int = 20_000,
) -> SupError:
    """Sampled ``max |model(z, alpha, delta) - Psi(z, alpha, delta)|`` (infinity norm).

    This is a sample maximum, not a certified supremum; the location of the
    worst sample is returned with it.
    """
    if n_samples < 100:
        raise ValueError("use at least 100 samples")
    sys = get_system(sys)
    rng = rng or Rng(0)
    Ix = Ix or sys.default_Ix
    Ialpha = Ialpha or sys.default_Ialpha
    best = SupError(-1.0, None, None, 0.0)
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        z = sample_uniform_box(Ix, rng, m)
        a = sample_uniform_box(Ialpha, rng, m)
        dl = sample_uniform_box(Idelta, rng, m)[:, 0]
        psi = flow_oracle(sys, z, a, dl, default_substeps(dl)) - z
        err = np.max(np.abs(model(z, a, dl) - psi), axis=1)
        k = int(np.argmax(err))
        if err[k] > best.value:
            best = SupError(float(err[k]), z[k].copy(), a[k].copy(), float(dl[k]))
    return best


def solution_bound(sys: str | SystemDef, x0, alphas, times) -> float:
    """Largest infinity norm of the true solution over ``alphas`` and ``times``."""
    sys = get_system(sys)
    alphas = np.atleast_2d(alphas)
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (alphas.shape[0], sys.d))
    return float(np.max(np.abs(integrate_many(sys, x, alphas, times))))


def rollout_sup_error(model: Increment, sys: str | SystemDef, x0s, alphas, sched: DeltaSchedule) -> np.ndarray:
    """Per-step max error of model rollouts against the true flow, over all samples."""
    _, pred = predict_batch(model, x0s, alphas, sched)
    ref = integrate_many(sys, pred[:, 0], np.atleast_2d(alphas), sched.times)
    return np.max(np.abs(pred - ref), axis=(0, 2))


def bound_table(n_values, L: float, Delta: float, E: float, C_t: float | None = None,
                C_t_tilde: float | None = None, gamma: float = 0.0, eta: float = 0.0) -> list[dict]:
    """One row of bound values per composition count."""
    rows = []
    for n in n_values:
        inp = BoundInputs(int(n), L, Delta, E, C_t or 0.0, C_t_tilde or 0.0, gamma, eta)
        row = {"n": int(n), "C": composition_factor(inp.n, L, Delta)}
        row["traj_bound"] = row["C"] * E
        if C_t is not None:
            row["mean_bound"], row["var_bound"] = mean_var_bounds(inp)
        if C_t_tilde is not None:
            row["mismatch_mean_bound"], row["mismatch_var_bound"] = mismatch_bounds(inp)
        rows.append(row)
    return rows
