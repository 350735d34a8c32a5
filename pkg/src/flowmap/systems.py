"""Benchmark systems, the RK4 ground-truth flow map and analytic references.

Every right-hand side is vectorised: ``rhs(x, alpha)`` accepts ``x`` of shape
``(..., d)`` and ``alpha`` of shape ``(..., l)`` and broadcasts over the
leading axes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import BoxDomain, DimensionError, Trajectory, as_vector

DEFAULT_MAX_STEP = 0.005

RhsFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemDef:
    id: str
    d: int
    l: int
    rhs: RhsFn = field(repr=False)
    default_Ix: BoxDomain
    default_Ialpha: BoxDomain
    state_names: tuple[str, ...] = ()
    param_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.default_Ix.dim != self.d or self.default_Ialpha.dim != self.l:
            raise DimensionError(f"default domains of {self.id} do not match d={self.d}, l={self.l}")


def _linear_scalar(x, a):
    return -a[..., 0:1] * x


def _linear_2d(x, a):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x1 - a[..., 0] * x2, a[..., 1] * x1 - 7.0 * x2], axis=-1)


def _oscillator(x, a):
    x1, x2 = x[..., 0], x[..., 1]
    dx2 = -a[..., 0] * x2 - a[..., 1] * np.sin(x1)
    return np.stack(np.broadcast_arrays(x2, dx2), axis=-1)


# Cascade parameter layout: Km1..Km6, Vmax1..Vmax6, G, I
CASCADE_PARAM_NAMES = tuple(
    [f"Km{i}" for i in range(1, 7)] + [f"Vmax{i}" for i in range(1, 7)] + ["G", "I"]
)
CASCADE_NOMINAL = np.array(
    [0.2] * 6 + [0.5, 0.15, 0.15, 0.15, 0.25, 0.05] + [2.0, 0.48]
)
CASCADE_I_RANGE = (0.0, 1.5)
CASCADE_X0 = np.array([0.22685145, 0.98369158, 0.87752945])


def _cell_cascade(x, a):
    e1, e2, e3 = x[..., 0], x[..., 1], x[..., 2]
    km = [a[..., i] for i in range(6)]
    vm = [a[..., 6 + i] for i in range(6)]
    G, I = a[..., 12], a[..., 13]
    de1 = (I / (1.0 + G * e3)) * vm[0] * (1.0 - e1) / (km[0] + (1.0 - e1)) - vm[1] * e1 / (km[1] + e1)
    de2 = vm[2] * e1 * (1.0 - e2) / (km[2] + (1.0 - e2)) - vm[3] * e2 / (km[3] + e2)
    de3 = vm[4] * e2 * (1.0 - e3) / (km[4] + (1.0 - e3)) - vm[5] * e3 / (km[5] + e3)
    return np.stack([de1, de2, de3], axis=-1)


@dataclass(frozen=True)
class CascadeParams:
    """Cell-signalling cascade parameters in named form."""

    Km: tuple = tuple(CASCADE_NOMINAL[:6])
    Vmax: tuple = tuple(CASCADE_NOMINAL[6:12])
    G: float = 2.0
    I: float = 0.48

    def __post_init__(self):
        if len(self.Km) != 6 or len(self.Vmax) != 6:
            raise DimensionError("cascade needs six Km and six Vmax values")
        if min(self.Km) <= 0 or min(self.Vmax) <= 0 or self.G <= 0:
            raise ValueError("cascade rates and G must be positive")
        lo, hi = CASCADE_I_RANGE
        if not lo <= self.I <= hi:
            raise ValueError(f"tuning input I={self.I} outside [{lo}, {hi}]")

    def to_vector(self) -> np.ndarray:
        return np.array([*self.Km, *self.Vmax, self.G, self.I], dtype=np.float64)

    @classmethod
    def from_vector(cls, v) -> "CascadeParams":
        v = as_vector(v, 14, "cascade parameters")
        return cls(tuple(v[:6]), tuple(v[6:12]), float(v[12]), float(v[13]))


def cascade_param_box(
    random: tuple[str, ...] | None = ("Km1", "Km4", "Vmax2", "Vmax5"),
    spread: float = 0.1,
    I: float | tuple[float, float] = CASCADE_I_RANGE,
) -> BoxDomain:
    """Parameter box for the cascade.

    Names in ``random`` get a ``+-spread`` relative hypercube around the
    nominal value, the rest are pinned; ``random=None`` randomises all 13
    rate parameters. ``I`` is either a fixed value or an interval.
    """
    names = CASCADE_PARAM_NAMES[:13] if random is None else random
    unknown = set(names) - set(CASCADE_PARAM_NAMES[:13])
    if unknown:
        raise KeyError(f"unknown cascade parameters: {sorted(unknown)}")
    lo = CASCADE_NOMINAL.copy()
    hi = CASCADE_NOMINAL.copy()
    for name in names:
        i = CASCADE_PARAM_NAMES.index(name)
        lo[i] *= 1.0 - spread
        hi[i] *= 1.0 + spread
    if np.isscalar(I):
        lo[13] = hi[13] = float(I)
    else:
        lo[13], hi[13] = I
    return BoxDomain(lo, hi)


SYSTEMS: dict[str, SystemDef] = {
    "linear-scalar": SystemDef(
        "linear-scalar", 1, 1, _linear_scalar,
        BoxDomain([0.0], [1.0]), BoxDomain([0.0], [1.0]),
        ("x",), ("alpha",),
    ),
    "linear-2d": SystemDef(
        "linear-2d", 2, 2, _linear_2d,
        BoxDomain([-1.0, -1.0], [1.0, 1.0]), BoxDomain([3.8, 3.8], [4.2, 4.2]),
        ("x1", "x2"), ("alpha1", "alpha2"),
    ),
    "oscillator": SystemDef(
        "oscillator", 2, 2, _oscillator,
        BoxDomain([-np.pi, -2 * np.pi], [np.pi, 2 * np.pi]), BoxDomain([0.0, 8.8], [0.4, 9.2]),
        ("x1", "x2"), ("alpha1", "alpha2"),
    ),
    "cell-cascade": SystemDef(
        "cell-cascade", 3, 14, _cell_cascade,
        BoxDomain([0.0] * 3, [1.0] * 3), cascade_param_box(random=None),
        ("e1p", "e2p", "e3p"), CASCADE_PARAM_NAMES,
    ),
}


def get_system(sys: str | SystemDef) -> SystemDef:
    if isinstance(sys, SystemDef):
        return sys
    try:
        return SYSTEMS[sys]
    except KeyError:
        raise KeyError(f"unknown system {sys!r}; choose from {', '.join(SYSTEMS)}") from None


def _check_shapes(sys: SystemDef, x, alpha):
    x = np.asarray(x, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if x.shape[-1:] != (sys.d,):
        raise DimensionError(f"dimension mismatch: state has shape {x.shape}, system {sys.id} has d={sys.d}")
    if alpha.shape[-1:] != (sys.l,):
        raise DimensionError(f"dimension mismatch: parameters have shape {alpha.shape}, system {sys.id} has l={sys.l}")
    return x, alpha


def rhs_eval(sys: str | SystemDef, x, alpha) -> np.ndarray:
    """Evaluate ``f(x, alpha)``."""
    sys = get_system(sys)
    x, alpha = _check_shapes(sys, x, alpha)
    return sys.rhs(x, alpha)


def rk4_step(sys: str | SystemDef, x, alpha, h) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step.

    ``h`` may be a scalar or an array broadcasting against ``x[..., 0]``,
    which lets rows of a batch advance by different amounts.
    """
    sys = get_system(sys)
    x, alpha = _check_shapes(sys, x, alpha)
    return _rk4(sys.rhs, x, alpha, np.asarray(h, dtype=np.float64)[..., None])


def _rk4(f, x, alpha, h):
    k1 = f(x, alpha)
    k2 = f(x + 0.5 * h * k1, alpha)
    k3 = f(x + 0.5 * h * k2, alpha)
    k4 = f(x + h * k3, alpha)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def default_substeps(delta, max_step: float = DEFAULT_MAX_STEP) -> int:
    return max(1, int(math.ceil(float(np.max(delta)) / max_step)))


def flow_oracle(sys: str | SystemDef, x, alpha, delta, substeps: int | None = None) -> np.ndarray:
    """Approximate the flow map ``Phi_delta(x, alpha)`` with ``substeps`` RK4 steps.

    ``delta`` may be per-row; every row takes the same number of substeps of
    size ``delta / substeps``.
    """
    sys = get_system(sys)
    x, alpha = _check_shapes(sys, x, alpha)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta < 0):
        raise ValueError("time lag must be >= 0")
    if substeps is None:
        substeps = default_substeps(delta)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = (delta / substeps)[..., None]
    for _ in range(substeps):
        x = _rk4(sys.rhs, x, alpha, h)
    return x


def integrate_many(sys: str | SystemDef, x0, alpha, times, substeps_per_unit: float = 1.0 / DEFAULT_MAX_STEP) -> np.ndarray:
    """Integrate a batch of solutions on a shared time grid.

    ``x0`` is the state at ``times[0]``; returns ``(n_batch, len(times), d)``.
    """
    sys = get_system(sys)
    x0, alpha = _check_shapes(sys, x0, alpha)
    x0 = np.atleast_2d(x0)
    alpha = np.broadcast_to(np.atleast_2d(alpha), (x0.shape[0], sys.l))
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need a non-empty 1-d time grid")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    out = np.empty((x0.shape[0], times.size, sys.d))
    out[:, 0] = x0
    x = x0
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        x = flow_oracle(sys, x, alpha, dt, max(1, int(math.ceil(dt * substeps_per_unit))))
        out[:, k] = x
    return out


def integrate_trajectory(sys: str | SystemDef, x0, alpha, times, substeps_per_unit: float = 1.0 / DEFAULT_MAX_STEP) -> Trajectory:
    """Reference trajectory through ``x0`` at ``times[0]``.

    Only time differences matter, so shifting ``times`` does not change the
    states as long as the differences are unchanged.
    """
    sys = get_system(sys)
    x0 = as_vector(x0, sys.d, "x0")
    alpha = as_vector(alpha, sys.l, "alpha")
    times = np.asarray(times, dtype=np.float64)
    if times.size and times[0] < 0:
        raise ValueError("times must start at t >= 0")
    states = integrate_many(sys, x0[None], alpha[None], times, substeps_per_unit)[0]
    return Trajectory(times, states, alpha, x0)


def analytic_solution_ex1(t, alpha, x0):
    """Closed form ``x0 * exp(-alpha t)`` of the linear scalar decay."""
    return np.asarray(x0) * np.exp(-np.asarray(alpha) * np.asarray(t))


def _mean_var_ex1_scalar(t: float) -> tuple[float, float]:
    if t < 0:
        raise ValueError("t must be >= 0")
    if t < 1e-3:
        # series avoids cancellation near t = 0
        mean = 1 - t / 2 + t**2 / 6 - t**3 / 24 + t**4 / 120
        var = t**2 / 12 - t**3 / 12 + 17 * t**4 / 360
        return mean, var
    mean = -math.expm1(-t) / t
    second = -math.expm1(-2 * t) / (2 * t)
    return mean, second - mean * mean


def analytic_mean_var_ex1(t):
    """Exact mean and variance of ``exp(-alpha t)`` for ``alpha ~ U[0, 1]``, ``x0 = 1``."""
    if np.ndim(t) == 0:
        return _mean_var_ex1_scalar(float(t))
    pairs = np.array([_mean_var_ex1_scalar(float(s)) for s in np.ravel(t)])
    return pairs[:, 0].reshape(np.shape(t)), pairs[:, 1].reshape(np.shape(t))


def _grid(box: BoxDomain, n: int) -> list[np.ndarray]:
    return [np.array([lo]) if lo == hi else np.linspace(lo, hi, n) for lo, hi in zip(box.lo, box.hi)]


def lipschitz_estimate(
    sys: str | SystemDef,
    Ix: BoxDomain | None = None,
    Ialpha: BoxDomain | None = None,
    grid_per_dim: int = 5,
    max_points: int = 5_000_000,
) -> float:
    """Largest induced infinity-norm of ``df/dx`` over a tensor grid of ``Ix x Ialpha``.

    The Jacobian is taken by central differences with step ``1e-6`` times the
    width of each state coordinate. Pinned coordinates contribute one grid
    point.
    """
    sys = get_system(sys)
    Ix = Ix or sys.default_Ix
    Ialpha = Ialpha or sys.default_Ialpha
    if grid_per_dim < 2:
        raise ValueError("grid_per_dim must be >= 2")
    axes = _grid(Ix, grid_per_dim) + _grid(Ialpha, grid_per_dim)
    n_points = math.prod(len(a) for a in axes)
    if n_points > max_points:
        raise ValueError(f"lipschitz grid has {n_points} points, limit is {max_points}")
    pts = np.array(list(itertools.product(*axes)))
    x, a = pts[:, : sys.d], pts[:, sys.d :]
    steps = 1e-6 * np.where(Ix.width > 0, Ix.width, 1.0)
    jac = np.empty((pts.shape[0], sys.d, sys.d))
    for j in range(sys.d):
        e = np.zeros(sys.d)
        e[j] = steps[j]
        jac[:, :, j] = (sys.rhs(x + e, a) - sys.rhs(x - e, a)) / (2 * steps[j])
    return float(np.max(np.abs(jac).sum(axis=2)))
