"""Long-term prediction by repeated composition of a one-step increment model.

Any callable ``increment(x, alpha, delta)`` taking batches ``x (B, d)``,
``alpha (B, l)`` and ``delta (B,)`` and returning ``(B, d)`` can drive a
rollout: a trained :class:`~flowmap.net.Network` or one of the stubs below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import BoxDomain, DimensionError, Trajectory, as_vector
from .systems import DEFAULT_MAX_STEP, SystemDef, default_substeps, flow_oracle, get_system

Increment = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class RolloutError(RuntimeError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at composition step {step}")


@dataclass
class DeltaSchedule:
    deltas: np.ndarray

    def __post_init__(self):
        self.deltas = np.atleast_1d(np.asarray(self.deltas, dtype=np.float64))
        if self.deltas.ndim != 1 or self.deltas.size == 0:
            raise ValueError("schedule needs at least one time lag")
        if np.any(self.deltas < 0) or not np.all(np.isfinite(self.deltas)):
            raise ValueError("time lags must be finite and >= 0")

    @classmethod
    def uniform(cls, delta: float, n_steps: int) -> "DeltaSchedule":
        return cls(np.full(int(n_steps), float(delta)))

    @classmethod
    def to_horizon(cls, delta: float, t_final: float) -> "DeltaSchedule":
        return cls.uniform(delta, int(round(t_final / delta)))

    def __len__(self):
        return int(self.deltas.size)

    @property
    def times(self) -> np.ndarray:
        """``t_k = sum_{i<k} delta_i`` for ``k = 0..n``."""
        return np.concatenate([[0.0], np.cumsum(self.deltas)])

    @property
    def max_delta(self) -> float:
        return float(self.deltas.max())

    def check_range(self, Idelta: BoxDomain) -> None:
        lo, hi = Idelta.lo[0], Idelta.hi[0]
        bad = (self.deltas < lo) | (self.deltas > hi)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(f"time lag {self.deltas[k]} at step {k} lies outside [{lo}, {hi}]")


@dataclass
class ErrorSeries:
    times: np.ndarray
    linf: np.ndarray
    l2: np.ndarray


class OracleIncrement:
    """Exact increment ``flow_oracle(x, alpha, delta) - x`` of a known system."""

    def __init__(self, sys: str | SystemDef, max_step: float = DEFAULT_MAX_STEP):
        self.sys = get_system(sys)
        self.max_step = max_step

    def __call__(self, x, alpha, delta):
        return flow_oracle(self.sys, x, alpha, delta, default_substeps(delta, self.max_step)) - x


class ExactDecayIncrement:
    """Closed-form increment ``x (exp(-alpha delta) - 1)`` of ``dx/dt = -alpha x``."""

    def __call__(self, x, alpha, delta):
        delta = np.asarray(delta, dtype=np.float64)
        return x * np.expm1(-alpha[..., :1] * delta[..., None])


class PerturbedIncrement:
    """``base`` plus a fixed offset: a model with known one-step sup error."""

    def __init__(self, base: Increment, offset):
        self.base = base
        self.offset = np.asarray(offset, dtype=np.float64)

    def __call__(self, x, alpha, delta):
        return self.base(x, alpha, delta) + self.offset


def predict_batch(model: Increment, x0, alpha, sched: DeltaSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Roll out many ``(x0, alpha)`` at once; returns ``(times, states (S, n+1, d))``."""
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    S = max(x.shape[0], alpha.shape[0])
    x = np.array(np.broadcast_to(x, (S, x.shape[1])))
    alpha = np.ascontiguousarray(np.broadcast_to(alpha, (S, alpha.shape[1])))
    spec = getattr(model, "spec", None)
    if spec is not None and (x.shape[1] != spec.d or alpha.shape[1] != spec.l):
        raise DimensionError(
            f"dimension mismatch: got d={x.shape[1]}, l={alpha.shape[1]}; model expects d={spec.d}, l={spec.l}"
        )
    n = len(sched)
    out = np.empty((S, n + 1, x.shape[1]))
    out[:, 0] = x
    lag = np.empty(S)
    for k, dk in enumerate(sched.deltas):
        lag.fill(dk)
        x = x + model(x, alpha, lag)
        if not np.all(np.isfinite(x)):
            raise RolloutError(k + 1)
        out[:, k + 1] = x
    return sched.times, out


def predict(model: Increment, x0, alpha, sched: DeltaSchedule) -> Trajectory:
    """``x_{k+1} = x_k + model(x_k, alpha, delta_k)`` starting from ``x0`` at ``t = 0``."""
    x0 = as_vector(x0, name="x0")
    alpha = as_vector(alpha, name="alpha")
    times, states = predict_batch(model, x0[None], alpha[None], sched)
    return Trajectory(times, states[0], alpha, x0)


def _stack(trajs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(trajs, np.ndarray):
        return None, trajs
    if not trajs:
        raise ValueError("need at least one trajectory")
    times = trajs[0].times
    for tr in trajs[1:]:
        if tr.times.shape != times.shape or not np.array_equal(tr.times, times):
            raise DimensionError("trajectories do not share a time grid")
    return times, np.stack([tr.states for tr in trajs])


def error_metrics(preds: Sequence[Trajectory] | np.ndarray, refs: Sequence[Trajectory] | np.ndarray, times=None) -> ErrorSeries:
    """Per-step errors over a sample of trajectories.

    ``linf[k]`` is the largest absolute component error over all samples and
    ``l2[k]`` the root-mean-square over samples of the Euclidean error.
    Inputs are lists of trajectories or arrays ``(S, T, d)``.
    """
    tp, P = _stack(preds)
    tr, R = _stack(refs)
    if P.shape != R.shape:
        raise DimensionError(f"prediction shape {P.shape} does not match reference shape {R.shape}")
    if tp is not None and tr is not None and not np.allclose(tp, tr, rtol=0, atol=1e-9):
        raise DimensionError("prediction and reference time grids differ")
    if times is None:
        times = tp if tp is not None else tr
    if times is None:
        times = np.arange(P.shape[1], dtype=np.float64)
    err = P - R
    linf = np.max(np.abs(err), axis=(0, 2))
    l2 = np.sqrt(np.mean(np.sum(err * err, axis=2), axis=0))
    return ErrorSeries(np.asarray(times, dtype=np.float64), linf, l2)
