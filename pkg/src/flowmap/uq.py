"""Mean and variance of solutions over random parameters.

Evaluators map parameter samples to trajectories on a common time grid.
A *batched* evaluator takes ``(Q, l)`` parameter rows and returns
``(times, states)`` with ``states`` of shape ``(Q, T, d)``; a plain evaluator
takes one parameter vector and returns a :class:`~flowmap.core.Trajectory`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import BoxDomain, DimensionError, Rng, Trajectory, as_vector, sample_uniform_box
from .rollout import DeltaSchedule, Increment, predict_batch
from .systems import SystemDef, analytic_solution_ex1, get_system, integrate_many

MAX_GL_POINTS = 64
MAX_TENSOR_NODES = 1_000_000
VAR_TOLERANCE = 1e-14


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        if self.nodes.ndim == 1:
            self.nodes = self.nodes[:, None]
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.nodes.shape[0] != self.weights.shape[0]:
            raise DimensionError("quadrature nodes and weights differ in count")

    @property
    def dim(self) -> int:
        return int(self.nodes.shape[1])

    def __len__(self):
        return int(self.weights.shape[0])

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """``sum_q w_q f(node_q)`` for ``f`` acting on the ``(Q, dim)`` node array."""
        return np.tensordot(self.weights, np.asarray(f(self.nodes)), axes=(0, 0))


@dataclass(frozen=True)
class Density:
    box: BoxDomain
    kind: str = "uniform_box"

    def __post_init__(self):
        if self.kind != "uniform_box":
            raise ValueError(f"unsupported density kind {self.kind!r}")

    def pdf(self, y) -> np.ndarray:
        """Density with respect to Lebesgue measure on the non-pinned coordinates."""
        vol = self.box.volume(skip_degenerate=True)
        return np.where(self.box.contains(y), 1.0 / vol, 0.0)


@dataclass
class StatSeries:
    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.var.shape or self.mean.shape[0] != len(self.times):
            raise DimensionError("statistics arrays do not match the time grid")


def _legendre_pair(n: int, x: np.ndarray):
    """``(P_n(x), P_n'(x))`` by the three-term recurrence, ``n >= 2``."""
    p0, p1 = np.ones_like(x), x
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    return p1, n * (x * p1 - p0) / (x * x - 1.0)


def _legendre_newton(n: int, tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_pair(n, x)
        step = p / dp
        x = x - step
        if np.max(np.abs(step)) <= tol:
            break
    p, dp = _legendre_pair(n, x)
    # residual measured as the Newton correction, which is scale free in n
    if np.max(np.abs(p / dp)) > tol:
        raise ArithmeticError(f"Legendre root iteration did not converge for n={n}")
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def gauss_legendre(npts: int, interval: Sequence[float] = (-1.0, 1.0), probability: bool = False) -> QuadratureRule:
    """Gauss-Legendre rule on ``[a, b]``.

    With ``probability=True`` the weights are divided by ``b - a`` so the rule
    integrates against the uniform density and the weights sum to one.
    """
    if npts < 1:
        raise ValueError("npts must be >= 1")
    if npts > MAX_GL_POINTS:
        raise ValueError(f"npts={npts} unsupported; at most {MAX_GL_POINTS} points")
    a, b = map(float, interval)
    if not a < b:
        raise ValueError("interval needs a < b")
    if npts == 1:
        x, w = np.zeros(1), np.array([2.0])
    else:
        x, w = _legendre_newton(npts)
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * x
    weights = w * (0.5 if probability else half)
    return QuadratureRule(nodes[:, None], weights)


def point_rule(value: float) -> QuadratureRule:
    return QuadratureRule(np.array([[float(value)]]), np.array([1.0]))


def tensor_rule(rules: Sequence[QuadratureRule]) -> QuadratureRule:
    """Cartesian product rule; the first factor varies slowest."""
    if not rules:
        raise ValueError("need at least one rule")
    total = math.prod(len(r) for r in rules)
    if total > MAX_TENSOR_NODES:
        raise ValueError(f"tensor rule would have {total} nodes (limit {MAX_TENSOR_NODES})")
    idx = np.indices([len(r) for r in rules]).reshape(len(rules), -1)
    nodes = np.hstack([r.nodes[i] for r, i in zip(rules, idx)])
    weights = np.ones(total)
    for r, i in zip(rules, idx):
        weights = weights * r.weights[i]
    return QuadratureRule(nodes, weights)


def rule_for_box(box: BoxDomain, npts: int | Sequence[int]) -> QuadratureRule:
    """Probability-normalised tensor GL rule for the uniform density on ``box``.

    Pinned coordinates get a single node of weight one.
    """
    counts = [npts] * box.dim if np.isscalar(npts) else list(npts)
    if len(counts) != box.dim:
        raise DimensionError("one point count per box dimension required")
    rules = [
        point_rule(lo) if lo == hi else gauss_legendre(n, (lo, hi), probability=True)
        for lo, hi, n in zip(box.lo, box.hi, counts)
    ]
    return tensor_rule(rules)


def _evaluate(evaluator, nodes: np.ndarray, batched: bool):
    if batched:
        times, states = evaluator(nodes)
        return np.asarray(times, dtype=np.float64), np.asarray(states, dtype=np.float64)
    trajs = [evaluator(a) for a in nodes]
    times = trajs[0].times
    for q, tr in enumerate(trajs):
        if tr.times.shape != times.shape or not np.array_equal(tr.times, times):
            raise DimensionError(f"evaluator returned an inconsistent time grid at node {q}")
    return times, np.stack([tr.states for tr in trajs])


def _clamp_var(var: np.ndarray) -> np.ndarray:
    low = var.min() if var.size else 0.0
    if low < -VAR_TOLERANCE:
        warnings.warn(f"variance estimate {low:g} below -{VAR_TOLERANCE:g}; clamped to zero", RuntimeWarning)
    return np.maximum(var, 0.0)


def uq_statistics(evaluator, rule: QuadratureRule, batched: bool = False) -> StatSeries:
    """Quadrature estimates ``mean = sum_q w_q x_q`` and ``var = sum_q w_q (x_q - mean)^2``.

    Works unchanged for an estimated parameter range: pass a rule built over
    that range and its density. The mean is accumulated about the first
    node's trajectory, which assumes probability weights (summing to one) and
    keeps constant evaluators exact.
    """
    times, X = _evaluate(evaluator, rule.nodes, batched)
    if X.shape[0] != len(rule):
        raise DimensionError("evaluator returned a different number of trajectories than nodes")
    w = rule.weights
    mean = X[0] + np.tensordot(w, X - X[0], axes=(0, 0))
    dev = X - mean
    var = np.tensordot(w, dev * dev, axes=(0, 0))
    return StatSeries(times, mean, _clamp_var(var))


def mc_statistics(evaluator, density: Density, n_samples: int, rng: Rng,
                  batched: bool = False, chunk: int = 20_000) -> StatSeries:
    """Sample mean and unbiased sample variance over i.i.d. uniform parameter draws.

    Samples are processed in chunks; squares are accumulated about the first
    chunk's mean to limit cancellation.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    alphas = sample_uniform_box(density.box, rng, n_samples)
    shift = s1 = s2 = None
    times = None
    for start in range(0, n_samples, chunk):
        t, X = _evaluate(evaluator, alphas[start : start + chunk], batched)
        if times is None:
            times = t
            shift = X.mean(axis=0)
            s1 = np.zeros_like(shift)
            s2 = np.zeros_like(shift)
        elif not np.array_equal(t, times):
            raise DimensionError("evaluator returned an inconsistent time grid")
        D = X - shift
        s1 += D.sum(axis=0)
        s2 += (D * D).sum(axis=0)
    n = float(n_samples)
    mean_dev = s1 / n
    var = (s2 - n * mean_dev * mean_dev) / (n - 1.0)
    return StatSeries(times, shift + mean_dev, _clamp_var(var))


def model_evaluator(model: Increment, x0, sched: DeltaSchedule):
    """Batched evaluator rolling out ``model`` from ``x0`` for each parameter row."""
    x0 = np.asarray(x0, dtype=np.float64)

    def evaluate(alphas):
        return predict_batch(model, x0[None], alphas, sched)

    return evaluate


def oracle_evaluator(sys: str | SystemDef, x0, times):
    """Batched evaluator integrating the true system on ``times``."""
    sys = get_system(sys)
    x0 = as_vector(x0, sys.d, "x0")
    times = np.asarray(times, dtype=np.float64)

    def evaluate(alphas):
        alphas = np.atleast_2d(alphas)
        x = np.broadcast_to(x0, (alphas.shape[0], sys.d))
        return times, integrate_many(sys, x, alphas, times)

    return evaluate


def analytic_ex1_evaluator(times, x0: float = 1.0):
    """Batched evaluator of the closed-form linear scalar decay."""
    times = np.asarray(times, dtype=np.float64)

    def evaluate(alphas):
        a = np.atleast_2d(alphas)[:, :1]
        return times, analytic_solution_ex1(times[None, :], a, x0)[:, :, None]

    return evaluate


def reference_statistics(sys: str | SystemDef, x0, rule: QuadratureRule, times) -> StatSeries:
    """Statistics of the true solution, estimated with the same rule."""
    return uq_statistics(oracle_evaluator(sys, x0, times), rule, batched=True)
