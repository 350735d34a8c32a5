"""End-to-end benchmark runs for the four example systems.

Each case generates data, trains a network, then measures trajectory errors,
UQ errors against reference statistics and the error-bound table. ``desk``
sizes finish in minutes on one core; ``paper`` sizes follow the original
protocol (20 x parameter-count pairs, 2000 epochs) and take much longer.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from . import svg
from .bounds import BoundOverflowError, bound_table, empirical_sup_error, solution_bound
from .core import BoxDomain, Rng, sample_uniform_box
from .data import GenConfig, generate_pairs, sizing_rule
from .net import NetworkSpec, init_network, save_model
from .rollout import DeltaSchedule, error_metrics, predict_batch
from .systems import (
    CASCADE_NOMINAL, CASCADE_X0, analytic_mean_var_ex1, analytic_solution_ex1,
    cascade_param_box, get_system, integrate_many, lipschitz_estimate,
)
from .train import TrainConfig, train, write_history
from .uq import StatSeries, model_evaluator, reference_statistics, rule_for_box, uq_statistics

log = logging.getLogger(__name__)

CASCADE_RANDOM = ("Km1", "Km4", "Vmax2", "Vmax5")


@dataclass
class Check:
    metric: str
    value: float
    threshold: float
    kind: str = "max"  # "max": value <= threshold, "min": value >= threshold

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.kind == "max" else self.value >= self.threshold


@dataclass
class BenchCase:
    example: int
    system: str
    Ix: BoxDomain
    Ialpha: BoxDomain
    uq_box: BoxDomain
    x0: np.ndarray
    t_final: float
    spec: NetworkSpec
    J: int
    epochs: int
    batch_size: int = 30
    delta: float = 0.1
    n_samples: int = 100
    quad_points: int = 5
    checks: dict = field(default_factory=dict)
    seed: int = 0
    mean_horizon: float | None = None
    notes: list = field(default_factory=list)


@dataclass
class CaseResult:
    case: BenchCase
    metrics: dict
    checks: list
    series: dict
    report: object = None
    net: object = None
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def make_case(example: int, scale: str = "desk", seed: int = 0, **overrides) -> BenchCase:
    """Benchmark configuration for examples 1-4 at ``desk`` or ``paper`` scale."""
    if scale not in ("desk", "paper"):
        raise ValueError("scale must be 'desk' or 'paper'")
    paper = scale == "paper"
    if example == 1:
        sys = get_system("linear-scalar")
        spec = NetworkSpec(1, 1, 3, 40)
        case = BenchCase(
            1, sys.id, sys.default_Ix, sys.default_Ialpha, sys.default_Ialpha,
            np.array([1.0]), 30.0, spec, J=20_000, epochs=500, quad_points=10,
            checks={"traj_linf_max": 5e-2, "mean_err_max": 1e-2},
        )
    elif example == 2:
        sys = get_system("linear-2d")
        spec = NetworkSpec(2, 2, 3, 40)
        case = BenchCase(
            2, sys.id, sys.default_Ix, sys.default_Ialpha, sys.default_Ialpha,
            np.array([0.0, 1.0]), 10.0, spec, J=40_000, epochs=500,
            n_samples=1000 if paper else 100,
            checks={"mean_err_max": 1e-2, "var_err_max": 1e-3},
            notes=["x0=(0,1) as in the text; the figure caption for this example uses (0,-1)"],
        )
    elif example == 3:
        sys = get_system("oscillator")
        spec = NetworkSpec(2, 2, 3, 40)
        case = BenchCase(
            3, sys.id, sys.default_Ix, sys.default_Ialpha, sys.default_Ialpha,
            np.array([-1.193, -3.876]), 20.0, spec, J=40_000, epochs=800,
            n_samples=1000 if paper else 100, mean_horizon=12.5,
            checks={"traj_linf_max": 1.5e-1, "mean_err_max": 5e-2},
        )
    elif example == 4:
        sys = get_system("cell-cascade")
        if paper:
            train_box = cascade_param_box(random=None, I=(0.0, 1.5))
            spec = NetworkSpec(3, 14, 3, 200, output_tanh=True)
        else:
            train_box = cascade_param_box(random=CASCADE_RANDOM, I=(0.0, 1.5))
            spec = NetworkSpec(3, 14, 3, 64, output_tanh=True)
        case = BenchCase(
            4, sys.id, sys.default_Ix, train_box, cascade_param_box(random=CASCADE_RANDOM, I=0.48),
            CASCADE_X0.copy(), 140.0, spec, J=100_000, epochs=300,
            checks={"final_loss": 1e-4, "box_violation": 5e-2, "response_spearman": 0.95},
        )
    else:
        raise ValueError(f"unknown example {example}; choose 1-4")
    if paper:
        case.J = sizing_rule(case.spec.n_params)
        case.epochs = 2000
    case.seed = seed
    return replace(case, **overrides) if overrides else case


def _stat_errors(model: StatSeries, ref: StatSeries) -> tuple[np.ndarray, np.ndarray]:
    return (np.max(np.abs(model.mean - ref.mean), axis=1),
            np.max(np.abs(model.var - ref.var), axis=1))


def _reference_ex1(times) -> StatSeries:
    mean, var = analytic_mean_var_ex1(times)
    return StatSeries(times, np.asarray(mean)[:, None], np.asarray(var)[:, None])


def response_curve(model, n_points: int = 16, n_steps: int = 2000, delta: float = 0.1, x0=CASCADE_X0):
    """Steady-state ``e3p`` against the tuning input ``I`` for model and true system.

    Other parameters sit at their nominal values. Returns
    ``(I, model_e3p, reference_e3p, stationarity)`` where ``stationarity`` is
    the change of the model state over its last 100 steps.
    """
    I = np.linspace(0.0, 1.5, n_points)
    alphas = np.tile(CASCADE_NOMINAL, (n_points, 1))
    alphas[:, 13] = I
    sched = DeltaSchedule.uniform(delta, n_steps)
    _, pred = predict_batch(model, x0[None], alphas, sched)
    lookback = min(100, n_steps)
    stationarity = np.max(np.abs(pred[:, -1] - pred[:, -1 - lookback]), axis=1)
    times = np.array([0.0, n_steps * delta])
    ref = integrate_many("cell-cascade", np.broadcast_to(x0, (n_points, 3)), alphas, times)
    return I, pred[:, -1, 2], ref[:, -1, 2], stationarity


def run_case(case: BenchCase, out_dir: str | None = None, render_svg: bool = False) -> CaseResult:
    sys = get_system(case.system)
    timings = {}
    t0 = time.perf_counter()
    ds = generate_pairs(GenConfig(sys, case.J, case.Ix, case.Ialpha, BoxDomain([0.0], [case.delta]), seed=case.seed))
    net = init_network(case.spec, Rng(case.seed).substream("init"))
    timings["generate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    net, report = train(net, ds, TrainConfig(case.epochs, case.batch_size, seed=case.seed), in_place=True)
    timings["train"] = time.perf_counter() - t0
    log.info("example %d trained: final loss %.3e in %.0fs", case.example, report.final_loss, timings["train"])

    t0 = time.perf_counter()
    sched = DeltaSchedule.to_horizon(case.delta, case.t_final)
    times = sched.times
    metrics: dict = {"final_loss": report.final_loss, "train_seconds": timings["train"]}
    series: dict = {}

    # trajectory errors over sampled parameters
    alphas = sample_uniform_box(case.uq_box, Rng(case.seed).substream("eval"), case.n_samples)
    _, pred = predict_batch(net, case.x0[None], alphas, sched)
    if case.example == 1:
        ref = analytic_solution_ex1(times[None, :], alphas[:, :1], case.x0[0])[:, :, None]
    else:
        ref = integrate_many(sys, np.broadcast_to(case.x0, (case.n_samples, sys.d)), alphas, times)
    err = error_metrics(pred, ref, times)
    series["traj_error"] = err
    metrics["traj_linf_max"] = float(err.linf.max())
    metrics["traj_l2_max"] = float(err.l2.max())

    # UQ against reference statistics
    rule = rule_for_box(case.uq_box, case.quad_points)
    stats = uq_statistics(model_evaluator(net, case.x0, sched), rule, batched=True)
    if case.example == 1:
        ref_stats = _reference_ex1(times)
    else:
        ref_stats = reference_statistics(sys, case.x0, rule, times)
    mean_err, var_err = _stat_errors(stats, ref_stats)
    series["uq"] = (stats, ref_stats, mean_err, var_err)
    window = times <= (case.mean_horizon if case.mean_horizon is not None else case.t_final) + 1e-9
    metrics["mean_err_max"] = float(mean_err[window].max())
    metrics["var_err_max"] = float(var_err.max())
    metrics["mean_err_max_full"] = float(mean_err.max())

    if case.example == 4:
        _, nodes_pred = predict_batch(net, case.x0[None], rule.nodes, sched)
        below = np.max(-nodes_pred)
        above = np.max(nodes_pred - 1.0)
        metrics["box_violation"] = float(max(below, above, 0.0))
        I, model_e3, ref_e3, stationary = response_curve(net)
        rho = spearmanr(model_e3, ref_e3).statistic
        metrics["response_spearman"] = float(rho) if np.isfinite(rho) else float("nan")
        metrics["response_max_abs_err"] = float(np.max(np.abs(model_e3 - ref_e3)))
        metrics["stationarity_max"] = float(stationary.max())
        series["response"] = (I, model_e3, ref_e3, stationary)
    timings["evaluate"] = time.perf_counter() - t0

    # bound table
    t0 = time.perf_counter()
    lip_grid = 5 if sys.d + int(np.sum(~case.Ialpha.degenerate)) <= 6 else 3
    L = lipschitz_estimate(sys, case.Ix, case.uq_box, lip_grid)
    sup = empirical_sup_error(net, sys, 20_000, Rng(case.seed).substream("sup"), case.Ix, case.Ialpha,
                              BoxDomain([0.0], [case.delta]))
    C_t = solution_bound(sys, case.x0, rule.nodes, times)
    metrics.update({"lipschitz": L, "sup_error": sup.value, "C_t": C_t})
    n_values = sorted({1, 10, 100, len(sched)} & set(range(1, len(sched) + 1)))
    try:
        table = bound_table(n_values, L, case.delta, sup.value, C_t)
    except BoundOverflowError:
        table = []
    series["bounds"] = table
    timings["bounds"] = time.perf_counter() - t0

    checks = [
        Check(m, metrics.get(m, float("nan")), thr, "min" if m == "response_spearman" else "max")
        for m, thr in case.checks.items()
    ]
    result = CaseResult(case, metrics, checks, series, report, net, timings)
    if out_dir is not None:
        write_case(result, out_dir, render_svg)
    return result


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int)) else f"{v:.17g}" for v in row])


def write_case(result: CaseResult, out_dir: str, render_svg: bool = False) -> None:
    case = result.case
    d = get_system(case.system).d
    path = os.path.join(out_dir, f"example{case.example}")
    os.makedirs(path, exist_ok=True)
    save_model(result.net, os.path.join(path, "model.json"))
    write_history(result.report, os.path.join(path, "train_history.csv"))

    err = result.series["traj_error"]
    _write_csv(os.path.join(path, "traj_error.csv"), ["t", "linf", "l2"], zip(err.times, err.linf, err.l2))

    stats, ref, mean_err, var_err = result.series["uq"]
    header = ["t"] + [f"mean_{i + 1}" for i in range(d)] + [f"var_{i + 1}" for i in range(d)]
    header += [f"ref_mean_{i + 1}" for i in range(d)] + [f"ref_var_{i + 1}" for i in range(d)] + ["err_mean", "err_var"]
    rows = [
        [t, *stats.mean[k], *stats.var[k], *ref.mean[k], *ref.var[k], mean_err[k], var_err[k]]
        for k, t in enumerate(stats.times)
    ]
    _write_csv(os.path.join(path, "uq.csv"), header, rows)

    table = result.series["bounds"]
    if table:
        keys = list(table[0])
        _write_csv(os.path.join(path, "bounds.csv"), keys, [[r[k] for k in keys] for r in table])

    if "response" in result.series:
        I, m, r, s = result.series["response"]
        _write_csv(os.path.join(path, "response.csv"), ["I", "model_e3p", "ref_e3p", "stationarity"], zip(I, m, r, s))

    if render_svg:
        svg.line_chart(os.path.join(path, "traj_error.svg"), err.times, {"linf": err.linf, "l2": err.l2},
                       title=f"Example {case.example}: trajectory error", log_y=True)
        svg.line_chart(os.path.join(path, "uq_error.svg"), stats.times, {"mean": mean_err, "variance": var_err},
                       title=f"Example {case.example}: UQ error", log_y=True)
        svg.line_chart(os.path.join(path, "mean.svg"), stats.times,
                       {**{f"model x{i + 1}": stats.mean[:, i] for i in range(d)},
                        **{f"ref x{i + 1}": ref.mean[:, i] for i in range(d)}},
                       title=f"Example {case.example}: mean")
        if "response" in result.series:
            svg.line_chart(os.path.join(path, "response.svg"), I, {"model": m, "reference": r},
                           title="steady-state e3p against I")


def write_summary(results: list[CaseResult], path: str) -> None:
    rows = []
    for res in results:
        for c in res.checks:
            rows.append([f"example{res.case.example}", c.metric, c.value, c.threshold, "pass" if c.passed else "fail"])
        for key in ("lipschitz", "sup_error", "C_t", "train_seconds"):
            if key in res.metrics:
                rows.append([f"example{res.case.example}", key, res.metrics[key], "", "info"])
        for note in res.case.notes:
            rows.append([f"example{res.case.example}", "note", note, "", "info"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "metric", "value", "threshold", "status"])
        for row in rows:
            w.writerow([v if isinstance(v, str) else f"{v:.6g}" for v in row])
